#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "vlprobe/error.hpp"
#include "vlprobe/simd/kernels.hpp"

using namespace vlprobe::simd;

namespace {

template <typename T>
std::vector<T> random_vec(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<T> d(0, 1);
  std::vector<T> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

template <typename T>
void check_equivalence(T tol) {
  if (!avx2::supported()) GTEST_SKIP() << "CPU has no AVX2/FMA";
  std::mt19937_64 rng(42);
  for (std::size_t n : {0u, 1u, 3u, 7u, 8u, 9u, 15u, 16u, 17u, 31u, 64u, 100u, 257u, 1000u}) {
    const auto a = random_vec<T>(rng, n), b = random_vec<T>(rng, n);
    const T ref = scalar::dot(a.data(), b.data(), n);
    const T fast = avx2::dot(a.data(), b.data(), n);
    T mag = 0;
    for (std::size_t i = 0; i < n; ++i) mag += std::abs(a[i] * b[i]);
    EXPECT_LE(std::abs(ref - fast), tol * (mag + 1)) << "dot n=" << n;

    auto y1 = random_vec<T>(rng, n);
    auto y2 = y1;
    const T alpha = T(0.37);
    scalar::axpy(alpha, a.data(), y1.data(), n);
    avx2::axpy(alpha, a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y1[i], y2[i], tol * (std::abs(y1[i]) + 1)) << "axpy n=" << n;
  }
}

}  // namespace

TEST(Simd, FloatVariantsAgree) { check_equivalence<float>(1e-5f); }
TEST(Simd, DoubleVariantsAgree) { check_equivalence<double>(1e-13); }

TEST(Simd, DispatchFollowsActiveIsa) {
  std::mt19937_64 rng(1);
  const auto a = random_vec<double>(rng, 33), b = random_vec<double>(rng, 33);
  {
    ScopedIsa s(Isa::Scalar);
    EXPECT_EQ(active_isa(), Isa::Scalar);
    EXPECT_EQ(dot(a.data(), b.data(), 33), scalar::dot(a.data(), b.data(), 33));
  }
  if (isa_available(Isa::Avx2)) {
    ScopedIsa s(Isa::Avx2);
    EXPECT_EQ(dot(a.data(), b.data(), 33), avx2::dot(a.data(), b.data(), 33));
  }
}

TEST(Simd, UnavailableIsaRejected) {
  if (isa_available(Isa::Avx2)) GTEST_SKIP() << "AVX2 present";
  EXPECT_THROW(set_isa(Isa::Avx2), vlprobe::Error);
}
