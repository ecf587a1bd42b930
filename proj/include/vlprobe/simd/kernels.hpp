#pragma once

// Inner-loop kernels for the toy transformer. Every kernel has a portable
// scalar reference in `simd::scalar` and an AVX2/FMA variant in `simd::avx2`;
// the un-namespaced entry points dispatch to whichever is active. The choice
// is made once at startup (best available, or VLPROBE_SIMD=scalar|avx2) and
// can be changed with set_isa().
//
// Variants agree to rounding, not bit-for-bit: they sum in different orders.
// A run is bit-reproducible as long as the ISA stays fixed.

#include <cstddef>
#include <string_view>

namespace vlprobe::simd {

enum class Isa { Scalar, Avx2 };

std::string_view to_string(Isa isa);
bool isa_available(Isa isa);
Isa best_available_isa();
Isa active_isa();
// Throws CapabilityError when the CPU lacks the requested ISA.
void set_isa(Isa isa);

// RAII override used by tests and benchmarks.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : saved_(active_isa()) { set_isa(isa); }
  ~ScopedIsa() { set_isa(saved_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa saved_;
};

float dot(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
// y += alpha * x
void axpy(float alpha, const float* x, float* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);

namespace scalar {
float dot(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace scalar

namespace avx2 {
bool supported();
float dot(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace avx2

}  // namespace vlprobe::simd
