#include "vlprobe/simd/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#include "vlprobe/error.hpp"

namespace vlprobe::simd {

namespace {

Isa initial_isa() {
  if (const char* env = std::getenv("VLPROBE_SIMD"); env && *env) {
    std::string v(env);
    if (v == "scalar") return Isa::Scalar;
    if (v == "avx2" && avx2::supported()) return Isa::Avx2;
  }
  return best_available_isa();
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

std::string_view to_string(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

bool isa_available(Isa isa) { return isa == Isa::Scalar || avx2::supported(); }

Isa best_available_isa() { return avx2::supported() ? Isa::Avx2 : Isa::Scalar; }

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (!isa_available(isa)) fail(ErrorKind::CapabilityError, "ISA not supported on this CPU: " + std::string(to_string(isa)));
  current().store(isa, std::memory_order_relaxed);
}

float dot(const float* a, const float* b, std::size_t n) {
  return active_isa() == Isa::Avx2 ? avx2::dot(a, b, n) : scalar::dot(a, b, n);
}

double dot(const double* a, const double* b, std::size_t n) {
  return active_isa() == Isa::Avx2 ? avx2::dot(a, b, n) : scalar::dot(a, b, n);
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
  if (active_isa() == Isa::Avx2)
    avx2::axpy(alpha, x, y, n);
  else
    scalar::axpy(alpha, x, y, n);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  if (active_isa() == Isa::Avx2)
    avx2::axpy(alpha, x, y, n);
  else
    scalar::axpy(alpha, x, y, n);
}

}  // namespace vlprobe::simd
