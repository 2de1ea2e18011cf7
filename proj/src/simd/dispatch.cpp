#include <atomic>

#include "dpp/error.hpp"
#include "dpp/simd/kernels.hpp"

namespace dpp::simd {
namespace {

bool cpu_supports(Backend b) {
  switch (b) {
    case Backend::kScalar:
      return true;
    case Backend::kAvx2:
#if defined(DPP_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::kNeon:
#if defined(DPP_HAVE_NEON)
      return true;  // mandatory on aarch64
#else
      return false;
#endif
  }
  return false;
}

Backend best_backend() {
  if (cpu_supports(Backend::kAvx2)) return Backend::kAvx2;
  if (cpu_supports(Backend::kNeon)) return Backend::kNeon;
  return Backend::kScalar;
}

std::atomic<const KernelTable*> g_table{nullptr};
std::atomic<Backend> g_backend{Backend::kScalar};

const KernelTable& table() {
  const KernelTable* t = g_table.load(std::memory_order_acquire);
  if (t == nullptr) {
    reset_backend();
    t = g_table.load(std::memory_order_acquire);
  }
  return *t;
}

}  // namespace

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
    case Backend::kNeon:
      return "neon";
  }
  return "unknown";
}

const KernelTable& kernels_for(Backend b) {
  if (!cpu_supports(b)) {
    throw ValidationError("SIMD backend '" + std::string(backend_name(b)) +
                          "' is not available on this machine");
  }
  switch (b) {
#if defined(DPP_HAVE_AVX2)
    case Backend::kAvx2:
      return detail::kAvx2Kernels;
#endif
#if defined(DPP_HAVE_NEON)
    case Backend::kNeon:
      return detail::kNeonKernels;
#endif
    default:
      return detail::kScalarKernels;
  }
}

Backend active_backend() {
  table();
  return g_backend.load(std::memory_order_acquire);
}

std::vector<Backend> available_backends() {
  std::vector<Backend> out;
  for (Backend b : {Backend::kScalar, Backend::kAvx2, Backend::kNeon}) {
    if (cpu_supports(b)) out.push_back(b);
  }
  return out;
}

void set_backend(Backend b) {
  const KernelTable& t = kernels_for(b);
  g_backend.store(b, std::memory_order_release);
  g_table.store(&t, std::memory_order_release);
}

void reset_backend() { set_backend(best_backend()); }

ScopedBackend::ScopedBackend(Backend b) : previous_(active_backend()) { set_backend(b); }
ScopedBackend::~ScopedBackend() { set_backend(previous_); }

double dot(std::span<const double> a, std::span<const double> b) {
  return table().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  table().axpy(alpha, x.data(), y.data(), x.size());
}

double sum(std::span<const double> x) { return table().sum(x.data(), x.size()); }

void abs_deviation(std::span<const double> x, double center, std::span<double> out) {
  table().abs_deviation(x.data(), center, out.data(), x.size());
}

}  // namespace dpp::simd
