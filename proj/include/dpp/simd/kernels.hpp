#pragma once

// Data-parallel inner loops used by the trainer, scorer and xmodal modules.
//
// Every kernel has a scalar reference implementation and, where the target
// supports it, an AVX2+FMA (x86-64) or NEON (aarch64) variant. The active
// backend is picked once at first use from the CPU's capabilities and can be
// overridden for testing. Elementwise kernels (axpy, abs_deviation) give
// bit-identical results on every backend; reductions (dot, sum) differ only
// by summation order.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace dpp::simd {

enum class Backend { kScalar, kAvx2, kNeon };

std::string_view backend_name(Backend b);

/// Backend currently used by the dispatching entry points below.
Backend active_backend();

/// Backends compiled in and supported by this CPU. Always contains kScalar.
std::vector<Backend> available_backends();

/// Force a backend. Throws ValidationError if it is not available.
void set_backend(Backend b);

/// Switch back to the best available backend.
void reset_backend();

/// RAII override used by tests.
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend b);
  ~ScopedBackend();
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend previous_;
};

struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  void (*abs_deviation)(const double* x, double center, double* out, std::size_t n);
};

/// Kernel table for one backend; throws ValidationError if not available.
const KernelTable& kernels_for(Backend b);

// Dispatching entry points. Length checks are the caller's job; spans must match.

/// sum_i a[i] * b[i]
double dot(std::span<const double> a, std::span<const double> b);

/// y[i] += alpha * x[i]
void axpy(double alpha, std::span<const double> x, std::span<double> y);

double sum(std::span<const double> x);

/// out[i] = |x[i] - center|
void abs_deviation(std::span<const double> x, double center, std::span<double> out);

namespace detail {
extern const KernelTable kScalarKernels;
#if defined(DPP_HAVE_AVX2)
extern const KernelTable kAvx2Kernels;
#endif
#if defined(DPP_HAVE_NEON)
extern const KernelTable kNeonKernels;
#endif
}  // namespace detail

}  // namespace dpp::simd
