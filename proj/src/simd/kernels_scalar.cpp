#include <cmath>

#include "dpp/simd/kernels.hpp"

namespace dpp::simd::detail {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double sum_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

void abs_deviation_scalar(const double* x, double center, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::fabs(x[i] - center);
}

}  // namespace

const KernelTable kScalarKernels{dot_scalar, axpy_scalar, sum_scalar, abs_deviation_scalar};

}  // namespace dpp::simd::detail
