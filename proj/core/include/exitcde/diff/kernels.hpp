#pragma once

#include <cmath>
#include <cstddef>
#include <span>

// Dense kernels shared by the tape and by tape-free evaluation paths, so both
// produce identical arithmetic.
namespace exitcde::diff::kernels {

// y = A x, A is rows x cols row-major.
inline void matvec(std::span<const double> a, std::size_t rows, std::size_t cols,
                   std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = a.data() + i * cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}

// y = A x + b
inline void affine(std::span<const double> a, std::span<const double> b, std::size_t rows,
                   std::size_t cols, std::span<const double> x, std::span<double> y) {
  matvec(a, rows, cols, x, y);
  for (std::size_t i = 0; i < rows; ++i) y[i] += b[i];
}

inline double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double relu(double x) { return x > 0.0 ? x : 0.0; }

}  // namespace exitcde::diff::kernels
