#pragma once

#include <functional>

#include "exitcde/diff/ndarray.hpp"

namespace exitcde::diff {

using ScalarFunction = std::function<double(const NdArray&)>;

// Central-difference gradient of a scalar function, one coordinate at a time:
// (f(p + eps e_i) - f(p - eps e_i)) / (2 eps). Requires eps in (0, 1e-2].
// Throws Error if any evaluation is non-finite.
NdArray finite_difference_grad(const ScalarFunction& f, const NdArray& p, double eps);

}  // namespace exitcde::diff
