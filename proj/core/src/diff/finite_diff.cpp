#include "exitcde/diff/finite_diff.hpp"

#include <cmath>
#include <string>

#include "exitcde/errors.hpp"

namespace exitcde::diff {

NdArray finite_difference_grad(const ScalarFunction& f, const NdArray& p, double eps) {
  if (!(eps > 0.0 && eps <= 1e-2)) {
    throw Error("finite_difference_grad: eps must lie in (0, 1e-2], got " + std::to_string(eps));
  }
  auto eval = [&](const NdArray& x, std::size_t i) {
    const double v = f(x);
    if (!std::isfinite(v)) {
      throw Error("finite_difference_grad: non-finite evaluation at coordinate " + std::to_string(i));
    }
    return v;
  };
  NdArray grad(p.shape());
  NdArray x = p;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + eps;
    const double up = eval(x, i);
    x[i] = orig - eps;
    const double down = eval(x, i);
    x[i] = orig;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

}  // namespace exitcde::diff
