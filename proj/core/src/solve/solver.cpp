#include "exitcde/solve/solver.hpp"

namespace exitcde::solve {

const char* method_name(Method m) {
  switch (m) {
    case Method::kEuler: return "euler";
    case Method::kRk4: return "rk4";
    case Method::kDopri5: return "dopri5";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  if (name == "euler") return Method::kEuler;
  if (name == "rk4") return Method::kRk4;
  if (name == "dopri5") return Method::kDopri5;
  throw ConfigError("solver.method: unknown method '" + name + "' (expected euler, rk4, dopri5)");
}

void SolverConfig::validate() const {
  if (!(step > 0.0)) throw ConfigError("solver.step must be positive");
  if (!(rtol > 0.0)) throw ConfigError("solver.rtol must be positive");
  if (!(atol > 0.0)) throw ConfigError("solver.atol must be positive");
  if (max_steps < 1) throw ConfigError("solver.max_steps must be at least 1");
}

std::vector<double> fixed_grid(double t0, double t1, double step,
                               std::span<const double> breakpoints) {
  if (!(step > 0.0)) throw ConfigError("solver.step must be positive");
  const double lo = std::min(t0, t1), hi = std::max(t0, t1);
  std::vector<double> anchors{t0};
  std::vector<double> inner;
  for (double b : breakpoints) {
    if (b > lo && b < hi) inner.push_back(b);
  }
  std::sort(inner.begin(), inner.end());
  inner.erase(std::unique(inner.begin(), inner.end()), inner.end());
  if (t1 < t0) std::reverse(inner.begin(), inner.end());
  anchors.insert(anchors.end(), inner.begin(), inner.end());
  anchors.push_back(t1);

  std::vector<double> grid{t0};
  for (std::size_t i = 0; i + 1 < anchors.size(); ++i) {
    const double a = anchors[i], b = anchors[i + 1];
    const double len = std::abs(b - a);
    const double dir = b > a ? 1.0 : -1.0;
    for (std::size_t j = 1; static_cast<double>(j) * step < len - 1e-9 * step; ++j) {
      grid.push_back(a + dir * step * static_cast<double>(j));
    }
    grid.push_back(b);
  }
  return grid;
}

}  // namespace exitcde::solve
