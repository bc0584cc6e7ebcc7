#include "exitcde/field/params.hpp"

#include "exitcde/errors.hpp"

namespace exitcde::field {

void ParameterSet::set(const std::string& name, diff::NdArray value) {
  arrays_[name] = std::move(value);
}

const diff::NdArray& ParameterSet::get(const std::string& name) const {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) throw Error("unknown parameter '" + name + "'");
  return it->second;
}

diff::NdArray& ParameterSet::get(const std::string& name) {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) throw Error("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, a] : arrays_) n += a.size();
  return n;
}

std::vector<std::string> ParameterSet::names_in(const std::string& field) const {
  std::vector<std::string> out;
  const std::string prefix = field + ".";
  for (auto it = arrays_.lower_bound(prefix); it != arrays_.end(); ++it) {
    if (it->first.compare(0, prefix.size(), prefix) != 0) break;
    out.push_back(it->first);
  }
  return out;
}

std::vector<double> ParameterSet::flatten(const std::vector<std::string>& names) const {
  std::vector<double> out;
  for (const auto& n : names) {
    const auto& a = get(n);
    out.insert(out.end(), a.values().begin(), a.values().end());
  }
  return out;
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet z;
  for (const auto& [name, a] : arrays_) z.set(name, diff::NdArray(a.shape()));
  return z;
}

double ParameterSet::squared_norm(const std::string& field) const {
  double acc = 0.0;
  for (const auto& n : names_in(field)) {
    for (double v : get(n).values()) acc += v * v;
  }
  return acc;
}

}  // namespace exitcde::field
