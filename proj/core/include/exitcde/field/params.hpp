#pragma once

#include <map>
#include <string>
#include <vector>

#include "exitcde/diff/ndarray.hpp"

namespace exitcde::field {

// Named parameter arrays, ordered by name. Names are "<field>.<layer>.weight"
// and "<field>.<layer>.bias".
class ParameterSet {
 public:
  using Map = std::map<std::string, diff::NdArray>;

  void set(const std::string& name, diff::NdArray value);
  const diff::NdArray& get(const std::string& name) const;
  diff::NdArray& get(const std::string& name);
  bool contains(const std::string& name) const { return arrays_.count(name) != 0; }

  const Map& arrays() const { return arrays_; }
  Map& arrays() { return arrays_; }
  std::size_t size() const { return arrays_.size(); }
  std::size_t scalar_count() const;

  // Names belonging to a field (prefix "<field>.").
  std::vector<std::string> names_in(const std::string& field) const;

  // Concatenated values of `names`, in the given order.
  std::vector<double> flatten(const std::vector<std::string>& names) const;
  // Zero-valued set with the same names and shapes.
  ParameterSet zeros_like() const;

  double squared_norm(const std::string& field) const;

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    return a.arrays_ == b.arrays_;
  }

 private:
  Map arrays_;
};

}  // namespace exitcde::field
