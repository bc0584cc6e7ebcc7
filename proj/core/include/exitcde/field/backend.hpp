#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "exitcde/diff/kernels.hpp"
#include "exitcde/diff/tape.hpp"
#include "exitcde/errors.hpp"
#include "exitcde/field/mlp.hpp"

// Two evaluation backends with the same interface. PlainBackend computes on
// std::vector<double>; TapeBackend records diff::Var nodes for reverse-mode
// differentiation. Both route through the same kernels.
namespace exitcde::field {

struct PlainBackend {
  using Value = std::vector<double>;
  using Param = const diff::NdArray*;

  Param bind(const std::string& name, const ParameterSet& params) const { return &params.get(name); }

  Value constant(std::span<const double> v) const { return Value(v.begin(), v.end()); }
  static std::span<const double> values(const Value& v) { return v; }

  Value affine(Param w, Param b, const Value& x) const {
    const std::size_t rows = w->shape()[0], cols = w->shape()[1];
    if (x.size() != cols) throw ShapeError("affine: input width mismatch");
    Value y(rows);
    diff::kernels::affine(w->data(), b->data(), rows, cols, x, y);
    return y;
  }

  Value activate(Value x, Activation act) const {
    switch (act) {
      case Activation::kIdentity: break;
      case Activation::kTanh: for (double& v : x) v = std::tanh(v); break;
      case Activation::kRelu: for (double& v : x) v = diff::kernels::relu(v); break;
      case Activation::kSigmoid: for (double& v : x) v = diff::kernels::sigmoid(v); break;
      case Activation::kElu: for (double& v : x) v = diff::kernels::elu(v); break;
    }
    return x;
  }

  // flat is a row-major rows x cols matrix.
  Value matvec(const Value& flat, std::size_t rows, std::size_t cols, const Value& v) const {
    if (flat.size() != rows * cols || v.size() != cols) {
      throw ShapeError("matvec: matrix " + std::to_string(rows) + "x" + std::to_string(cols) +
                       " cannot multiply a vector of length " + std::to_string(v.size()));
    }
    Value y(rows);
    diff::kernels::matvec(flat, rows, cols, v, y);
    return y;
  }

  Value concat(std::span<const Value> parts) const {
    Value out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
  }

  Value slice(const Value& v, std::size_t offset, std::size_t length) const {
    return Value(v.begin() + static_cast<std::ptrdiff_t>(offset),
                 v.begin() + static_cast<std::ptrdiff_t>(offset + length));
  }

  Value append_scalar(const Value& v, double s) const {
    Value out(v);
    out.push_back(s);
    return out;
  }
};

struct TapeBackend {
  using Value = diff::Var;
  using Param = diff::Var;

  diff::Tape* tape;

  // Registers the named array as a tape parameter; a name binds once per tape.
  Param bind(const std::string& name, const ParameterSet& params) const {
    return tape->parameter(name, params.get(name));
  }

  Value constant(std::span<const double> v) const {
    return tape->constant(diff::NdArray::vector(std::vector<double>(v.begin(), v.end())));
  }
  static std::span<const double> values(const Value& v) { return v.value().data(); }

  Value affine(Param w, Param b, const Value& x) const {
    return diff::add(diff::matmul(w, x), b);
  }

  Value activate(const Value& x, Activation act) const {
    switch (act) {
      case Activation::kIdentity: return x;
      case Activation::kTanh: return diff::tanh(x);
      case Activation::kRelu: return diff::relu(x);
      case Activation::kSigmoid: return diff::sigmoid(x);
      case Activation::kElu: return diff::elu(x);
    }
    return x;
  }

  Value matvec(const Value& flat, std::size_t rows, std::size_t cols, const Value& v) const {
    return diff::matmul(diff::reshape(flat, diff::Shape{rows, cols}), v);
  }

  Value concat(std::span<const Value> parts) const { return diff::concat(parts, 0); }

  Value slice(const Value& v, std::size_t offset, std::size_t length) const {
    return diff::slice(v, offset, length);
  }

  Value append_scalar(const Value& v, double s) const {
    std::array<Value, 2> parts{v, constant(std::array<double, 1>{s})};
    return diff::concat(parts, 0);
  }
};

// A FieldSpec with its parameters resolved for one backend.
template <class Backend>
class BoundField {
 public:
  using Value = typename Backend::Value;

  BoundField() = default;
  BoundField(const FieldSpec& spec, const ParameterSet& params, const Backend& backend)
      : spec_(&spec), backend_(backend) {
    layers_.reserve(spec.layers.size());
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
      layers_.push_back({backend.bind(weight_name(spec, i), params),
                         backend.bind(bias_name(spec, i), params), spec.layers[i].activation});
    }
  }

  const FieldSpec& spec() const { return *spec_; }

  // Flat output; CDE roles are row-major rows x cols.
  Value operator()(const Value& input) const {
    const auto width = Backend::values(input).size();
    if (width != spec_->input_width) {
      throw ShapeError(spec_->name + ": layer 0 expects input width " +
                       std::to_string(spec_->input_width) + ", got " + std::to_string(width));
    }
    Value h = input;
    for (const auto& layer : layers_) {
      h = backend_.activate(backend_.affine(layer.weight, layer.bias, h), layer.activation);
    }
    return h;
  }

  // g(z) v for a CDE role.
  Value apply_matrix(const Value& input, const Value& v) const {
    return backend_.matvec((*this)(input), spec_->rows, spec_->cols, v);
  }

 private:
  struct Layer {
    typename Backend::Param weight;
    typename Backend::Param bias;
    Activation activation;
  };
  const FieldSpec* spec_ = nullptr;
  Backend backend_{};
  std::vector<Layer> layers_;
};

}  // namespace exitcde::field
