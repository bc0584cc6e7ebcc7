#include "exitcde/diff/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "exitcde/diff/kernels.hpp"
#include "exitcde/errors.hpp"

namespace exitcde::diff {

namespace {

enum class Broadcast { kNone, kRhs, kLhs };

Broadcast broadcast_kind(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Broadcast::kNone;
  if (a.rank() == b.rank() + 1 && a.drop_leading() == b) return Broadcast::kRhs;
  if (b.rank() == a.rank() + 1 && b.drop_leading() == a) return Broadcast::kLhs;
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.str() + " and " + b.str());
}

Shape shape_from_attrs(std::span<const double> attrs) {
  std::array<std::size_t, Shape::kMaxRank> dims{};
  for (std::size_t i = 0; i < attrs.size(); ++i) dims[i] = static_cast<std::size_t>(attrs[i]);
  return Shape(std::span<const std::size_t>(dims.data(), attrs.size()));
}

// Sizes of the blocks surrounding `axis`.
void axis_split(const Shape& s, std::size_t axis, std::size_t& outer, std::size_t& inner) {
  outer = 1;
  inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.rank(); ++i) inner *= s[i];
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kLinComb: return "lincomb";
    case Op::kMatMul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kTanh: return "tanh";
    case Op::kRelu: return "relu";
    case Op::kSigmoid: return "sigmoid";
    case Op::kElu: return "elu";
    case Op::kConcat: return "concat";
    case Op::kReshape: return "reshape";
    case Op::kSlice: return "slice";
    case Op::kSum: return "sum";
    case Op::kSumSquares: return "sum_squares";
    case Op::kDot: return "dot";
    case Op::kSoftmaxCrossEntropy: return "softmax_cross_entropy";
  }
  return "unknown";
}

const NdArray& Var::value() const {
  if (!tape_) throw Error("value() on an unbound Var");
  return tape_->value(*this);
}

const NdArray& Gradients::operator[](const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw Error("no parameter named '" + name + "' on the tape");
  return it->second;
}

NdArray Gradients::of(Var v) const {
  const Shape& s = tape_->value(v).shape();
  const auto& g = node_grads_[v.index()];
  if (g.empty()) return NdArray(s);
  return NdArray(s, g);
}

Var Tape::push_leaf(NdArray value) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::parameter(const std::string& name, NdArray value) {
  for (const auto& [existing, idx] : params_) {
    if (existing == name) throw Error("parameter '" + name + "' registered twice");
  }
  Var v = push_leaf(std::move(value));
  params_.emplace_back(name, v.index());
  return v;
}

Var Tape::constant(NdArray value) { return push_leaf(std::move(value)); }

Var Tape::last() const {
  if (nodes_.empty()) throw Error("no recorded computation on tape");
  return Var(const_cast<Tape*>(this), static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::record(Op op, std::span<const Var> inputs, std::span<const double> attrs) {
  Node n;
  n.op = op;
  n.arg_begin = static_cast<std::uint32_t>(args_.size());
  n.arg_count = static_cast<std::uint32_t>(inputs.size());
  for (const Var& v : inputs) {
    if (v.tape() != this) throw Error(std::string(op_name(op)) + ": input from another tape");
    args_.push_back(v.index());
  }
  n.attr_begin = static_cast<std::uint32_t>(attrs_.size());
  n.attr_count = static_cast<std::uint32_t>(attrs.size());
  attrs_.insert(attrs_.end(), attrs.begin(), attrs.end());
  n.value = compute(n, nullptr);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

NdArray Tape::compute(const Node& node, const std::vector<NdArray>* values) const {
  auto in = [&](std::uint32_t k) -> const NdArray& {
    std::uint32_t idx = args_[node.arg_begin + k];
    return values ? (*values)[idx] : nodes_[idx].value;
  };
  std::span<const double> attrs(attrs_.data() + node.attr_begin, node.attr_count);

  switch (node.op) {
    case Op::kLeaf:
      return values ? NdArray() : node.value;

    case Op::kAdd:
    case Op::kSub:
    case Op::kMul: {
      const NdArray& a = in(0);
      const NdArray& b = in(1);
      Broadcast bc = broadcast_kind(a.shape(), b.shape(), op_name(node.op));
      const NdArray& big = bc == Broadcast::kLhs ? b : a;
      NdArray out(big.shape());
      std::size_t n = out.size();
      std::size_t small = bc == Broadcast::kNone ? n : (bc == Broadcast::kRhs ? b.size() : a.size());
      for (std::size_t i = 0; i < n; ++i) {
        double x = bc == Broadcast::kLhs ? a[i % small] : a[i];
        double y = bc == Broadcast::kRhs ? b[i % small] : b[i];
        out[i] = node.op == Op::kAdd ? x + y : (node.op == Op::kSub ? x - y : x * y);
      }
      return out;
    }

    case Op::kScale: {
      NdArray out = in(0);
      for (double& v : out.values()) v *= attrs[0];
      return out;
    }

    case Op::kLinComb: {
      const Shape& s = in(0).shape();
      NdArray out(s);
      for (std::uint32_t k = 0; k < node.arg_count; ++k) {
        const NdArray& t = in(k);
        if (t.shape() != s) {
          throw ShapeError("lincomb: term shape " + t.shape().str() + " differs from " + s.str());
        }
        const double c = attrs[k];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += c * t[i];
      }
      return out;
    }

    case Op::kMatMul: {
      const NdArray& a = in(0);
      const NdArray& b = in(1);
      if (a.shape().rank() != 2 || (b.shape().rank() != 1 && b.shape().rank() != 2) ||
          a.shape()[1] != b.shape()[0]) {
        throw ShapeError("matmul: inner dimensions do not match for " + a.shape().str() + " and " +
                         b.shape().str());
      }
      const std::size_t m = a.shape()[0], k = a.shape()[1];
      if (b.shape().rank() == 1) {
        NdArray out(Shape{m});
        kernels::matvec(a.data(), m, k, b.data(), out.data());
        return out;
      }
      const std::size_t n = b.shape()[1];
      NdArray out(Shape{m, n});
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = a.at(i, p);
          for (std::size_t j = 0; j < n; ++j) out.at(i, j) += aip * b.at(p, j);
        }
      }
      return out;
    }

    case Op::kTranspose: {
      const NdArray& a = in(0);
      if (a.shape().rank() != 2) throw ShapeError("transpose: expected rank 2, got " + a.shape().str());
      const std::size_t r = a.shape()[0], c = a.shape()[1];
      NdArray out(Shape{c, r});
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.at(j, i) = a.at(i, j);
      return out;
    }

    case Op::kTanh:
    case Op::kRelu:
    case Op::kSigmoid:
    case Op::kElu: {
      NdArray out = in(0);
      for (double& v : out.values()) {
        switch (node.op) {
          case Op::kTanh: v = std::tanh(v); break;
          case Op::kRelu: v = kernels::relu(v); break;
          case Op::kSigmoid: v = kernels::sigmoid(v); break;
          default: v = kernels::elu(v); break;
        }
      }
      return out;
    }

    case Op::kConcat: {
      const std::size_t axis = static_cast<std::size_t>(attrs[0]);
      const Shape& s0 = in(0).shape();
      if (axis >= s0.rank()) throw ShapeError("concat: axis out of range for " + s0.str());
      std::array<std::size_t, Shape::kMaxRank> dims{};
      for (std::size_t i = 0; i < s0.rank(); ++i) dims[i] = s0[i];
      dims[axis] = 0;
      for (std::uint32_t k = 0; k < node.arg_count; ++k) {
        const Shape& s = in(k).shape();
        bool ok = s.rank() == s0.rank();
        for (std::size_t i = 0; ok && i < s.rank(); ++i) ok = i == axis || s[i] == s0[i];
        if (!ok) throw ShapeError("concat: shape " + s.str() + " does not conform to " + s0.str());
        dims[axis] += s[axis];
      }
      Shape out_shape(std::span<const std::size_t>(dims.data(), s0.rank()));
      NdArray out(out_shape);
      std::size_t outer, inner;
      axis_split(out_shape, axis, outer, inner);
      std::size_t offset = 0;
      for (std::uint32_t k = 0; k < node.arg_count; ++k) {
        const NdArray& part = in(k);
        const std::size_t len = part.shape()[axis] * inner;
        for (std::size_t o = 0; o < outer; ++o) {
          std::copy_n(part.data().begin() + o * len, len,
                      out.data().begin() + o * dims[axis] * inner + offset);
        }
        offset += len;
      }
      return out;
    }

    case Op::kReshape:
      return in(0).reshaped(shape_from_attrs(attrs));

    case Op::kSlice: {
      const NdArray& a = in(0);
      const auto offset = static_cast<std::size_t>(attrs[0]);
      const auto length = static_cast<std::size_t>(attrs[1]);
      if (a.shape().rank() == 0 || offset + length > a.shape()[0] || length == 0) {
        throw ShapeError("slice: range [" + std::to_string(offset) + "," +
                         std::to_string(offset + length) + ") invalid for " + a.shape().str());
      }
      std::array<std::size_t, Shape::kMaxRank> dims{};
      for (std::size_t i = 0; i < a.shape().rank(); ++i) dims[i] = a.shape()[i];
      dims[0] = length;
      Shape out_shape(std::span<const std::size_t>(dims.data(), a.shape().rank()));
      const std::size_t inner = a.size() / a.shape()[0];
      std::vector<double> data(a.data().begin() + offset * inner,
                               a.data().begin() + (offset + length) * inner);
      return NdArray(out_shape, std::move(data));
    }

    case Op::kSum: {
      const auto& v = in(0).values();
      return NdArray::scalar(std::accumulate(v.begin(), v.end(), 0.0));
    }

    case Op::kSumSquares: {
      double acc = 0.0;
      for (double v : in(0).values()) acc += v * v;
      return NdArray::scalar(acc);
    }

    case Op::kDot: {
      const NdArray& a = in(0);
      const NdArray& b = in(1);
      if (a.shape() != b.shape()) {
        throw ShapeError("dot: shapes " + a.shape().str() + " and " + b.shape().str() + " differ");
      }
      double acc = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
      return NdArray::scalar(acc);
    }

    case Op::kSoftmaxCrossEntropy: {
      const NdArray& x = in(0);
      const auto target = static_cast<std::size_t>(attrs[0]);
      if (x.shape().rank() != 1) {
        throw ShapeError("softmax_cross_entropy: expected a logit vector, got " + x.shape().str());
      }
      if (target >= x.size()) {
        throw Error("class index " + std::to_string(target) + " out of range for " +
                    std::to_string(x.size()) + " classes");
      }
      const double mx = *std::max_element(x.values().begin(), x.values().end());
      double se = 0.0;
      for (double v : x.values()) se += std::exp(v - mx);
      return NdArray::scalar(mx + std::log(se) - x[target]);
    }
  }
  throw Error("unknown op");
}

void Tape::backprop_node(std::uint32_t index, std::vector<std::vector<double>>& grads) const {
  const Node& node = nodes_[index];
  const std::vector<double>& g = grads[index];
  std::span<const double> attrs(attrs_.data() + node.attr_begin, node.attr_count);
  auto arg = [&](std::uint32_t k) { return args_[node.arg_begin + k]; };
  auto val = [&](std::uint32_t k) -> const NdArray& { return nodes_[arg(k)].value; };
  auto acc = [&](std::uint32_t k) -> std::vector<double>& {
    auto& slot = grads[arg(k)];
    if (slot.empty()) slot.assign(val(k).size(), 0.0);
    return slot;
  };

  switch (node.op) {
    case Op::kLeaf:
      return;

    case Op::kAdd:
    case Op::kSub:
    case Op::kMul: {
      const NdArray& a = val(0);
      const NdArray& b = val(1);
      Broadcast bc = broadcast_kind(a.shape(), b.shape(), op_name(node.op));
      auto& ga = acc(0);
      auto& gb = acc(1);
      const std::size_t na = a.size(), nb = b.size();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const std::size_t ia = bc == Broadcast::kLhs ? i % na : i;
        const std::size_t ib = bc == Broadcast::kRhs ? i % nb : i;
        if (node.op == Op::kAdd) {
          ga[ia] += g[i];
          gb[ib] += g[i];
        } else if (node.op == Op::kSub) {
          ga[ia] += g[i];
          gb[ib] -= g[i];
        } else {
          ga[ia] += g[i] * b[ib];
          gb[ib] += g[i] * a[ia];
        }
      }
      return;
    }

    case Op::kScale: {
      auto& ga = acc(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += attrs[0] * g[i];
      return;
    }

    case Op::kLinComb: {
      for (std::uint32_t k = 0; k < node.arg_count; ++k) {
        auto& gk = acc(k);
        for (std::size_t i = 0; i < g.size(); ++i) gk[i] += attrs[k] * g[i];
      }
      return;
    }

    case Op::kMatMul: {
      const NdArray& a = val(0);
      const NdArray& b = val(1);
      auto& ga = acc(0);
      auto& gb = acc(1);
      const std::size_t m = a.shape()[0], k = a.shape()[1];
      if (b.shape().rank() == 1) {
        for (std::size_t i = 0; i < m; ++i) {
          const double gi = g[i];
          if (gi == 0.0) continue;
          double* garow = ga.data() + i * k;
          const double* arow = a.data().data() + i * k;
          for (std::size_t j = 0; j < k; ++j) {
            garow[j] += gi * b[j];
            gb[j] += arow[j] * gi;
          }
        }
        return;
      }
      const std::size_t n = b.shape()[1];
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double sa = 0.0;
          const double aip = a.at(i, p);
          for (std::size_t j = 0; j < n; ++j) {
            const double gij = g[i * n + j];
            sa += gij * b.at(p, j);
            gb[p * n + j] += aip * gij;
          }
          ga[i * k + p] += sa;
        }
      }
      return;
    }

    case Op::kTranspose: {
      const NdArray& a = val(0);
      auto& ga = acc(0);
      const std::size_t r = a.shape()[0], c = a.shape()[1];
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
      return;
    }

    case Op::kTanh:
    case Op::kRelu:
    case Op::kSigmoid:
    case Op::kElu: {
      const NdArray& x = val(0);
      const NdArray& y = node.value;
      auto& ga = acc(0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        double d;
        switch (node.op) {
          case Op::kTanh: d = 1.0 - y[i] * y[i]; break;
          case Op::kRelu: d = x[i] > 0.0 ? 1.0 : 0.0; break;
          case Op::kSigmoid: d = y[i] * (1.0 - y[i]); break;
          default: d = x[i] > 0.0 ? 1.0 : y[i] + 1.0; break;
        }
        ga[i] += g[i] * d;
      }
      return;
    }

    case Op::kConcat: {
      const std::size_t axis = static_cast<std::size_t>(attrs[0]);
      const Shape& out_shape = node.value.shape();
      std::size_t outer, inner;
      axis_split(out_shape, axis, outer, inner);
      std::size_t offset = 0;
      for (std::uint32_t k = 0; k < node.arg_count; ++k) {
        auto& gk = acc(k);
        const std::size_t len = val(k).shape()[axis] * inner;
        for (std::size_t o = 0; o < outer; ++o) {
          const double* src = g.data() + o * out_shape[axis] * inner + offset;
          double* dst = gk.data() + o * len;
          for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
        }
        offset += len;
      }
      return;
    }

    case Op::kReshape: {
      auto& ga = acc(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      return;
    }

    case Op::kSlice: {
      const NdArray& a = val(0);
      const std::size_t inner = a.size() / a.shape()[0];
      const std::size_t base = static_cast<std::size_t>(attrs[0]) * inner;
      auto& ga = acc(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[base + i] += g[i];
      return;
    }

    case Op::kSum: {
      auto& ga = acc(0);
      for (double& v : ga) v += g[0];
      return;
    }

    case Op::kSumSquares: {
      const NdArray& a = val(0);
      auto& ga = acc(0);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += 2.0 * a[i] * g[0];
      return;
    }

    case Op::kDot: {
      const NdArray& a = val(0);
      const NdArray& b = val(1);
      auto& ga = acc(0);
      auto& gb = acc(1);
      for (std::size_t i = 0; i < a.size(); ++i) {
        ga[i] += g[0] * b[i];
        gb[i] += g[0] * a[i];
      }
      return;
    }

    case Op::kSoftmaxCrossEntropy: {
      const NdArray& x = val(0);
      const auto target = static_cast<std::size_t>(attrs[0]);
      const double mx = *std::max_element(x.values().begin(), x.values().end());
      double se = 0.0;
      for (double v : x.values()) se += std::exp(v - mx);
      auto& ga = acc(0);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double p = std::exp(x[i] - mx) / se;
        ga[i] += g[0] * (p - (i == target ? 1.0 : 0.0));
      }
      return;
    }
  }
}

Gradients Tape::backward(Var output, const NdArray& seed) const {
  if (nodes_.empty()) throw Error("backward: no recorded computation on tape");
  if (output.tape() != this) throw Error("backward: output Var belongs to another tape");
  const NdArray& out = nodes_[output.index()].value;
  if (seed.shape() != out.shape()) {
    throw ShapeError("backward: seed shape " + seed.shape().str() + " does not match output shape " +
                     out.shape().str());
  }
  Gradients result;
  result.tape_ = this;
  result.node_grads_.resize(output.index() + 1);
  result.node_grads_[output.index()] = seed.values();
  for (std::int64_t i = output.index(); i >= 0; --i) {
    if (result.node_grads_[static_cast<std::size_t>(i)].empty()) continue;
    backprop_node(static_cast<std::uint32_t>(i), result.node_grads_);
  }
  result.node_grads_.resize(nodes_.size());
  for (const auto& [name, idx] : params_) {
    result.by_name_.emplace(name, result.of(Var(const_cast<Tape*>(this), idx)));
  }
  return result;
}

Gradients Tape::backward(const NdArray& seed) const {
  if (nodes_.empty()) throw Error("backward: no recorded computation on tape");
  return backward(last(), seed);
}

std::vector<NdArray> Tape::replay() const {
  std::vector<NdArray> values(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    values[i] = nodes_[i].op == Op::kLeaf ? nodes_[i].value : compute(nodes_[i], &values);
  }
  return values;
}

namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw Error("operation on an unbound Var");
  return *a.tape();
}

Var binary(Op op, Var a, Var b) {
  std::array<Var, 2> in{a, b};
  return tape_of(a).record(op, in, {});
}

Var unary(Op op, Var a, std::span<const double> attrs = {}) {
  std::array<Var, 1> in{a};
  return tape_of(a).record(op, in, attrs);
}

}  // namespace

Var add(Var a, Var b) { return binary(Op::kAdd, a, b); }
Var sub(Var a, Var b) { return binary(Op::kSub, a, b); }
Var mul(Var a, Var b) { return binary(Op::kMul, a, b); }

Var scale(Var a, double c) {
  std::array<double, 1> attrs{c};
  return unary(Op::kScale, a, attrs);
}

Var lincomb(std::span<const Var> terms, std::span<const double> coeffs) {
  if (terms.empty() || terms.size() != coeffs.size()) {
    throw Error("lincomb: need one coefficient per term and at least one term");
  }
  return tape_of(terms[0]).record(Op::kLinComb, terms, coeffs);
}

Var matmul(Var a, Var b) { return binary(Op::kMatMul, a, b); }
Var transpose(Var a) { return unary(Op::kTranspose, a); }
Var tanh(Var a) { return unary(Op::kTanh, a); }
Var relu(Var a) { return unary(Op::kRelu, a); }
Var sigmoid(Var a) { return unary(Op::kSigmoid, a); }
Var elu(Var a) { return unary(Op::kElu, a); }

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw Error("concat: nothing to concatenate");
  std::array<double, 1> attrs{static_cast<double>(axis)};
  return tape_of(parts[0]).record(Op::kConcat, parts, attrs);
}

Var reshape(Var a, Shape shape) {
  std::array<double, Shape::kMaxRank> attrs{};
  for (std::size_t i = 0; i < shape.rank(); ++i) attrs[i] = static_cast<double>(shape[i]);
  return unary(Op::kReshape, a, std::span<const double>(attrs.data(), shape.rank()));
}

Var slice(Var a, std::size_t offset, std::size_t length) {
  std::array<double, 2> attrs{static_cast<double>(offset), static_cast<double>(length)};
  return unary(Op::kSlice, a, attrs);
}

Var sum(Var a) { return unary(Op::kSum, a); }
Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }
Var sum_squares(Var a) { return unary(Op::kSumSquares, a); }
Var dot(Var a, Var b) { return binary(Op::kDot, a, b); }

Var softmax_cross_entropy(Var logits, std::size_t target) {
  std::array<double, 1> attrs{static_cast<double>(target)};
  return unary(Op::kSoftmaxCrossEntropy, logits, attrs);
}

}  // namespace exitcde::diff
