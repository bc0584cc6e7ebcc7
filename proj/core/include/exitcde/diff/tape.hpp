#pragma once

#include <cstdint>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "exitcde/diff/ndarray.hpp"

namespace exitcde::diff {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid as long as the
// owning Tape lives.
class Var {
 public:
  Var() = default;

  Tape* tape() const { return tape_; }
  std::uint32_t index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }

  const NdArray& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::uint32_t index_ = 0;
};

enum class Op : std::uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kScale,
  kLinComb,
  kMatMul,
  kTranspose,
  kTanh,
  kRelu,
  kSigmoid,
  kElu,
  kConcat,
  kReshape,
  kSlice,
  kSum,
  kSumSquares,
  kDot,
  kSoftmaxCrossEntropy,
};

const char* op_name(Op op);

// Result of a reverse sweep: gradients for every registered parameter plus
// access to the adjoint of any node.
class Gradients {
 public:
  // Gradient of a registered parameter; zeros when unreachable.
  const NdArray& operator[](const std::string& name) const;
  // Gradient of any node; zeros of matching shape when unreachable.
  NdArray of(Var v) const;

  const std::map<std::string, NdArray>& by_name() const { return by_name_; }

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::vector<std::vector<double>> node_grads_;
  std::map<std::string, NdArray> by_name_;
};

// Define-by-run record of primitive operations. Single-threaded; build one per
// forward pass.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Named leaf whose gradient is reported by backward().
  Var parameter(const std::string& name, NdArray value);
  // Unnamed leaf. Its adjoint is still available through Gradients::of.
  Var constant(NdArray value);

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  Var last() const;

  const NdArray& value(Var v) const { return nodes_[v.index()].value; }
  Op op(Var v) const { return nodes_[v.index()].op; }
  const std::vector<std::pair<std::string, std::uint32_t>>& parameters() const {
    return params_;
  }

  // Adjoint sweep from `output` seeded with `seed`, which must match the
  // output's shape. Returns d(seed . output)/d(node) for all nodes.
  Gradients backward(Var output, const NdArray& seed) const;
  // Same, rooted at the most recently recorded node.
  Gradients backward(const NdArray& seed) const;

  // Recompute every non-leaf node from its recorded inputs.
  std::vector<NdArray> replay() const;

  // Low-level recording entry point used by the op functions below.
  Var record(Op op, std::span<const Var> inputs, std::span<const double> attrs);

 private:
  struct Node {
    Op op = Op::kLeaf;
    std::uint32_t arg_begin = 0;
    std::uint32_t arg_count = 0;
    std::uint32_t attr_begin = 0;
    std::uint32_t attr_count = 0;
    NdArray value;
  };

  Var push_leaf(NdArray value);
  NdArray compute(const Node& node, const std::vector<NdArray>* values) const;
  void backprop_node(std::uint32_t index, std::vector<std::vector<double>>& grads) const;

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> args_;
  std::vector<double> attrs_;
  std::vector<std::pair<std::string, std::uint32_t>> params_;
};

// Elementwise with broadcasting over a leading batch axis.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

Var scale(Var a, double c);
// sum_i coeffs[i] * terms[i]; all terms share a shape.
Var lincomb(std::span<const Var> terms, std::span<const double> coeffs);
// [m,k] x [k] -> [m] or [m,k] x [k,n] -> [m,n].
Var matmul(Var a, Var b);
Var transpose(Var a);

Var tanh(Var a);
Var relu(Var a);
Var sigmoid(Var a);
Var elu(Var a);

Var concat(std::span<const Var> parts, std::size_t axis = 0);
Var reshape(Var a, Shape shape);
// Contiguous range [offset, offset + length) along axis 0.
Var slice(Var a, std::size_t offset, std::size_t length);

Var sum(Var a);
Var mean(Var a);
Var sum_squares(Var a);
Var dot(Var a, Var b);
// -log softmax(logits)[target] for a single logit vector.
Var softmax_cross_entropy(Var logits, std::size_t target);

}  // namespace exitcde::diff
