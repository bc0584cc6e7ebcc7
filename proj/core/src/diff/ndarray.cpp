#include "exitcde/diff/ndarray.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "exitcde/errors.hpp"

namespace exitcde::diff {

Shape::Shape(std::initializer_list<std::size_t> dims)
    : Shape(std::span<const std::size_t>(dims.begin(), dims.size())) {}

Shape::Shape(std::span<const std::size_t> dims) {
  if (dims.size() > kMaxRank) {
    throw ShapeError("rank " + std::to_string(dims.size()) + " exceeds maximum " +
                     std::to_string(kMaxRank));
  }
  for (std::size_t d : dims) {
    if (d == 0) throw ShapeError("zero-sized dimension in shape");
  }
  std::copy(dims.begin(), dims.end(), dims_.begin());
  rank_ = dims.size();
}

std::size_t Shape::size() const {
  std::size_t n = 1;
  for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
  return n;
}

Shape Shape::drop_leading() const {
  if (rank_ == 0) throw ShapeError("cannot drop leading axis of a scalar shape");
  return Shape(std::span<const std::size_t>(dims_.data() + 1, rank_ - 1));
}

bool Shape::operator==(const Shape& other) const {
  if (rank_ != other.rank_) return false;
  for (std::size_t i = 0; i < rank_; ++i) {
    if (dims_[i] != other.dims_[i]) return false;
  }
  return true;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < rank_; ++i) {
    if (i) os << ',';
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

NdArray::NdArray(Shape shape, double fill) : shape_(shape), data_(shape.size(), fill) {}

NdArray::NdArray(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (shape_.size() != data_.size()) {
    throw ShapeError("shape " + shape_.str() + " holds " + std::to_string(shape_.size()) +
                     " values but " + std::to_string(data_.size()) + " were given");
  }
}

NdArray NdArray::vector(std::vector<double> values) {
  Shape s{values.size()};
  return NdArray(s, std::move(values));
}

NdArray NdArray::scalar(double v) { return NdArray(Shape{}, std::vector<double>{v}); }

NdArray NdArray::identity(std::size_t n) {
  NdArray out(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) out.at(i, i) = 1.0;
  return out;
}

NdArray NdArray::reshaped(Shape shape) const {
  if (shape.size() != size()) {
    throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  return NdArray(shape, data_);
}

bool NdArray::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace exitcde::diff
