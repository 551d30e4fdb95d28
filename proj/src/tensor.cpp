#include "satlab/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "satlab/errors.hpp"

namespace sat {

const char* to_string(DataErrorKind kind) noexcept {
  switch (kind) {
    case DataErrorKind::Io: return "io";
    case DataErrorKind::BadMagic: return "bad-magic";
    case DataErrorKind::BadVersion: return "bad-version";
    case DataErrorKind::Truncated: return "truncated";
    case DataErrorKind::CountMismatch: return "count-mismatch";
    case DataErrorKind::Format: return "format";
  }
  return "unknown";
}

std::size_t numel(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

namespace {
void check_shape(const Shape& shape) {
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
}
}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (numel(shape_) != data_.size())
    throw ShapeError("shape " + shape_string(shape_) + " does not match " +
                     std::to_string(data_.size()) + " values");
}

Tensor::Tensor(Shape shape, std::initializer_list<double> data)
    : Tensor(std::move(shape), std::vector<double>(data)) {}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, std::vector<double>{value}); }

double Tensor::item() const {
  if (data_.size() != 1)
    throw ShapeError("item() needs a single-element tensor, got " + shape_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (numel(shape) != data_.size())
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
  if (rank() == 0 || begin >= end || end > shape_[0])
    throw ShapeError("invalid row slice [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") of " + shape_string(shape_));
  const std::size_t row = data_.size() / shape_[0];
  Shape shape = shape_;
  shape[0] = end - begin;
  return Tensor(std::move(shape), std::vector<double>(data_.begin() + begin * row,
                                                      data_.begin() + end * row));
}

bool Tensor::all_finite() const noexcept {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace sat
