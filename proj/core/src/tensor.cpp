#include "zscr/tensor.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <sstream>

#include "zscr/error.hpp"

namespace zscr {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::EmptyTensor: return "EmptyTensor";
    case ErrorKind::NonScalarLoss: return "NonScalarLoss";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::SplitOverlap: return "SplitOverlap";
    case ErrorKind::DanglingLabel: return "DanglingLabel";
    case ErrorKind::EmptyClass: return "EmptyClass";
    case ErrorKind::UnknownClass: return "UnknownClass";
    case ErrorKind::SpecInvalid: return "SpecInvalid";
    case ErrorKind::CenterSamplingFailed: return "CenterSamplingFailed";
    case ErrorKind::SingleClassDataset: return "SingleClassDataset";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::EmptyQuerySet: return "EmptyQuerySet";
    case ErrorKind::EmptyUnseenSplit: return "EmptyUnseenSplit";
    case ErrorKind::ModelUntrained: return "ModelUntrained";
    case ErrorKind::DimsMismatch: return "DimsMismatch";
  }
  return "Unknown";
}

bool is_validation_error(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ConfigInvalid:
    case ErrorKind::SpecInvalid:
    case ErrorKind::UnknownClass:
    case ErrorKind::DimsMismatch:
    case ErrorKind::SplitOverlap:
    case ErrorKind::DanglingLabel:
    case ErrorKind::EmptyClass:
    case ErrorKind::SingleClassDataset:
    case ErrorKind::EmptyDataset:
    case ErrorKind::EmptyUnseenSplit:
    case ErrorKind::EmptyQuerySet:
    case ErrorKind::ModelUntrained:
      return true;
    default:
      return false;
  }
}

std::size_t shape_product(const Tensor::Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Tensor::Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_product(shape_), 0.0f) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_product(shape_)) {
    throw Error(ErrorKind::ShapeMismatch, "data length " + std::to_string(data_.size()) +
                                              " does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::filled(Shape shape, float value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

Tensor Tensor::scalar(float value) { return Tensor({}, {value}); }

Tensor Tensor::vector(std::vector<float> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<float> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<float>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<float> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw Error(ErrorKind::ShapeMismatch, "ragged rows in from_rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (rank() == 2) return shape_[0];
  if (rank() <= 1) return 1;
  throw Error(ErrorKind::ShapeMismatch, "rows() on tensor of shape " + shape_string(shape_));
}

std::size_t Tensor::cols() const {
  if (rank() == 2) return shape_[1];
  if (rank() == 1) return shape_[0];
  if (rank() == 0) return 1;
  throw Error(ErrorKind::ShapeMismatch, "cols() on tensor of shape " + shape_string(shape_));
}

std::span<const float> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const float>(data_).subspan(r * c, c);
}

std::span<float> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<float>(data_).subspan(r * c, c);
}

float Tensor::item() const {
  if (data_.size() != 1) {
    throw Error(ErrorKind::NonScalarLoss, "item() on tensor of shape " + shape_string(shape_));
  }
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  for (float v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool Tensor::bitwise_equal(const Tensor& other) const noexcept {
  return shape_ == other.shape_ && data_.size() == other.data_.size() &&
         (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0);
}

}  // namespace zscr
