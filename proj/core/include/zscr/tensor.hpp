#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace zscr {

/// Dense row-major array of 32-bit reals.
///
/// A rank-0 tensor (empty shape) holds one scalar. Vectors are rank 1 and
/// batches of vectors are rank-2 `[rows x cols]` matrices.
class Tensor {
 public:
  using Shape = std::vector<std::size_t>;

  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor filled(Shape shape, float value);
  static Tensor scalar(float value);
  static Tensor vector(std::vector<float> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<float> values);
  static Tensor from_rows(std::initializer_list<std::initializer_list<float>> rows);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  // Matrix view helpers; rank-1 tensors are treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }
  const float* raw() const noexcept { return data_.data(); }
  float* raw() noexcept { return data_.data(); }

  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }
  float at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  float& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

  std::span<const float> row(std::size_t r) const;
  std::span<float> row(std::size_t r);

  /// The single value of a one-element tensor.
  float item() const;

  bool all_finite() const noexcept;

  /// Bitwise equality of shape and data.
  bool bitwise_equal(const Tensor& other) const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

std::size_t shape_product(const Tensor::Shape& shape);
std::string shape_string(const Tensor::Shape& shape);

}  // namespace zscr
