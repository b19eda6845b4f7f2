#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace axloc {

using Shape = std::vector<std::size_t>;

/// Thrown whenever operand extents do not satisfy an operator's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array of doubles. 4-D feature maps use [batch, channels, height, width].
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);

  [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
  [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
  [[nodiscard]] std::size_t dim(std::size_t axis) const;
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  [[nodiscard]] std::span<double> data() noexcept { return data_; }
  [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
  [[nodiscard]] const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w);
  [[nodiscard]] double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;

  [[nodiscard]] double item() const;

  /// Same data, new extents; element count must match.
  [[nodiscard]] Tensor reshaped(Shape shape) const;

  void fill(double value);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  [[nodiscard]] std::size_t offset4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;

  Shape shape_;
  std::vector<double> data_;
};

}  // namespace axloc
