#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dpn {

/// Raised for malformed arguments to any kernel or model entry point.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Shape {
  std::size_t n = 0, c = 0, h = 0, w = 0;

  [[nodiscard]] constexpr std::size_t size() const { return n * c * h * w; }
  [[nodiscard]] constexpr std::size_t plane() const { return h * w; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;
  [[nodiscard]] std::string str() const;
};

/// Dense (N, C, H, W) array, W fastest. The element type is float on the
/// production path and double when shadowing a computation for gradient checks.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{0}) : shape_(shape), data_(shape.size(), fill) {}
  BasicTensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_.str());
    }
  }

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] std::size_t n() const { return shape_.n; }
  [[nodiscard]] std::size_t c() const { return shape_.c; }
  [[nodiscard]] std::size_t h() const { return shape_.h; }
  [[nodiscard]] std::size_t w() const { return shape_.w; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  [[nodiscard]] std::span<T> data() { return data_; }
  [[nodiscard]] std::span<const T> data() const { return data_; }
  [[nodiscard]] std::vector<T>& storage() { return data_; }
  [[nodiscard]] const std::vector<T>& storage() const { return data_; }

  [[nodiscard]] std::size_t offset(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) { return data_[offset(n, c, y, x)]; }
  const T& operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[offset(n, c, y, x)];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// One H×W channel plane.
  [[nodiscard]] std::span<T> plane(std::size_t n, std::size_t c) {
    return std::span<T>(data_).subspan(offset(n, c, 0, 0), shape_.plane());
  }
  [[nodiscard]] std::span<const T> plane(std::size_t n, std::size_t c) const {
    return std::span<const T>(data_).subspan(offset(n, c, 0, 0), shape_.plane());
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  [[nodiscard]] BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  Shape shape_{};
  std::vector<T> data_;
};

using Tensor4 = BasicTensor<float>;
using Tensor4d = BasicTensor<double>;

/// True when every element is finite.
template <typename T>
[[nodiscard]] bool all_finite(const BasicTensor<T>& t);

}  // namespace dpn
