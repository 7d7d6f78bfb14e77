#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gw/core/error.hpp"

namespace gw::nn {

// (N batch, C channels, H, W); data is contiguous with W innermost.
struct Shape4 {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
  }
  friend bool operator==(const Shape4&, const Shape4&) = default;
};

template <typename T>
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(Shape4 shape, T fill = T(0)) : shape_(shape), data_(shape.size(), fill) {
    check_dims();
  }
  Tensor4(Shape4 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    check_dims();
    if (data_.size() != shape_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) + " != " +
                       std::to_string(shape_.size()) + " for shape " + shape_.str());
    }
  }

  const Shape4& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  const std::vector<T>& vec() const { return data_; }
  std::vector<T>& vec() { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t offset(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& at(int n, int c, int y, int x) { return data_[offset(n, c, y, x)]; }
  const T& at(int n, int c, int y, int x) const { return data_[offset(n, c, y, x)]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor4& operator+=(const Tensor4& other) {
    if (!(other.shape_ == shape_)) {
      throw ShapeError("tensor add: " + shape_.str() + " vs " + other.shape_.str());
    }
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  template <typename U>
  Tensor4<U> cast() const {
    return Tensor4<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor4&, const Tensor4&) = default;

 private:
  void check_dims() const {
    if (shape_.n < 1 || shape_.c < 1 || shape_.h < 1 || shape_.w < 1) {
      throw ShapeError("tensor dims must be >= 1, got " + shape_.str());
    }
  }

  Shape4 shape_{};
  std::vector<T> data_;
};

// Named trainable or running-statistic array with its gradient buffer.
template <typename T>
struct Param {
  std::string name;
  Tensor4<T> value;
  Tensor4<T> grad;
  bool trainable = true;

  Param() = default;
  Param(std::string n, Shape4 shape, bool is_trainable = true)
      : name(std::move(n)), value(shape), grad(shape), trainable(is_trainable) {}
};

}  // namespace gw::nn
