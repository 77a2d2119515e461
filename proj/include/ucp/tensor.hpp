#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ucp {

/// Thrown when tensor or graph dimensions disagree.
class StructuralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Shape4 {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  [[nodiscard]] std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  [[nodiscard]] std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  friend bool operator==(const Shape4&, const Shape4&) = default;

  [[nodiscard]] std::string str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
           std::to_string(w);
  }
};

// Dense NCHW tensor. Parameters are stored in the same layout:
// conv weights as (Cout, Cin, Kh, Kw), FC weights as (out, in, 1, 1),
// per-channel vectors as (C, 1, 1, 1).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape4 shape, T fill = T{0}) : shape_(shape), data_(shape.numel(), fill) {
    if (shape.n < 1 || shape.c < 1 || shape.h < 1 || shape.w < 1)
      throw StructuralError("tensor dims must be >= 1, got " + shape.str());
  }
  Tensor(int n, int c, int h, int w, T fill = T{0}) : Tensor(Shape4{n, c, h, w}, fill) {}
  Tensor(Shape4 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel())
      throw StructuralError("tensor data length " + std::to_string(data_.size()) +
                            " does not match shape " + shape_.str());
  }

  template <typename U>
  [[nodiscard]] Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  [[nodiscard]] const Shape4& shape() const { return shape_; }
  [[nodiscard]] int n() const { return shape_.n; }
  [[nodiscard]] int c() const { return shape_.c; }
  [[nodiscard]] int h() const { return shape_.h; }
  [[nodiscard]] int w() const { return shape_.w; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  [[nodiscard]] std::span<T> data() { return data_; }
  [[nodiscard]] std::span<const T> data() const { return data_; }
  [[nodiscard]] std::vector<T>& vec() { return data_; }
  [[nodiscard]] const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  [[nodiscard]] std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
  const T& at(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }

  // Contiguous H*W plane of (n, c).
  [[nodiscard]] std::span<T> channel(int n, int c) {
    return std::span<T>(data_).subspan(index(n, c, 0, 0), shape_.plane());
  }
  [[nodiscard]] std::span<const T> channel(int n, int c) const {
    return std::span<const T>(data_).subspan(index(n, c, 0, 0), shape_.plane());
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  [[nodiscard]] bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  Tensor& operator+=(const Tensor& other) {
    if (other.shape_ != shape_)
      throw StructuralError("tensor add: " + shape_.str() + " vs " + other.shape_.str());
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

 private:
  Shape4 shape_{};
  std::vector<T> data_;
};

using Tensor4 = Tensor<float>;
using Tensor4d = Tensor<double>;

/// Throws StructuralError unless every value is finite.
template <typename T>
void require_finite(const Tensor<T>& t, const std::string& what) {
  if (!t.all_finite()) throw StructuralError("non-finite value in " + what);
}

}  // namespace ucp
