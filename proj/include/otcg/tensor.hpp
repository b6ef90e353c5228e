#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace otcg {

/// Dense 4-D shape in NCHW order. Vectors and scalars use trailing ones,
/// e.g. a bias is {1, C, 1, 1} and a per-sample value is {N, 1, 1, 1}.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  constexpr std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  constexpr std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  constexpr std::size_t sample() const { return static_cast<std::size_t>(c) * h * w; }
  constexpr int operator[](int i) const {
    return i == 0 ? n : i == 1 ? c : i == 2 ? h : w;
  }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;

  std::string str() const;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(Shape{}, v); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(int n, int c, int h, int w) {
    return data_[((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }
  double at(int n, int c, int h, int w) const {
    return data_[((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }

  /// Same data, different shape with equal element count.
  Tensor reshaped(Shape s) const;
  /// Copy of samples [first, first+count).
  Tensor slice_batch(int first, int count) const;
  double item() const;

  bool all_finite() const;
  double sum() const;
  double abs_max() const;

 private:
  Shape shape_{0, 0, 0, 0};
  std::vector<double> data_;
};

double dot(const Tensor& a, const Tensor& b);
double norm2(const Tensor& a);
Tensor stack_batch(std::span<const Tensor> samples);
void require_same_shape(const Shape& a, const Shape& b, const char* what);

}  // namespace otcg
