#include "otcg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "otcg/errors.hpp"

namespace otcg {

std::string Shape::str() const {
  return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.numel())
    throw DimensionError("tensor data size " + std::to_string(data_.size()) +
                         " does not match shape " + shape_.str());
}

Tensor Tensor::reshaped(Shape s) const {
  if (s.numel() != shape_.numel())
    throw DimensionError("cannot reshape " + shape_.str() + " to " + s.str());
  return Tensor(s, data_);
}

Tensor Tensor::slice_batch(int first, int count) const {
  if (first < 0 || count < 0 || first + count > shape_.n)
    throw DimensionError("batch slice out of range for " + shape_.str());
  Shape s = shape_;
  s.n = count;
  auto begin = data_.begin() + static_cast<std::ptrdiff_t>(shape_.sample() * first);
  return Tensor(s, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(s.numel())));
}

double Tensor::item() const {
  if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_.str());
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

double Tensor::abs_max() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a.shape(), b.shape(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(const Tensor& a) { return std::sqrt(dot(a, a)); }

Tensor stack_batch(std::span<const Tensor> samples) {
  if (samples.empty()) throw DimensionError("stack_batch of zero samples");
  Shape s = samples.front().shape();
  const int per = s.n;
  s.n = 0;
  std::vector<double> data;
  for (const auto& t : samples) {
    Shape ts = t.shape();
    if (ts.c != s.c || ts.h != s.h || ts.w != s.w || ts.n != per)
      throw DimensionError("stack_batch shape mismatch: " + ts.str());
    data.insert(data.end(), t.storage().begin(), t.storage().end());
    s.n += ts.n;
  }
  return Tensor(s, std::move(data));
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b))
    throw DimensionError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
}

}  // namespace otcg
