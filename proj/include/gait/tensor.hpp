#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gait/errors.hpp"

namespace gait {

/// Dimension list, outermost first. Rank up to 5 covers everything here:
/// batches of 3D cuboids are (N, C, T, H, W) and images are (H, W).
using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) {
    if (d < 0) throw ConfigError("negative dimension in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

/// Dense row-major tensor. Deliberately minimal: contiguous storage plus
/// indexing, so every numeric kernel can hand the flat buffer to Eigen maps.
template <typename Scalar>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Scalar value = Scalar(0))
      : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), value) {}
  Tensor(Shape shape, std::vector<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_))
      throw ConfigError("tensor data size " + std::to_string(data_.size()) +
                        " does not match shape " + shape_str(shape_));
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::vector<Scalar>& vec() { return data_; }
  const std::vector<Scalar>& vec() const { return data_; }

  Scalar& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const Scalar& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  template <typename... Ix>
  Scalar& at(Ix... ix) {
    return data_[offset({static_cast<int>(ix)...})];
  }
  template <typename... Ix>
  const Scalar& at(Ix... ix) const {
    return data_[offset({static_cast<int>(ix)...})];
  }

  void fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

  /// Same storage, new dims; element count must match.
  Tensor reshaped(Shape s) const {
    if (shape_numel(s) != numel())
      throw ConfigError("reshape " + shape_str(shape_) + " -> " + shape_str(s) +
                        " changes element count");
    Tensor out;
    out.shape_ = std::move(s);
    out.data_ = data_;
    return out;
  }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out;
    out.shape_raw() = shape_;
    out.vec().resize(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out.vec()[i] = static_cast<Other>(data_[i]);
    return out;
  }

  bool all_finite() const {
    for (Scalar v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  Scalar min() const { return data_.empty() ? Scalar(0) : *std::min_element(data_.begin(), data_.end()); }
  Scalar max() const { return data_.empty() ? Scalar(0) : *std::max_element(data_.begin(), data_.end()); }
  double sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }
  double mean() const { return data_.empty() ? 0.0 : sum() / static_cast<double>(data_.size()); }

  Shape& shape_raw() { return shape_; }

 private:
  std::size_t offset(std::initializer_list<int> ix) const {
    if (ix.size() != shape_.size())
      throw ConfigError("index rank " + std::to_string(ix.size()) + " vs tensor rank " +
                        std::to_string(shape_.size()));
    std::size_t off = 0;
    std::size_t d = 0;
    for (int i : ix) {
      off = off * static_cast<std::size_t>(shape_[d]) + static_cast<std::size_t>(i);
      ++d;
    }
    return off;
  }

  Shape shape_;
  std::vector<Scalar> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace gait
