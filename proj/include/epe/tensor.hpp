#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace epe {

/// Extents of a tensor, outermost first. Image tensors are rank 4 (N, C, H, W).
/// A zero extent is permitted so that empty patch groups can flow through layers.
using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major tensor of rank 1 to 4.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return shape_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Element of a rank-4 tensor.
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  void fill(T value);
  Tensor& operator+=(const Tensor& other);

  /// Same data viewed under a new shape of equal element count.
  Tensor reshaped(Shape shape) const;

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// Throws ShapeError unless `t` is rank 4; `what` names the argument.
template <typename T>
void require_rank4(const Tensor<T>& t, const char* what);

/// Splits an N x 1 x H x W image into non-overlapping n x n patches, giving N x P x n x n.
/// Patches are enumerated row-major over the patch grid.
template <typename T>
Tensor<T> unfold(const Tensor<T>& image, std::size_t n);

/// Inverse of unfold: N x P x n x n patches back to N x 1 x H x W.
template <typename T>
Tensor<T> fold(const Tensor<T>& patches, std::size_t height, std::size_t width);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace epe
