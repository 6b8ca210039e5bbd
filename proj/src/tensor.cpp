#include "epe/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "epe/error.hpp"

namespace epe {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 4) {
    throw ShapeError("tensor rank must be 1..4, got " + std::to_string(shape.size()));
  }
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_numel(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_to_string(shape_));
  }
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_to_string(shape_));
  }
  return shape_[axis];
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
Tensor<T>& Tensor<T>::operator+=(const Tensor& other) {
  if (other.shape_ != shape_) {
    throw ShapeError("cannot accumulate " + shape_to_string(other.shape_) + " into " + shape_to_string(shape_));
  }
  T* dst = data_.data();
  const T* src = other.data_.data();
  const std::size_t n = data_.size();
  for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
  return *this;
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

template <typename T>
void require_rank4(const Tensor<T>& t, const char* what) {
  if (t.rank() != 4) {
    throw ShapeError(std::string(what) + " must be rank 4 (NCHW), got " + shape_to_string(t.shape()));
  }
}

template <typename T>
Tensor<T> unfold(const Tensor<T>& image, std::size_t n) {
  require_rank4(image, "unfold input");
  if (image.dim(1) != 1) {
    throw ShapeError("unfold expects a single-channel image, got " + shape_to_string(image.shape()));
  }
  if (n == 0) throw ValueError("patch size must be positive");
  const std::size_t batch = image.dim(0), height = image.dim(2), width = image.dim(3);
  if (height % n != 0 || width % n != 0) {
    throw ShapeError("image " + std::to_string(height) + "x" + std::to_string(width) +
                     " is not divisible by patch size " + std::to_string(n) + "; pad the image first");
  }
  const std::size_t grid_h = height / n, grid_w = width / n, patches = grid_h * grid_w;
  Tensor<T> out({batch, patches, n, n});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t p = 0; p < patches; ++p) {
      const std::size_t y0 = (p / grid_w) * n, x0 = (p % grid_w) * n;
      for (std::size_t y = 0; y < n; ++y) {
        const T* src = &image.at(b, 0, y0 + y, x0);
        std::copy(src, src + n, &out.at(b, p, y, 0));
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> fold(const Tensor<T>& patches, std::size_t height, std::size_t width) {
  require_rank4(patches, "fold input");
  const std::size_t n = patches.dim(2);
  if (patches.dim(3) != n || n == 0) {
    throw ShapeError("fold expects square patches, got " + shape_to_string(patches.shape()));
  }
  if (height % n != 0 || width % n != 0 || patches.dim(1) != (height / n) * (width / n)) {
    throw ShapeError("cannot fold " + shape_to_string(patches.shape()) + " into " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
  const std::size_t batch = patches.dim(0), grid_w = width / n, count = patches.dim(1);
  Tensor<T> out({batch, 1, height, width});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t p = 0; p < count; ++p) {
      const std::size_t y0 = (p / grid_w) * n, x0 = (p % grid_w) * n;
      for (std::size_t y = 0; y < n; ++y) {
        const T* src = &patches.at(b, p, y, 0);
        std::copy(src, src + n, &out.at(b, 0, y0 + y, x0));
      }
    }
  }
  return out;
}

template class Tensor<float>;
template class Tensor<double>;
template void require_rank4(const Tensor<float>&, const char*);
template void require_rank4(const Tensor<double>&, const char*);
template Tensor<float> unfold(const Tensor<float>&, std::size_t);
template Tensor<double> unfold(const Tensor<double>&, std::size_t);
template Tensor<float> fold(const Tensor<float>&, std::size_t, std::size_t);
template Tensor<double> fold(const Tensor<double>&, std::size_t, std::size_t);

}  // namespace epe
