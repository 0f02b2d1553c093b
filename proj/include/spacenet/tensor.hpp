#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <new>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "spacenet/grid.hpp"

namespace spacenet {

/// 64-byte aligned storage. Eigen picks its vectorised code path from pointer
/// alignment, so unaligned buffers make reductions differ run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

  template <typename U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Shape of a 4D activation tensor in NCHW order.
struct Shape4 {
  int n = 0, c = 0, h = 0, w = 0;

  constexpr std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  constexpr std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  friend constexpr bool operator==(const Shape4&, const Shape4&) = default;
};

inline std::string to_string(const Shape4& s) {
  return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) +
         "," + std::to_string(s.w) + ")";
}

/// Dense NCHW tensor with contiguous storage.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape4 shape, T fill = T{}) : shape_(shape), data_(shape.numel(), fill) {}

  const Shape4& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  T& operator()(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  const T& operator()(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

  /// Pointer to the first element of sample `n`.
  T* sample(int n) { return data_.data() + static_cast<std::size_t>(n) * sample_size(); }
  const T* sample(int n) const { return data_.data() + static_cast<std::size_t>(n) * sample_size(); }
  std::size_t sample_size() const { return static_cast<std::size_t>(shape_.c) * shape_.plane(); }

  T* channel(int n, int c) { return sample(n) + static_cast<std::size_t>(c) * shape_.plane(); }
  const T* channel(int n, int c) const {
    return sample(n) + static_cast<std::size_t>(c) * shape_.plane();
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(T{}); }

  Tensor& operator+=(const Tensor& o) {
    check_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  /// Extract one (sample, channel) plane as a grid.
  Grid<T> plane(int n, int c) const {
    const T* p = channel(n, c);
    return Grid<T>(Size{shape_.h, shape_.w}, std::vector<T>(p, p + shape_.plane()));
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

  void check_same(const Tensor& o) const {
    if (!(o.shape_ == shape_))
      throw ShapeError("tensor shape mismatch " + to_string(shape_) + " vs " + to_string(o.shape_));
  }

 private:
  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  Shape4 shape_{};
  AlignedVector<T> data_;
};

/// Stack single-channel grids into an (N,1,H,W) tensor, scaling each value.
template <typename T, typename U>
Tensor<T> stack_planes(std::span<const Grid<U>> planes, T scale = T{1}) {
  if (planes.empty()) throw ShapeError("cannot stack zero planes");
  const Size s = planes.front().size();
  Tensor<T> out(Shape4{static_cast<int>(planes.size()), 1, s.height, s.width});
  for (std::size_t i = 0; i < planes.size(); ++i) {
    if (planes[i].size() != s) throw ShapeError("planes differ in size");
    T* dst = out.sample(static_cast<int>(i));
    for (std::size_t k = 0; k < planes[i].count(); ++k)
      dst[k] = static_cast<T>(planes[i].values()[k]) * scale;
  }
  return out;
}

}  // namespace spacenet
