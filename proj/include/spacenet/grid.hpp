#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace spacenet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Height × width extent of a 2D grid, in pixels.
struct Size {
  int height = 0;
  int width = 0;

  constexpr int area() const { return height * width; }
  constexpr bool positive() const { return height > 0 && width > 0; }
  friend constexpr bool operator==(const Size&, const Size&) = default;
};

inline std::string to_string(Size s) {
  std::ostringstream os;
  os << s.height << "x" << s.width;
  return os.str();
}

/// Dense row-major 2D grid. Used for skeleton images, masks, class maps and
/// ratemaps alike.
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  explicit Grid(Size size, T fill = T{})
      : size_(size), data_(static_cast<std::size_t>(checked_area(size)), fill) {}
  Grid(Size size, std::vector<T> data) : size_(size), data_(std::move(data)) {
    if (data_.size() != static_cast<std::size_t>(checked_area(size)))
      throw ShapeError("grid data length " + std::to_string(data_.size()) +
                       " does not match " + to_string(size));
  }

  Size size() const { return size_; }
  int height() const { return size_.height; }
  int width() const { return size_.width; }
  std::size_t count() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int row, int col) { return data_[index(row, col)]; }
  const T& operator()(int row, int col) const { return data_[index(row, col)]; }

  T& at(int row, int col) {
    bounds_check(row, col);
    return (*this)(row, col);
  }
  const T& at(int row, int col) const {
    bounds_check(row, col);
    return (*this)(row, col);
  }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  static int checked_area(Size s) {
    if (s.height < 0 || s.width < 0) throw ShapeError("negative grid size " + to_string(s));
    return s.area();
  }
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(size_.width) +
           static_cast<std::size_t>(col);
  }
  void bounds_check(int row, int col) const {
    if (row < 0 || col < 0 || row >= size_.height || col >= size_.width)
      throw ShapeError("grid index (" + std::to_string(row) + "," + std::to_string(col) +
                       ") outside " + to_string(size_));
  }

  Size size_{};
  std::vector<T> data_;
};

using BinaryGrid = Grid<std::uint8_t>;
using ClassMap = Grid<int>;

template <typename T>
std::size_t count_nonzero(const Grid<T>& g) {
  return static_cast<std::size_t>(
      std::count_if(g.begin(), g.end(), [](const T& v) { return v != T{}; }));
}

/// Rotate counter-clockwise by `quarter_turns` × 90°.
template <typename T>
Grid<T> rotate90(const Grid<T>& g, int quarter_turns) {
  int q = ((quarter_turns % 4) + 4) % 4;
  if (q == 0) return g;
  const int h = g.height(), w = g.width();
  Size out_size = (q % 2 == 0) ? Size{h, w} : Size{w, h};
  Grid<T> out(out_size);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      switch (q) {
        case 1: out(w - 1 - c, r) = g(r, c); break;
        case 2: out(h - 1 - r, w - 1 - c) = g(r, c); break;
        case 3: out(c, h - 1 - r) = g(r, c); break;
      }
    }
  }
  return out;
}

template <typename T>
Grid<T> transpose(const Grid<T>& g) {
  Grid<T> out(Size{g.width(), g.height()});
  for (int r = 0; r < g.height(); ++r)
    for (int c = 0; c < g.width(); ++c) out(c, r) = g(r, c);
  return out;
}

/// Nearest-neighbour resize: destination pixel (r, c) samples source
/// (floor(r·H/h), floor(c·W/w)).
template <typename T>
Grid<T> resize_nearest(const Grid<T>& src, Size target) {
  if (!target.positive()) throw ShapeError("resize target must be positive, got " + to_string(target));
  if (src.empty()) throw ShapeError("cannot resize an empty grid");
  if (src.size() == target) return src;
  Grid<T> out(target);
  for (int r = 0; r < target.height; ++r) {
    const int sr = static_cast<int>(static_cast<long long>(r) * src.height() / target.height);
    for (int c = 0; c < target.width; ++c) {
      const int sc = static_cast<int>(static_cast<long long>(c) * src.width() / target.width);
      out(r, c) = src(sr, sc);
    }
  }
  return out;
}

}  // namespace spacenet
