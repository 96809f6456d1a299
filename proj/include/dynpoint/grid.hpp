#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dynpoint/errors.hpp"

namespace dynpoint {

/// Dense row-major H×W grid. Indexed (row y, column x); integer coordinates
/// denote pixel centers.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, const T& fill = T{})
      : width_(width), height_(height) {
    require(width >= 0 && height >= 0, "grid dimensions must be non-negative");
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int y, int x) { return data_[index(y, x)]; }
  const T& operator()(int y, int x) const { return data_[index(y, x)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int y, int x) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }
  bool contains(int y, int x) const { return y >= 0 && y < height_ && x >= 0 && x < width_; }

  template <typename U>
  bool same_shape(const Grid<U>& other) const {
    return width_ == other.width() && height_ == other.height();
  }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.data_ == b.data_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

// Byte mask, nonzero = set.
using Mask = Grid<std::uint8_t>;

inline std::size_t count_set(const Mask& mask) {
  std::size_t n = 0;
  for (auto v : mask.values()) n += v != 0;
  return n;
}

}  // namespace dynpoint
