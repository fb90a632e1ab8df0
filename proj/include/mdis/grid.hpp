#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace mdis {

// Dense row-major 2D array. Rows index y (top to bottom), cols index x.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(checked_size(rows, cols), fill) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
  const T& operator()(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }

  T& at(int r, int c) {
    check(r, c);
    return (*this)(r, c);
  }
  const T& at(int r, int c) const {
    check(r, c);
    return (*this)(r, c);
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Grid& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

 private:
  static std::size_t checked_size(int rows, int cols) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("Grid: negative dimension");
    return static_cast<std::size_t>(rows) * cols;
  }

  void check(int r, int c) const {
    if (r < 0 || r >= rows_ || c < 0 || c >= cols_)
      throw std::out_of_range("Grid: index out of range");
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

using GridD = Grid<double>;

inline double grid_sum(const GridD& g) {
  double s = 0;
  for (double v : g) s += v;
  return s;
}

inline double grid_mean(const GridD& g) {
  if (g.empty()) throw std::invalid_argument("grid_mean: empty grid");
  return grid_sum(g) / static_cast<double>(g.size());
}

// Population variance (divide by N).
inline double grid_variance(const GridD& g) {
  double m = grid_mean(g);
  double s = 0;
  for (double v : g) s += (v - m) * (v - m);
  return s / static_cast<double>(g.size());
}

inline std::pair<double, double> grid_min_max(const GridD& g) {
  if (g.empty()) throw std::invalid_argument("grid_min_max: empty grid");
  auto [lo, hi] = std::minmax_element(g.begin(), g.end());
  return {*lo, *hi};
}

// Min-max rescale to [0,1]; a constant grid maps to all zeros.
inline GridD grid_normalize(const GridD& g) {
  auto [lo, hi] = grid_min_max(g);
  GridD out(g.rows(), g.cols());
  double range = hi - lo;
  if (range <= 0) return out;
  for (int r = 0; r < g.rows(); ++r)
    for (int c = 0; c < g.cols(); ++c) out(r, c) = (g(r, c) - lo) / range;
  return out;
}

}  // namespace mdis
