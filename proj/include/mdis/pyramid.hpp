#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "mdis/grid.hpp"
#include "mdis/image.hpp"

namespace mdis {

enum class WaveletFilter { kHaar, kDaub4 };

// Orientation band order used everywhere: HL (horizontal detail), LH (vertical
// detail), HH (diagonal detail).
inline constexpr int kNumBands = 3;
inline constexpr const char* kBandNames[kNumBands] = {"hl", "lh", "hh"};

// Per-scale wavelet coefficient blocks arranged as a forest of quad-trees.
// Scale 1 is the coarsest used scale; each root at scale 1 anchors one tree.
// A node (r,c) at scale j has its four children at (2r+dr, 2c+dc), scale j+1.
struct WaveletQuadTree {
  int levels = 0;      // number of used scales
  int root_rows = 0;   // scale-1 grid height
  int root_cols = 0;   // scale-1 grid width
  int image_side = 0;  // side of the source image (0 for synthetic trees)
  WaveletFilter filter = WaveletFilter::kHaar;
  std::vector<std::array<GridD, kNumBands>> bands;  // bands[j-1][band]
  GridD approx;                                     // residual lowpass at the root grid

  int grid_rows(int scale) const { return root_rows << (scale - 1); }
  int grid_cols(int scale) const { return root_cols << (scale - 1); }
  std::size_t nodes_at(int scale) const {
    return static_cast<std::size_t>(grid_rows(scale)) * grid_cols(scale);
  }
  std::size_t total_nodes() const {
    std::size_t n = 0;
    for (int j = 1; j <= levels; ++j) n += nodes_at(j);
    return n;
  }

  std::array<double, kNumBands> coeffs(int scale, int r, int c) const {
    const auto& b = bands[scale - 1];
    return {b[0](r, c), b[1](r, c), b[2](r, c)};
  }

  static std::pair<int, int> parent_of(int r, int c) { return {r / 2, c / 2}; }
  static std::pair<int, int> child_of(int r, int c, int k) { return {2 * r + k / 2, 2 * c + k % 2}; }
};

namespace detail {

struct FilterPair {
  std::vector<double> lo;
  std::vector<double> hi;
};

inline FilterPair analysis_filters(WaveletFilter f) {
  const double s2 = std::sqrt(2.0);
  if (f == WaveletFilter::kHaar) return {{1 / s2, 1 / s2}, {1 / s2, -1 / s2}};
  // Daubechies-4 orthonormal pair.
  const double s3 = std::sqrt(3.0);
  std::vector<double> lo = {(1 + s3) / (4 * s2), (3 + s3) / (4 * s2), (3 - s3) / (4 * s2),
                            (1 - s3) / (4 * s2)};
  std::vector<double> hi(4);
  for (int k = 0; k < 4; ++k) hi[k] = (k % 2 ? -1 : 1) * lo[3 - k];
  return {lo, hi};
}

// One analysis level along rows with periodic extension: out columns 0..n/2-1
// hold the lowpass half, n/2..n-1 the highpass half.
inline void dwt_rows(const GridD& in, GridD& out, const FilterPair& f) {
  int n = in.cols();
  int half = n / 2;
  int taps = static_cast<int>(f.lo.size());
  for (int r = 0; r < in.rows(); ++r) {
    for (int k = 0; k < half; ++k) {
      double a = 0, d = 0;
      for (int m = 0; m < taps; ++m) {
        double x = in(r, (2 * k + m) % n);
        a += f.lo[m] * x;
        d += f.hi[m] * x;
      }
      out(r, k) = a;
      out(r, half + k) = d;
    }
  }
}

inline void dwt_cols(const GridD& in, GridD& out, const FilterPair& f) {
  int n = in.rows();
  int half = n / 2;
  int taps = static_cast<int>(f.lo.size());
  for (int c = 0; c < in.cols(); ++c) {
    for (int k = 0; k < half; ++k) {
      double a = 0, d = 0;
      for (int m = 0; m < taps; ++m) {
        double x = in((2 * k + m) % n, c);
        a += f.lo[m] * x;
        d += f.hi[m] * x;
      }
      out(k, c) = a;
      out(half + k, c) = d;
    }
  }
}

// Inverse of one level along rows (adjoint of the orthonormal analysis).
inline void idwt_rows(const GridD& in, GridD& out, const FilterPair& f) {
  int n = in.cols();
  int half = n / 2;
  int taps = static_cast<int>(f.lo.size());
  for (int r = 0; r < in.rows(); ++r) {
    for (int c = 0; c < n; ++c) out(r, c) = 0;
    for (int k = 0; k < half; ++k) {
      for (int m = 0; m < taps; ++m) {
        int idx = (2 * k + m) % n;
        out(r, idx) += f.lo[m] * in(r, k) + f.hi[m] * in(r, half + k);
      }
    }
  }
}

inline void idwt_cols(const GridD& in, GridD& out, const FilterPair& f) {
  int n = in.rows();
  int half = n / 2;
  int taps = static_cast<int>(f.lo.size());
  for (int c = 0; c < in.cols(); ++c) {
    for (int r = 0; r < n; ++r) out(r, c) = 0;
    for (int k = 0; k < half; ++k) {
      for (int m = 0; m < taps; ++m) {
        int idx = (2 * k + m) % n;
        out(idx, c) += f.lo[m] * in(k, c) + f.hi[m] * in(half + k, c);
      }
    }
  }
}

}  // namespace detail

// Separable orthonormal analysis over `scales` dyadic levels. Scale `scales`
// holds the finest detail, scale 1 the coarsest; the residual lowpass stays in
// `approx`.
inline WaveletQuadTree dwt2d(const GrayImage& img, int scales,
                             WaveletFilter filter = WaveletFilter::kHaar) {
  int side = img.side();
  if (side < 1 || img.values.cols() != side) throw std::invalid_argument("dwt2d: image not square");
  if (!is_power_of_two(side)) throw std::invalid_argument("dwt2d: side not a power of two");
  int max_scales = 0;
  for (int s = side; s > 1; s /= 2) ++max_scales;
  if (scales < 1 || scales > max_scales)
    throw std::invalid_argument("dwt2d: scales out of range [1, " + std::to_string(max_scales) + "]");

  auto filt = detail::analysis_filters(filter);
  WaveletQuadTree tree;
  tree.levels = scales;
  tree.image_side = side;
  tree.filter = filter;
  tree.root_rows = tree.root_cols = side >> scales;
  tree.bands.resize(scales);

  GridD ll = img.values;
  for (int level = 0; level < scales; ++level) {
    int n = ll.rows();
    GridD tmp(n, n), full(n, n);
    detail::dwt_rows(ll, tmp, filt);
    detail::dwt_cols(tmp, full, filt);
    int half = n / 2;
    int scale = scales - level;  // finest first
    auto& b = tree.bands[scale - 1];
    b[0] = GridD(half, half);  // HL: row highpass, column lowpass
    b[1] = GridD(half, half);  // LH
    b[2] = GridD(half, half);  // HH
    GridD next(half, half);
    for (int r = 0; r < half; ++r) {
      for (int c = 0; c < half; ++c) {
        next(r, c) = full(r, c);
        b[0](r, c) = full(r, half + c);
        b[1](r, c) = full(half + r, c);
        b[2](r, c) = full(half + r, half + c);
      }
    }
    ll = std::move(next);
  }
  tree.approx = std::move(ll);
  return tree;
}

// Exact inverse of dwt2d.
inline GrayImage idwt2d(const WaveletQuadTree& tree) {
  auto filt = detail::analysis_filters(tree.filter);
  GridD ll = tree.approx;
  for (int scale = 1; scale <= tree.levels; ++scale) {
    const auto& b = tree.bands[scale - 1];
    int half = ll.rows();
    int n = 2 * half;
    GridD full(n, n);
    for (int r = 0; r < half; ++r) {
      for (int c = 0; c < half; ++c) {
        full(r, c) = ll(r, c);
        full(r, half + c) = b[0](r, c);
        full(half + r, c) = b[1](r, c);
        full(half + r, half + c) = b[2](r, c);
      }
    }
    GridD tmp(n, n);
    GridD out(n, n);
    detail::idwt_cols(full, tmp, filt);
    detail::idwt_rows(tmp, out, filt);
    ll = std::move(out);
  }
  return GrayImage{std::move(ll)};
}

// Replicates each grid cell over its pixel footprint. The target dimensions
// must be integer multiples of the grid's.
inline GridD block_upsample(const GridD& scale_map, int target_rows, int target_cols) {
  if (scale_map.empty()) throw std::invalid_argument("block_upsample: empty grid");
  if (target_rows % scale_map.rows() != 0 || target_cols % scale_map.cols() != 0)
    throw std::invalid_argument("block_upsample: target not an integer multiple of grid");
  int fr = target_rows / scale_map.rows();
  int fc = target_cols / scale_map.cols();
  GridD out(target_rows, target_cols);
  for (int r = 0; r < target_rows; ++r)
    for (int c = 0; c < target_cols; ++c) out(r, c) = scale_map(r / fr, c / fc);
  return out;
}

}  // namespace mdis
