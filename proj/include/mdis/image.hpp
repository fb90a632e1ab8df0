#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mdis/grid.hpp"

namespace mdis {

// Decoded raster, values already scaled to [0,1]. channels is 1 (gray) or 3 (RGB).
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> pixels;  // interleaved, row-major

  double at(int r, int c, int ch) const {
    return pixels[(static_cast<size_t>(r) * width + c) * channels + ch];
  }
};

// Square 2^J x 2^J luminance image, values in [0,1].
struct GrayImage {
  GridD values;
  int side() const { return values.rows(); }
};

inline bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

inline int floor_power_of_two(int n) {
  if (n < 1) throw std::invalid_argument("floor_power_of_two: n < 1");
  int p = 1;
  while (p * 2 <= n) p *= 2;
  return p;
}

// BT.601 luma. Gray rasters pass through unchanged.
inline GridD luminance(const Raster& img) {
  if (img.width <= 0 || img.height <= 0 || img.pixels.empty())
    throw std::invalid_argument("luminance: empty raster");
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("luminance: raster must have 1 or 3 channels");
  GridD out(img.height, img.width);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      double y = img.channels == 1
                     ? img.at(r, c, 0)
                     : 0.299 * img.at(r, c, 0) + 0.587 * img.at(r, c, 1) + 0.114 * img.at(r, c, 2);
      out(r, c) = std::clamp(y, 0.0, 1.0);
    }
  }
  return out;
}

inline GridD center_crop_square(const GridD& in) {
  int side = std::min(in.rows(), in.cols());
  int r0 = (in.rows() - side) / 2;
  int c0 = (in.cols() - side) / 2;
  GridD out(side, side);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) out(r, c) = in(r0 + r, c0 + c);
  return out;
}

// Bilinear resample with center-aligned sample positions.
inline GridD resize_bilinear(const GridD& in, int out_rows, int out_cols) {
  if (out_rows < 1 || out_cols < 1) throw std::invalid_argument("resize_bilinear: bad target");
  GridD out(out_rows, out_cols);
  double sr = static_cast<double>(in.rows()) / out_rows;
  double sc = static_cast<double>(in.cols()) / out_cols;
  for (int r = 0; r < out_rows; ++r) {
    double fy = std::clamp((r + 0.5) * sr - 0.5, 0.0, in.rows() - 1.0);
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, in.rows() - 1);
    double wy = fy - y0;
    for (int c = 0; c < out_cols; ++c) {
      double fx = std::clamp((c + 0.5) * sc - 0.5, 0.0, in.cols() - 1.0);
      int x0 = static_cast<int>(fx);
      int x1 = std::min(x0 + 1, in.cols() - 1);
      double wx = fx - x0;
      out(r, c) = (1 - wy) * ((1 - wx) * in(y0, x0) + wx * in(y0, x1)) +
                  wy * ((1 - wx) * in(y1, x0) + wx * in(y1, x1));
    }
  }
  return out;
}

// Crop geometry applied by to_grayscale, kept so fixation coordinates can be
// mapped into the processed frame later.
struct PreprocessGeometry {
  int orig_width = 0;
  int orig_height = 0;
  int crop_x = 0;
  int crop_y = 0;
  int crop_side = 0;
  int out_side = 0;

  // Original-image pixel -> processed-image pixel. May land outside [0, out_side).
  std::pair<double, double> map_point(double x, double y) const {
    double s = static_cast<double>(out_side) / crop_side;
    return {(x - crop_x) * s, (y - crop_y) * s};
  }
};

// Luma conversion plus geometry: center-crop to square, then resize down to the
// nearest power of two. Already-dyadic inputs are untouched.
inline GrayImage to_grayscale(const Raster& img, PreprocessGeometry* geom = nullptr) {
  GridD luma = luminance(img);
  GridD sq = center_crop_square(luma);
  int target = floor_power_of_two(sq.rows());
  PreprocessGeometry g;
  g.orig_width = img.width;
  g.orig_height = img.height;
  g.crop_side = sq.rows();
  g.crop_x = (img.width - g.crop_side) / 2;
  g.crop_y = (img.height - g.crop_side) / 2;
  g.out_side = target;
  if (geom) *geom = g;
  if (target == sq.rows()) return GrayImage{std::move(sq)};
  GridD resized = resize_bilinear(sq, target, target);
  for (auto& v : resized) v = std::clamp(v, 0.0, 1.0);
  return GrayImage{std::move(resized)};
}

}  // namespace mdis
