#pragma once

// Synthetic test imagery: multiscale value noise standing in for natural
// texture, plus the lone-patch pop-out stimulus.

#include <algorithm>
#include <cmath>
#include <random>

#include "mdis/image.hpp"

namespace mdis {

namespace detail {

// One octave of value noise: white noise on a coarse lattice, bilinearly
// interpolated up to `side`.
inline GridD value_noise_octave(int side, int lattice, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  GridD coarse(lattice + 1, lattice + 1);
  for (auto& v : coarse) v = unit(rng);
  GridD out(side, side);
  double step = static_cast<double>(lattice) / side;
  for (int r = 0; r < side; ++r) {
    double fy = (r + 0.5) * step - 0.5;
    double cy = std::clamp(fy, 0.0, static_cast<double>(lattice));
    int y0 = static_cast<int>(cy);
    y0 = std::min(y0, lattice - 1);
    double wy = cy - y0;
    for (int c = 0; c < side; ++c) {
      double fx = (c + 0.5) * step - 0.5;
      double cx = std::clamp(fx, 0.0, static_cast<double>(lattice));
      int x0 = static_cast<int>(cx);
      x0 = std::min(x0, lattice - 1);
      double wx = cx - x0;
      double top = coarse(y0, x0) * (1 - wx) + coarse(y0, x0 + 1) * wx;
      double bot = coarse(y0 + 1, x0) * (1 - wx) + coarse(y0 + 1, x0 + 1) * wx;
      out(r, c) = top * (1 - wy) + bot * wy;
    }
  }
  return out;
}

// Gaussian grain whose amplitude switches between `noise` and
// `noise * (1 + texture)` on a random cell grid.
inline void fill_two_level_grain(GridD& values, std::mt19937_64& rng, double noise,
                                 double texture, int cell) {
  cell = std::max(1, cell);
  int cr = (values.rows() + cell - 1) / cell;
  int cc = (values.cols() + cell - 1) / cell;
  Grid<std::uint8_t> strong(cr, cc);
  std::bernoulli_distribution flip(0.5);
  for (auto& m : strong) m = flip(rng) ? 1 : 0;
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int r = 0; r < values.rows(); ++r)
    for (int c = 0; c < values.cols(); ++c) {
      double amp = noise * (1.0 + texture * strong(r / cell, c / cell));
      values(r, c) = std::clamp(0.5 + amp * gauss(rng), 0.0, 1.0);
    }
}

}  // namespace detail

// Sum of value-noise octaves with geometrically decaying weights; the result
// has a roughly 1/f amplitude spectrum, the usual stand-in for natural
// texture. Output is mapped affinely to [0,1] around mean 0.5, with a contrast
// knob in (0,1].
inline GrayImage octave_noise(int side, std::uint64_t seed, int octaves = 6,
                              double persistence = 0.55, double contrast = 0.8) {
  std::mt19937_64 rng(seed);
  GridD acc(side, side);
  double weight = 1.0;
  for (int o = 0; o < octaves; ++o) {
    int lattice = std::min(side, 1 << (o + 2));
    GridD oct = detail::value_noise_octave(side, lattice, rng);
    auto it = oct.begin();
    for (auto& v : acc) v += weight * *it++;
    weight *= persistence;
  }
  auto [lo, hi] = grid_min_max(acc);
  double span = hi - lo;
  GrayImage img;
  img.values = GridD(side, side);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) {
      double u = span > 0 ? (acc(r, c) - lo) / span : 0.5;  // [0,1]
      img.values(r, c) = 0.5 + contrast * (u - 0.5);
    }
  return img;
}

struct PatchRect {
  int row = 0, col = 0, side = 0;
  bool contains(int r, int c) const {
    return r >= row && r < row + side && c >= col && c < col + side;
  }
};

struct PopoutSpec {
  int side = 256;
  int patch_side = 32;
  int patch_row = -1, patch_col = -1;  // -1: centred
  double background_noise = 0.03;      // grain amplitude everywhere
  double background_texture = 0.8;     // extra amplitude in the strong half of the mix
  double patch_noise = 0.12;           // patch grain amplitude
  int texture_cell = 2;                // granularity of the amplitude mix, px
  std::uint64_t seed = 7;
};

// A plain two-level grain texture; the same family the pop-out background is
// drawn from, useful as a training corpus for universal parameters.
inline GrayImage grain_texture(int side, std::uint64_t seed, double noise = 0.03,
                               double texture = 0.8, int cell = 2) {
  std::mt19937_64 rng(seed);
  GrayImage img;
  img.values = GridD(side, side);
  detail::fill_two_level_grain(img.values, rng, noise, texture, cell);
  return img;
}

// Lone textured patch on a two-level grain background. Background amplitude
// switches between a weak and a moderately strong level on a fine random cell
// grid, so a model fitted to the image keeps two overlapping background states
// and stays uncertain about ordinary coefficients; the patch's grain is far
// outside both levels and classifies cleanly at every scale.
inline GrayImage popout_stimulus(const PopoutSpec& spec, PatchRect* rect_out = nullptr) {
  if (spec.side < 2 || spec.patch_side < 1 || spec.patch_side > spec.side)
    throw std::invalid_argument("popout_stimulus: bad geometry");
  PatchRect rect;
  rect.side = spec.patch_side;
  rect.row = spec.patch_row >= 0 ? spec.patch_row : (spec.side - spec.patch_side) / 2;
  rect.col = spec.patch_col >= 0 ? spec.patch_col : (spec.side - spec.patch_side) / 2;

  std::mt19937_64 rng(spec.seed);
  GrayImage img;
  img.values = GridD(spec.side, spec.side);
  detail::fill_two_level_grain(img.values, rng, spec.background_noise, spec.background_texture,
                               spec.texture_cell);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int r = rect.row; r < rect.row + rect.side; ++r)
    for (int c = rect.col; c < rect.col + rect.side; ++c)
      img.values(r, c) = std::clamp(0.5 + spec.patch_noise * gauss(rng), 0.0, 1.0);
  if (rect_out) *rect_out = rect;
  return img;
}

// Mean map value inside / outside the patch; for pop-out checks.
inline void patch_background_means(const GridD& map, const PatchRect& rect, double& patch_mean,
                                   double& background_mean) {
  double ps = 0, bs = 0;
  long pn = 0, bn = 0;
  for (int r = 0; r < map.rows(); ++r)
    for (int c = 0; c < map.cols(); ++c) {
      if (rect.contains(r, c)) {
        ps += map(r, c);
        ++pn;
      } else {
        bs += map(r, c);
        ++bn;
      }
    }
  patch_mean = pn ? ps / pn : 0;
  background_mean = bn ? bs / bn : 0;
}

}  // namespace mdis
