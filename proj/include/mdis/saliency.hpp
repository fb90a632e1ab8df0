#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "mdis/fusion.hpp"
#include "mdis/hmt.hpp"
#include "mdis/image.hpp"
#include "mdis/pyramid.hpp"

namespace mdis {

// How the per-scale class prior entering H(C^j) is estimated.
enum class PriorEstimator { kMeanPosterior, kLabelFraction };

// Per-scale discriminant power I_i^j in bits plus the per-scale class prior
// entropy it is measured against.
struct SaliencyPyramid {
  int levels = 0;
  std::vector<GridD> info;             // info[j-1](r,c) in [0, prior_entropy[j-1]]
  std::vector<double> prior_entropy;   // H(C^j), bits

  const GridD& info_at(int scale) const { return info[scale - 1]; }
};

struct SaliencyMap {
  GridD values;      // raw S(l), full resolution
  GridD normalized;  // min-max copy in [0,1], export/metrics only
  std::string provenance;
};

inline double binary_entropy_bits(const StatePair& p) {
  double h = 0;
  for (double q : p)
    if (q > 0) h -= q * std::log2(q);
  return h;
}

// Prior entropy minus posterior entropy, clamped below at zero.
inline double discriminant_power(const StatePair& posterior, const StatePair& prior) {
  auto check = [](const StatePair& p, const char* what) {
    if (!(p[0] >= 0 && p[1] >= 0) || std::abs(p[0] + p[1] - 1.0) > 1e-9)
      throw std::invalid_argument(std::string("discriminant_power: ") + what +
                                  " is not a distribution");
  };
  check(posterior, "posterior");
  check(prior, "prior");
  return std::max(0.0, binary_entropy_bits(prior) - binary_entropy_bits(posterior));
}

// Discriminant power for every node, against the empirical class prior of its
// scale (mean fused posterior by default).
inline SaliencyPyramid mdis_pyramid(const LikelihoodTree& lik, const LabelField& labels,
                                    PriorEstimator est = PriorEstimator::kMeanPosterior) {
  if (lik.levels != labels.levels)
    throw std::invalid_argument("mdis_pyramid: likelihood/label scale mismatch");
  SaliencyPyramid pyr;
  pyr.levels = labels.levels;
  pyr.info.resize(labels.levels);
  pyr.prior_entropy.resize(labels.levels);
  for (int j = 1; j <= labels.levels; ++j) {
    const auto& post = labels.posterior_at(j);
    if (post.empty()) throw std::invalid_argument("mdis_pyramid: empty scale");
    StatePair prior{};
    if (est == PriorEstimator::kMeanPosterior) {
      for (const auto& q : post) {
        prior[0] += q[0];
        prior[1] += q[1];
      }
      prior[0] /= static_cast<double>(post.size());
      prior[1] /= static_cast<double>(post.size());
    } else {
      const auto& lab = labels.labels_at(j);
      double frac = 0;
      for (auto v : lab) frac += v;
      frac /= static_cast<double>(lab.size());
      prior = {1.0 - frac, frac};
    }
    double h_prior = binary_entropy_bits(prior);
    pyr.prior_entropy[j - 1] = h_prior;
    GridD& info = pyr.info[j - 1];
    info = GridD(post.rows(), post.cols());
    for (int r = 0; r < post.rows(); ++r)
      for (int c = 0; c < post.cols(); ++c)
        info(r, c) = std::max(0.0, h_prior - binary_entropy_bits(post(r, c)));
  }
  return pyr;
}

// Maximum-information integration: per pixel, the largest upsampled
// discriminant power across scales. The finest scale supplies tied values.
inline SaliencyMap integrate_max(const SaliencyPyramid& pyr, int target_rows, int target_cols) {
  if (pyr.levels < 1) throw std::invalid_argument("integrate_max: empty pyramid");
  GridD out;
  for (int j = 1; j <= pyr.levels; ++j) {
    GridD up = block_upsample(pyr.info_at(j), target_rows, target_cols);
    if (j == 1) {
      out = std::move(up);
    } else {
      for (int r = 0; r < target_rows; ++r)
        for (int c = 0; c < target_cols; ++c)
          if (up(r, c) >= out(r, c)) out(r, c) = up(r, c);
    }
  }
  SaliencyMap map;
  map.normalized = grid_normalize(out);
  map.values = std::move(out);
  map.provenance = "integrated";
  return map;
}

struct SaliencyOptions {
  HmtFlavor variant = HmtFlavor::kThmt;
  int scales = 5;
  WaveletFilter filter = WaveletFilter::kHaar;
  std::optional<HmtParams> params;  // required for uhmt; pretrained model otherwise
  EmOptions em{};
  FusionOptions fusion{};
  PriorEstimator prior = PriorEstimator::kMeanPosterior;
};

struct SaliencyOutput {
  SaliencyMap integrated;
  std::vector<SaliencyMap> per_scale;  // index j-1, upsampled to image resolution
  SaliencyPyramid pyramid;
  HmtParams model;  // parameters actually used
  double seconds = 0;
};

// Full pipeline: wavelet quad-tree, HMT inference (training the model first
// unless one was supplied), MAP fusion, per-scale discriminant maps and the
// integrated map. Wall-clock seconds cover everything including training.
inline SaliencyOutput compute_saliency_all(const GrayImage& img, const SaliencyOptions& opts) {
  auto t0 = std::chrono::steady_clock::now();
  WaveletQuadTree tree = dwt2d(img, opts.scales, opts.filter);
  HmtParams model;
  if (opts.params) {
    model = *opts.params;
    check_tree_params(tree, model);
  } else if (opts.variant == HmtFlavor::kUhmt) {
    throw std::invalid_argument("compute_saliency: uhmt requires universal params");
  } else if (opts.variant == HmtFlavor::kVhmt) {
    model = em_train_vector(tree, init_params(tree, HmtFlavor::kVhmt), opts.em).params;
  } else {
    model = em_train(tree, init_params(tree, HmtFlavor::kThmt), opts.em).params;
  }

  LikelihoodTree lik = upward_downward(tree, model);
  LabelField labels = map_labels(lik, model, opts.fusion);
  SaliencyPyramid pyr = mdis_pyramid(lik, labels, opts.prior);

  int side = img.side();
  std::string vname = flavor_name(opts.variant);
  SaliencyOutput out;
  out.integrated = integrate_max(pyr, side, side);
  out.integrated.provenance = vname + "0";
  out.per_scale.resize(pyr.levels);
  for (int j = 1; j <= pyr.levels; ++j) {
    SaliencyMap m;
    m.values = block_upsample(pyr.info_at(j), side, side);
    m.normalized = grid_normalize(m.values);
    m.provenance = vname + std::to_string(j);
    out.per_scale[j - 1] = std::move(m);
  }
  out.pyramid = std::move(pyr);
  out.model = std::move(model);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

// scale_select 0 returns the integrated map, k in 1..scales that scale's map.
inline SaliencyMap compute_saliency(const GrayImage& img, HmtFlavor variant, int scale_select,
                                    SaliencyOptions opts = {}) {
  opts.variant = variant;
  if (scale_select < 0 || scale_select > opts.scales)
    throw std::invalid_argument("compute_saliency: scale_select out of range");
  SaliencyOutput out = compute_saliency_all(img, opts);
  return scale_select == 0 ? out.integrated : out.per_scale[scale_select - 1];
}

}  // namespace mdis
