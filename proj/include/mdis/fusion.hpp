#pragma once

#include <cstdint>
#include <vector>

#include "mdis/hmt.hpp"

namespace mdis {

struct FusionOptions {
  // Hard context conditions each node on its parent's MAP label; the soft
  // mode mixes the transition rows by the parent's fused posterior instead.
  bool soft_context = false;
};

// Per-scale MAP labels with their context-fused posteriors. The label of a
// node's parent is the context the node was decided under.
struct LabelField {
  int levels = 0;
  std::vector<Grid<std::uint8_t>> labels;     // 0 = surround, 1 = centre
  std::vector<Grid<StatePair>> posterior;     // f(c | subtree evidence, parent context)

  const Grid<std::uint8_t>& labels_at(int scale) const { return labels[scale - 1]; }
  const Grid<StatePair>& posterior_at(int scale) const { return posterior[scale - 1]; }
};

// Coarse-to-fine MAP labeling. Roots take the argmax of their posterior
// marginals; every finer node fuses its subtree likelihood with the transition
// row selected by the parent's label. Ties resolve to surround.
inline LabelField map_labels(const LikelihoodTree& lik, const HmtParams& params,
                             const FusionOptions& opts = {}) {
  if (params.num_scales != lik.levels)
    throw std::invalid_argument("map_labels: params/likelihood scale mismatch");
  LabelField out;
  out.levels = lik.levels;
  out.labels.resize(lik.levels);
  out.posterior.resize(lik.levels);

  {
    const auto& root_post = lik.posterior[0];
    out.posterior[0] = root_post;
    out.labels[0] = Grid<std::uint8_t>(root_post.rows(), root_post.cols());
    for (int r = 0; r < root_post.rows(); ++r)
      for (int c = 0; c < root_post.cols(); ++c)
        out.labels[0](r, c) = root_post(r, c)[1] > root_post(r, c)[0] ? 1 : 0;
  }

  for (int j = 2; j <= lik.levels; ++j) {
    const auto& A = params.transition_to(j);
    const auto& beta = lik.log_beta[j - 1];
    auto& post = out.posterior[j - 1];
    auto& lab = out.labels[j - 1];
    post = Grid<StatePair>(beta.rows(), beta.cols());
    lab = Grid<std::uint8_t>(beta.rows(), beta.cols());
    const auto& parent_lab = out.labels[j - 2];
    const auto& parent_post = out.posterior[j - 2];
    for (int r = 0; r < beta.rows(); ++r) {
      for (int c = 0; c < beta.cols(); ++c) {
        auto [pr, pc] = WaveletQuadTree::parent_of(r, c);
        StatePair prior;
        if (opts.soft_context) {
          const StatePair& q = parent_post(pr, pc);
          prior = {q[0] * A[0][0] + q[1] * A[1][0], q[0] * A[0][1] + q[1] * A[1][1]};
        } else {
          int v = parent_lab(pr, pc);
          prior = {A[v][0], A[v][1]};
        }
        const double neg_inf = -std::numeric_limits<double>::infinity();
        StatePair lp = {prior[0] > 0 ? std::log(prior[0]) + beta(r, c)[0] : neg_inf,
                        prior[1] > 0 ? std::log(prior[1]) + beta(r, c)[1] : neg_inf};
        post(r, c) = detail::normalize_log_pair(lp);
        lab(r, c) = post(r, c)[1] > post(r, c)[0] ? 1 : 0;
      }
    }
  }
  return out;
}

// Label plane as a 0/1-valued grid, for PGM export.
inline GridD label_grid(const LabelField& field, int scale) {
  const auto& lab = field.labels_at(scale);
  GridD out(lab.rows(), lab.cols());
  for (int r = 0; r < lab.rows(); ++r)
    for (int c = 0; c < lab.cols(); ++c) out(r, c) = lab(r, c);
  return out;
}

}  // namespace mdis
