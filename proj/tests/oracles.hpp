#pragma once

// Independent reference implementations used only by tests. Everything here
// enumerates or sorts; none of it shares code paths with the library
// algorithms it checks.

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "mdis/fusion.hpp"
#include "mdis/hmt.hpp"
#include "mdis/pyramid.hpp"

namespace oracle {

using mdis::HmtFlavor;
using mdis::HmtParams;
using mdis::StatePair;
using mdis::WaveletQuadTree;

struct NodeRef {
  int scale;  // 1-based
  int r, c;
};

inline std::vector<NodeRef> list_nodes(const WaveletQuadTree& tree) {
  std::vector<NodeRef> nodes;
  for (int j = 1; j <= tree.levels; ++j)
    for (int r = 0; r < tree.grid_rows(j); ++r)
      for (int c = 0; c < tree.grid_cols(j); ++c) nodes.push_back({j, r, c});
  return nodes;
}

inline int find_node(const std::vector<NodeRef>& nodes, int scale, int r, int c) {
  for (size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].scale == scale && nodes[i].r == r && nodes[i].c == c) return static_cast<int>(i);
  return -1;
}

struct BruteForceResult {
  double log_likelihood;
  std::vector<StatePair> marginals;  // indexed like list_nodes
};

inline double log_sum_exp_vec(const std::vector<double>& xs) {
  double hi = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(hi)) return hi;
  double s = 0;
  for (double x : xs) s += std::exp(x - hi);
  return hi + std::log(s);
}

// Joint log-probability of one complete hidden-state assignment.
inline double assignment_log_prob(const WaveletQuadTree& tree, const HmtParams& params,
                                  const std::vector<NodeRef>& nodes,
                                  const mdis::detail::EmissionTable& emis, std::uint32_t mask) {
  double lp = 0;
  for (size_t i = 0; i < nodes.size(); ++i) {
    const NodeRef& n = nodes[i];
    int s = (mask >> i) & 1;
    StatePair le = emis.log_emission(n.scale, tree.coeffs(n.scale, n.r, n.c));
    lp += le[s];
    if (n.scale == 1) {
      double p = params.root_prior[s];
      lp += p > 0 ? std::log(p) : -std::numeric_limits<double>::infinity();
    } else {
      auto [pr, pc] = WaveletQuadTree::parent_of(n.r, n.c);
      int pi = find_node(nodes, n.scale - 1, pr, pc);
      int ps = (mask >> pi) & 1;
      double a = params.transition_to(n.scale)[ps][s];
      lp += a > 0 ? std::log(a) : -std::numeric_limits<double>::infinity();
    }
  }
  return lp;
}

// Exhaustive enumeration over all 2^n hidden-state assignments.
inline BruteForceResult brute_force(const WaveletQuadTree& tree, const HmtParams& params) {
  auto nodes = list_nodes(tree);
  if (nodes.size() > 20) throw std::invalid_argument("brute_force: tree too large");
  auto emis = mdis::detail::EmissionTable::build(params);
  std::uint32_t combos = 1u << nodes.size();
  std::vector<double> all(combos);
  for (std::uint32_t mask = 0; mask < combos; ++mask)
    all[mask] = assignment_log_prob(tree, params, nodes, emis, mask);
  double total = log_sum_exp_vec(all);

  BruteForceResult res;
  res.log_likelihood = total;
  res.marginals.resize(nodes.size());
  for (size_t i = 0; i < nodes.size(); ++i) {
    std::vector<double> on, off;
    for (std::uint32_t mask = 0; mask < combos; ++mask)
      ((mask >> i) & 1 ? on : off).push_back(all[mask]);
    double l1 = log_sum_exp_vec(on), l0 = log_sum_exp_vec(off);
    res.marginals[i] = {std::exp(l0 - total), std::exp(l1 - total)};
  }
  return res;
}

// p(observations in the subtree rooted at (scale,r,c) | root state), by
// enumerating the subtree's assignments.
inline StatePair brute_force_subtree_likelihood(const WaveletQuadTree& tree,
                                                const HmtParams& params, int scale, int r, int c) {
  // Collect the subtree's nodes.
  std::vector<NodeRef> nodes;
  std::vector<NodeRef> frontier = {{scale, r, c}};
  while (!frontier.empty()) {
    NodeRef n = frontier.back();
    frontier.pop_back();
    nodes.push_back(n);
    if (n.scale < tree.levels)
      for (int k = 0; k < 4; ++k) {
        auto [cr, cc] = WaveletQuadTree::child_of(n.r, n.c, k);
        frontier.push_back({n.scale + 1, cr, cc});
      }
  }
  if (nodes.size() > 20) throw std::invalid_argument("subtree too large");
  auto emis = mdis::detail::EmissionTable::build(params);
  std::uint32_t combos = 1u << nodes.size();
  StatePair out;
  for (int root_state = 0; root_state < 2; ++root_state) {
    std::vector<double> terms;
    for (std::uint32_t mask = 0; mask < combos; ++mask) {
      if (static_cast<int>(mask & 1) != root_state) continue;  // nodes[0] is the subtree root
      double lp = 0;
      for (size_t i = 0; i < nodes.size(); ++i) {
        const NodeRef& n = nodes[i];
        int s = (mask >> i) & 1;
        lp += emis.log_emission(n.scale, tree.coeffs(n.scale, n.r, n.c))[s];
        if (i > 0) {  // edges internal to the subtree
          auto [pr, pc] = WaveletQuadTree::parent_of(n.r, n.c);
          int pi = find_node(nodes, n.scale - 1, pr, pc);
          int ps = (mask >> pi) & 1;
          double a = params.transition_to(n.scale)[ps][s];
          lp += a > 0 ? std::log(a) : -std::numeric_limits<double>::infinity();
        }
      }
      terms.push_back(lp);
    }
    out[root_state] = std::exp(log_sum_exp_vec(terms));
  }
  return out;
}

// Coarse-to-fine MAP labels evaluated directly from subtree likelihoods and
// the parent-context prior; ties resolve to label 0.
inline std::vector<mdis::Grid<std::uint8_t>> brute_force_map_labels(const WaveletQuadTree& tree,
                                                                    const HmtParams& params) {
  std::vector<mdis::Grid<std::uint8_t>> labels(tree.levels);
  for (int j = 1; j <= tree.levels; ++j)
    labels[j - 1] = mdis::Grid<std::uint8_t>(tree.grid_rows(j), tree.grid_cols(j));

  auto marg = brute_force(tree, params);
  auto nodes = list_nodes(tree);
  for (int r = 0; r < tree.grid_rows(1); ++r) {
    for (int c = 0; c < tree.grid_cols(1); ++c) {
      const StatePair& q = marg.marginals[find_node(nodes, 1, r, c)];
      labels[0](r, c) = q[1] > q[0] ? 1 : 0;
    }
  }
  for (int j = 2; j <= tree.levels; ++j) {
    const auto& A = params.transition_to(j);
    for (int r = 0; r < tree.grid_rows(j); ++r) {
      for (int c = 0; c < tree.grid_cols(j); ++c) {
        auto [pr, pc] = WaveletQuadTree::parent_of(r, c);
        int v = labels[j - 2](pr, pc);
        StatePair sub = brute_force_subtree_likelihood(tree, params, j, r, c);
        double s0 = sub[0] * A[v][0], s1 = sub[1] * A[v][1];
        labels[j - 1](r, c) = s1 > s0 ? 1 : 0;
      }
    }
  }
  return labels;
}

// --- random model/tree generators ---

// Synthetic coefficient forest; not derived from any image.
inline WaveletQuadTree random_tree(int levels, int root_rows, int root_cols, std::mt19937_64& rng,
                                   double amplitude = 1.0) {
  WaveletQuadTree tree;
  tree.levels = levels;
  tree.root_rows = root_rows;
  tree.root_cols = root_cols;
  tree.bands.resize(levels);
  std::normal_distribution<double> gauss(0.0, amplitude);
  for (int j = 1; j <= levels; ++j) {
    for (int b = 0; b < mdis::kNumBands; ++b) {
      auto& g = tree.bands[j - 1][b];
      g = mdis::GridD(tree.grid_rows(j), tree.grid_cols(j));
      for (auto& v : g) v = gauss(rng);
    }
  }
  tree.approx = mdis::GridD(root_rows, root_cols);
  return tree;
}

inline HmtParams random_params(int levels, std::mt19937_64& rng,
                               HmtFlavor flavor = HmtFlavor::kThmt) {
  std::uniform_real_distribution<double> unit(0.05, 0.95);
  std::uniform_real_distribution<double> var(0.1, 4.0);
  HmtParams p;
  p.flavor = flavor;
  p.num_scales = levels;
  double r0 = unit(rng);
  p.root_prior = {r0, 1 - r0};
  for (int j = 2; j <= levels; ++j) {
    double a = unit(rng), b = unit(rng);
    p.transitions.push_back({{{a, 1 - a}, {b, 1 - b}}});
  }
  if (flavor == HmtFlavor::kVhmt) {
    std::uniform_real_distribution<double> corr(-0.3, 0.3);
    for (int j = 1; j <= levels; ++j) {
      std::array<mdis::Sym3, 2> cov;
      for (int s = 0; s < 2; ++s) {
        double d0 = var(rng) * (s ? 4 : 1), d1 = var(rng) * (s ? 4 : 1), d2 = var(rng) * (s ? 4 : 1);
        cov[s] = mdis::Sym3::diagonal(d0, d1, d2);
        double c01 = corr(rng) * std::sqrt(d0 * d1);
        cov[s].m[0][1] = cov[s].m[1][0] = c01;
      }
      p.covariances.push_back(cov);
    }
  } else {
    for (int j = 1; j <= levels; ++j) {
      std::array<std::array<double, 2>, mdis::kNumBands> v;
      for (int b = 0; b < mdis::kNumBands; ++b) {
        double small = var(rng);
        v[b] = {small, small * (2.0 + 6.0 * unit(rng))};
      }
      p.variances.push_back(v);
    }
  }
  return p;
}

// Draws a coefficient forest from the generative model: states sampled
// root-to-leaves through the transitions, coefficients from the selected
// Gaussian. Scalar flavors only.
inline WaveletQuadTree sample_tree(const HmtParams& params, int root_rows, int root_cols,
                                   std::mt19937_64& rng) {
  WaveletQuadTree tree;
  tree.levels = params.num_scales;
  tree.root_rows = root_rows;
  tree.root_cols = root_cols;
  tree.bands.resize(tree.levels);
  std::vector<mdis::Grid<std::uint8_t>> states(tree.levels);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int j = 1; j <= tree.levels; ++j) {
    int rows = tree.grid_rows(j), cols = tree.grid_cols(j);
    states[j - 1] = mdis::Grid<std::uint8_t>(rows, cols);
    for (int b = 0; b < mdis::kNumBands; ++b) tree.bands[j - 1][b] = mdis::GridD(rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        int s;
        if (j == 1) {
          s = unit(rng) < params.root_prior[1] ? 1 : 0;
        } else {
          auto [pr, pc] = WaveletQuadTree::parent_of(r, c);
          int ps = states[j - 2](pr, pc);
          s = unit(rng) < params.transition_to(j)[ps][1] ? 1 : 0;
        }
        states[j - 1](r, c) = static_cast<std::uint8_t>(s);
        for (int b = 0; b < mdis::kNumBands; ++b)
          tree.bands[j - 1][b](r, c) = gauss(rng) * std::sqrt(params.variances[j - 1][b][s]);
      }
    }
  }
  tree.approx = mdis::GridD(root_rows, root_cols);
  return tree;
}

// Coefficient value at which the two states' scalar densities are equal; a
// node whose bands all sit there carries no state evidence.
inline double neutral_coefficient(double v0, double v1) {
  if (v0 == v1) return 0.0;
  return std::sqrt(v0 * v1 * std::log(v1 / v0) / (v1 - v0));
}

// Rank-statistic AUC (Mann-Whitney with half credit for ties).
inline double rank_auc(std::vector<double> pos, std::vector<double> neg) {
  double wins = 0;
  for (double p : pos)
    for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

}  // namespace oracle
