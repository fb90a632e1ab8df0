#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "mdis/grid.hpp"
#include "mdis/pyramid.hpp"

namespace mdis {

// State 0 is the small-variance ("surround") mixture component, state 1 the
// large-variance ("centre") one.
inline constexpr int kNumStates = 2;
inline constexpr double kVarianceFloor = 1e-12;
inline constexpr double kCovarianceRidge = 1e-9;

enum class HmtFlavor { kUhmt, kThmt, kVhmt };

inline const char* flavor_name(HmtFlavor f) {
  switch (f) {
    case HmtFlavor::kUhmt: return "uhmt";
    case HmtFlavor::kThmt: return "thmt";
    default: return "vhmt";
  }
}

inline HmtFlavor flavor_from_name(const std::string& s) {
  if (s == "uhmt") return HmtFlavor::kUhmt;
  if (s == "thmt") return HmtFlavor::kThmt;
  if (s == "vhmt") return HmtFlavor::kVhmt;
  throw std::invalid_argument("unknown HMT flavor '" + s + "'");
}

using StatePair = std::array<double, kNumStates>;
using TransitionMatrix = std::array<StatePair, kNumStates>;  // [parent][child], rows stochastic

// Symmetric 3x3 matrix for the vector-emission covariances.
struct Sym3 {
  std::array<std::array<double, 3>, 3> m{};

  static Sym3 identity(double s = 1.0) {
    Sym3 out;
    for (int i = 0; i < 3; ++i) out.m[i][i] = s;
    return out;
  }
  static Sym3 diagonal(double a, double b, double c) {
    Sym3 out;
    out.m[0][0] = a;
    out.m[1][1] = b;
    out.m[2][2] = c;
    return out;
  }

  Sym3 scaled(double s) const {
    Sym3 out = *this;
    for (auto& row : out.m)
      for (auto& v : row) v *= s;
    return out;
  }

  void add_ridge(double eps) {
    for (int i = 0; i < 3; ++i) m[i][i] += eps;
  }

  // Lower-triangular Cholesky factor; false if not positive definite.
  bool cholesky(std::array<std::array<double, 3>, 3>& L) const {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) L[i][j] = 0;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j <= i; ++j) {
        double s = m[i][j];
        for (int k = 0; k < j; ++k) s -= L[i][k] * L[j][k];
        if (i == j) {
          if (s <= 0) return false;
          L[i][i] = std::sqrt(s);
        } else {
          L[i][j] = s / L[j][j];
        }
      }
    }
    return true;
  }
};

// Precomputed Gaussian evaluators, one per (scale, state).
struct ScalarGaussian {
  std::array<double, kNumBands> neg_half_inv_var;
  double log_norm;  // sum over bands of -0.5*log(2*pi*var)

  static ScalarGaussian from_variances(const std::array<double, kNumBands>& var) {
    ScalarGaussian g{};
    g.log_norm = 0;
    for (int b = 0; b < kNumBands; ++b) {
      g.neg_half_inv_var[b] = -0.5 / var[b];
      g.log_norm -= 0.5 * std::log(2.0 * M_PI * var[b]);
    }
    return g;
  }

  double logpdf(const std::array<double, kNumBands>& d) const {
    double s = log_norm;
    for (int b = 0; b < kNumBands; ++b) s += neg_half_inv_var[b] * d[b] * d[b];
    return s;
  }
};

struct VectorGaussian {
  std::array<std::array<double, 3>, 3> chol;
  double log_norm;  // -0.5*(3*log(2*pi) + logdet)

  static VectorGaussian from_covariance(const Sym3& cov) {
    VectorGaussian g{};
    if (!cov.cholesky(g.chol)) throw std::invalid_argument("covariance not positive definite");
    double logdet = 0;
    for (int i = 0; i < 3; ++i) logdet += 2.0 * std::log(g.chol[i][i]);
    g.log_norm = -0.5 * (3.0 * std::log(2.0 * M_PI) + logdet);
    return g;
  }

  double logpdf(const std::array<double, 3>& d) const {
    // Solve L y = d, quadratic form = |y|^2.
    std::array<double, 3> y;
    for (int i = 0; i < 3; ++i) {
      double s = d[i];
      for (int k = 0; k < i; ++k) s -= chol[i][k] * y[k];
      y[i] = s / chol[i][i];
    }
    return log_norm - 0.5 * (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]);
  }
};

// Tied two-state HMT parameters: one transition matrix per child scale and one
// emission per (scale, band, state) -- or per (scale, state) covariance for the
// vector flavor. All nodes at a scale share them.
struct HmtParams {
  HmtFlavor flavor = HmtFlavor::kThmt;
  int num_scales = 0;
  StatePair root_prior{0.5, 0.5};
  std::vector<TransitionMatrix> transitions;  // index j-2 for child scale j in 2..num_scales
  std::vector<std::array<std::array<double, kNumStates>, kNumBands>> variances;  // [j-1][band][state]
  std::vector<std::array<Sym3, kNumStates>> covariances;                         // [j-1][state], vhmt

  bool vector_emissions() const { return flavor == HmtFlavor::kVhmt; }

  const TransitionMatrix& transition_to(int child_scale) const {
    return transitions[child_scale - 2];
  }

  void validate() const;
  void swap_states();
};

inline void HmtParams::validate() const {
  auto check_prob = [](double p, const std::string& what) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(what + " out of [0,1]");
  };
  if (num_scales < 1) throw std::invalid_argument("num_scales must be >= 1");
  check_prob(root_prior[0], "root_prior[0]");
  check_prob(root_prior[1], "root_prior[1]");
  if (std::abs(root_prior[0] + root_prior[1] - 1.0) > 1e-12)
    throw std::invalid_argument("root_prior does not sum to 1");
  if (static_cast<int>(transitions.size()) != std::max(0, num_scales - 1))
    throw std::invalid_argument("transition count does not match num_scales");
  for (int j = 2; j <= num_scales; ++j) {
    const auto& A = transition_to(j);
    for (int m = 0; m < kNumStates; ++m) {
      check_prob(A[m][0], "transition row " + std::to_string(m) + " of scale " + std::to_string(j));
      check_prob(A[m][1], "transition row " + std::to_string(m) + " of scale " + std::to_string(j));
      if (std::abs(A[m][0] + A[m][1] - 1.0) > 1e-12)
        throw std::invalid_argument("transition row " + std::to_string(m) + " of scale " +
                                    std::to_string(j) + " does not sum to 1");
    }
  }
  if (vector_emissions()) {
    if (static_cast<int>(covariances.size()) != num_scales)
      throw std::invalid_argument("covariance count does not match num_scales");
    for (int j = 1; j <= num_scales; ++j) {
      for (int s = 0; s < kNumStates; ++s) {
        const Sym3& cov = covariances[j - 1][s];
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < a; ++b)
            if (std::abs(cov.m[a][b] - cov.m[b][a]) > 1e-12)
              throw std::invalid_argument("covariance of state " + std::to_string(s) + " at scale " +
                                          std::to_string(j) + " is not symmetric");
        std::array<std::array<double, 3>, 3> L;
        if (!cov.cholesky(L))
          throw std::invalid_argument("covariance of state " + std::to_string(s) + " at scale " +
                                      std::to_string(j) + " is not positive definite");
      }
    }
  } else {
    if (static_cast<int>(variances.size()) != num_scales)
      throw std::invalid_argument("variance count does not match num_scales");
    for (int j = 1; j <= num_scales; ++j)
      for (int b = 0; b < kNumBands; ++b)
        for (int s = 0; s < kNumStates; ++s)
          if (!(variances[j - 1][b][s] >= kVarianceFloor))
            throw std::invalid_argument(std::string("variance of band ") + kBandNames[b] +
                                        " state " + std::to_string(s) + " at scale " +
                                        std::to_string(j) + " below floor");
  }
}

// Global state relabeling (0 <-> 1); the model is unchanged up to naming.
inline void HmtParams::swap_states() {
  std::swap(root_prior[0], root_prior[1]);
  for (auto& A : transitions) {
    std::swap(A[0], A[1]);
    std::swap(A[0][0], A[0][1]);
    std::swap(A[1][0], A[1][1]);
  }
  for (auto& v : variances)
    for (auto& band : v) std::swap(band[0], band[1]);
  for (auto& c : covariances) std::swap(c[0], c[1]);
}

// Per-node quantities from the upward-downward sweep, all state-indexed and
// kept in the log domain apart from the normalized posteriors.
struct LikelihoodTree {
  int levels = 0;
  std::vector<Grid<StatePair>> log_emission;
  std::vector<Grid<StatePair>> log_beta;      // p(subtree observations | state)
  std::vector<Grid<StatePair>> log_beta_msg;  // message passed to the parent (scales >= 2)
  std::vector<Grid<StatePair>> log_alpha;     // downward pass
  std::vector<Grid<StatePair>> posterior;     // exact state marginals, linear domain
  double log_likelihood = 0;

  const Grid<StatePair>& posterior_at(int scale) const { return posterior[scale - 1]; }
};

namespace detail {

inline double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

inline StatePair normalize_log_pair(const StatePair& lp) {
  double z = log_sum_exp(lp[0], lp[1]);
  return {std::exp(lp[0] - z), std::exp(lp[1] - z)};
}

// Emission evaluators for every (scale, state).
struct EmissionTable {
  std::vector<std::array<ScalarGaussian, kNumStates>> scalar;
  std::vector<std::array<VectorGaussian, kNumStates>> vector;
  bool use_vector = false;

  static EmissionTable build(const HmtParams& p) {
    EmissionTable t;
    t.use_vector = p.vector_emissions();
    if (t.use_vector) {
      t.vector.resize(p.num_scales);
      for (int j = 1; j <= p.num_scales; ++j)
        for (int s = 0; s < kNumStates; ++s)
          t.vector[j - 1][s] = VectorGaussian::from_covariance(p.covariances[j - 1][s]);
    } else {
      t.scalar.resize(p.num_scales);
      for (int j = 1; j <= p.num_scales; ++j) {
        for (int s = 0; s < kNumStates; ++s) {
          std::array<double, kNumBands> var;
          for (int b = 0; b < kNumBands; ++b) var[b] = p.variances[j - 1][b][s];
          t.scalar[j - 1][s] = ScalarGaussian::from_variances(var);
        }
      }
    }
    return t;
  }

  StatePair log_emission(int scale, const std::array<double, kNumBands>& d) const {
    if (use_vector)
      return {vector[scale - 1][0].logpdf(d), vector[scale - 1][1].logpdf(d)};
    return {scalar[scale - 1][0].logpdf(d), scalar[scale - 1][1].logpdf(d)};
  }
};

}  // namespace detail

inline void check_tree_params(const WaveletQuadTree& tree, const HmtParams& params) {
  if (params.num_scales != tree.levels)
    throw std::invalid_argument("params cover " + std::to_string(params.num_scales) +
                                " scales but tree has " + std::to_string(tree.levels));
  params.validate();
}

// Exact two-pass inference on the quad-tree forest (per-scale tied parameters).
// Every root at scale 1 anchors an independent tree sharing the same prior.
inline LikelihoodTree upward_downward(const WaveletQuadTree& tree, const HmtParams& params) {
  check_tree_params(tree, params);
  auto emis = detail::EmissionTable::build(params);
  const double neg_inf = -std::numeric_limits<double>::infinity();

  LikelihoodTree lik;
  lik.levels = tree.levels;
  lik.log_emission.resize(tree.levels);
  lik.log_beta.resize(tree.levels);
  lik.log_beta_msg.resize(tree.levels);
  lik.log_alpha.resize(tree.levels);
  lik.posterior.resize(tree.levels);
  for (int j = 1; j <= tree.levels; ++j) {
    int rows = tree.grid_rows(j), cols = tree.grid_cols(j);
    lik.log_emission[j - 1] = Grid<StatePair>(rows, cols);
    lik.log_beta[j - 1] = Grid<StatePair>(rows, cols);
    lik.log_beta_msg[j - 1] = Grid<StatePair>(rows, cols);
    lik.log_alpha[j - 1] = Grid<StatePair>(rows, cols);
    lik.posterior[j - 1] = Grid<StatePair>(rows, cols);
  }

  for (int j = 1; j <= tree.levels; ++j) {
    auto& em = lik.log_emission[j - 1];
    for (int r = 0; r < em.rows(); ++r)
      for (int c = 0; c < em.cols(); ++c) em(r, c) = emis.log_emission(j, tree.coeffs(j, r, c));
  }

  // Upward: beta = emission plus the four child messages; the message folds the
  // child scale's transition matrix over the child's beta.
  for (int j = tree.levels; j >= 1; --j) {
    auto& beta = lik.log_beta[j - 1];
    const auto& em = lik.log_emission[j - 1];
    for (int r = 0; r < beta.rows(); ++r) {
      for (int c = 0; c < beta.cols(); ++c) {
        StatePair b = em(r, c);
        if (j < tree.levels) {
          const auto& child_msg = lik.log_beta_msg[j];
          for (int k = 0; k < 4; ++k) {
            auto [cr, cc] = WaveletQuadTree::child_of(r, c, k);
            b[0] += child_msg(cr, cc)[0];
            b[1] += child_msg(cr, cc)[1];
          }
        }
        beta(r, c) = b;
        if (j >= 2) {
          const auto& A = params.transition_to(j);
          StatePair msg;
          for (int m = 0; m < kNumStates; ++m) {
            double la0 = A[m][0] > 0 ? std::log(A[m][0]) + b[0] : neg_inf;
            double la1 = A[m][1] > 0 ? std::log(A[m][1]) + b[1] : neg_inf;
            msg[m] = detail::log_sum_exp(la0, la1);
          }
          lik.log_beta_msg[j - 1](r, c) = msg;
        }
      }
    }
  }

  StatePair log_prior = {params.root_prior[0] > 0 ? std::log(params.root_prior[0]) : neg_inf,
                         params.root_prior[1] > 0 ? std::log(params.root_prior[1]) : neg_inf};

  double total = 0;
  {
    const auto& beta_root = lik.log_beta[0];
    auto& alpha_root = lik.log_alpha[0];
    for (int r = 0; r < beta_root.rows(); ++r) {
      for (int c = 0; c < beta_root.cols(); ++c) {
        alpha_root(r, c) = log_prior;
        total += detail::log_sum_exp(log_prior[0] + beta_root(r, c)[0],
                                     log_prior[1] + beta_root(r, c)[1]);
      }
    }
  }
  lik.log_likelihood = total;

  // Downward: alpha of a child removes its own upward message from the parent's
  // evidence, then folds the transition.
  for (int j = 2; j <= tree.levels; ++j) {
    const auto& A = params.transition_to(j);
    auto& alpha = lik.log_alpha[j - 1];
    const auto& msg = lik.log_beta_msg[j - 1];
    const auto& alpha_p = lik.log_alpha[j - 2];
    const auto& beta_p = lik.log_beta[j - 2];
    for (int r = 0; r < alpha.rows(); ++r) {
      for (int c = 0; c < alpha.cols(); ++c) {
        auto [pr, pc] = WaveletQuadTree::parent_of(r, c);
        StatePair parent_excl = {alpha_p(pr, pc)[0] + beta_p(pr, pc)[0] - msg(r, c)[0],
                                 alpha_p(pr, pc)[1] + beta_p(pr, pc)[1] - msg(r, c)[1]};
        for (int n = 0; n < kNumStates; ++n) {
          double t0 = A[0][n] > 0 ? std::log(A[0][n]) + parent_excl[0] : neg_inf;
          double t1 = A[1][n] > 0 ? std::log(A[1][n]) + parent_excl[1] : neg_inf;
          alpha(r, c)[n] = detail::log_sum_exp(t0, t1);
        }
      }
    }
  }

  for (int j = 1; j <= tree.levels; ++j) {
    auto& post = lik.posterior[j - 1];
    const auto& alpha = lik.log_alpha[j - 1];
    const auto& beta = lik.log_beta[j - 1];
    for (int r = 0; r < post.rows(); ++r)
      for (int c = 0; c < post.cols(); ++c)
        post(r, c) = detail::normalize_log_pair(
            {alpha(r, c)[0] + beta(r, c)[0], alpha(r, c)[1] + beta(r, c)[1]});
  }
  return lik;
}

struct InitReport {
  std::vector<int> floored_scales;  // scales whose coefficients were all ~zero
};

// Moment-based starting point: states at 0.25x and 4x the per-scale energy,
// mildly persistent transitions, uninformative root prior.
inline HmtParams init_params(const WaveletQuadTree& tree, HmtFlavor flavor,
                             InitReport* report = nullptr) {
  if (tree.levels < 1 || tree.bands.empty()) throw std::invalid_argument("init_params: empty tree");
  HmtParams p;
  p.flavor = flavor;
  p.num_scales = tree.levels;
  p.root_prior = {0.5, 0.5};
  p.transitions.assign(std::max(0, tree.levels - 1), TransitionMatrix{{{0.9, 0.1}, {0.1, 0.9}}});

  for (int j = 1; j <= tree.levels; ++j) {
    bool floored = false;
    if (flavor == HmtFlavor::kVhmt) {
      Sym3 cov;
      double n = static_cast<double>(tree.nodes_at(j));
      for (int r = 0; r < tree.grid_rows(j); ++r) {
        for (int c = 0; c < tree.grid_cols(j); ++c) {
          auto d = tree.coeffs(j, r, c);
          for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) cov.m[a][b] += d[a] * d[b] / n;
        }
      }
      for (int a = 0; a < 3; ++a) {
        if (cov.m[a][a] < kVarianceFloor) {
          cov.m[a][a] = kVarianceFloor;
          floored = true;
        }
      }
      std::array<Sym3, kNumStates> st = {cov.scaled(0.25), cov.scaled(4.0)};
      for (auto& s : st) s.add_ridge(kCovarianceRidge);
      p.covariances.push_back(st);
    } else {
      std::array<std::array<double, kNumStates>, kNumBands> var;
      for (int b = 0; b < kNumBands; ++b) {
        double ms = 0;
        const auto& band = tree.bands[j - 1][b];
        for (double v : band) ms += v * v;
        ms /= static_cast<double>(band.size());
        double v0 = std::max(0.25 * ms, kVarianceFloor);
        double v1 = std::max(4.0 * ms, kVarianceFloor);
        if (ms < kVarianceFloor) floored = true;
        var[b] = {v0, v1};
      }
      p.variances.push_back(var);
    }
    if (floored && report) report->floored_scales.push_back(j);
  }
  return p;
}

struct EmOptions {
  int max_iter = 50;
  double rel_tol = 1e-5;
};

struct EmResult {
  HmtParams params;
  std::vector<double> log_likelihoods;  // one entry per E-step
  int iterations = 0;
  bool converged = false;
  bool states_swapped = false;  // canonical order restored after training
};

namespace detail {

// Accumulators for one EM iteration of the tied model.
struct EmStats {
  StatePair root_post_sum{};
  double root_count = 0;
  std::vector<std::array<std::array<double, kNumStates>, kNumStates>> edge{};  // [j-2][m][n]
  std::vector<std::array<double, kNumStates>> state_weight;                    // [j-1][m]
  std::vector<std::array<std::array<double, kNumStates>, kNumBands>> sq_sum;   // [j-1][b][m]
  std::vector<std::array<Sym3, kNumStates>> outer_sum;                         // [j-1][m]
};

inline EmStats e_step(const WaveletQuadTree& tree, const HmtParams& params,
                      const LikelihoodTree& lik, bool vector_flavor) {
  EmStats st;
  st.edge.resize(std::max(0, tree.levels - 1));
  st.state_weight.resize(tree.levels);
  if (vector_flavor)
    st.outer_sum.resize(tree.levels);
  else
    st.sq_sum.resize(tree.levels);

  const auto& root_post = lik.posterior[0];
  for (const auto& q : root_post) {
    st.root_post_sum[0] += q[0];
    st.root_post_sum[1] += q[1];
  }
  st.root_count = static_cast<double>(root_post.size());

  for (int j = 1; j <= tree.levels; ++j) {
    const auto& post = lik.posterior[j - 1];
    auto& w = st.state_weight[j - 1];
    for (int r = 0; r < post.rows(); ++r) {
      for (int c = 0; c < post.cols(); ++c) {
        const StatePair& q = post(r, c);
        w[0] += q[0];
        w[1] += q[1];
        auto d = tree.coeffs(j, r, c);
        if (vector_flavor) {
          for (int m = 0; m < kNumStates; ++m)
            for (int a = 0; a < 3; ++a)
              for (int b = 0; b < 3; ++b) st.outer_sum[j - 1][m].m[a][b] += q[m] * d[a] * d[b];
        } else {
          for (int b = 0; b < kNumBands; ++b)
            for (int m = 0; m < kNumStates; ++m) st.sq_sum[j - 1][b][m] += q[m] * d[b] * d[b];
        }
      }
    }
  }

  // Pairwise posteriors for each parent->child edge.
  const double neg_inf = -std::numeric_limits<double>::infinity();
  for (int j = 2; j <= tree.levels; ++j) {
    const auto& A = params.transition_to(j);
    double log_a[kNumStates][kNumStates];
    for (int m = 0; m < kNumStates; ++m)
      for (int n = 0; n < kNumStates; ++n) log_a[m][n] = A[m][n] > 0 ? std::log(A[m][n]) : neg_inf;
    const auto& msg = lik.log_beta_msg[j - 1];
    const auto& beta = lik.log_beta[j - 1];
    const auto& alpha_p = lik.log_alpha[j - 2];
    const auto& beta_p = lik.log_beta[j - 2];
    for (int r = 0; r < beta.rows(); ++r) {
      for (int c = 0; c < beta.cols(); ++c) {
        auto [pr, pc] = WaveletQuadTree::parent_of(r, c);
        double lxi[kNumStates][kNumStates];
        double z = neg_inf;
        for (int m = 0; m < kNumStates; ++m) {
          double parent_excl = alpha_p(pr, pc)[m] + beta_p(pr, pc)[m] - msg(r, c)[m];
          for (int n = 0; n < kNumStates; ++n) {
            lxi[m][n] = parent_excl + log_a[m][n] + beta(r, c)[n];
            z = log_sum_exp(z, lxi[m][n]);
          }
        }
        for (int m = 0; m < kNumStates; ++m)
          for (int n = 0; n < kNumStates; ++n) st.edge[j - 2][m][n] += std::exp(lxi[m][n] - z);
      }
    }
  }
  return st;
}

inline HmtParams m_step(const HmtParams& old, const EmStats& st, bool vector_flavor) {
  HmtParams p = old;
  p.root_prior = {st.root_post_sum[0] / st.root_count, st.root_post_sum[1] / st.root_count};
  double prior_z = p.root_prior[0] + p.root_prior[1];
  p.root_prior[0] /= prior_z;
  p.root_prior[1] /= prior_z;

  for (int j = 2; j <= p.num_scales; ++j) {
    auto& A = p.transitions[j - 2];
    for (int m = 0; m < kNumStates; ++m) {
      double row = st.edge[j - 2][m][0] + st.edge[j - 2][m][1];
      if (row > 0) {
        A[m][0] = st.edge[j - 2][m][0] / row;
        A[m][1] = st.edge[j - 2][m][1] / row;
      }
    }
  }

  for (int j = 1; j <= p.num_scales; ++j) {
    const auto& w = st.state_weight[j - 1];
    if (vector_flavor) {
      for (int m = 0; m < kNumStates; ++m) {
        if (w[m] > 0) {
          Sym3 cov = st.outer_sum[j - 1][m].scaled(1.0 / w[m]);
          cov.add_ridge(kCovarianceRidge);
          p.covariances[j - 1][m] = cov;
        }
      }
    } else {
      for (int b = 0; b < kNumBands; ++b)
        for (int m = 0; m < kNumStates; ++m)
          if (w[m] > 0)
            p.variances[j - 1][b][m] = std::max(st.sq_sum[j - 1][b][m] / w[m], kVarianceFloor);
    }
  }
  return p;
}

inline void floor_degenerate(HmtParams& p) {
  for (auto& v : p.variances)
    for (auto& band : v)
      for (auto& s : band) s = std::max(s, kVarianceFloor);
  for (auto& c : p.covariances)
    for (auto& s : c) s.add_ridge(kCovarianceRidge);
}

inline EmResult em_train_impl(const WaveletQuadTree& tree, const HmtParams& init,
                              const EmOptions& opt, bool vector_flavor) {
  check_tree_params(tree, init);
  init.validate();
  EmResult res;
  res.params = init;
  bool retried = false;
  double prev = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < opt.max_iter; ++it) {
    LikelihoodTree lik = upward_downward(tree, res.params);
    if (!std::isfinite(lik.log_likelihood)) {
      if (retried) throw std::runtime_error("em_train: non-finite likelihood after floor retry");
      retried = true;
      floor_degenerate(res.params);
      lik = upward_downward(tree, res.params);
      if (!std::isfinite(lik.log_likelihood))
        throw std::runtime_error("em_train: non-finite likelihood after floor retry");
    }
    res.log_likelihoods.push_back(lik.log_likelihood);
    res.iterations = it + 1;
    if (it > 0 && lik.log_likelihood != -std::numeric_limits<double>::infinity()) {
      double rel = std::abs(lik.log_likelihood - prev) /
                   std::max(1.0, std::abs(lik.log_likelihood));
      if (rel < opt.rel_tol) {
        res.converged = true;
        break;
      }
    }
    prev = lik.log_likelihood;
    EmStats st = e_step(tree, res.params, lik, vector_flavor);
    res.params = m_step(res.params, st, vector_flavor);
  }

  // Keep state 1 the large-variance component so downstream centre/surround
  // semantics hold regardless of where EM wandered.
  double e0 = 0, e1 = 0;
  if (vector_flavor) {
    for (const auto& c : res.params.covariances) {
      for (int a = 0; a < 3; ++a) {
        e0 += c[0].m[a][a];
        e1 += c[1].m[a][a];
      }
    }
  } else {
    for (const auto& v : res.params.variances) {
      for (const auto& band : v) {
        e0 += band[0];
        e1 += band[1];
      }
    }
  }
  if (e1 < e0) {
    res.params.swap_states();
    res.states_swapped = true;
  }
  return res;
}

}  // namespace detail

// EM for the scalar flavors (independent bands, shared node state).
inline EmResult em_train(const WaveletQuadTree& tree, const HmtParams& init,
                         const EmOptions& opt = {}) {
  if (init.vector_emissions()) throw std::invalid_argument("em_train: init has vector emissions");
  return detail::em_train_impl(tree, init, opt, false);
}

// EM with trivariate zero-mean Gaussian emissions over (HL, LH, HH).
inline EmResult em_train_vector(const WaveletQuadTree& tree, const HmtParams& init,
                                const EmOptions& opt = {}) {
  if (!init.vector_emissions())
    throw std::invalid_argument("em_train_vector: init lacks vector emissions");
  return detail::em_train_impl(tree, init, opt, true);
}

}  // namespace mdis
