#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "mdis/hmt.hpp"
#include "oracles.hpp"

using namespace mdis;

TEST_CASE("scalar gaussian matches the closed form", "[hmt]") {
  ScalarGaussian g = ScalarGaussian::from_variances({1.0, 4.0, 0.25});
  std::array<double, 3> d = {0.3, -1.2, 0.05};
  double expect = 0;
  double vars[3] = {1.0, 4.0, 0.25};
  for (int b = 0; b < 3; ++b)
    expect += -0.5 * std::log(2 * M_PI * vars[b]) - d[b] * d[b] / (2 * vars[b]);
  REQUIRE(g.logpdf(d) == Catch::Approx(expect).epsilon(1e-14));
}

TEST_CASE("vector gaussian reduces to scalar on diagonal covariance", "[hmt]") {
  Sym3 cov = Sym3::diagonal(1.0, 4.0, 0.25);
  VectorGaussian vg = VectorGaussian::from_covariance(cov);
  ScalarGaussian sg = ScalarGaussian::from_variances({1.0, 4.0, 0.25});
  std::array<double, 3> d = {0.7, 0.1, -0.4};
  REQUIRE(vg.logpdf(d) == Catch::Approx(sg.logpdf(d)).epsilon(1e-13));
}

TEST_CASE("cholesky rejects indefinite matrices", "[hmt]") {
  Sym3 bad = Sym3::diagonal(1, -1, 1);
  std::array<std::array<double, 3>, 3> L;
  REQUIRE_FALSE(bad.cholesky(L));
  REQUIRE_THROWS_AS(VectorGaussian::from_covariance(bad), std::invalid_argument);
}

TEST_CASE("parameter validation names the offending field", "[hmt]") {
  std::mt19937_64 rng(5);
  HmtParams p = oracle::random_params(3, rng);
  REQUIRE_NOTHROW(p.validate());

  HmtParams broken = p;
  broken.transitions[1][1] = {0.6, 0.6};
  try {
    broken.validate();
    FAIL("expected validate to throw");
  } catch (const std::invalid_argument& e) {
    REQUIRE(std::string(e.what()).find("transition row 1 of scale 3") != std::string::npos);
  }

  HmtParams floored = p;
  floored.variances[0][2][0] = 0.0;
  REQUIRE_THROWS_AS(floored.validate(), std::invalid_argument);
}

TEST_CASE("state swap is an involution and relabels the model", "[hmt]") {
  std::mt19937_64 rng(17);
  HmtParams p = oracle::random_params(3, rng);
  HmtParams q = p;
  q.swap_states();
  REQUIRE(q.root_prior[0] == p.root_prior[1]);
  REQUIRE(q.transition_to(2)[0][0] == p.transition_to(2)[1][1]);
  REQUIRE(q.transition_to(2)[0][1] == p.transition_to(2)[1][0]);
  REQUIRE(q.variances[1][0][0] == p.variances[1][0][1]);
  q.swap_states();
  REQUIRE(q.root_prior[0] == p.root_prior[0]);
  REQUIRE(q.transition_to(3)[1][0] == p.transition_to(3)[1][0]);
}

TEST_CASE("single node posterior in closed form", "[hmt]") {
  // Equal variances in two bands, 1 vs 4 in the first: at d = 0 the emission
  // ratio is exactly 2, so a uniform prior gives posterior (2/3, 1/3).
  WaveletQuadTree tree;
  tree.levels = 1;
  tree.root_rows = tree.root_cols = 1;
  tree.bands.resize(1);
  for (int b = 0; b < kNumBands; ++b) tree.bands[0][b] = GridD(1, 1, 0.0);

  HmtParams p;
  p.flavor = HmtFlavor::kThmt;
  p.num_scales = 1;
  p.root_prior = {0.5, 0.5};
  using BandVar = std::array<std::array<double, 2>, kNumBands>;
  p.variances = {BandVar{{{1.0, 4.0}, {1.0, 1.0}, {1.0, 1.0}}}};

  LikelihoodTree lik = upward_downward(tree, p);
  REQUIRE(lik.posterior[0](0, 0)[0] == Catch::Approx(2.0 / 3.0).epsilon(1e-12));
  REQUIRE(lik.posterior[0](0, 0)[1] == Catch::Approx(1.0 / 3.0).epsilon(1e-12));

  double e0 = -3.0 * 0.5 * std::log(2 * M_PI);
  double e1 = e0 - 0.5 * std::log(4.0);
  double expect = std::log(0.5 * std::exp(e0) + 0.5 * std::exp(e1));
  REQUIRE(lik.log_likelihood == Catch::Approx(expect).epsilon(1e-12));
}

TEST_CASE("five node tree matches exhaustive enumeration", "[hmt]") {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    WaveletQuadTree tree = oracle::random_tree(2, 1, 1, rng);
    HmtParams p = oracle::random_params(2, rng);
    LikelihoodTree lik = upward_downward(tree, p);
    oracle::BruteForceResult bf = oracle::brute_force(tree, p);
    REQUIRE(lik.log_likelihood ==
            Catch::Approx(bf.log_likelihood).epsilon(1e-10));
    auto nodes = oracle::list_nodes(tree);
    for (size_t i = 0; i < nodes.size(); ++i) {
      const auto& n = nodes[i];
      REQUIRE(lik.posterior[n.scale - 1](n.r, n.c)[1] ==
              Catch::Approx(bf.marginals[i][1]).margin(1e-10));
    }
  }
}

TEST_CASE("vector emissions match enumeration too", "[hmt]") {
  std::mt19937_64 rng(202);
  for (int trial = 0; trial < 20; ++trial) {
    WaveletQuadTree tree = oracle::random_tree(2, 1, 1, rng);
    HmtParams p = oracle::random_params(2, rng, HmtFlavor::kVhmt);
    LikelihoodTree lik = upward_downward(tree, p);
    oracle::BruteForceResult bf = oracle::brute_force(tree, p);
    REQUIRE(lik.log_likelihood == Catch::Approx(bf.log_likelihood).epsilon(1e-10));
  }
}

TEST_CASE("forest likelihood is the sum over independent roots", "[hmt]") {
  std::mt19937_64 rng(303);
  WaveletQuadTree forest = oracle::random_tree(2, 2, 2, rng);
  HmtParams p = oracle::random_params(2, rng);
  double total = upward_downward(forest, p).log_likelihood;

  double sum = 0;
  for (int rr = 0; rr < 2; ++rr) {
    for (int rc = 0; rc < 2; ++rc) {
      WaveletQuadTree one;
      one.levels = 2;
      one.root_rows = one.root_cols = 1;
      one.bands.resize(2);
      for (int b = 0; b < kNumBands; ++b) {
        one.bands[0][b] = GridD(1, 1, forest.bands[0][b](rr, rc));
        one.bands[1][b] = GridD(2, 2);
        for (int k = 0; k < 4; ++k) {
          auto [cr, cc] = WaveletQuadTree::child_of(rr, rc, k);
          auto [lr, lc] = WaveletQuadTree::child_of(0, 0, k);
          one.bands[1][b](lr, lc) = forest.bands[1][b](cr, cc);
        }
      }
      sum += upward_downward(one, p).log_likelihood;
    }
  }
  REQUIRE(total == Catch::Approx(sum).epsilon(1e-12));
}

TEST_CASE("posteriors are normalized everywhere", "[hmt]") {
  std::mt19937_64 rng(404);
  WaveletQuadTree tree = oracle::random_tree(3, 2, 2, rng);
  HmtParams p = oracle::random_params(3, rng);
  LikelihoodTree lik = upward_downward(tree, p);
  for (int j = 1; j <= 3; ++j)
    for (const auto& q : lik.posterior[j - 1]) {
      REQUIRE(q[0] >= 0.0);
      REQUIRE(q[0] + q[1] == Catch::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("relabeling the states mirrors the posteriors", "[hmt]") {
  std::mt19937_64 rng(505);
  WaveletQuadTree tree = oracle::random_tree(2, 1, 2, rng);
  HmtParams p = oracle::random_params(2, rng);
  HmtParams q = p;
  q.swap_states();
  LikelihoodTree a = upward_downward(tree, p);
  LikelihoodTree b = upward_downward(tree, q);
  REQUIRE(a.log_likelihood == Catch::Approx(b.log_likelihood).epsilon(1e-12));
  for (int j = 1; j <= 2; ++j)
    for (int r = 0; r < tree.grid_rows(j); ++r)
      for (int c = 0; c < tree.grid_cols(j); ++c)
        REQUIRE(a.posterior[j - 1](r, c)[0] ==
                Catch::Approx(b.posterior[j - 1](r, c)[1]).margin(1e-12));
}

TEST_CASE("init params reflect per scale energy", "[hmt]") {
  std::mt19937_64 rng(606);
  WaveletQuadTree tree = oracle::random_tree(3, 2, 2, rng, 2.0);
  HmtParams p = init_params(tree, HmtFlavor::kThmt);
  REQUIRE_NOTHROW(p.validate());
  for (int j = 1; j <= 3; ++j) {
    for (int b = 0; b < kNumBands; ++b) {
      double ms = 0;
      const auto& band = tree.bands[j - 1][b];
      for (double v : band) ms += v * v;
      ms /= static_cast<double>(band.size());
      REQUIRE(p.variances[j - 1][b][0] == Catch::Approx(0.25 * ms));
      REQUIRE(p.variances[j - 1][b][1] == Catch::Approx(4.0 * ms));
    }
  }

  InitReport report;
  WaveletQuadTree flat = oracle::random_tree(2, 1, 1, rng, 0.0);
  HmtParams pf = init_params(flat, HmtFlavor::kThmt, &report);
  REQUIRE(report.floored_scales == std::vector<int>{1, 2});
  REQUIRE_NOTHROW(pf.validate());
}

TEST_CASE("em likelihood is monotone from random starts", "[hmt][em]") {
  std::mt19937_64 rng(707);
  WaveletQuadTree tree = oracle::random_tree(3, 2, 2, rng, 1.5);
  for (int trial = 0; trial < 10; ++trial) {
    HmtParams init = oracle::random_params(3, rng);
    EmResult res = em_train(tree, init, {30, 1e-7});
    REQUIRE(res.log_likelihoods.size() >= 2);
    for (size_t i = 1; i < res.log_likelihoods.size(); ++i)
      REQUIRE(res.log_likelihoods[i] >= res.log_likelihoods[i - 1] - 1e-9);
  }
}

TEST_CASE("em ends with state one as the spread component", "[hmt][em]") {
  std::mt19937_64 rng(808);
  WaveletQuadTree tree = oracle::random_tree(3, 2, 2, rng, 1.0);
  HmtParams init = oracle::random_params(3, rng);
  init.swap_states();  // start in the wrong order on purpose
  EmResult res = em_train(tree, init, {25, 1e-6});
  double e0 = 0, e1 = 0;
  for (const auto& v : res.params.variances)
    for (const auto& band : v) {
      e0 += band[0];
      e1 += band[1];
    }
  REQUIRE(e1 >= e0);
}

TEST_CASE("em recovers the generating parameters", "[hmt][em]") {
  std::mt19937_64 rng(909);
  HmtParams truth;
  truth.flavor = HmtFlavor::kThmt;
  truth.num_scales = 3;
  truth.root_prior = {0.7, 0.3};
  truth.transitions = {TransitionMatrix{{{0.85, 0.15}, {0.2, 0.8}}},
                       TransitionMatrix{{{0.9, 0.1}, {0.25, 0.75}}}};
  using BandVar = std::array<std::array<double, 2>, kNumBands>;
  truth.variances = {BandVar{{{0.5, 6.0}, {0.4, 5.0}, {0.6, 7.0}}},
                     BandVar{{{0.25, 3.0}, {0.2, 2.5}, {0.3, 3.5}}},
                     BandVar{{{0.12, 1.5}, {0.1, 1.2}, {0.15, 1.8}}}};

  WaveletQuadTree tree = oracle::sample_tree(truth, 32, 32, rng);
  EmResult res = em_train(tree, init_params(tree, HmtFlavor::kThmt), {60, 1e-7});
  for (int j = 1; j <= 3; ++j)
    for (int b = 0; b < kNumBands; ++b)
      for (int s = 0; s < 2; ++s) {
        double got = res.params.variances[j - 1][b][s];
        double want = truth.variances[j - 1][b][s];
        REQUIRE(std::abs(got - want) / want < 0.35);
      }
  for (int j = 2; j <= 3; ++j)
    for (int m = 0; m < 2; ++m)
      for (int n = 0; n < 2; ++n)
        REQUIRE(std::abs(res.params.transition_to(j)[m][n] - truth.transition_to(j)[m][n]) < 0.15);
}

TEST_CASE("vector em trains and improves on correlated data", "[hmt][em]") {
  std::mt19937_64 rng(1010);
  WaveletQuadTree tree = oracle::random_tree(3, 2, 2, rng, 1.0);
  // Correlate the bands so the full covariance has something to find.
  for (int j = 1; j <= 3; ++j)
    for (int r = 0; r < tree.grid_rows(j); ++r)
      for (int c = 0; c < tree.grid_cols(j); ++c) {
        tree.bands[j - 1][1](r, c) =
            0.6 * tree.bands[j - 1][0](r, c) + 0.4 * tree.bands[j - 1][1](r, c);
      }
  HmtParams init = init_params(tree, HmtFlavor::kVhmt);
  EmResult res = em_train_vector(tree, init, {25, 1e-6});
  REQUIRE(res.log_likelihoods.back() >= res.log_likelihoods.front());
  REQUIRE_NOTHROW(res.params.validate());
  // Off-diagonal mass should be present after fitting correlated bands.
  double off = 0;
  for (const auto& c : res.params.covariances)
    for (const auto& s : c) off += std::abs(s.m[0][1]);
  REQUIRE(off > 0);
}

TEST_CASE("em flavor guards", "[hmt][em]") {
  std::mt19937_64 rng(1111);
  WaveletQuadTree tree = oracle::random_tree(2, 1, 1, rng);
  HmtParams scalar_init = oracle::random_params(2, rng);
  HmtParams vector_init = oracle::random_params(2, rng, HmtFlavor::kVhmt);
  REQUIRE_THROWS_AS(em_train(tree, vector_init), std::invalid_argument);
  REQUIRE_THROWS_AS(em_train_vector(tree, scalar_init), std::invalid_argument);
}

TEST_CASE("scale count mismatch is rejected", "[hmt]") {
  std::mt19937_64 rng(1212);
  WaveletQuadTree tree = oracle::random_tree(3, 1, 1, rng);
  HmtParams p = oracle::random_params(2, rng);
  REQUIRE_THROWS_AS(upward_downward(tree, p), std::invalid_argument);
}
