#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "mdis/saliency.hpp"
#include "mdis/synth.hpp"
#include "oracles.hpp"

using namespace mdis;

TEST_CASE("binary entropy reference points", "[saliency]") {
  REQUIRE(binary_entropy_bits({0.5, 0.5}) == Catch::Approx(1.0));
  REQUIRE(binary_entropy_bits({1.0, 0.0}) == 0.0);
  REQUIRE(binary_entropy_bits({0.9, 0.1}) == Catch::Approx(0.4689955935892812).epsilon(1e-12));
}

TEST_CASE("discriminant power evaluates and clamps", "[saliency]") {
  REQUIRE(discriminant_power({0.9, 0.1}, {0.5, 0.5}) ==
          Catch::Approx(0.5310044064107188).epsilon(1e-10));
  REQUIRE(discriminant_power({0.5, 0.5}, {0.5, 0.5}) == 0.0);
  // A posterior more uncertain than the prior clamps to zero.
  REQUIRE(discriminant_power({0.5, 0.5}, {0.9, 0.1}) == 0.0);
  REQUIRE(discriminant_power({1.0, 0.0}, {0.5, 0.5}) == Catch::Approx(1.0));
  REQUIRE_THROWS_AS(discriminant_power({0.8, 0.1}, {0.5, 0.5}), std::invalid_argument);
  REQUIRE_THROWS_AS(discriminant_power({0.5, 0.5}, {-0.1, 1.1}), std::invalid_argument);
}

TEST_CASE("pyramid measures information against the scale prior", "[saliency]") {
  std::mt19937_64 rng(31);
  WaveletQuadTree tree = oracle::random_tree(2, 2, 2, rng);
  HmtParams p = oracle::random_params(2, rng);
  LikelihoodTree lik = upward_downward(tree, p);
  LabelField labels = map_labels(lik, p);
  SaliencyPyramid pyr = mdis_pyramid(lik, labels);

  REQUIRE(pyr.levels == 2);
  for (int j = 1; j <= 2; ++j) {
    const auto& post = labels.posterior_at(j);
    StatePair prior{};
    for (const auto& q : post) {
      prior[0] += q[0];
      prior[1] += q[1];
    }
    prior[0] /= static_cast<double>(post.size());
    prior[1] /= static_cast<double>(post.size());
    REQUIRE(pyr.prior_entropy[j - 1] == Catch::Approx(binary_entropy_bits(prior)));
    for (int r = 0; r < post.rows(); ++r)
      for (int c = 0; c < post.cols(); ++c) {
        double expect = discriminant_power(post(r, c), prior);
        REQUIRE(pyr.info_at(j)(r, c) == Catch::Approx(expect).margin(1e-12));
        REQUIRE(pyr.info_at(j)(r, c) >= 0.0);
        REQUIRE(pyr.info_at(j)(r, c) <= pyr.prior_entropy[j - 1] + 1e-12);
      }
  }
}

TEST_CASE("label fraction prior is available", "[saliency]") {
  std::mt19937_64 rng(37);
  WaveletQuadTree tree = oracle::random_tree(2, 2, 2, rng);
  HmtParams p = oracle::random_params(2, rng);
  LikelihoodTree lik = upward_downward(tree, p);
  LabelField labels = map_labels(lik, p);
  SaliencyPyramid pyr = mdis_pyramid(lik, labels, PriorEstimator::kLabelFraction);
  for (int j = 1; j <= 2; ++j) {
    double frac = 0;
    for (auto v : labels.labels_at(j)) frac += v;
    frac /= static_cast<double>(labels.labels_at(j).size());
    REQUIRE(pyr.prior_entropy[j - 1] ==
            Catch::Approx(binary_entropy_bits({1 - frac, frac})).margin(1e-12));
  }
}

TEST_CASE("integration takes the pointwise maximum", "[saliency]") {
  SaliencyPyramid pyr;
  pyr.levels = 2;
  pyr.prior_entropy = {1.0, 1.0};
  pyr.info.resize(2);
  pyr.info[0] = GridD(1, 1, 0.6);
  pyr.info[1] = GridD(2, 2);
  pyr.info[1](0, 0) = 0.9;
  pyr.info[1](0, 1) = 0.1;
  pyr.info[1](1, 0) = 0.6;  // ties the coarse value
  pyr.info[1](1, 1) = 0.2;

  SaliencyMap m = integrate_max(pyr, 4, 4);
  REQUIRE(m.values.rows() == 4);
  REQUIRE(m.values(0, 0) == 0.9);
  REQUIRE(m.values(0, 2) == 0.6);  // coarse wins
  REQUIRE(m.values(2, 0) == 0.6);  // exact tie
  REQUIRE(m.values(3, 3) == 0.6);

  // Pointwise dominance over every upsampled scale.
  for (int j = 1; j <= 2; ++j) {
    GridD up = block_upsample(pyr.info_at(j), 4, 4);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) REQUIRE(m.values(r, c) >= up(r, c));
  }
  auto [lo, hi] = grid_min_max(m.normalized);
  REQUIRE(lo == 0.0);
  REQUIRE(hi == 1.0);
}

TEST_CASE("full pipeline emits consistent shapes and scale naming", "[saliency]") {
  GrayImage img = octave_noise(64, 5);
  SaliencyOptions opts;
  opts.scales = 4;
  SaliencyOutput out = compute_saliency_all(img, opts);
  REQUIRE(out.integrated.values.rows() == 64);
  REQUIRE(out.integrated.provenance == "thmt0");
  REQUIRE(out.per_scale.size() == 4);
  for (int j = 1; j <= 4; ++j) {
    REQUIRE(out.per_scale[j - 1].values.rows() == 64);
    REQUIRE(out.per_scale[j - 1].provenance == "thmt" + std::to_string(j));
  }
  REQUIRE(out.pyramid.info_at(1).rows() == 4);
  REQUIRE(out.pyramid.info_at(4).rows() == 32);
  REQUIRE(out.seconds > 0.0);
  REQUIRE_NOTHROW(out.model.validate());
}

TEST_CASE("selected scale picks the matching map", "[saliency]") {
  GrayImage img = octave_noise(32, 8);
  SaliencyOptions opts;
  opts.scales = 3;
  SaliencyOutput all = compute_saliency_all(img, opts);
  SaliencyMap integrated = compute_saliency(img, HmtFlavor::kThmt, 0, opts);
  SaliencyMap fine = compute_saliency(img, HmtFlavor::kThmt, 3, opts);
  for (int r = 0; r < 32; ++r)
    for (int c = 0; c < 32; ++c) {
      REQUIRE(integrated.values(r, c) == all.integrated.values(r, c));
      REQUIRE(fine.values(r, c) == all.per_scale[2].values(r, c));
    }
  REQUIRE_THROWS_AS(compute_saliency(img, HmtFlavor::kThmt, 4, opts), std::invalid_argument);
}

TEST_CASE("uhmt needs explicit parameters", "[saliency]") {
  GrayImage img = octave_noise(32, 9);
  SaliencyOptions opts;
  opts.scales = 3;
  opts.variant = HmtFlavor::kUhmt;
  REQUIRE_THROWS_AS(compute_saliency_all(img, opts), std::invalid_argument);
}

TEST_CASE("pipeline is deterministic and shift invariant in intensity", "[saliency]") {
  GrayImage img = octave_noise(64, 10, 6, 0.55, 0.5);
  SaliencyOptions opts;
  opts.scales = 4;
  SaliencyOutput a = compute_saliency_all(img, opts);
  SaliencyOutput b = compute_saliency_all(img, opts);
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c)
      REQUIRE(a.integrated.values(r, c) == b.integrated.values(r, c));

  GrayImage shifted;
  shifted.values = img.values;
  for (auto& v : shifted.values) v += 0.2;
  SaliencyOutput s = compute_saliency_all(shifted, opts);
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c)
      REQUIRE(s.integrated.values(r, c) ==
              Catch::Approx(a.integrated.values(r, c)).margin(1e-9));
}

TEST_CASE("uhmt runs with supplied universal parameters", "[saliency]") {
  // Train on one texture, reuse as fixed parameters on another.
  GrayImage trainer = octave_noise(64, 11);
  WaveletQuadTree tree = dwt2d(trainer, 4);
  HmtParams universal = em_train(tree, init_params(tree, HmtFlavor::kThmt), {20, 1e-5}).params;
  universal.flavor = HmtFlavor::kUhmt;

  GrayImage img = octave_noise(64, 12);
  SaliencyOptions opts;
  opts.scales = 4;
  opts.variant = HmtFlavor::kUhmt;
  opts.params = universal;
  SaliencyOutput out = compute_saliency_all(img, opts);
  REQUIRE(out.integrated.provenance == "uhmt0");
  REQUIRE(out.integrated.values.rows() == 64);
  // No training happened: the model reported back is the one supplied.
  REQUIRE(out.model.variances[0][0][0] == universal.variances[0][0][0]);
}

TEST_CASE("popout stimulus geometry", "[synth]") {
  PopoutSpec spec;
  spec.side = 128;
  spec.patch_side = 16;
  PatchRect rect;
  GrayImage img = popout_stimulus(spec, &rect);
  REQUIRE(img.side() == 128);
  REQUIRE(rect.side == 16);
  REQUIRE(rect.row == 56);
  REQUIRE(rect.contains(56, 56));
  REQUIRE_FALSE(rect.contains(55, 56));
  for (double v : img.values) {
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
  }
  // The patch has visibly higher fine-scale energy than the background.
  GridD patch_sq(16, 16), bg_sq(16, 16);
  double pe = 0, be = 0;
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c) {
      double dp = img.values(rect.row + r, rect.col + c) -
                  img.values(rect.row + r, rect.col + (c + 1) % 16);
      double db = img.values(r, c) - img.values(r, (c + 1) % 16);
      pe += dp * dp;
      be += db * db;
    }
  REQUIRE(pe > 4.0 * be);
}
