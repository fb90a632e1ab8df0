#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mdis/grid.hpp"
#include "mdis/image.hpp"

namespace mdis {

struct Fixation {
  double x = 0;
  double y = 0;
  int subject = -1;
};

struct FixationSet {
  std::string image_id;
  std::vector<Fixation> points;
};

namespace detail {

inline std::pair<int, int> fixation_pixel(const Fixation& f, int rows, int cols) {
  int c = static_cast<int>(std::lround(f.x));
  int r = static_cast<int>(std::lround(f.y));
  if (r < 0 || r >= rows || c < 0 || c >= cols)
    throw std::invalid_argument("fixation (" + std::to_string(f.x) + "," + std::to_string(f.y) +
                                ") outside map bounds");
  return {r, c};
}

}  // namespace detail

// Sum of unit-mass isotropic Gaussians at the fixations, truncated at 4 sigma
// and rescaled so the total mass equals the fixation count.
inline GridD fixation_density(const FixationSet& fx, double sigma, int rows, int cols) {
  if (fx.points.empty()) throw std::invalid_argument("fixation_density: empty fixation set");
  if (sigma <= 0) throw std::invalid_argument("fixation_density: sigma must be positive");
  GridD out(rows, cols);
  int radius = static_cast<int>(std::ceil(4.0 * sigma));
  double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  for (const Fixation& f : fx.points) {
    auto [fr, fc] = detail::fixation_pixel(f, rows, cols);
    for (int r = std::max(0, fr - radius); r <= std::min(rows - 1, fr + radius); ++r) {
      for (int c = std::max(0, fc - radius); c <= std::min(cols - 1, fc + radius); ++c) {
        double d2 = static_cast<double>(r - fr) * (r - fr) + static_cast<double>(c - fc) * (c - fc);
        if (d2 <= static_cast<double>(radius) * radius) out(r, c) += std::exp(-d2 * inv2s2);
      }
    }
  }
  double mass = grid_sum(out);
  if (mass <= 0) throw std::invalid_argument("fixation_density: degenerate kernel mass");
  double target = static_cast<double>(fx.points.size());
  for (auto& v : out) v *= target / mass;
  return out;
}

// Mean of the zero-mean unit-variance standardized map at the fixation pixels.
// Population standard deviation; a constant map is an error, not NaN.
inline double nss(const GridD& map, const FixationSet& fx) {
  if (fx.points.empty()) throw std::invalid_argument("nss: empty fixation set");
  double mean = grid_mean(map);
  double sd = std::sqrt(grid_variance(map));
  if (sd <= 0) throw std::invalid_argument("nss: map has zero variance");
  double s = 0;
  for (const Fixation& f : fx.points) {
    auto [r, c] = detail::fixation_pixel(f, map.rows(), map.cols());
    s += (map(r, c) - mean) / sd;
  }
  return s / static_cast<double>(fx.points.size());
}

// Pearson correlation over all pixels.
inline double lcc(const GridD& map, const GridD& density) {
  if (!map.same_shape(density)) throw std::invalid_argument("lcc: shape mismatch");
  if (map.empty()) throw std::invalid_argument("lcc: empty input");
  double ma = grid_mean(map), mb = grid_mean(density);
  double sab = 0, saa = 0, sbb = 0;
  for (int r = 0; r < map.rows(); ++r) {
    for (int c = 0; c < map.cols(); ++c) {
      double a = map(r, c) - ma, b = density(r, c) - mb;
      sab += a * b;
      saa += a * a;
      sbb += b * b;
    }
  }
  if (saa <= 0 || sbb <= 0) throw std::invalid_argument("lcc: zero-variance input");
  return sab / std::sqrt(saa * sbb);
}

struct RocPoint {
  double fpr = 0;
  double tpr = 0;
};

struct AucResult {
  double auc = 0;
  std::vector<RocPoint> roc;  // from (0,0) to (1,1), monotone
};

// count == 0 uses every non-fixated pixel as a negative (deterministic);
// a positive count draws that many pixels uniformly from the non-fixated set.
struct NegativeSampling {
  std::int64_t count = 0;
  std::uint64_t seed = 0;
};

// ROC sweep over the unique map values with trapezoidal integration; tied
// values earn half credit, matching the rank-statistic AUC.
inline AucResult auc(const GridD& map, const FixationSet& fx,
                     const NegativeSampling& negatives = {}) {
  if (fx.points.empty()) throw std::invalid_argument("auc: no positives");
  std::vector<double> pos;
  std::vector<char> fixated(map.size(), 0);
  pos.reserve(fx.points.size());
  for (const Fixation& f : fx.points) {
    auto [r, c] = detail::fixation_pixel(f, map.rows(), map.cols());
    pos.push_back(map(r, c));
    fixated[static_cast<size_t>(r) * map.cols() + c] = 1;
  }

  std::vector<double> neg;
  std::vector<double> pool;
  pool.reserve(map.size());
  for (size_t i = 0; i < map.size(); ++i)
    if (!fixated[i]) pool.push_back(map.data()[i]);
  if (pool.empty()) throw std::invalid_argument("auc: no negatives available");
  if (negatives.count <= 0) {
    neg = std::move(pool);
  } else {
    std::mt19937_64 rng(negatives.seed);
    std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
    neg.reserve(static_cast<size_t>(negatives.count));
    for (std::int64_t i = 0; i < negatives.count; ++i) neg.push_back(pool[pick(rng)]);
  }

  // Per-threshold positive/negative counts, thresholds descending.
  std::map<double, std::pair<std::int64_t, std::int64_t>, std::greater<>> counts;
  for (double v : pos) counts[v].first++;
  for (double v : neg) counts[v].second++;

  AucResult out;
  out.roc.push_back({0, 0});
  double np = static_cast<double>(pos.size());
  double nn = static_cast<double>(neg.size());
  std::int64_t tp = 0, fp = 0;
  for (const auto& [value, pn] : counts) {
    tp += pn.first;
    fp += pn.second;
    out.roc.push_back({fp / nn, tp / np});
  }
  for (size_t i = 1; i < out.roc.size(); ++i) {
    out.auc += (out.roc[i].fpr - out.roc[i - 1].fpr) * (out.roc[i].tpr + out.roc[i - 1].tpr) / 2.0;
  }
  return out;
}

// --- batch evaluation ---

struct MapEntry {
  std::string image_id;
  std::string label;  // e.g. "uhmt0", "thmt3", or an external method name
  GridD map;
  FixationSet fixations;               // already in map coordinates
  double seconds = std::numeric_limits<double>::quiet_NaN();
};

struct EvalConfig {
  double sigma = 16;  // density kernel, pixels
  NegativeSampling negatives{};
};

struct MetricRow {
  std::string label;
  std::string image_id;  // "mean" for aggregate rows
  double lcc = std::numeric_limits<double>::quiet_NaN();
  double nss = std::numeric_limits<double>::quiet_NaN();
  double auc = std::numeric_limits<double>::quiet_NaN();
  double seconds = std::numeric_limits<double>::quiet_NaN();
  std::vector<RocPoint> roc;
};

struct MetricReport {
  std::vector<MetricRow> per_image;
  std::vector<MetricRow> means;
  std::vector<std::string> skipped;  // per-item problems; the batch continues
  bool empty() const { return per_image.empty(); }
};

namespace detail {

// Mean ROC by vertical averaging on a fixed FPR grid.
inline std::vector<RocPoint> average_roc(const std::vector<const std::vector<RocPoint>*>& curves) {
  std::vector<RocPoint> mean;
  if (curves.empty()) return mean;
  const int grid = 100;
  for (int g = 0; g <= grid; ++g) {
    double fpr = static_cast<double>(g) / grid;
    double tpr_sum = 0;
    for (const auto* c : curves) {
      double tpr = 1.0;
      for (size_t i = 1; i < c->size(); ++i) {
        if ((*c)[i].fpr >= fpr) {
          const RocPoint& a = (*c)[i - 1];
          const RocPoint& b = (*c)[i];
          tpr = b.fpr > a.fpr ? a.tpr + (b.tpr - a.tpr) * (fpr - a.fpr) / (b.fpr - a.fpr) : b.tpr;
          break;
        }
      }
      tpr_sum += tpr;
    }
    mean.push_back({fpr, tpr_sum / static_cast<double>(curves.size())});
  }
  return mean;
}

}  // namespace detail

// Scores every map against its fixations; items with problems are recorded in
// `skipped` and excluded from the per-label means.
inline MetricReport evaluate_batch(const std::vector<MapEntry>& maps, const EvalConfig& cfg) {
  MetricReport report;
  for (const MapEntry& e : maps) {
    MetricRow row;
    row.label = e.label;
    row.image_id = e.image_id;
    row.seconds = e.seconds;
    try {
      if (e.fixations.points.empty())
        throw std::invalid_argument("no fixations for image '" + e.image_id + "'");
      GridD density = fixation_density(e.fixations, cfg.sigma, e.map.rows(), e.map.cols());
      row.lcc = lcc(e.map, density);
      row.nss = nss(e.map, e.fixations);
      AucResult a = auc(e.map, e.fixations, cfg.negatives);
      row.auc = a.auc;
      row.roc = std::move(a.roc);
      report.per_image.push_back(std::move(row));
    } catch (const std::exception& ex) {
      report.skipped.push_back(e.label + "/" + e.image_id + ": " + ex.what());
    }
  }

  std::vector<std::string> labels;
  for (const auto& r : report.per_image)
    if (std::find(labels.begin(), labels.end(), r.label) == labels.end()) labels.push_back(r.label);
  std::sort(labels.begin(), labels.end());

  for (const std::string& label : labels) {
    MetricRow mean;
    mean.label = label;
    mean.image_id = "mean";
    double sl = 0, sn = 0, sa = 0, st = 0;
    int n = 0, nt = 0;
    std::vector<const std::vector<RocPoint>*> curves;
    for (const auto& r : report.per_image) {
      if (r.label != label) continue;
      sl += r.lcc;
      sn += r.nss;
      sa += r.auc;
      ++n;
      curves.push_back(&r.roc);
      if (std::isfinite(r.seconds)) {
        st += r.seconds;
        ++nt;
      }
    }
    mean.lcc = sl / n;
    mean.nss = sn / n;
    mean.auc = sa / n;
    if (nt > 0) mean.seconds = st / nt;
    mean.roc = detail::average_roc(curves);
    report.means.push_back(std::move(mean));
  }
  return report;
}

// --- fixation CSV ingestion: image_id,x,y[,subject], header required ---

inline std::map<std::string, FixationSet> read_fixations_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open fixations file " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty fixation file");
  auto strip = [](std::string s) {
    s.erase(0, s.find_first_not_of(" \t\r"));
    s.erase(s.find_last_not_of(" \t\r") + 1);
    return s;
  };
  {
    std::stringstream hs(line);
    std::string c1, c2, c3;
    std::getline(hs, c1, ',');
    std::getline(hs, c2, ',');
    std::getline(hs, c3, ',');
    if (strip(c1) != "image_id" || strip(c2) != "x" || strip(c3) != "y")
      throw std::runtime_error(path + ": header must start with image_id,x,y");
  }
  std::map<std::string, FixationSet> sets;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (strip(line).empty()) continue;
    std::stringstream ss(line);
    std::string id, xs, ys, subj;
    std::getline(ss, id, ',');
    std::getline(ss, xs, ',');
    std::getline(ss, ys, ',');
    std::getline(ss, subj, ',');
    id = strip(id);
    Fixation f;
    try {
      f.x = std::stod(strip(xs));
      f.y = std::stod(strip(ys));
      if (!strip(subj).empty()) f.subject = std::stoi(strip(subj));
    } catch (const std::exception&) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad fixation row");
    }
    auto& set = sets[id];
    set.image_id = id;
    set.points.push_back(f);
  }
  return sets;
}

// Maps fixations recorded in original-image coordinates into the processed
// (cropped + resized) frame; points landing outside the crop are dropped.
inline FixationSet transform_fixations(const FixationSet& fx, const PreprocessGeometry& geom,
                                       int* dropped = nullptr) {
  FixationSet out;
  out.image_id = fx.image_id;
  int lost = 0;
  for (const Fixation& f : fx.points) {
    auto [x, y] = geom.map_point(f.x, f.y);
    if (x < -0.5 || y < -0.5 || x >= geom.out_side - 0.5 || y >= geom.out_side - 0.5) {
      ++lost;
      continue;
    }
    out.points.push_back({x, y, f.subject});
  }
  if (dropped) *dropped = lost;
  return out;
}

}  // namespace mdis
