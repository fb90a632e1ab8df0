#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mdis/hmt.hpp"

namespace mdis {

struct ParamsError : std::runtime_error {
  explicit ParamsError(const std::string& msg) : std::runtime_error(msg) {}
};

inline constexpr const char* kParamsFormatTag = "mdis-hmt-params/1";

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline int band_index(const std::string& name) {
  for (int b = 0; b < kNumBands; ++b)
    if (name == kBandNames[b]) return b;
  return -1;
}

}  // namespace detail

// Writes the canonical text form; load_params followed by save_params
// reproduces a canonical file byte for byte.
inline void save_params(const std::string& path, const HmtParams& p) {
  p.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParamsError("cannot write " + path);
  out << "format " << kParamsFormatTag << "\n";
  out << "flavor " << flavor_name(p.flavor) << "\n";
  out << "scales " << p.num_scales << "\n";
  out << "root_prior " << detail::fmt_double(p.root_prior[0]) << " "
      << detail::fmt_double(p.root_prior[1]) << "\n";
  for (int j = 1; j <= p.num_scales; ++j) {
    out << "scale " << j << "\n";
    if (j >= 2) {
      const auto& A = p.transition_to(j);
      out << "  transition " << detail::fmt_double(A[0][0]) << " " << detail::fmt_double(A[0][1])
          << " " << detail::fmt_double(A[1][0]) << " " << detail::fmt_double(A[1][1]) << "\n";
    }
    if (p.vector_emissions()) {
      for (int s = 0; s < kNumStates; ++s) {
        const Sym3& c = p.covariances[j - 1][s];
        out << "  cov " << s;
        for (int a = 0; a < 3; ++a)
          for (int b = a; b < 3; ++b) out << " " << detail::fmt_double(c.m[a][b]);
        out << "\n";
      }
    } else {
      for (int b = 0; b < kNumBands; ++b) {
        out << "  var " << kBandNames[b] << " " << detail::fmt_double(p.variances[j - 1][b][0])
            << " " << detail::fmt_double(p.variances[j - 1][b][1]) << "\n";
      }
    }
  }
  if (!out) throw ParamsError("write failed: " + path);
}

inline HmtParams load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParamsError("cannot open params file " + path);

  HmtParams p;
  p.num_scales = 0;
  int cur_scale = 0;
  bool have_format = false, have_flavor = false, have_scales = false, have_prior = false;
  std::vector<int> var_seen, cov_seen, trans_seen;  // per-scale completeness masks

  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw ParamsError(path + ":" + std::to_string(lineno) + ": " + msg);
  };

  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string key;
    if (!(ss >> key) || key[0] == '#') continue;
    auto need_scale = [&](const char* what) {
      if (cur_scale < 1) fail(std::string(what) + " outside a scale section");
    };
    auto read_doubles = [&](int n, const char* what) {
      std::vector<double> vals(n);
      for (int i = 0; i < n; ++i)
        if (!(ss >> vals[i])) fail(std::string("expected ") + std::to_string(n) + " numbers for " + what);
      return vals;
    };
    if (key == "format") {
      std::string tag;
      ss >> tag;
      if (tag != kParamsFormatTag) fail("unsupported format '" + tag + "'");
      have_format = true;
    } else if (key == "flavor") {
      std::string name;
      ss >> name;
      p.flavor = flavor_from_name(name);
      have_flavor = true;
    } else if (key == "scales") {
      if (!(ss >> p.num_scales) || p.num_scales < 1) fail("bad scales count");
      p.transitions.assign(p.num_scales - 1, TransitionMatrix{});
      p.variances.assign(p.num_scales, {});
      p.covariances.assign(p.num_scales, {});
      var_seen.assign(p.num_scales, 0);
      cov_seen.assign(p.num_scales, 0);
      trans_seen.assign(p.num_scales, 0);
      have_scales = true;
    } else if (key == "root_prior") {
      auto v = read_doubles(2, "root_prior");
      p.root_prior = {v[0], v[1]};
      have_prior = true;
    } else if (key == "scale") {
      if (!have_scales) fail("scale section before scales count");
      if (!(ss >> cur_scale) || cur_scale < 1 || cur_scale > p.num_scales)
        fail("scale index out of range");
    } else if (key == "transition") {
      need_scale("transition");
      if (cur_scale < 2) fail("transition given for scale 1 (roots have no parent)");
      auto v = read_doubles(4, "transition");
      p.transitions[cur_scale - 2] = {{{v[0], v[1]}, {v[2], v[3]}}};
      trans_seen[cur_scale - 1] = 1;
    } else if (key == "var") {
      need_scale("var");
      std::string band;
      if (!(ss >> band)) fail("var line missing band name");
      int b = detail::band_index(band);
      if (b < 0) fail("unknown band '" + band + "'");
      auto v = read_doubles(2, "var");
      p.variances[cur_scale - 1][b] = {v[0], v[1]};
      var_seen[cur_scale - 1] |= 1 << b;
    } else if (key == "cov") {
      need_scale("cov");
      int s;
      if (!(ss >> s) || s < 0 || s >= kNumStates) fail("cov line has bad state index");
      auto v = read_doubles(6, "cov");
      Sym3& c = p.covariances[cur_scale - 1][s];
      int i = 0;
      for (int a = 0; a < 3; ++a)
        for (int b = a; b < 3; ++b) {
          c.m[a][b] = c.m[b][a] = v[i++];
        }
      cov_seen[cur_scale - 1] |= 1 << s;
    } else {
      fail("unknown key '" + key + "'");
    }
  }

  if (!have_format) throw ParamsError(path + ": missing format line");
  if (!have_flavor) throw ParamsError(path + ": missing flavor");
  if (!have_scales) throw ParamsError(path + ": missing scales count");
  if (!have_prior) throw ParamsError(path + ": missing root_prior");
  for (int j = 1; j <= p.num_scales; ++j) {
    if (j >= 2 && !trans_seen[j - 1])
      throw ParamsError(path + ": missing transition for scale " + std::to_string(j));
    if (p.vector_emissions()) {
      if (cov_seen[j - 1] != (1 << kNumStates) - 1)
        throw ParamsError(path + ": incomplete covariances for scale " + std::to_string(j));
    } else if (var_seen[j - 1] != (1 << kNumBands) - 1) {
      throw ParamsError(path + ": incomplete variances for scale " + std::to_string(j));
    }
  }
  if (p.vector_emissions())
    p.variances.clear();
  else
    p.covariances.clear();

  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ParamsError(path + ": " + e.what());
  }
  return p;
}

// Fixed-parameter source for UHMT; the file must exist and satisfy every
// HmtParams invariant, there is no silent fallback.
inline HmtParams universal_params(const std::string& path) {
  HmtParams p = load_params(path);
  if (p.flavor != HmtFlavor::kUhmt)
    throw ParamsError(path + ": flavor is " + flavor_name(p.flavor) + ", expected uhmt");
  return p;
}

}  // namespace mdis
