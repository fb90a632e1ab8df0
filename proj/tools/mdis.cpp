// mdis command-line front end: batch saliency computation, model calibration,
// synthetic test imagery and fixation-based evaluation.

#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mdis/mdis.hpp"

namespace fs = std::filesystem;
using namespace mdis;

// Exit codes shared by every subcommand.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;  // bad flags, config file, params content, CSV schema
constexpr int kExitIo = 3;      // missing/unreadable/unwritable paths
constexpr int kExitEmpty = 4;   // nothing to process

namespace {

struct CliError : std::runtime_error {
  int code;
  CliError(int c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool has_image_extension(const fs::path& p) {
  std::string ext = lower(p.extension().string());
  return ext == ".pgm" || ext == ".ppm" || ext == ".pnm" || ext == ".png";
}

std::string fmt(double v, int digits = 5) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Sorted image list from a file or directory; other files produce warnings.
std::vector<fs::path> collect_images(const std::string& input, std::vector<std::string>& warnings) {
  std::vector<fs::path> images;
  fs::path in(input);
  if (!fs::exists(in)) throw CliError(kExitIo, "input path does not exist: " + input);
  if (fs::is_regular_file(in)) {
    images.push_back(in);
    return images;
  }
  if (!fs::is_directory(in)) throw CliError(kExitIo, "input is neither file nor directory: " + input);
  for (const auto& entry : fs::directory_iterator(in)) {
    if (!entry.is_regular_file()) continue;
    if (has_image_extension(entry.path()))
      images.push_back(entry.path());
    else
      warnings.push_back("skipping non-image file " + entry.path().string());
  }
  std::sort(images.begin(), images.end());
  return images;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

long long parse_int(const std::string& s, const std::string& key) {
  try {
    size_t pos;
    long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw CliError(kExitConfig, "config: bad integer for '" + key + "': " + s);
  }
}

double parse_double(const std::string& s, const std::string& key) {
  try {
    size_t pos;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw CliError(kExitConfig, "config: bad number for '" + key + "': " + s);
  }
}

bool parse_bool(const std::string& s, const std::string& key) {
  std::string v = lower(s);
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw CliError(kExitConfig, "config: bad boolean for '" + key + "': " + s);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// key = value lines; '#' starts a comment, blank lines ignored, last key wins.
std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CliError(kExitIo, "cannot open config file " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    size_t eq = body.find('=');
    if (eq == std::string::npos)
      throw CliError(kExitConfig,
                     path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = trim(body.substr(0, eq));
    std::string value = trim(body.substr(eq + 1));
    if (key.empty())
      throw CliError(kExitConfig, path + ":" + std::to_string(lineno) + ": empty key");
    kv[key] = value;
  }
  return kv;
}

using ConfigSetters = std::map<std::string, std::function<void(const std::string&)>>;

// File values act as defaults: any option also given on the command line wins.
void apply_config(const CLI::App* cmd, const std::string& path, const ConfigSetters& setters) {
  if (path.empty()) return;
  for (const auto& [key, value] : read_config_file(path)) {
    if (key == "config")
      throw CliError(kExitConfig, "config: a config file cannot name another config file");
    const CLI::Option* opt;
    try {
      opt = cmd->get_option("--" + key);
    } catch (const CLI::OptionNotFound&) {
      throw CliError(kExitConfig, "config: unknown key '" + key + "'");
    }
    if (opt->count() > 0) continue;
    setters.at(key)(value);
  }
}

void print_config(const std::string& sub,
                  const std::vector<std::pair<std::string, std::string>>& kv) {
  std::cout << "# effective configuration (" << sub << ")\n";
  for (const auto& [k, v] : kv) std::cout << k << " = " << v << "\n";
  std::cout << std::flush;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::ostringstream out;
  for (size_t i = 0; i < xs.size(); ++i) out << (i ? "," : "") << xs[i];
  return out.str();
}

// ---------------------------------------------------------------------------
// saliency

struct SaliencyCli {
  std::string input;
  std::string output;
  std::string variant = "thmt";
  int scales = 5;
  std::vector<int> select;  // empty = 0..scales
  std::string params_file;
  std::string filter = "haar";
  std::vector<std::string> formats = {"pfm"};
  std::uint64_t seed = 0;
  int jobs = 1;
  bool cache_models = false;
  bool soft_context = false;
  std::string prior = "mean";
  int em_iters = 50;
  double em_tol = 1e-5;
};

struct ImageResult {
  std::string id;
  bool ok = false;
  std::string warning;
  PreprocessGeometry geom;
  double seconds = 0;
};

void write_map_file(const fs::path& base_no_ext, const SaliencyMap& map,
                    const std::vector<std::string>& formats) {
  for (const std::string& f : formats) {
    fs::path path = base_no_ext;
    path += "." + f;
    if (f == "pfm")
      write_pfm(path.string(), map.values);
    else if (f == "csv")
      write_csv_map(path.string(), map.values);
    else  // pgm, normalized 16-bit
      write_pgm16(path.string(), map.normalized);
  }
}

int run_saliency(const SaliencyCli& cli) {
  if (cli.input.empty()) throw CliError(kExitConfig, "missing required option --input");
  if (cli.output.empty()) throw CliError(kExitConfig, "missing required option --output");
  HmtFlavor flavor;
  WaveletFilter filter;
  try {
    flavor = flavor_from_name(cli.variant);
  } catch (const std::invalid_argument& e) {
    throw CliError(kExitConfig, e.what());
  }
  if (cli.filter == "haar")
    filter = WaveletFilter::kHaar;
  else if (cli.filter == "daub4")
    filter = WaveletFilter::kDaub4;
  else
    throw CliError(kExitConfig, "unknown filter '" + cli.filter + "' (haar|daub4)");
  if (cli.scales < 1 || cli.scales > 10)
    throw CliError(kExitConfig, "scales must be in 1..10");
  if (cli.prior != "mean" && cli.prior != "labels")
    throw CliError(kExitConfig, "prior must be 'mean' or 'labels'");
  for (const std::string& f : cli.formats)
    if (f != "pfm" && f != "pgm" && f != "csv")
      throw CliError(kExitConfig, "unknown format '" + f + "' (pfm|pgm|csv)");

  std::vector<int> select = cli.select;
  if (select.empty())
    for (int s = 0; s <= cli.scales; ++s) select.push_back(s);
  std::sort(select.begin(), select.end());
  select.erase(std::unique(select.begin(), select.end()), select.end());
  for (int s : select)
    if (s < 0 || s > cli.scales)
      throw CliError(kExitConfig, "select entry " + std::to_string(s) + " outside 0.." +
                                      std::to_string(cli.scales));

  std::optional<HmtParams> universal;
  if (flavor == HmtFlavor::kUhmt) {
    if (cli.params_file.empty())
      throw CliError(kExitConfig, "variant uhmt requires --params");
    if (!fs::exists(cli.params_file))
      throw CliError(kExitIo, "params file does not exist: " + cli.params_file);
    try {
      universal = universal_params(cli.params_file);
    } catch (const ParamsError& e) {
      throw CliError(kExitConfig, e.what());
    }
    if (universal->num_scales != cli.scales)
      throw CliError(kExitConfig, "params cover " + std::to_string(universal->num_scales) +
                                      " scales but --scales is " + std::to_string(cli.scales));
  } else if (!cli.params_file.empty()) {
    throw CliError(kExitConfig, "--params is only meaningful with --variant uhmt");
  }

  int jobs = std::max(1, cli.jobs);
  print_config("saliency",
               {{"input", cli.input},
                {"output", cli.output},
                {"variant", cli.variant},
                {"scales", std::to_string(cli.scales)},
                {"select", join(select)},
                {"params", cli.params_file},
                {"filter", cli.filter},
                {"format", join(cli.formats)},
                {"seed", std::to_string(cli.seed)},
                {"jobs", std::to_string(jobs)},
                {"cache-models", cli.cache_models ? "true" : "false"},
                {"soft-context", cli.soft_context ? "true" : "false"},
                {"class-prior", cli.prior},
                {"em-iters", std::to_string(cli.em_iters)},
                {"em-tol", fmt_g(cli.em_tol)}});

  std::vector<std::string> warnings;
  std::vector<fs::path> images = collect_images(cli.input, warnings);
  if (images.empty()) {
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    std::cerr << "error: no images found under " << cli.input << "\n";
    return kExitEmpty;
  }

  std::error_code ec;
  fs::create_directories(cli.output, ec);
  if (ec || !fs::is_directory(cli.output))
    throw CliError(kExitIo, "cannot create output directory " + cli.output);

  std::vector<ImageResult> results(images.size());
  std::atomic<size_t> next{0};

  auto worker = [&]() {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= images.size()) return;
      ImageResult& res = results[i];
      res.id = images[i].stem().string();
      try {
        Raster raster = read_image(images[i].string());
        GrayImage img = to_grayscale(raster, &res.geom);

        SaliencyOptions opts;
        opts.variant = flavor;
        opts.scales = cli.scales;
        opts.filter = filter;
        opts.em = {cli.em_iters, cli.em_tol};
        opts.fusion.soft_context = cli.soft_context;
        opts.prior = cli.prior == "mean" ? PriorEstimator::kMeanPosterior
                                         : PriorEstimator::kLabelFraction;
        if (universal) opts.params = *universal;

        fs::path cache = fs::path(cli.output) / (res.id + "." + cli.variant + ".model");
        if (cli.cache_models && !universal && fs::exists(cache))
          opts.params = load_params(cache.string());

        SaliencyOutput out = compute_saliency_all(img, opts);
        if (cli.cache_models && !universal && !fs::exists(cache))
          save_params(cache.string(), out.model);

        for (int s : select) {
          const SaliencyMap& m = s == 0 ? out.integrated : out.per_scale[s - 1];
          fs::path base = fs::path(cli.output) / (res.id + "." + cli.variant + std::to_string(s));
          write_map_file(base, m, cli.formats);
        }
        res.seconds = out.seconds;
        res.ok = true;
      } catch (const std::exception& e) {
        res.warning = images[i].string() + ": " + e.what();
      }
    }
  };

  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // Deterministic manifest ordering regardless of completion order.
  std::sort(results.begin(), results.end(),
            [](const ImageResult& a, const ImageResult& b) { return a.id < b.id; });
  int processed = 0;
  {
    std::ofstream manifest(fs::path(cli.output) / "manifest.csv", std::ios::binary);
    if (!manifest) throw CliError(kExitIo, "cannot write manifest in " + cli.output);
    manifest << "image_id,variant,scales,orig_width,orig_height,crop_x,crop_y,crop_side,out_side,"
                "seconds\n";
    for (const ImageResult& r : results) {
      if (!r.ok) continue;
      ++processed;
      manifest << r.id << "," << cli.variant << "," << cli.scales << "," << r.geom.orig_width
               << "," << r.geom.orig_height << "," << r.geom.crop_x << "," << r.geom.crop_y << ","
               << r.geom.crop_side << "," << r.geom.out_side << "," << fmt(r.seconds, 6) << "\n";
    }
  }

  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  for (const ImageResult& r : results)
    if (!r.ok && !r.warning.empty()) std::cerr << "warning: " << r.warning << "\n";
  size_t warned = warnings.size() +
                  static_cast<size_t>(std::count_if(results.begin(), results.end(),
                                                    [](const ImageResult& r) { return !r.ok; }));
  std::cout << "processed " << processed << " image(s), " << select.size()
            << " map(s) each, " << warned << " warning(s)\n";
  if (processed == 0) {
    std::cerr << "error: every input failed\n";
    return kExitEmpty;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalCli {
  std::string maps_dir;
  std::string fixations_file;
  std::string output;
  std::string manifest_file;  // defaults to <maps>/manifest.csv when present
  double sigma = 16.0;
  std::int64_t negatives = 0;
  std::uint64_t seed = 0;
};

struct ManifestRow {
  PreprocessGeometry geom;
  double seconds = std::numeric_limits<double>::quiet_NaN();
};

// Key: image_id + "/" + variant.
std::map<std::string, ManifestRow> read_manifest(const std::string& path) {
  std::map<std::string, ManifestRow> rows;
  std::ifstream in(path);
  if (!in) throw CliError(kExitIo, "cannot open manifest " + path);
  std::string line;
  if (!std::getline(in, line)) return rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> cells;
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 10)
      throw CliError(kExitConfig, path + ":" + std::to_string(lineno) + ": expected 10 columns");
    ManifestRow r;
    try {
      r.geom.orig_width = std::stoi(cells[3]);
      r.geom.orig_height = std::stoi(cells[4]);
      r.geom.crop_x = std::stoi(cells[5]);
      r.geom.crop_y = std::stoi(cells[6]);
      r.geom.crop_side = std::stoi(cells[7]);
      r.geom.out_side = std::stoi(cells[8]);
      r.seconds = std::stod(cells[9]);
    } catch (const std::exception&) {
      throw CliError(kExitConfig, path + ":" + std::to_string(lineno) + ": bad manifest row");
    }
    rows[cells[0] + "/" + cells[1]] = r;
  }
  return rows;
}

struct MapFile {
  fs::path path;
  std::string image_id;
  std::string label;
};

// <image_id>.<label>.<ext>; image ids may themselves contain dots.
std::optional<MapFile> parse_map_name(const fs::path& p) {
  static const std::set<std::string> exts = {"pfm", "csv", "pgm", "ppm", "png"};
  std::string name = p.filename().string();
  size_t last = name.rfind('.');
  if (last == std::string::npos) return std::nullopt;
  std::string ext = lower(name.substr(last + 1));
  if (!exts.count(ext)) return std::nullopt;
  size_t mid = name.rfind('.', last - 1);
  if (mid == std::string::npos || mid == 0) return std::nullopt;
  MapFile f;
  f.path = p;
  f.image_id = name.substr(0, mid);
  f.label = name.substr(mid + 1, last - mid - 1);
  return f;
}

// "uhmt3" -> ("uhmt", 3); anything else is an external method label.
std::optional<std::pair<std::string, int>> split_variant_label(const std::string& label) {
  for (const char* v : {"uhmt", "thmt", "vhmt"}) {
    std::string prefix(v);
    if (label.rfind(prefix, 0) == 0 && label.size() > prefix.size()) {
      std::string digits = label.substr(prefix.size());
      if (std::all_of(digits.begin(), digits.end(),
                      [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
        return std::make_pair(prefix, std::stoi(digits));
    }
  }
  return std::nullopt;
}

// Presentation order: variant/scale rows first, then external methods.
bool label_order(const std::string& a, const std::string& b) {
  auto rank = [](const std::string& v) {
    if (v == "uhmt") return 0;
    if (v == "thmt") return 1;
    return 2;
  };
  auto va = split_variant_label(a), vb = split_variant_label(b);
  if (va && vb) {
    if (va->first != vb->first) return rank(va->first) < rank(vb->first);
    return va->second < vb->second;
  }
  if (va != std::nullopt) return true;
  if (vb != std::nullopt) return false;
  return a < b;
}

int run_eval(const EvalCli& cli) {
  if (cli.maps_dir.empty()) throw CliError(kExitConfig, "missing required option --maps");
  if (cli.fixations_file.empty())
    throw CliError(kExitConfig, "missing required option --fixations");
  if (cli.output.empty()) throw CliError(kExitConfig, "missing required option --output");
  if (cli.sigma <= 0) throw CliError(kExitConfig, "sigma must be positive");
  if (!fs::is_directory(cli.maps_dir))
    throw CliError(kExitIo, "maps directory does not exist: " + cli.maps_dir);
  if (!fs::exists(cli.fixations_file))
    throw CliError(kExitIo, "fixations file does not exist: " + cli.fixations_file);

  std::map<std::string, FixationSet> fixations;
  try {
    fixations = read_fixations_csv(cli.fixations_file);
  } catch (const std::exception& e) {
    throw CliError(kExitConfig, e.what());
  }
  if (fixations.empty()) {
    std::cerr << "error: fixation file has no data rows\n";
    return kExitEmpty;
  }

  std::string manifest_path = cli.manifest_file;
  if (manifest_path.empty()) {
    fs::path candidate = fs::path(cli.maps_dir) / "manifest.csv";
    if (fs::exists(candidate)) manifest_path = candidate.string();
  }
  std::map<std::string, ManifestRow> manifest;
  if (!manifest_path.empty()) manifest = read_manifest(manifest_path);

  print_config("eval", {{"maps", cli.maps_dir},
                        {"fixations", cli.fixations_file},
                        {"output", cli.output},
                        {"manifest", manifest_path},
                        {"sigma", fmt_g(cli.sigma)},
                        {"negatives", std::to_string(cli.negatives)},
                        {"seed", std::to_string(cli.seed)}});

  std::vector<MapFile> files;
  for (const auto& entry : fs::directory_iterator(cli.maps_dir)) {
    if (!entry.is_regular_file()) continue;
    if (auto f = parse_map_name(entry.path())) files.push_back(*f);
  }
  std::sort(files.begin(), files.end(), [](const MapFile& a, const MapFile& b) {
    return std::tie(a.image_id, a.label) < std::tie(b.image_id, b.label);
  });
  if (files.empty()) {
    std::cerr << "error: no map files named <image_id>.<label>.<ext> under " << cli.maps_dir
              << "\n";
    return kExitEmpty;
  }

  std::vector<MapEntry> entries;
  std::vector<std::string> skipped;
  for (const MapFile& f : files) {
    MapEntry e;
    e.image_id = f.image_id;
    e.label = f.label;
    try {
      e.map = read_map(f.path.string());
    } catch (const std::exception& ex) {
      skipped.push_back(f.label + "/" + f.image_id + ": " + ex.what());
      continue;
    }
    auto fx_it = fixations.find(f.image_id);
    if (fx_it == fixations.end()) {
      skipped.push_back(f.label + "/" + f.image_id + ": no fixations for image");
      continue;
    }
    const FixationSet& fx_orig = fx_it->second;

    auto variant = split_variant_label(f.label);
    const ManifestRow* row = nullptr;
    if (variant) {
      auto it = manifest.find(f.image_id + "/" + variant->first);
      if (it != manifest.end()) row = &it->second;
    } else if (!manifest.empty()) {
      // External maps share the image's geometry row regardless of variant.
      auto it = manifest.lower_bound(f.image_id + "/");
      if (it != manifest.end() && it->first.rfind(f.image_id + "/", 0) == 0) row = &it->second;
    }

    if (variant && row) {
      e.fixations = transform_fixations(fx_orig, row->geom);
      e.seconds = row->seconds;
    } else if (!variant && row && (e.map.rows() != row->geom.orig_height ||
                                   e.map.cols() != row->geom.orig_width)) {
      // External map at a different resolution: scale proportionally.
      e.fixations.image_id = fx_orig.image_id;
      double sx = static_cast<double>(e.map.cols()) / row->geom.orig_width;
      double sy = static_cast<double>(e.map.rows()) / row->geom.orig_height;
      for (const Fixation& p : fx_orig.points)
        e.fixations.points.push_back({p.x * sx, p.y * sy, p.subject});
    } else {
      e.fixations = fx_orig;  // already in map coordinates
    }
    if (e.fixations.points.empty()) {
      skipped.push_back(f.label + "/" + f.image_id + ": all fixations fell outside the map");
      continue;
    }
    entries.push_back(std::move(e));
  }

  EvalConfig cfg;
  cfg.sigma = cli.sigma;
  cfg.negatives = {cli.negatives, cli.seed};
  MetricReport report = evaluate_batch(entries, cfg);
  for (auto& s : skipped) report.skipped.push_back(std::move(s));

  if (report.empty()) {
    for (const auto& s : report.skipped) std::cerr << "skipped: " << s << "\n";
    std::cerr << "error: nothing evaluated\n";
    return kExitEmpty;
  }

  std::error_code ec;
  fs::create_directories(cli.output, ec);
  if (ec || !fs::is_directory(cli.output))
    throw CliError(kExitIo, "cannot create output directory " + cli.output);

  std::vector<const MetricRow*> means;
  for (const auto& m : report.means) means.push_back(&m);
  std::sort(means.begin(), means.end(),
            [](const MetricRow* a, const MetricRow* b) { return label_order(a->label, b->label); });

  {
    std::ofstream out(fs::path(cli.output) / "report.csv", std::ios::binary);
    out << "label,lcc,nss,auc,time_seconds\n";
    for (const MetricRow* m : means) {
      out << m->label << "," << fmt(m->lcc) << "," << fmt(m->nss) << "," << fmt(m->auc) << ",";
      out << (std::isfinite(m->seconds) ? fmt(m->seconds) : "") << "\n";
    }
  }
  {
    std::ofstream out(fs::path(cli.output) / "per_image.csv", std::ios::binary);
    out << "label,image_id,lcc,nss,auc,seconds\n";
    std::vector<const MetricRow*> rows;
    for (const auto& r : report.per_image) rows.push_back(&r);
    std::sort(rows.begin(), rows.end(), [](const MetricRow* a, const MetricRow* b) {
      if (a->label != b->label) return label_order(a->label, b->label);
      return a->image_id < b->image_id;
    });
    for (const MetricRow* r : rows) {
      out << r->label << "," << r->image_id << "," << fmt(r->lcc) << "," << fmt(r->nss) << ","
          << fmt(r->auc) << "," << (std::isfinite(r->seconds) ? fmt(r->seconds) : "") << "\n";
    }
  }
  {
    std::ofstream out(fs::path(cli.output) / "report.txt", std::ios::binary);
    out << "MODEL      LCC      NSS      AUC      TIME\n";
    for (const MetricRow* m : means) {
      char line[160];
      std::snprintf(line, sizeof line, "%-9s %8.5f %8.5f %8.5f", m->label.c_str(), m->lcc, m->nss,
                    m->auc);
      out << line;
      if (std::isfinite(m->seconds)) {
        std::snprintf(line, sizeof line, " %9.5f", m->seconds);
        out << line;
      }
      out << "\n";
    }
    if (!report.skipped.empty()) {
      out << "\nskipped:\n";
      for (const auto& s : report.skipped) out << "  " << s << "\n";
    }
  }
  for (const MetricRow* m : means) {
    std::ofstream out(fs::path(cli.output) / ("roc_" + m->label + ".csv"), std::ios::binary);
    out << "fpr,tpr\n";
    for (const RocPoint& p : m->roc) out << fmt_g(p.fpr) << "," << fmt_g(p.tpr) << "\n";
  }

  for (const auto& s : report.skipped) std::cerr << "skipped: " << s << "\n";
  std::cout << "evaluated " << report.per_image.size() << " map(s), " << means.size()
            << " label row(s), " << report.skipped.size() << " skipped\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gen

int run_gen_popout(const std::string& output, int side, int patch, std::uint64_t seed,
                   const std::string& name) {
  PopoutSpec spec;
  spec.side = side;
  spec.patch_side = patch;
  spec.seed = seed;
  PatchRect rect;
  GrayImage img = popout_stimulus(spec, &rect);
  std::error_code ec;
  fs::create_directories(output, ec);
  if (ec || !fs::is_directory(output)) throw CliError(kExitIo, "cannot create " + output);
  write_pgm16((fs::path(output) / (name + ".pgm")).string(), img.values);
  std::cout << "patch row=" << rect.row << " col=" << rect.col << " side=" << rect.side << "\n";
  return kExitOk;
}

int run_gen_corpus(const std::string& output, int count, int side, std::uint64_t seed,
                   const std::string& prefix) {
  if (count < 1) throw CliError(kExitConfig, "count must be positive");
  std::error_code ec;
  fs::create_directories(output, ec);
  if (ec || !fs::is_directory(output)) throw CliError(kExitIo, "cannot create " + output);
  std::mt19937_64 rng(seed);
  for (int i = 0; i < count; ++i) {
    double persistence = 0.45 + 0.02 * (i % 8);
    double contrast = 0.6 + 0.05 * (i % 7);
    GrayImage img = octave_noise(side, rng(), 7, persistence, contrast);
    char name[64];
    std::snprintf(name, sizeof name, "%s%03d.pgm", prefix.c_str(), i);
    write_pgm16((fs::path(output) / name).string(), img.values);
  }
  std::cout << "wrote " << count << " image(s) under " << output << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// calibrate

int run_calibrate(const std::string& input, const std::string& output, int scales,
                  const std::string& filter_name, int iters, double tol) {
  WaveletFilter filter;
  if (filter_name == "haar")
    filter = WaveletFilter::kHaar;
  else if (filter_name == "daub4")
    filter = WaveletFilter::kDaub4;
  else
    throw CliError(kExitConfig, "unknown filter '" + filter_name + "'");

  print_config("calibrate", {{"input", input},
                             {"output", output},
                             {"scales", std::to_string(scales)},
                             {"filter", filter_name},
                             {"em-iters", std::to_string(iters)},
                             {"em-tol", fmt_g(tol)}});

  std::vector<std::string> warnings;
  std::vector<fs::path> images = collect_images(input, warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  if (images.empty()) {
    std::cerr << "error: no images found under " << input << "\n";
    return kExitEmpty;
  }

  std::vector<HmtParams> trained;
  for (const fs::path& p : images) {
    try {
      GrayImage img = to_grayscale(read_image(p.string()));
      WaveletQuadTree tree = dwt2d(img, scales, filter);
      trained.push_back(em_train(tree, init_params(tree, HmtFlavor::kThmt), {iters, tol}).params);
    } catch (const std::exception& e) {
      std::cerr << "warning: " << p.string() << ": " << e.what() << "\n";
    }
  }
  if (trained.empty()) {
    std::cerr << "error: every calibration image failed\n";
    return kExitEmpty;
  }

  // Average the per-image models; EM left every model in canonical state
  // order, so componentwise means are meaningful.
  HmtParams avg = trained.front();
  avg.flavor = HmtFlavor::kUhmt;
  double n = static_cast<double>(trained.size());
  avg.root_prior = {0, 0};
  for (auto& A : avg.transitions) A = {{{0, 0}, {0, 0}}};
  for (auto& v : avg.variances)
    for (auto& band : v) band = {0, 0};
  for (const HmtParams& p : trained) {
    avg.root_prior[0] += p.root_prior[0] / n;
    avg.root_prior[1] += p.root_prior[1] / n;
    for (size_t t = 0; t < avg.transitions.size(); ++t)
      for (int m = 0; m < 2; ++m)
        for (int s = 0; s < 2; ++s) avg.transitions[t][m][s] += p.transitions[t][m][s] / n;
    for (size_t j = 0; j < avg.variances.size(); ++j)
      for (int b = 0; b < kNumBands; ++b)
        for (int s = 0; s < 2; ++s) avg.variances[j][b][s] += p.variances[j][b][s] / n;
  }
  double z = avg.root_prior[0] + avg.root_prior[1];
  avg.root_prior[0] /= z;
  avg.root_prior[1] /= z;
  for (auto& A : avg.transitions)
    for (int m = 0; m < 2; ++m) {
      double row = A[m][0] + A[m][1];
      A[m][0] /= row;
      A[m][1] /= row;
    }

  try {
    save_params(output, avg);
  } catch (const ParamsError& e) {
    throw CliError(kExitIo, e.what());
  }
  std::cout << "averaged " << trained.size() << " model(s) into " << output << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiscale discriminant saliency toolkit"};
  app.require_subcommand(1);

  SaliencyCli sal;
  std::string sal_config;
  CLI::App* sal_cmd = app.add_subcommand("saliency", "Compute saliency maps for a batch of images");
  sal_cmd->add_option("--config", sal_config, "Read option defaults from a key = value file");
  sal_cmd->add_option("--input", sal.input, "Image file or directory");
  sal_cmd->add_option("--output", sal.output, "Output directory for maps");
  sal_cmd->add_option("--variant", sal.variant, "Model variant: uhmt|thmt|vhmt")
      ->default_str(sal.variant);
  sal_cmd->add_option("--scales", sal.scales, "Number of dyadic scales")->default_str("5");
  sal_cmd->add_option("--select", sal.select,
                      "Scales to export; 0 = integrated map (default 0..scales)")
      ->delimiter(',');
  sal_cmd->add_option("--params", sal.params_file, "Universal parameter file (uhmt only)");
  sal_cmd->add_option("--filter", sal.filter, "Wavelet filter: haar|daub4")->default_str("haar");
  sal_cmd->add_option("--format", sal.formats, "Map formats: pfm|pgm|csv")->delimiter(',');
  sal_cmd->add_option("--seed", sal.seed, "Seed for all randomized stages")->default_str("0");
  sal_cmd->add_option("--jobs", sal.jobs, "Worker threads over images")->default_str("1");
  sal_cmd->add_flag("--cache-models", sal.cache_models,
                    "Persist trained models beside the maps and reuse them");
  sal_cmd->add_flag("--soft-context", sal.soft_context,
                    "Blend transition rows by the parent posterior instead of its label");
  sal_cmd->add_option("--class-prior", sal.prior, "Scale prior estimator: mean|labels")
      ->default_str("mean");
  sal_cmd->add_option("--em-iters", sal.em_iters, "EM iteration cap")->default_str("50");
  sal_cmd->add_option("--em-tol", sal.em_tol, "EM relative log-likelihood tolerance")
      ->default_str("1e-5");

  EvalCli ev;
  std::string eval_config;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Score saliency maps against fixations");
  eval_cmd->add_option("--config", eval_config, "Read option defaults from a key = value file");
  eval_cmd->add_option("--maps", ev.maps_dir, "Directory of <image_id>.<label>.<ext> maps");
  eval_cmd->add_option("--fixations", ev.fixations_file, "CSV with image_id,x,y[,subject]");
  eval_cmd->add_option("--output", ev.output, "Directory for reports");
  eval_cmd->add_option("--manifest", ev.manifest_file,
                       "Geometry manifest (default: <maps>/manifest.csv)");
  eval_cmd->add_option("--sigma", ev.sigma, "Fixation density kernel in pixels")
      ->default_str("16");
  eval_cmd->add_option("--negatives", ev.negatives,
                       "AUC negative sample count (0 = all non-fixated pixels)")
      ->default_str("0");
  eval_cmd->add_option("--seed", ev.seed, "Seed for negative sampling")->default_str("0");

  CLI::App* gen_cmd = app.add_subcommand("gen", "Generate synthetic test imagery");
  gen_cmd->require_subcommand(1);
  std::string gen_out, gen_name = "popout", corpus_prefix = "tex";
  int gen_side = 256, gen_patch = 32, corpus_count = 8, corpus_side = 256;
  std::uint64_t gen_seed = 7, corpus_seed = 1;
  CLI::App* pop_cmd = gen_cmd->add_subcommand("popout", "Lone textured patch on a quiet background");
  pop_cmd->add_option("--output", gen_out, "Output directory")->required();
  pop_cmd->add_option("--side", gen_side, "Image side")->default_str("256");
  pop_cmd->add_option("--patch", gen_patch, "Patch side")->default_str("32");
  pop_cmd->add_option("--seed", gen_seed, "Noise seed")->default_str("7");
  pop_cmd->add_option("--name", gen_name, "Output stem")->default_str("popout");
  CLI::App* corpus_cmd = gen_cmd->add_subcommand("corpus", "Multiscale noise textures");
  corpus_cmd->add_option("--output", gen_out, "Output directory")->required();
  corpus_cmd->add_option("--count", corpus_count, "Number of images")->default_str("8");
  corpus_cmd->add_option("--side", corpus_side, "Image side")->default_str("256");
  corpus_cmd->add_option("--seed", corpus_seed, "Noise seed")->default_str("1");
  corpus_cmd->add_option("--prefix", corpus_prefix, "Filename prefix")->default_str("tex");

  std::string cal_in, cal_out, cal_filter = "haar";
  int cal_scales = 5, cal_iters = 50;
  double cal_tol = 1e-5;
  CLI::App* cal_cmd =
      app.add_subcommand("calibrate", "Average per-image models into a universal parameter file");
  cal_cmd->add_option("--input", cal_in, "Directory of calibration images")->required();
  cal_cmd->add_option("--output", cal_out, "Parameter file to write")->required();
  cal_cmd->add_option("--scales", cal_scales, "Number of dyadic scales")->default_str("5");
  cal_cmd->add_option("--filter", cal_filter, "Wavelet filter: haar|daub4")->default_str("haar");
  cal_cmd->add_option("--em-iters", cal_iters, "EM iteration cap")->default_str("50");
  cal_cmd->add_option("--em-tol", cal_tol, "EM relative tolerance")->default_str("1e-5");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  ConfigSetters sal_setters = {
      {"input", [&](const std::string& v) { sal.input = v; }},
      {"output", [&](const std::string& v) { sal.output = v; }},
      {"variant", [&](const std::string& v) { sal.variant = v; }},
      {"scales", [&](const std::string& v) { sal.scales = static_cast<int>(parse_int(v, "scales")); }},
      {"select",
       [&](const std::string& v) {
         sal.select.clear();
         for (const auto& s : split_list(v))
           sal.select.push_back(static_cast<int>(parse_int(s, "select")));
       }},
      {"params", [&](const std::string& v) { sal.params_file = v; }},
      {"filter", [&](const std::string& v) { sal.filter = v; }},
      {"format", [&](const std::string& v) { sal.formats = split_list(v); }},
      {"seed",
       [&](const std::string& v) { sal.seed = static_cast<std::uint64_t>(parse_int(v, "seed")); }},
      {"jobs", [&](const std::string& v) { sal.jobs = static_cast<int>(parse_int(v, "jobs")); }},
      {"cache-models", [&](const std::string& v) { sal.cache_models = parse_bool(v, "cache-models"); }},
      {"soft-context", [&](const std::string& v) { sal.soft_context = parse_bool(v, "soft-context"); }},
      {"class-prior", [&](const std::string& v) { sal.prior = v; }},
      {"em-iters", [&](const std::string& v) { sal.em_iters = static_cast<int>(parse_int(v, "em-iters")); }},
      {"em-tol", [&](const std::string& v) { sal.em_tol = parse_double(v, "em-tol"); }},
  };
  ConfigSetters eval_setters = {
      {"maps", [&](const std::string& v) { ev.maps_dir = v; }},
      {"fixations", [&](const std::string& v) { ev.fixations_file = v; }},
      {"output", [&](const std::string& v) { ev.output = v; }},
      {"manifest", [&](const std::string& v) { ev.manifest_file = v; }},
      {"sigma", [&](const std::string& v) { ev.sigma = parse_double(v, "sigma"); }},
      {"negatives", [&](const std::string& v) { ev.negatives = parse_int(v, "negatives"); }},
      {"seed",
       [&](const std::string& v) { ev.seed = static_cast<std::uint64_t>(parse_int(v, "seed")); }},
  };

  try {
    if (sal_cmd->parsed()) {
      apply_config(sal_cmd, sal_config, sal_setters);
      return run_saliency(sal);
    }
    if (eval_cmd->parsed()) {
      apply_config(eval_cmd, eval_config, eval_setters);
      return run_eval(ev);
    }
    if (gen_cmd->parsed()) {
      if (pop_cmd->parsed()) return run_gen_popout(gen_out, gen_side, gen_patch, gen_seed, gen_name);
      return run_gen_corpus(gen_out, corpus_count, corpus_side, corpus_seed, corpus_prefix);
    }
    if (cal_cmd->parsed()) {
      return run_calibrate(cal_in, cal_out, cal_scales, cal_filter, cal_iters, cal_tol);
    }
  } catch (const CliError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
