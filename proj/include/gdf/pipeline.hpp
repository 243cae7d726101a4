#pragma once

// Command implementations behind the gdf tool. Every command reads and writes
// files under one run directory:
//
//   model.json         model used by simulate (absent for planted runs)
//   planted.jsonl      planted feature cloud (planted runs only)
//   array.gda          sampled array with its latent block
//   spectrum.json/.bin kernel spectrum; unit_ball.json
//   recovered.jsonl    recovered feature cloud; excess.json summary
//   tower.json         truncation schedule; tower/level_<k>.jsonl measures
//   alignment.json     Procrustes alignment of recovered onto planted
//   report.json        RunReport written by verify

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "gdf/array.hpp"
#include "gdf/error.hpp"
#include "gdf/io.hpp"
#include "gdf/measures.hpp"
#include "gdf/mercer.hpp"
#include "gdf/models.hpp"
#include "gdf/recovery.hpp"
#include "gdf/report.hpp"
#include "gdf/stats_tests.hpp"

namespace gdf::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kToolName = "gdf";
inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kConfigSchema = "gdf.config/1";
inline constexpr const char* kReportSchema = "gdf.report/1";
inline constexpr const char* kThresholdsSchema = "gdf.thresholds/1";

// Check groups selectable with verify --only.
inline const std::vector<std::string>& check_groups() {
  static const std::vector<std::string> groups{"truncation", "tower", "spectrum", "recovery", "alignment", "stats"};
  return groups;
}

struct Thresholds {
  double truncation = 1e-12;       // semigroup and commutation residuals
  double tower_tol = 1e-12;        // per-coordinate matching tolerance
  double unit_ball_tol = 1e-6;
  double excess_tol = 1e-6;        // a_l >= -excess_tol * max t
  double w2 = 0.05;
  double excess_median = 0.02;     // median |a_l - planted excess|
  std::optional<double> dependence;  // calibrated on the fly when absent
  unsigned dependence_level = 2;
  std::size_t dependence_samples = 64;
  std::size_t dependence_replicas = 1000;
  double ustat_tol = 1e-3;
};

struct PipelineConfig {
  std::optional<fs::path> model;       // model JSON
  std::optional<double> planted;       // planted scalar measure with this excess
  std::optional<fs::path> kernel;      // kernel file for decompose
  std::optional<fs::path> array;       // array file for recover (default <out>/array.gda)
  std::optional<fs::path> thresholds;  // thresholds fixture
  unsigned m = kDefaultLevel;
  std::size_t n = 300;
  std::uint64_t seed = 1;
  std::vector<double> schedule;  // empty: N_k = 2^k until N >= max diagonal
  double tol = 1e-6;
  fs::path out = "run";
  bool text = false;
  bool quiet = false;
  bool timings = false;
  bool tsv = false;
  std::vector<std::string> only;
  std::size_t rank = 0;
  double max_clipped_fraction = 0.05;
  // stats group
  std::size_t exch_n = 40;
  std::size_t exch_permutations = 4;
  std::size_t exch_replicas = 200;
  std::size_t positivity_n = 64;
  std::size_t positivity_replicas = 20;
  std::size_t ustat_replicas = 100;
  std::vector<std::size_t> ustat_schedule{100, 200, 400, 800, 1600, 2000};
};

inline void validate(const PipelineConfig& c) {
  if (c.n == 0) throw ConfigError("n must be positive (field 'n')");
  if (c.m > kMaxLevel) throw ConfigError("grid level m exceeds the cap (field 'm')");
  if (!(c.tol > 0.0)) throw ConfigError("tol must be positive (field 'tol')");
  if (c.model && c.planted) throw ConfigError("give either 'model' or 'planted', not both");
  if (c.planted && !(*c.planted >= 0.0)) throw ConfigError("planted excess must be nonnegative (field 'planted')");
  for (std::size_t i = 0; i < c.schedule.size(); ++i) {
    if (!(c.schedule[i] > 0.0) || (i > 0 && !(c.schedule[i] > c.schedule[i - 1]))) {
      throw ConfigError("schedule must be positive and strictly increasing (field 'schedule')");
    }
  }
  if (!(c.max_clipped_fraction > 0.0)) throw ConfigError("max_clipped_fraction must be positive");
  for (const auto& g : c.only) {
    const auto& groups = check_groups();
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) {
      throw ConfigError("unknown check group '" + g + "' (field 'only')");
    }
  }
  if (c.model && !fs::exists(*c.model)) throw IoError("model file not found: " + c.model->string());
  if (c.kernel && !fs::exists(*c.kernel)) throw IoError("kernel file not found: " + c.kernel->string());
  if (c.thresholds && !fs::exists(*c.thresholds)) {
    throw IoError("thresholds file not found: " + c.thresholds->string());
  }
}

namespace detail {

template <class T>
void take(const json& j, const char* key, T& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

inline fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : (base / p).lexically_normal(); }

}  // namespace detail

// Fields present in the JSON file override `c`; relative paths resolve
// against the file's directory.
inline void load_config(const fs::path& path, PipelineConfig& c) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (j.contains("schema") && j.at("schema") != kConfigSchema) {
    throw ConfigError("config schema must be " + std::string(kConfigSchema));
  }
  static const std::set<std::string> known{
      "schema", "model", "planted", "kernel", "array", "thresholds", "m", "n", "seed", "schedule", "tol", "out",
      "text", "only", "rank", "max_clipped_fraction", "stats"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown config field '" + key + "'");
  }
  const fs::path base = path.parent_path();
  auto path_field = [&](const char* key, std::optional<fs::path>& dst) {
    if (j.contains(key)) dst = detail::resolve(base, j.at(key).get<std::string>());
  };
  path_field("model", c.model);
  path_field("kernel", c.kernel);
  path_field("array", c.array);
  path_field("thresholds", c.thresholds);
  if (j.contains("planted")) c.planted = j.at("planted").value("excess", 0.1);
  if (j.contains("n") && j.at("n").is_number_integer() && j.at("n").get<long long>() < 0) {
    throw ConfigError("n must be positive (field 'n')");
  }
  detail::take(j, "m", c.m);
  detail::take(j, "n", c.n);
  detail::take(j, "seed", c.seed);
  detail::take(j, "schedule", c.schedule);
  detail::take(j, "tol", c.tol);
  detail::take(j, "text", c.text);
  detail::take(j, "only", c.only);
  detail::take(j, "rank", c.rank);
  detail::take(j, "max_clipped_fraction", c.max_clipped_fraction);
  if (j.contains("out")) c.out = detail::resolve(base, j.at("out").get<std::string>());
  if (j.contains("stats")) {
    const auto& s = j.at("stats");
    detail::take(s, "exchangeability_n", c.exch_n);
    detail::take(s, "exchangeability_permutations", c.exch_permutations);
    detail::take(s, "exchangeability_replicas", c.exch_replicas);
    detail::take(s, "positivity_n", c.positivity_n);
    detail::take(s, "positivity_replicas", c.positivity_replicas);
    detail::take(s, "ustat_replicas", c.ustat_replicas);
    detail::take(s, "ustat_schedule", c.ustat_schedule);
  }
}

inline Thresholds load_thresholds(const fs::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("thresholds " + path.string() + ": " + e.what());
  }
  if (j.value("schema", std::string{}) != kThresholdsSchema) {
    throw ConfigError("thresholds schema must be " + std::string(kThresholdsSchema));
  }
  Thresholds t;
  detail::take(j, "truncation", t.truncation);
  detail::take(j, "tower_tol", t.tower_tol);
  detail::take(j, "unit_ball_tol", t.unit_ball_tol);
  detail::take(j, "excess_tol", t.excess_tol);
  detail::take(j, "w2", t.w2);
  detail::take(j, "excess_median", t.excess_median);
  detail::take(j, "ustat_tol", t.ustat_tol);
  if (j.contains("dependence")) {
    const auto& d = j.at("dependence");
    t.dependence = d.at("threshold").get<double>();
    detail::take(d, "level", t.dependence_level);
    detail::take(d, "samples", t.dependence_samples);
    detail::take(d, "replicas", t.dependence_replicas);
  }
  return t;
}

// Thresholds fixture with a dependence threshold calibrated under the model's
// w-averaged null.
inline json calibrate_thresholds(const AldousHooverModel& model, std::uint64_t seed, const Thresholds& base = {}) {
  const auto cal = calibrate_dependence_threshold(model, dyadic_rectangles(base.dependence_level),
                                                  base.dependence_samples, base.dependence_replicas, seed);
  return {{"schema", kThresholdsSchema},
          {"truncation", base.truncation},
          {"tower_tol", base.tower_tol},
          {"unit_ball_tol", base.unit_ball_tol},
          {"excess_tol", base.excess_tol},
          {"w2", base.w2},
          {"excess_median", base.excess_median},
          {"ustat_tol", base.ustat_tol},
          {"dependence",
           {{"model", model.name},
            {"threshold", cal.threshold},
            {"null_quantile", cal.null_quantile},
            {"quantile", cal.quantile},
            {"level", base.dependence_level},
            {"samples", cal.samples},
            {"replicas", cal.replicas},
            {"seed", cal.seed}}}};
}

// N_k = 2^k for k = 0, 1, ... until N_k >= max_diagonal.
inline std::vector<double> default_schedule(double max_diagonal) {
  std::vector<double> s{1.0};
  while (s.back() < max_diagonal) s.push_back(2.0 * s.back());
  return s;
}

inline std::vector<double> schedule_for(const PipelineConfig& c, double max_diagonal) {
  return c.schedule.empty() ? default_schedule(max_diagonal) : c.schedule;
}

class Logger {
 public:
  explicit Logger(bool quiet) : quiet_(quiet) {}
  void operator()(const std::string& msg) const {
    if (!quiet_) std::cerr << "gdf: " << msg << "\n";
  }

 private:
  bool quiet_;
};

// Stage paths inside the run directory.
struct RunPaths {
  fs::path dir;
  fs::path model() const { return dir / "model.json"; }
  fs::path planted() const { return dir / "planted.jsonl"; }
  fs::path array() const { return dir / "array.gda"; }
  fs::path spectrum() const { return dir / "spectrum.json"; }
  fs::path unit_ball() const { return dir / "unit_ball.json"; }
  fs::path recovered() const { return dir / "recovered.jsonl"; }
  fs::path excess() const { return dir / "excess.json"; }
  fs::path tower() const { return dir / "tower.json"; }
  fs::path tower_level(std::size_t k) const { return dir / "tower" / ("level_" + std::to_string(k) + ".jsonl"); }
  fs::path alignment() const { return dir / "alignment.json"; }
  fs::path report() const { return dir / "report.json"; }
  fs::path report_tsv() const { return dir / "report.tsv"; }
};

inline void write_json(const fs::path& p, const json& j) { io::write_file(p, j.dump(2) + "\n"); }

inline json read_json(const fs::path& p) {
  try {
    return json::parse(io::read_file(p));
  } catch (const json::parse_error& e) {
    throw IoError(p.string() + ": " + e.what());
  }
}

// ---- simulate ----

// Samples the model (or the planted measure) and writes array.gda.
inline int cmd_simulate(const PipelineConfig& c) {
  validate(c);
  const Logger log(c.quiet);
  const RunPaths run{c.out};
  // A new sample invalidates everything downstream of it.
  for (const auto& f : {run.spectrum(), run.dir / "spectrum.bin", run.unit_ball(), run.recovered(), run.excess(),
                        run.tower(), run.alignment(), run.report(), run.report_tsv()}) {
    fs::remove(f);
  }
  fs::remove_all(run.dir / "tower");
  SampledArray a;
  if (c.planted) {
    const auto cloud = models::planted_scalar(c.n, c.seed, *c.planted);
    io::write_cloud(run.planted(), cloud);
    a = build_array(cloud);
    fs::remove(run.model());
  } else {
    if (!c.model) throw ConfigError("simulate needs a model (field 'model') or a planted measure");
    const auto model = read_model(*c.model);
    write_json(run.model(), to_json(model));
    fs::remove(run.planted());
    a = sample_array(model, c.n, rng::derive(c.seed, rng::kStageSimulate));
  }
  io::write_array(run.array(), a, !c.text);
  log("simulate: wrote " + run.array().string() + " (n = " + std::to_string(c.n) + ")");
  return 0;
}

// ---- decompose ----

inline double load_or_default_unit_ball_tol(const PipelineConfig& c) {
  return c.thresholds ? load_thresholds(*c.thresholds).unit_ball_tol : Thresholds{}.unit_ball_tol;
}

inline GridKernel kernel_for(const PipelineConfig& c) {
  if (c.kernel) return io::read_kernel(*c.kernel);
  const RunPaths run{c.out};
  if (c.model) return rasterize(read_model(*c.model).f_bar(), DyadicLevel(c.m));
  if (fs::exists(run.model())) return rasterize(read_model(run.model()).f_bar(), DyadicLevel(c.m));
  throw ConfigError("decompose needs a kernel file (field 'kernel') or a model");
}

inline int cmd_decompose(const PipelineConfig& c) {
  validate(c);
  const Logger log(c.quiet);
  const RunPaths run{c.out};
  const auto k = kernel_for(c);
  const auto s = decompose(k);
  io::write_spectrum(run.dir, s);
  const auto ub = unit_ball_check(s, 1.0, load_or_default_unit_ball_tol(c));
  write_json(run.unit_ball(), {{"max_norm_sq", ub.max_norm_sq},
                               {"argmax_cell", ub.argmax_cell},
                               {"bound", 1.0},
                               {"pass", ub.pass},
                               {"reconstruction_error", reconstruction_error(s, k)}});
  log("decompose: rank " + std::to_string(s.rank()) + ", max |phi|^2 = " + io::format_double(ub.max_norm_sq));
  return 0;
}

// ---- recover ----

inline json excess_summary(const FeatureCloud& c) {
  std::vector<double> a;
  a.reserve(c.size());
  for (const auto& p : c.points) a.push_back(p.a);
  std::sort(a.begin(), a.end());
  if (a.empty()) return json::object();
  double mean = 0.0;
  for (double v : a) mean += v;
  mean /= static_cast<double>(a.size());
  const std::size_t mid = a.size() / 2;
  const double median = a.size() % 2 ? a[mid] : 0.5 * (a[mid - 1] + a[mid]);
  return {{"min", a.front()}, {"median", median}, {"mean", mean}, {"max", a.back()}};
}

// Pushforward tower of the measure along the schedule.
inline std::vector<std::pair<double, EmpiricalMeasure>> build_tower(const EmpiricalMeasure& mu,
                                                                    const std::vector<double>& schedule) {
  std::vector<std::pair<double, EmpiricalMeasure>> tower;
  for (double N : schedule) tower.emplace_back(N, pushforward(mu, N));
  return tower;
}

inline int cmd_recover(const PipelineConfig& c) {
  validate(c);
  const Logger log(c.quiet);
  const RunPaths run{c.out};
  const auto a = io::read_array(c.array.value_or(run.array()));
  SplitOptions opt;
  opt.rank = c.rank;
  opt.a_tol_relative = c.tol;
  opt.max_clipped_fraction = c.max_clipped_fraction;
  const auto res = split_diagonal(a, opt);
  io::write_cloud(run.recovered(), res.cloud);
  json summary = excess_summary(res.cloud);
  summary["n"] = res.cloud.size();
  summary["r"] = res.cloud.r;
  summary["clipped_mass"] = res.clipped_mass;
  summary["clipped_fraction"] = res.clipped_fraction;
  summary["clamped"] = res.clamped;
  write_json(run.excess(), summary);

  const auto schedule = schedule_for(c, a.max_diagonal());
  const auto tower = build_tower(from_cloud(res.cloud), schedule);
  json index{{"schedule", schedule}, {"levels", json::array()}};
  fs::remove_all(run.dir / "tower");
  for (std::size_t k = 0; k < tower.size(); ++k) {
    io::write_cloud(run.tower_level(k), to_cloud(tower[k].second));
    index["levels"].push_back({{"k", k}, {"N", tower[k].first}, {"file", run.tower_level(k).lexically_relative(run.dir).generic_string()}});
  }
  write_json(run.tower(), index);
  log("recover: rank " + std::to_string(res.cloud.r) + ", clipped fraction " +
      io::format_double(res.clipped_fraction));
  return 0;
}

// ---- align ----

inline AlignmentResult align_recovered(const FeatureCloud& recovered, const FeatureCloud& planted, bool paired) {
  const std::size_t r = std::max(recovered.r, planted.r);
  return procrustes_align(from_cloud(pad_to(recovered, r)), from_cloud(pad_to(planted, r)), paired);
}

inline int cmd_align(const PipelineConfig& c, bool paired = true) {
  validate(c);
  const Logger log(c.quiet);
  const RunPaths run{c.out};
  if (!fs::exists(run.planted())) throw IoError("align needs " + run.planted().string());
  const auto rec = io::read_cloud(run.recovered());
  const auto pl = io::read_cloud(run.planted());
  if (rec.size() != pl.size()) throw ConfigError("recovered and planted clouds differ in size");
  const auto al = align_recovered(rec, pl, paired);
  const std::size_t r = std::max(rec.r, pl.r);
  json j = io::alignment_json(al);
  j["paired"] = paired;
  j["w2"] = wasserstein2(apply(al.q, from_cloud(pad_to(rec, r))), from_cloud(pad_to(pl, r)));
  write_json(run.alignment(), j);
  log("align: residual " + io::format_double(al.residual));
  return 0;
}

// ---- verify ----

struct VerifyContext {
  const PipelineConfig& config;
  RunPaths run;
  Thresholds thresholds;
  json metrics = json::object();
  json stages = json::object();
  std::vector<TestReport> checks;
};

inline TestReport residual_check(const std::string& name, double residual, double threshold, json details = {}) {
  TestReport r;
  r.name = name;
  r.statistic = residual;
  r.threshold = threshold;
  r.pass = residual <= threshold;
  r.details = details.is_null() ? json::object() : std::move(details);
  return r;
}

inline double max_abs_diff(const SampledArray& x, const SampledArray& y) {
  if (x.n() != y.n()) return std::numeric_limits<double>::infinity();
  double d = 0.0;
  for (std::size_t i = 0; i < x.n(); ++i) {
    for (std::size_t j = 0; j < x.n(); ++j) d = std::max(d, std::abs(x(i, j) - y(i, j)));
  }
  return d;
}

inline double max_abs_diff(const FeatureCloud& x, const FeatureCloud& y) {
  if (x.size() != y.size() || x.r != y.r) return std::numeric_limits<double>::infinity();
  double d = 0.0;
  for (std::size_t l = 0; l < x.size(); ++l) {
    d = std::max(d, std::abs(x.points[l].t - y.points[l].t));
    for (std::size_t k = 0; k < x.r; ++k) d = std::max(d, std::abs(x.points[l].h[k] - y.points[l].h[k]));
  }
  return d;
}

// Pairs (N, N') with N < N' drawn from the schedule and from N' = N + 1.
inline std::vector<std::pair<double, double>> semigroup_pairs(const std::vector<double>& schedule) {
  std::vector<std::pair<double, double>> pairs;
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    pairs.emplace_back(schedule[i], schedule[i] + 1.0);
    for (std::size_t j = i + 1; j < schedule.size(); ++j) pairs.emplace_back(schedule[i], schedule[j]);
  }
  return pairs;
}

inline void verify_truncation(VerifyContext& ctx) {
  const auto a = io::read_array(ctx.config.array.value_or(ctx.run.array()));
  const auto schedule = schedule_for(ctx.config, a.max_diagonal());
  const double thr = ctx.thresholds.truncation;
  double array_res = 0.0, feature_res = 0.0, commute_res = 0.0;
  std::optional<FeatureCloud> cloud;
  if (fs::exists(ctx.run.recovered())) cloud = io::read_cloud(ctx.run.recovered());
  for (const auto& [N, Np] : semigroup_pairs(schedule)) {
    array_res = std::max(array_res, max_abs_diff(truncate_array(truncate_array(a, Np), N), truncate_array(a, N)));
    if (cloud) {
      feature_res = std::max(
          feature_res, max_abs_diff(truncate_features(truncate_features(*cloud, Np), N), truncate_features(*cloud, N)));
    }
  }
  ctx.checks.push_back(residual_check("array_truncation_semigroup", array_res, thr, {{"schedule", schedule}}));
  if (cloud) {
    for (double N : schedule) {
      commute_res = std::max(commute_res, max_abs_diff(build_array(truncate_features(*cloud, N)),
                                                       truncate_array(build_array(*cloud), N)));
    }
    ctx.checks.push_back(residual_check("feature_truncation_semigroup", feature_res, thr));
    ctx.checks.push_back(residual_check("truncation_commutes_with_gram", commute_res, thr));
  }
}

inline void verify_tower(VerifyContext& ctx) {
  if (!fs::exists(ctx.run.tower())) throw IoError("missing " + ctx.run.tower().string());
  const json index = read_json(ctx.run.tower());
  std::vector<std::pair<double, EmpiricalMeasure>> tower;
  for (const auto& lvl : index.at("levels")) {
    tower.emplace_back(lvl.at("N").get<double>(),
                       from_cloud(io::read_cloud(ctx.run.dir / lvl.at("file").get<std::string>())));
  }
  auto res = consistency_check(tower, ctx.thresholds.tower_tol);
  ctx.metrics["consistency_defects"] = res.defects;
  ctx.checks.push_back(res.report);

  // restrict(eta_{N_{k+1}}, N_k) == restrict(eta_{N_k}, N_k) atom for atom.
  TestReport r;
  r.name = "restriction_equality";
  r.threshold = 0.0;
  json failing = json::array();
  for (std::size_t k = 0; k + 1 < tower.size(); ++k) {
    const double N = tower[k].first;
    const auto lo = restrict(tower[k].second, N);
    const auto hi = restrict(tower[k + 1].second, N);
    bool equal = lo.atoms.size() == hi.atoms.size();
    for (std::size_t i = 0; equal && i < lo.atoms.size(); ++i) {
      equal = lo.atoms[i].t == hi.atoms[i].t && lo.atoms[i].h == hi.atoms[i].h;
    }
    if (!equal) {
      r.statistic += 1.0;
      failing.push_back({{"level", k}, {"N", N}});
    }
  }
  r.pass = r.statistic <= r.threshold;
  r.replicates = tower.size();
  r.details["failing_levels"] = failing;
  ctx.checks.push_back(r);
}

inline void verify_spectrum(VerifyContext& ctx) {
  if (!fs::exists(ctx.run.spectrum())) {
    ctx.stages["decompose"] = "absent";
    return;
  }
  const auto s = io::read_spectrum(ctx.run.spectrum());
  const auto ub = unit_ball_check(s, 1.0, ctx.thresholds.unit_ball_tol);
  std::vector<double> head(s.eigenvalues.begin(),
                           s.eigenvalues.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(5, s.rank())));
  ctx.metrics["lambda_head"] = head;
  ctx.metrics["rank"] = s.rank();
  ctx.metrics["max_phi_norm_sq"] = ub.max_norm_sq;
  if (fs::exists(ctx.run.unit_ball())) {
    ctx.metrics["reconstruction_error"] = read_json(ctx.run.unit_ball()).at("reconstruction_error");
  }
  ctx.checks.push_back(residual_check("unit_ball", ub.max_norm_sq, 1.0 + ctx.thresholds.unit_ball_tol,
                                      {{"argmax_cell", ub.argmax_cell}}));
}

inline void verify_recovery(VerifyContext& ctx) {
  const auto cloud = io::read_cloud(ctx.run.recovered());
  const auto summary = excess_summary(cloud);
  ctx.metrics["excess"] = summary;
  const double max_t = cloud.max_t();
  double worst = 0.0;
  for (const auto& p : cloud.points) worst = std::min(worst, p.a);
  // Statistic: -min a / max t, so the check is statistic <= excess_tol.
  const double stat = max_t > 0.0 ? -worst / max_t : 0.0;
  ctx.checks.push_back(residual_check("excess_nonnegative", stat, ctx.thresholds.excess_tol,
                                      {{"min_a", worst}, {"max_t", max_t}}));
}

inline void verify_alignment(VerifyContext& ctx) {
  if (!fs::exists(ctx.run.planted())) {
    ctx.stages["align"] = "skipped: no planted measure";
    return;
  }
  const auto rec = io::read_cloud(ctx.run.recovered());
  const auto pl = io::read_cloud(ctx.run.planted());
  if (rec.size() != pl.size()) throw ConfigError("recovered and planted clouds differ in size");
  const auto al = align_recovered(rec, pl, true);
  const std::size_t r = std::max(rec.r, pl.r);
  const double w2 = wasserstein2(apply(al.q, from_cloud(pad_to(rec, r))), from_cloud(pad_to(pl, r)));
  ctx.metrics["w2"] = w2;
  ctx.metrics["alignment_residual"] = al.residual;
  ctx.checks.push_back(residual_check("w2_recovered_planted", w2, ctx.thresholds.w2));

  std::vector<double> dev;
  for (std::size_t l = 0; l < rec.size(); ++l) dev.push_back(std::abs(rec.points[l].a - pl.points[l].a));
  std::sort(dev.begin(), dev.end());
  const std::size_t mid = dev.size() / 2;
  const double median = dev.size() % 2 ? dev[mid] : 0.5 * (dev[mid - 1] + dev[mid]);
  ctx.checks.push_back(residual_check("excess_median_error", median, ctx.thresholds.excess_median));
}

inline void verify_stats(VerifyContext& ctx) {
  if (!fs::exists(ctx.run.model())) {
    ctx.stages["stats"] = "skipped: no model";
    return;
  }
  const auto& c = ctx.config;
  const auto model = read_model(ctx.run.model());
  const std::uint64_t seed = c.seed;
  ctx.checks.push_back(exchangeability_check(model, c.exch_n, c.exch_permutations, c.exch_replicas, seed));

  const auto rects = dyadic_rectangles(ctx.thresholds.dependence_level);
  json dep_source = "fixture";
  double dep_thr = 0.0;
  if (ctx.thresholds.dependence) {
    dep_thr = *ctx.thresholds.dependence;
  } else {
    dep_thr = calibrate_dependence_threshold(model, rects, ctx.thresholds.dependence_samples,
                                             ctx.thresholds.dependence_replicas, seed)
                  .threshold;
    dep_source = "calibrated";
  }
  auto dep = dependence_test(model, rects, ctx.thresholds.dependence_samples, seed, dep_thr);
  dep.details["threshold_source"] = dep_source;
  ctx.checks.push_back(dep);

  auto blocks = block_sign_family(2);
  auto cells = dyadic_test_functions(2);
  blocks.insert(blocks.end(), cells.begin(), cells.end());
  ctx.checks.push_back(quadratic_positivity(model, blocks, c.positivity_n, c.positivity_replicas, seed));

  const auto k = rasterize(model.f_bar(), DyadicLevel(c.m));
  ctx.checks.push_back(ustat_convergence(k, FunctionSpec::constant(1.0), c.ustat_schedule, c.ustat_replicas, seed,
                                         true, ctx.thresholds.ustat_tol));
}

inline json input_hashes(const RunPaths& run) {
  json h = json::object();
  const fs::path files[] = {run.model(), run.planted(), run.array(), run.spectrum(), run.recovered(), run.tower()};
  for (const auto& f : files) {
    if (fs::exists(f)) h[f.filename().string()] = io::hex64(io::fnv1a(io::read_file(f)));
  }
  return h;
}

inline json config_json(const PipelineConfig& c) {
  json j{{"m", c.m}, {"n", c.n}, {"seed", c.seed}, {"tol", c.tol}, {"schedule", c.schedule}, {"only", c.only}};
  if (c.planted) j["planted"] = {{"excess", *c.planted}};
  return j;
}

inline std::string tsv_table(const std::vector<TestReport>& checks) {
  std::string out = "check\tstatistic\tthreshold\tpass\n";
  for (const auto& r : checks) {
    out += r.name + "\t" + io::format_double(r.statistic) + "\t" + io::format_double(r.threshold) + "\t" +
           (r.pass ? "1" : "0") + "\n";
  }
  return out;
}

// Runs the enabled check groups and writes report.json; returns 0 iff every
// check passed.
inline int cmd_verify(const PipelineConfig& c, json stages = json::object(), json timings = json::object()) {
  validate(c);
  const Logger log(c.quiet);
  VerifyContext ctx{c, RunPaths{c.out}, c.thresholds ? load_thresholds(*c.thresholds) : Thresholds{}, {}, {}, {}};
  ctx.thresholds.excess_tol = c.tol;
  ctx.stages = std::move(stages);
  const std::map<std::string, std::function<void(VerifyContext&)>> groups{
      {"truncation", verify_truncation}, {"tower", verify_tower},         {"spectrum", verify_spectrum},
      {"recovery", verify_recovery},     {"alignment", verify_alignment}, {"stats", verify_stats}};
  for (const auto& name : check_groups()) {
    if (!c.only.empty() && std::find(c.only.begin(), c.only.end(), name) == c.only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    groups.at(name)(ctx);
    if (c.timings) {
      timings["verify." + name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  }
  bool pass = true;
  json checks = json::array();
  for (const auto& r : ctx.checks) {
    pass = pass && r.pass;
    checks.push_back(to_json(r));
    if (!r.pass) log("check failed: " + r.name);
  }
  json report{{"schema", kReportSchema},
              {"tool", {{"name", kToolName}, {"version", kToolVersion}}},
              {"config", config_json(c)},
              {"inputs", input_hashes(ctx.run)},
              {"stages", ctx.stages},
              {"metrics", ctx.metrics},
              {"checks", checks},
              {"pass", pass}};
  if (c.timings) report["timings"] = timings;
  write_json(ctx.run.report(), report);
  if (c.tsv) io::write_file(ctx.run.report_tsv(), tsv_table(ctx.checks));
  log(std::string("verify: ") + (pass ? "all checks passed" : "some checks failed") + " (" +
      ctx.run.report().string() + ")");
  return pass ? 0 : static_cast<int>(ExitCode::check_failed);
}

// ---- pipeline ----

// simulate, decompose (model runs), recover, align (planted runs), verify.
inline int cmd_pipeline(const PipelineConfig& c) {
  validate(c);
  json stages = json::object();
  json timings = json::object();
  auto stage = [&](const char* name, auto&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    stages[name] = "ok";
    if (c.timings) timings[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  stage("simulate", [&] { cmd_simulate(c); });
  if (c.model || c.kernel) stage("decompose", [&] { cmd_decompose(c); });
  stage("recover", [&] { cmd_recover(c); });
  if (c.planted) stage("align", [&] { cmd_align(c); });
  return cmd_verify(c, stages, timings);
}

}  // namespace gdf::cli
