// Acceptance criteria with frozen tolerances. Prints one PASS/FAIL line per
// criterion and exits nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "gdf/gdf.hpp"
#include "gdf/pipeline.hpp"

using namespace gdf;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kSource = GDF_SOURCE_DIR;
const std::string kTool = GDF_TOOL_PATH;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double classical_min_eigenvalue(int k) {
  const double d = (2.0 * k - 1.0) * M_PI;
  return 4.0 / (d * d);
}

Outcome mercer_spectrum() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto s8 = decompose(rasterize(KernelSpec::min_xy(), DyadicLevel(8)));
  const double runtime = seconds_since(t0);
  const auto s10 = decompose(rasterize(KernelSpec::min_xy(), DyadicLevel(10)));
  if (s8.rank() < 5 || s10.rank() < 5) return {false, "rank below 5"};
  double worst8 = 0.0, worst10 = 0.0;
  for (int k = 1; k <= 5; ++k) {
    const double ref = classical_min_eigenvalue(k);
    worst8 = std::max(worst8, std::abs(s8.eigenvalues[k - 1] - ref) / ref);
    worst10 = std::max(worst10, std::abs(s10.eigenvalues[k - 1] - ref) / ref);
  }
  return {worst8 <= 0.01 && worst10 <= 0.01 && runtime < 5.0,
          "max rel err m=8 " + fmt(worst8) + ", m=10 " + fmt(worst10) + ", runtime " + fmt(runtime) + " s"};
}

Outcome feature_faithfulness() {
  double worst = 0.0;
  for (const auto& spec : {KernelSpec::product_xy(), KernelSpec::min_xy()}) {
    const auto k = rasterize(spec, DyadicLevel(8));
    const auto s = decompose(k, 0.0);
    const auto phi = feature_matrix(s);
    const Eigen::MatrixXd g = phi * phi.transpose();
    for (std::size_t i = 0; i < k.cells(); ++i) {
      for (std::size_t j = 0; j < k.cells(); ++j) {
        worst = std::max(worst, std::abs(g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - k(i, j)));
      }
    }
  }
  return {worst <= 1e-8, "max cell deviation " + fmt(worst)};
}

Outcome unit_ball() {
  std::size_t failed = 0;
  double worst = 0.0;
  std::string names;
  for (const auto& m : models::bounded_suite()) {
    const auto ub = unit_ball_check(decompose(rasterize(m.f_bar(), DyadicLevel(8))), 1.0, 1e-6);
    worst = std::max(worst, ub.max_norm_sq);
    if (!ub.pass) {
      ++failed;
      names += " " + m.name;
    }
  }
  return {failed == 0, "max |phi|^2 " + fmt(worst) + ", failing models " + std::to_string(failed) + names};
}

Outcome planted_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto planted = models::planted_scalar(1000, 7, 0.1);
  const auto split = split_diagonal(build_array(planted));
  const auto& rec = split.cloud;
  const std::size_t r = std::max(rec.r, planted.r);
  const auto from = from_cloud(pad_to(rec, r));
  const auto to = from_cloud(pad_to(planted, r));
  const auto al = procrustes_align(from, to, true);
  const double w2 = wasserstein2(apply(al.q, from), to);
  std::vector<double> err;
  for (const auto& p : rec.points) err.push_back(std::abs(p.a - 0.1));
  std::nth_element(err.begin(), err.begin() + static_cast<std::ptrdiff_t>(err.size() / 2), err.end());
  const double median = err[err.size() / 2];
  const double runtime = seconds_since(t0);
  return {w2 <= 0.05 && median <= 0.02 && runtime < 30.0,
          "W2 " + fmt(w2) + ", median |a - 0.1| " + fmt(median) + ", runtime " + fmt(runtime) + " s"};
}

Outcome positivity() {
  double worst = 0.0;
  std::string where = "none";
  std::size_t failures = 0;
  std::size_t mismatches = 0;
  for (const auto& m : models::bounded_suite()) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto a = sample_array(m, 300, rng::derive(seed, rng::kStageSimulate));
      try {
        const auto res = split_diagonal(a);
        double min_a = 0.0;
        for (const auto& p : res.cloud.points) min_a = std::min(min_a, p.a);
        const double rel = min_a / res.cloud.max_t();
        if (rel < -1e-6) ++failures;
        if (rel < worst) {
          worst = rel;
          where = m.name + " seed " + std::to_string(seed);
        }
      } catch (const ModelMismatchError&) {
        ++mismatches;
      }
    }
  }
  return {failures == 0 && mismatches == 0,
          "min a / max t " + fmt(worst) + " (" + where + "), runs below bound " + std::to_string(failures) +
              " of 50, model mismatches " + std::to_string(mismatches)};
}

FeatureCloud random_cloud(std::size_t n, std::size_t r, std::uint64_t seed) {
  CounterRng gen(seed);
  std::vector<std::vector<double>> h(n, std::vector<double>(r));
  std::vector<double> t(n);
  for (std::size_t l = 0; l < n; ++l) {
    double norm = 0.0;
    for (auto& v : h[l]) {
      v = 4.0 * gen.uniform() - 2.0;
      norm += v * v;
    }
    t[l] = norm + 3.0 * gen.uniform();
  }
  return make_cloud(r, h, t, Provenance::planted);
}

double max_diff(const SampledArray& x, const SampledArray& y) {
  double d = 0.0;
  for (std::size_t i = 0; i < x.n(); ++i) {
    for (std::size_t j = 0; j < x.n(); ++j) d = std::max(d, std::abs(x(i, j) - y(i, j)));
  }
  return d;
}

double max_diff(const FeatureCloud& x, const FeatureCloud& y) {
  double d = 0.0;
  for (std::size_t l = 0; l < x.size(); ++l) {
    d = std::max(d, std::abs(x.points[l].t - y.points[l].t));
    for (std::size_t k = 0; k < x.r; ++k) d = std::max(d, std::abs(x.points[l].h[k] - y.points[l].h[k]));
  }
  return d;
}

Outcome truncation_tower() {
  double semigroup = 0.0;
  std::size_t defects = 0;
  std::size_t restriction_failures = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto cloud = random_cloud(60, 3, rng::derive(seed, 99));
    const auto a = build_array(cloud);
    for (double N : {0.5, 1.0, 2.0, 4.0, 8.0}) {
      semigroup = std::max(semigroup, max_diff(truncate_array(truncate_array(a, N + 1.0), N), truncate_array(a, N)));
      for (double Np : {N, N + 0.5, 2.0 * N, 16.0}) {
        semigroup = std::max(semigroup,
                             max_diff(truncate_features(truncate_features(cloud, Np), N), truncate_features(cloud, N)));
      }
    }
    const std::vector<double> schedule{1.0, 2.0, 4.0, 8.0, 16.0};
    const auto mu = from_cloud(cloud);
    std::vector<std::pair<double, EmpiricalMeasure>> tower;
    for (double N : schedule) tower.emplace_back(N, pushforward(mu, N));
    const auto res = consistency_check(tower, 1e-12);
    for (double d : res.defects) defects += d != 0.0;
    if (!res.report.pass) ++defects;
    for (std::size_t k = 0; k + 1 < tower.size(); ++k) {
      const double N = tower[k].first;
      const auto lo = restrict(tower[k].second, N);
      const auto hi = restrict(tower[k + 1].second, N);
      bool equal = lo.atoms.size() == hi.atoms.size();
      for (std::size_t i = 0; equal && i < lo.atoms.size(); ++i) {
        equal = lo.atoms[i].t == hi.atoms[i].t && lo.atoms[i].h == hi.atoms[i].h;
      }
      restriction_failures += !equal;
    }
  }
  return {semigroup <= 1e-12 && defects == 0 && restriction_failures == 0,
          "semigroup max err " + fmt(semigroup) + ", nonzero defects " + std::to_string(defects) +
              ", restriction mismatches " + std::to_string(restriction_failures)};
}

Outcome dependence() {
  const auto fixture = kSource / "tests" / "fixtures" / "thresholds.json";
  const auto thr = cli::load_thresholds(fixture);
  if (!thr.dependence) return {false, "fixture lacks a dependence threshold"};
  const double threshold = *thr.dependence;
  const auto rects = dyadic_rectangles(thr.dependence_level);

  const json stored = json::parse(io::read_file(fixture));
  const json fresh = cli::calibrate_thresholds(models::gram_product(), stored.at("dependence").at("seed").get<std::uint64_t>(), thr);
  const bool stable = fresh.dump() == stored.dump();

  const std::size_t trials = 200;
  std::size_t rejected = 0;
  for (std::uint64_t s = 0; s < trials; ++s) {
    rejected += !dependence_test(models::w_sign(), rects, thr.dependence_samples, s + 1, threshold).pass;
  }
  const double power = static_cast<double>(rejected) / static_cast<double>(trials);
  std::size_t accepted = 0;
  for (std::uint64_t s = 0; s < trials; ++s) {
    accepted += dependence_test(models::gram_product(), rects, thr.dependence_samples, s + 1, threshold).pass;
  }
  return {power >= 0.99 && accepted == trials && stable,
          "threshold " + fmt(threshold) + ", WSign power " + fmt(power) + ", Lift(ProductXY) accepted " +
              std::to_string(accepted) + "/" + std::to_string(trials) + ", fixture stable " + (stable ? "yes" : "no")};
}

Outcome ustat() {
  const auto k = rasterize(KernelSpec::product_xy(), DyadicLevel(8));
  const auto one = FunctionSpec::constant(1.0);
  const std::uint64_t stage = rng::derive(1, rng::kStageUStat);
  std::size_t within = 0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto path = ustat_path(k, one, {2000}, rng::derive(stage, i));
    within += std::abs(path.s.back() - 0.25) <= 0.02;
  }
  double min_terminal = std::numeric_limits<double>::infinity();
  for (const auto& m : models::bounded_suite()) {
    const auto km = rasterize(m.f_bar(), DyadicLevel(8));
    for (std::uint64_t i = 0; i < 20; ++i) {
      const auto path = ustat_path(km, one, {2000}, rng::derive(stage, {1000, i}));
      min_terminal = std::min(min_terminal, path.s.back());
    }
  }
  return {within >= 95 && min_terminal >= -1e-3,
          "replicas within 0.02: " + std::to_string(within) + "/100, min terminal S_n over PSD suite " +
              fmt(min_terminal)};
}

int run_tool(const std::string& args) {
  const std::string cmd = "'" + kTool + "' " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<fs::path> tree(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
  }
  std::sort(out.begin(), out.end());
  return out;
}

Outcome determinism() {
  const auto base = fs::temp_directory_path() / "gdf_acceptance";
  fs::remove_all(base);
  std::size_t files = 0;
  std::vector<std::string> problems;
  for (const char* cfg : {"planted.json", "model_run.json"}) {
    const auto config = (kSource / "configs" / cfg).string();
    std::vector<fs::path> dirs;
    for (const char* rep : {"a", "b"}) {
      const auto out = base / cfg / rep;
      const int code = run_tool("pipeline --quiet --config '" + config + "' --out '" + out.string() + "'");
      if (code != 0 && code != 1) problems.push_back(std::string(cfg) + " exit " + std::to_string(code));
      dirs.push_back(out);
    }
    if (!fs::exists(dirs[0]) || !fs::exists(dirs[1])) continue;
    const auto ta = tree(dirs[0]);
    if (ta != tree(dirs[1])) problems.push_back(std::string(cfg) + " file sets differ");
    for (const auto& f : ta) {
      ++files;
      if (!fs::exists(dirs[1] / f) || io::read_file(dirs[0] / f) != io::read_file(dirs[1] / f)) {
        problems.push_back(std::string(cfg) + "/" + f.string());
      }
    }
  }
  std::string detail = "compared " + std::to_string(files) + " artifacts";
  for (const auto& p : problems) detail += ", differs: " + p;
  return {problems.empty() && files > 0, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"mercer spectrum accuracy", mercer_spectrum},
      {"feature map faithfulness", feature_faithfulness},
      {"unit ball bound", unit_ball},
      {"planted measure recovery", planted_recovery},
      {"diagonal excess positivity", positivity},
      {"truncation tower", truncation_tower},
      {"dependence test", dependence},
      {"u-statistic convergence", ustat},
      {"determinism", determinism},
  };
  const auto t0 = std::chrono::steady_clock::now();
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    all = all && o.pass;
    std::printf("%s criterion %zu (%s): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("total runtime %.1f s\n", seconds_since(t0));
  return all ? 0 : 1;
}
