// gdf: simulate Gram-de Finetti arrays and verify their decomposition.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gdf/pipeline.hpp"

namespace {

using gdf::cli::PipelineConfig;

struct Overrides {
  std::optional<std::string> config;
  std::optional<std::string> model;
  std::optional<double> planted;
  std::optional<std::string> kernel;
  std::optional<std::string> array;
  std::optional<std::string> thresholds;
  std::optional<unsigned> m;
  std::optional<long long> n;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<double> tol;
  std::vector<double> schedule;
  std::vector<std::string> only;
  bool quiet = false;
  bool text = false;
  bool timings = false;
  bool tsv = false;
  bool unpaired = false;
};

// Config file first, then command-line flags on top.
PipelineConfig resolve(const Overrides& o) {
  PipelineConfig c;
  if (o.config) gdf::cli::load_config(*o.config, c);
  if (o.model) c.model = *o.model;
  if (o.planted) c.planted = *o.planted;
  if (o.kernel) c.kernel = *o.kernel;
  if (o.array) c.array = *o.array;
  if (o.thresholds) c.thresholds = *o.thresholds;
  if (o.m) c.m = *o.m;
  if (o.n) {
    if (*o.n <= 0) throw gdf::ConfigError("n must be positive (field 'n')");
    c.n = static_cast<std::size_t>(*o.n);
  }
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out = *o.out;
  if (o.tol) c.tol = *o.tol;
  if (!o.schedule.empty()) c.schedule = o.schedule;
  if (!o.only.empty()) c.only = o.only;
  c.quiet = c.quiet || o.quiet;
  c.text = c.text || o.text;
  c.timings = o.timings;
  c.tsv = o.tsv;
  return c;
}

void add_global(CLI::App& app, Overrides& o) {
  app.add_option("--config", o.config, "JSON run configuration");
  app.add_option("--seed", o.seed, "root seed");
  app.add_option("--out", o.out, "run directory");
  app.add_option("--tol", o.tol, "relative tolerance for the diagonal excess");
  app.add_flag("--quiet", o.quiet, "suppress progress messages");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulate Gram-de Finetti arrays and verify their Dovbysh-Sudakov decomposition"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(gdf::cli::kToolVersion));
  Overrides o;

  auto* sim = app.add_subcommand("simulate", "sample an array from a model or planted measure");
  add_global(*sim, o);
  sim->add_option("--model", o.model, "model JSON");
  sim->add_option("--planted", o.planted, "plant h = u, t = u^2 + EXCESS instead of a model");
  sim->add_option("--n", o.n, "array size");
  sim->add_flag("--text", o.text, "write the text array format");

  auto* dec = app.add_subcommand("decompose", "spectral factorization of a grid kernel");
  add_global(*dec, o);
  dec->add_option("--model", o.model, "model JSON (kernel is its w-average)");
  dec->add_option("--kernel", o.kernel, "kernel file (GDK1 or GDKB0001)");
  dec->add_option("--m", o.m, "grid level");

  auto* rec = app.add_subcommand("recover", "recover features and diagonal excess");
  add_global(*rec, o);
  rec->add_option("--array", o.array, "array file (default <out>/array.gda)");
  rec->add_option("--schedule", o.schedule, "truncation levels N_k");

  auto* ali = app.add_subcommand("align", "align the recovered cloud onto the planted one");
  add_global(*ali, o);
  ali->add_flag("--unpaired", o.unpaired, "do not assume index correspondence");

  auto* ver = app.add_subcommand("verify", "run checks and write report.json");
  add_global(*ver, o);
  ver->add_option("--only", o.only, "check groups: truncation tower spectrum recovery alignment stats")
      ->delimiter(',');
  ver->add_option("--thresholds", o.thresholds, "thresholds fixture");
  ver->add_option("--schedule", o.schedule, "truncation levels N_k");
  ver->add_flag("--timings", o.timings, "include wall-clock timings (breaks byte identity)");
  ver->add_flag("--tsv", o.tsv, "also write report.tsv");

  auto* pipe = app.add_subcommand("pipeline", "simulate, decompose, recover, align and verify");
  add_global(*pipe, o);
  pipe->add_option("--model", o.model, "model JSON");
  pipe->add_option("--planted", o.planted, "planted excess");
  pipe->add_option("--n", o.n, "array size");
  pipe->add_option("--m", o.m, "grid level");
  pipe->add_option("--thresholds", o.thresholds, "thresholds fixture");
  pipe->add_flag("--timings", o.timings, "include wall-clock timings (breaks byte identity)");
  pipe->add_flag("--tsv", o.tsv, "also write report.tsv");

  std::string cal_out = "thresholds.json";
  auto* cal = app.add_subcommand("calibrate", "calibrate the dependence threshold and write a fixture");
  add_global(*cal, o);
  cal->add_option("--model", o.model, "model JSON")->required();
  cal->add_option("--file", cal_out, "output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(gdf::ExitCode::config);
  }

  try {
    const PipelineConfig c = resolve(o);
    if (*sim) return gdf::cli::cmd_simulate(c);
    if (*dec) return gdf::cli::cmd_decompose(c);
    if (*rec) return gdf::cli::cmd_recover(c);
    if (*ali) return gdf::cli::cmd_align(c, !o.unpaired);
    if (*ver) return gdf::cli::cmd_verify(c);
    if (*pipe) return gdf::cli::cmd_pipeline(c);
    if (*cal) {
      gdf::cli::validate(c);
      const auto j = gdf::cli::calibrate_thresholds(gdf::read_model(*c.model), c.seed);
      gdf::io::write_file(cal_out, j.dump(2) + "\n");
      return 0;
    }
  } catch (const gdf::NotPsdError& e) {
    std::cerr << "gdf: not PSD: " << e.what() << " (lambda_min = " << e.min_eigenvalue() << ")\n";
    return static_cast<int>(e.code());
  } catch (const gdf::Error& e) {
    std::cerr << "gdf: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "gdf: " << e.what() << "\n";
    return static_cast<int>(gdf::ExitCode::io);
  } catch (const std::exception& e) {
    std::cerr << "gdf: " << e.what() << "\n";
    return static_cast<int>(gdf::ExitCode::config);
  }
  return 0;
}
