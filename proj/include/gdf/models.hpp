#pragma once

// JSON encoding of kernel/function specs and models, plus the built-in model
// suite used by the verification commands.
//
// FunctionSpec: {"type": "constant", "c"} | {"type": "polynomial", "coeffs"} |
//               {"type": "table", "m", "values"} | {"type": "indicator", "lo", "hi", "weight"?}
// KernelSpec:   {"type": "constant", "c"} | {"type": "product_xy"} | {"type": "min_xy"} |
//               {"type": "poly_sep", "coeffs"} | {"type": "table", "path" | ("m", "values")} |
//               {"type": "sum", "terms": [{"weight", "spec"}]} | {"type": "lift", "spec"} |
//               {"type": "w_linear"} | {"type": "w_sign"} | {"type": "w_modulated", "spec", "q"}
// Model:        {"name"?, "f", "g", "bounded"?}

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gdf/array.hpp"
#include "gdf/error.hpp"
#include "gdf/io.hpp"
#include "gdf/kernel_spec.hpp"
#include "gdf/recovery.hpp"
#include "gdf/rng.hpp"

namespace gdf {

namespace detail {

template <class T>
T json_get(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace detail

inline FunctionSpec function_from_json(const nlohmann::json& j) {
  const auto type = detail::json_get<std::string>(j, "type", "function spec");
  if (type == "constant") return FunctionSpec::constant(detail::json_get<double>(j, "c", "constant"));
  if (type == "polynomial") {
    return FunctionSpec::polynomial(detail::json_get<std::vector<double>>(j, "coeffs", "polynomial"));
  }
  if (type == "table") {
    const DyadicLevel lvl(detail::json_get<unsigned>(j, "m", "table"));
    try {
      return FunctionSpec::table(GridFunction1D(lvl, detail::json_get<std::vector<double>>(j, "values", "table")));
    } catch (const DataError& e) {
      throw ConfigError(std::string("table: ") + e.what());
    }
  }
  if (type == "indicator") {
    return FunctionSpec::indicator(detail::json_get<double>(j, "lo", "indicator"),
                                   detail::json_get<double>(j, "hi", "indicator"), j.value("weight", 1.0));
  }
  throw ConfigError("unknown function spec type '" + type + "'");
}

inline nlohmann::json to_json(const FunctionSpec& f) {
  return std::visit(Overloaded{
                        [](const FunctionSpec::Constant& n) -> nlohmann::json { return {{"type", "constant"}, {"c", n.c}}; },
                        [](const FunctionSpec::Polynomial& n) -> nlohmann::json {
                          return {{"type", "polynomial"}, {"coeffs", n.coeffs}};
                        },
                        [](const FunctionSpec::Table& n) -> nlohmann::json {
                          return {{"type", "table"},
                                  {"m", n.values.level().m()},
                                  {"values", std::vector<double>(n.values.values().begin(), n.values.values().end())}};
                        },
                        [](const FunctionSpec::Indicator& n) -> nlohmann::json {
                          return {{"type", "indicator"}, {"lo", n.lo}, {"hi", n.hi}, {"weight", n.weight}};
                        },
                    },
                    f.node());
}

// Table paths are resolved against base_dir.
inline KernelSpec kernel_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  const auto type = detail::json_get<std::string>(j, "type", "kernel spec");
  if (type == "constant") return KernelSpec::constant(detail::json_get<double>(j, "c", "constant"));
  if (type == "product_xy") return KernelSpec::product_xy();
  if (type == "min_xy") return KernelSpec::min_xy();
  if (type == "poly_sep") return KernelSpec::poly_sep(detail::json_get<std::vector<double>>(j, "coeffs", "poly_sep"));
  if (type == "table") {
    if (j.contains("path")) {
      return KernelSpec::table(io::read_kernel(base_dir / detail::json_get<std::string>(j, "path", "table")));
    }
    const DyadicLevel lvl(detail::json_get<unsigned>(j, "m", "table"));
    try {
      return KernelSpec::table(GridKernel(lvl, detail::json_get<std::vector<double>>(j, "values", "table")));
    } catch (const DataError& e) {
      throw ConfigError(std::string("table: ") + e.what());
    }
  }
  if (type == "sum") {
    if (!j.contains("terms") || !j.at("terms").is_array()) throw ConfigError("sum: missing 'terms' array");
    std::vector<KernelSpec::Term> terms;
    for (const auto& t : j.at("terms")) {
      terms.push_back({t.value("weight", 1.0), kernel_from_json(t.at("spec"), base_dir)});
    }
    return KernelSpec::Sum{std::move(terms)};
  }
  if (type == "lift") return KernelSpec::lift(kernel_from_json(j.at("spec"), base_dir));
  if (type == "w_linear") return KernelSpec::w_linear();
  if (type == "w_sign") return KernelSpec::w_sign();
  if (type == "w_modulated") {
    if (!j.contains("spec") || !j.contains("q")) throw ConfigError("w_modulated: needs 'spec' and 'q'");
    return KernelSpec::w_modulated(kernel_from_json(j.at("spec"), base_dir), function_from_json(j.at("q")));
  }
  throw ConfigError("unknown kernel spec type '" + type + "'");
}

inline nlohmann::json to_json(const KernelSpec& k) {
  using K = KernelSpec;
  return std::visit(Overloaded{
                        [](const K::Constant& n) -> nlohmann::json { return {{"type", "constant"}, {"c", n.c}}; },
                        [](const K::ProductXY&) -> nlohmann::json { return {{"type", "product_xy"}}; },
                        [](const K::MinXY&) -> nlohmann::json { return {{"type", "min_xy"}}; },
                        [](const K::PolySep& n) -> nlohmann::json { return {{"type", "poly_sep"}, {"coeffs", n.coeffs}}; },
                        [](const K::Table& n) -> nlohmann::json {
                          return {{"type", "table"},
                                  {"m", n.values.level().m()},
                                  {"values", std::vector<double>(n.values.values().begin(), n.values.values().end())}};
                        },
                        [](const K::Sum& n) -> nlohmann::json {
                          nlohmann::json terms = nlohmann::json::array();
                          for (const auto& t : n.terms) terms.push_back({{"weight", t.weight}, {"spec", to_json(t.spec)}});
                          return {{"type", "sum"}, {"terms", terms}};
                        },
                        [](const K::Lift& n) -> nlohmann::json { return {{"type", "lift"}, {"spec", to_json(*n.inner)}}; },
                        [](const K::WLinear&) -> nlohmann::json { return {{"type", "w_linear"}}; },
                        [](const K::WSign&) -> nlohmann::json { return {{"type", "w_sign"}}; },
                        [](const K::WModulated& n) -> nlohmann::json {
                          return {{"type", "w_modulated"}, {"spec", to_json(*n.inner)}, {"q", to_json(n.q)}};
                        },
                    },
                    k.node());
}

inline AldousHooverModel model_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  if (!j.is_object()) throw ConfigError("model must be a JSON object");
  if (!j.contains("f")) throw ConfigError("model: missing field 'f'");
  if (!j.contains("g")) throw ConfigError("model: missing field 'g'");
  return AldousHooverModel(kernel_from_json(j.at("f"), base_dir), function_from_json(j.at("g")),
                           j.value("bounded", false), j.value("name", std::string{}));
}

inline nlohmann::json to_json(const AldousHooverModel& m) {
  return {{"name", m.name}, {"f", to_json(m.f)}, {"g", to_json(m.g)}, {"bounded", m.bounded}};
}

inline AldousHooverModel read_model(const std::filesystem::path& p) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(p));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("model file " + p.string() + ": " + e.what());
  }
  return model_from_json(j, p.parent_path());
}

namespace models {

using K = KernelSpec;
using F = FunctionSpec;

// f = xy, g = x^2: rank-one Gram model with zero diagonal excess.
inline AldousHooverModel gram_product() {
  return {K::lift(K::product_xy()), F::polynomial({0.0, 0.0, 1.0}), true, "gram_product"};
}

// Feature h = u, diagonal t = u^2 + excess (a constant excess).
inline AldousHooverModel product_excess(double scale = 0.5, double excess = 0.25) {
  return {K::lift(scale * K::product_xy()), F::polynomial({excess, 0.0, scale}), true, "product_excess"};
}

inline AldousHooverModel constant(double c = 0.25, double diag = 0.5) {
  return {K::lift(K::constant(c)), F::constant(diag), true, "constant"};
}

// Brownian covariance min(x, y) with g(x) = x.
inline AldousHooverModel brownian() { return {K::lift(K::min_xy()), F::polynomial({0.0, 1.0}), true, "brownian"}; }

inline AldousHooverModel brownian_excess() {
  return {K::lift(0.5 * K::min_xy()), F::polynomial({0.3, 0.5}), true, "brownian_excess"};
}

inline AldousHooverModel poly() {
  return {K::lift(K::poly_sep({0.2, 0.3, 0.2})), F::polynomial({0.3, 0.0, 0.3, 0.0, 0.2}), true, "poly"};
}

inline AldousHooverModel mixed() {
  return {K::lift(0.5 * K::product_xy() + 0.3 * K::min_xy()), F::polynomial({0.1, 0.3, 0.5}), true, "mixed"};
}

// Piecewise-constant kernel on the level-3 grid.
inline AldousHooverModel table() {
  return {K::lift(K::table(rasterize(0.5 * K::min_xy() + K::constant(0.2), DyadicLevel(3)))), F::constant(0.9),
          true, "table"};
}

inline AldousHooverModel quartic() {
  return {K::lift(K::poly_sep({0.0, 0.0, 0.5})), F::polynomial({0.2, 0.0, 0.0, 0.0, 0.5}), true, "quartic"};
}

inline AldousHooverModel rank_two() {
  return {K::lift(K::poly_sep({0.0, 0.5, 0.3})), F::polynomial({0.1, 0.0, 0.5, 0.0, 0.3}), true, "rank_two"};
}

// The ten bounded PSD models.
inline std::vector<AldousHooverModel> bounded_suite() {
  return {gram_product(), product_excess(), constant(), brownian(), brownian_excess(),
          poly(),         mixed(),          table(),    quartic(),  rank_two()};
}

// Non-PSD: the edge coordinate enters through sign(w - 1/2).
inline AldousHooverModel w_sign(double weight = 1.0) {
  return {K::lift(K::constant(0.25)) + weight * K::w_sign(), F::constant(1.0), false, "w_sign"};
}

// Diagonals far above 1, for truncation experiments.
inline AldousHooverModel unbounded() {
  return {K::lift(4.0 * K::product_xy()), F::polynomial({2.0, 0.0, 4.0}), false, "unbounded"};
}

inline std::vector<AldousHooverModel> builtin() {
  auto all = bounded_suite();
  all.push_back(w_sign());
  all.push_back(unbounded());
  return all;
}

// Planted scalar measure: h = u, t = u^2 + excess with u uniform.
inline FeatureCloud planted_scalar(std::size_t n, std::uint64_t seed, double excess = 0.1) {
  if (n == 0) throw ConfigError("n must be positive");
  const std::uint64_t key = rng::derive(seed, rng::kStagePlanted);
  std::vector<std::vector<double>> h(n);
  std::vector<double> t(n);
  for (std::size_t l = 0; l < n; ++l) {
    const double u = rng::uniform(key, rng::kStreamRowLatent, l);
    h[l] = {u};
    t[l] = u * u + excess;
  }
  return make_cloud(1, h, t, Provenance::planted);
}

}  // namespace models

}  // namespace gdf
