#include <gtest/gtest.h>

#include <filesystem>

#include "gdf/mercer.hpp"
#include "gdf/models.hpp"

using namespace gdf;
namespace fs = std::filesystem;

TEST(ModelJson, RoundTripsEverySpecKind) {
  const auto table = rasterize(KernelSpec::min_xy(), DyadicLevel(2));
  const KernelSpec specs[] = {
      KernelSpec::constant(0.3),
      KernelSpec::product_xy(),
      KernelSpec::min_xy(),
      KernelSpec::poly_sep({0.1, 0.2}),
      KernelSpec::table(table),
      0.5 * KernelSpec::product_xy() + 0.25 * KernelSpec::min_xy(),
      KernelSpec::lift(KernelSpec::min_xy()),
      KernelSpec::w_linear(),
      KernelSpec::w_sign(),
      KernelSpec::w_modulated(KernelSpec::product_xy(), FunctionSpec::indicator(0.0, 0.5)),
  };
  for (const auto& s : specs) {
    const auto back = kernel_from_json(to_json(s));
    EXPECT_EQ(to_json(back), to_json(s));
    for (double w : {0.2, 0.7}) EXPECT_EQ(back(0.3, 0.6, w), s(0.3, 0.6, w));
  }
  const FunctionSpec fns[] = {FunctionSpec::constant(1.0), FunctionSpec::polynomial({0.0, 1.0, 2.0}),
                              FunctionSpec::table(GridFunction1D(DyadicLevel(1), std::vector<double>{0.1, 0.2})),
                              FunctionSpec::indicator(0.25, 0.75, 0.5)};
  for (const auto& f : fns) EXPECT_EQ(to_json(function_from_json(to_json(f))), to_json(f));
}

TEST(ModelJson, ModelRoundTrip) {
  for (const auto& m : models::builtin()) {
    const auto back = model_from_json(to_json(m));
    EXPECT_EQ(back.name, m.name);
    EXPECT_EQ(back.bounded, m.bounded);
    EXPECT_EQ(to_json(back), to_json(m));
  }
}

TEST(ModelJson, Errors) {
  EXPECT_THROW(kernel_from_json({{"type", "nope"}}), ConfigError);
  EXPECT_THROW(kernel_from_json({{"type", "constant"}}), ConfigError);
  EXPECT_THROW(kernel_from_json({{"type", "constant"}, {"c", "x"}}), ConfigError);
  EXPECT_THROW(function_from_json({{"type", "table"}, {"m", 1}, {"values", {1.0}}}), ConfigError);
  EXPECT_THROW(model_from_json({{"f", {{"type", "min_xy"}}}}), ConfigError);
  EXPECT_THROW(model_from_json(nlohmann::json::array()), ConfigError);
  // Declared bounded but |g| reaches 2.
  EXPECT_THROW(model_from_json({{"f", {{"type", "min_xy"}}}, {"g", {{"type", "constant"}, {"c", 2.0}}}, {"bounded", true}}),
               ConfigError);
}

TEST(ModelJson, TablePathResolvesAgainstModelFile) {
  const auto dir = fs::temp_directory_path() / "gdf_test_models";
  fs::create_directories(dir);
  io::write_file(dir / "k.gdk", io::encode_kernel_text(rasterize(KernelSpec::min_xy(), DyadicLevel(2))));
  io::write_file(dir / "model.json",
                 R"({"f": {"type": "table", "path": "k.gdk"}, "g": {"type": "polynomial", "coeffs": [0, 1]}})");
  const auto m = read_model(dir / "model.json");
  EXPECT_NEAR(m.f(0.1, 0.1), 1.0 / 12.0, 1e-15);
  io::write_file(dir / "bad.json", "{ not json");
  EXPECT_THROW(read_model(dir / "bad.json"), ConfigError);
}

TEST(Suite, BoundedSuiteIsBoundedAndPsd) {
  const auto suite = models::bounded_suite();
  ASSERT_EQ(suite.size(), 10u);
  for (const auto& m : suite) {
    EXPECT_TRUE(m.bounded) << m.name;
    EXPECT_FALSE(m.f.depends_on_w()) << m.name;
    EXPECT_NO_THROW(decompose(rasterize(m.f_bar(), DyadicLevel(6)))) << m.name;
    // g dominates the diagonal of f, so the excess is nonnegative.
    for (double x : {0.01, 0.3, 0.77, 0.99}) EXPECT_GE(m.g(x) + 1e-12, m.f(x, x)) << m.name << " x=" << x;
  }
}
