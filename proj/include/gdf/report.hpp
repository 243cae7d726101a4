#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

namespace gdf {

// Outcome of a statistical or structural check.
struct TestReport {
  std::string name;
  double statistic = 0.0;
  double threshold = 0.0;
  bool pass = false;
  std::uint64_t replicates = 0;
  std::uint64_t seed = 0;
  nlohmann::json details = nlohmann::json::object();
};

inline nlohmann::json to_json(const TestReport& r) {
  return nlohmann::json{{"name", r.name},         {"statistic", r.statistic},
                        {"threshold", r.threshold}, {"pass", r.pass},
                        {"replicates", r.replicates}, {"seed", r.seed},
                        {"details", r.details}};
}

}  // namespace gdf
