#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dbvar/montecarlo.hpp"

namespace dbvar::cli {

// A scenario file is either a single run or a sweep over n.
struct LoadedScenario {
  std::optional<SimScenario> run;
  struct Sweep {
    std::function<Design(int)> family;
    EstimatorSpec estimator;
    ReplicatedPopulation population;
    std::vector<int> ns;
  };
  std::optional<Sweep> sweep;
};

LoadedScenario load_scenario(const std::string& path, std::optional<std::uint64_t> seed_override);

}  // namespace dbvar::cli
