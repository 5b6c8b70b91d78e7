#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dbvar/bound_estimation.hpp"
#include "dbvar/bounds.hpp"
#include "dbvar/design.hpp"
#include "dbvar/estimators.hpp"

namespace dbvar {

enum class SimMode { Exact, MonteCarlo };

struct SimScenario {
  Design design;
  PotentialOutcomes outcomes;
  EstimatorSpec estimator;
  BoundMethod bound = BoundMethod::AronowSamii;
  // Used when bound == BoundMethod::User.
  std::optional<Eigen::MatrixXd> user_bound;
  AlgorithmMOptions algorithm_m;
  SimMode mode = SimMode::Exact;
  std::int64_t replicates = 0;
  std::optional<std::uint64_t> seed;
};

struct SimReport {
  SimMode mode = SimMode::Exact;
  // Support points (exact) or replicates (mc).
  std::int64_t draws = 0;
  double estimand = 0.0;
  double mean_estimate = 0.0;
  double bias = 0.0;
  double empirical_variance = 0.0;
  double taylor_variance = 0.0;
  double mean_bound_estimate = 0.0;
  double bound_value = 0.0;
  double coverage = 0.0;
  // Infeasible draws are excluded and the remaining metrics are conditional.
  std::int64_t infeasible_count = 0;
  double infeasible_mass = 0.0;
  bool conditional = false;
  std::int64_t negative_bound_count = 0;
  bool design_estimated = false;
  // Monte Carlo standard errors; zero in exact mode.
  double se_mean_estimate = 0.0;
  double se_empirical_variance = 0.0;
  double se_mean_bound = 0.0;
  double se_coverage = 0.0;
};

SimReport run_scenario(const SimScenario& scenario);

// Base potential outcomes (n0 x k) tiled to size n, optionally followed by a
// fixed tail of extra units.
struct ReplicatedPopulation {
  Eigen::MatrixXd base;
  Eigen::MatrixXd tail;
  Eigen::MatrixXd base_covariates;
  Eigen::MatrixXd tail_covariates;

  PotentialOutcomes at(int n) const;
  std::optional<Eigen::MatrixXd> covariates_at(int n) const;
};

struct SweepRow {
  int n = 0;
  double variance = 0.0;
  double n_variance = 0.0;
  bool gap_computed = false;
  double taylor_gap = 0.0;
  double n_taylor_gap = 0.0;
  std::int64_t infeasible_points = 0;
  double first_order_norm = 0.0;
  bool estimated = false;
};

struct SweepOptions {
  // Skip the taylor gap when the support is larger than this.
  double gap_support_limit = 1e6;
};

std::vector<SweepRow> consistency_sweep(const std::function<Design(int)>& family, const EstimatorSpec& spec,
                                        const ReplicatedPopulation& population, const std::vector<int>& ns,
                                        const SweepOptions& options = {});

}  // namespace dbvar
