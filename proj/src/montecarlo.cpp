#include "dbvar/montecarlo.hpp"

#include <cmath>
#include <limits>

#include "dbvar/errors.hpp"
#include "parallel.hpp"

namespace dbvar {

namespace {

struct Draw {
  double weight = 0.0;
  double estimate = std::numeric_limits<double>::quiet_NaN();
  double bound = 0.0;
  bool covered = false;
  bool feasible = false;
};

BoundMatrix scenario_bound(const SimScenario& s, const DesignMatrix& d, const ImpossibilityMask& mask) {
  switch (s.bound) {
    case BoundMethod::Neyman:
      return neyman_bound(d, mask, s.estimator.contrast);
    case BoundMethod::AronowSamii:
      return aronow_samii_bound(d, mask);
    case BoundMethod::AlgorithmM:
      return algorithm_m_bound(d, mask, s.algorithm_m);
    case BoundMethod::User:
      if (!s.user_bound) throw ValidationError("scenario uses a user bound but none was given");
      return certify(BoundMatrix{d.layout, *s.user_bound, BoundMethod::User}, d, mask);
  }
  throw ValidationError("unknown bound method");
}

double estimand_of(const PotentialOutcomes& y, const Eigen::VectorXd& c) {
  const IndexLayout& layout = y.layout;
  double total = 0.0;
  for (int r = 0; r < layout.arms(); ++r) total += c(r) * y.y.segment(r * layout.units(), layout.units()).mean();
  return total;
}

}  // namespace

SimReport run_scenario(const SimScenario& s) {
  const Design& design = s.design;
  const IndexLayout& layout = design.layout();
  layout.require_same(s.outcomes.layout, "scenario outcomes");
  layout.require_size(s.outcomes.y.size(), "scenario outcomes");
  if (s.mode == SimMode::Exact && design.mode() != DesignMode::Exact) {
    throw ValidationError("exact scenario mode needs an enumerable design");
  }
  if (s.mode == SimMode::MonteCarlo) {
    if (!s.seed) throw ValidationError("monte-carlo scenario mode requires a seed");
    if (s.replicates <= 0) throw ValidationError("monte-carlo scenario mode requires a positive replicate count");
  }

  const PiDiagonal pi = inclusion_probabilities(design);
  const JointProbMatrix p = joint_probabilities(design);
  const auto [d, mask] = first_order_design_matrix(design);
  const BoundMatrix bound = scenario_bound(s, d, mask);
  const IpwBoundMatrix ipw = ipw_bound_matrix(bound, p);
  const LinearizationVector z = linearization_vector(s.estimator, s.outcomes, pi);

  SimReport report;
  report.mode = s.mode;
  report.design_estimated = pi.estimated;
  report.estimand = estimand_of(s.outcomes, s.estimator.contrast);
  report.taylor_variance = taylor_variance(z, d);
  report.bound_value = z.z.dot(bound.dtilde * z.z);

  const double slack = 1e-12 * std::max(1.0, std::abs(report.estimand));
  auto evaluate = [&](const Assignment& assignment, double weight) {
    Draw out;
    out.weight = weight;
    const ObservedData data = ObservedData::observe(s.outcomes, assignment);
    try {
      out.estimate = point_estimate(s.estimator, data, pi).value;
      out.bound = s.estimator.kind == EstimatorKind::HT ? ht_bound_estimate(data, s.estimator.contrast, ipw).value
                                                        : plugin_bound_estimate(s.estimator, data, pi, ipw).value;
    } catch (const EstimationInfeasible&) {
      return out;
    }
    out.feasible = true;
    // Zero-width intervals are compared with round-off slack.
    out.covered = std::abs(out.estimate - report.estimand) <= 1.96 * std::sqrt(std::max(out.bound, 0.0)) + slack;
    return out;
  };

  std::vector<Draw> draws;
  if (s.mode == SimMode::Exact) {
    design.for_each_assignment([&](const Assignment& a, double prob) { draws.push_back(evaluate(a, prob)); });
  } else {
    draws.resize(static_cast<std::size_t>(s.replicates));
    const std::uint64_t master = *s.seed;
    detail::parallel_chunks(s.replicates, 256, [&](int, std::int64_t begin, std::int64_t end) {
      for (std::int64_t r = begin; r < end; ++r) {
        draws[static_cast<std::size_t>(r)] =
            evaluate(design.draw(replicate_seed(master, static_cast<std::uint64_t>(r))), 1.0 / static_cast<double>(s.replicates));
      }
    });
  }
  report.draws = static_cast<std::int64_t>(draws.size());

  double feasible_mass = 0.0;
  for (const auto& dr : draws) {
    if (dr.feasible) {
      feasible_mass += dr.weight;
      if (dr.bound < 0.0) ++report.negative_bound_count;
    } else {
      ++report.infeasible_count;
      report.infeasible_mass += dr.weight;
    }
  }
  report.conditional = report.infeasible_count > 0;
  if (feasible_mass <= 0.0) throw EstimationInfeasible("the estimator is infeasible on every draw");

  double mean = 0.0, mean_bound = 0.0, cover = 0.0;
  for (const auto& dr : draws) {
    if (!dr.feasible) continue;
    const double w = dr.weight / feasible_mass;
    mean += w * dr.estimate;
    mean_bound += w * dr.bound;
    cover += dr.covered ? w : 0.0;
  }
  double var = 0.0;
  for (const auto& dr : draws) {
    if (dr.feasible) var += dr.weight / feasible_mass * (dr.estimate - mean) * (dr.estimate - mean);
  }
  report.mean_estimate = mean;
  report.bias = mean - report.estimand;
  report.empirical_variance = var;
  report.mean_bound_estimate = mean_bound;
  report.coverage = cover;

  if (s.mode == SimMode::MonteCarlo) {
    const double m = static_cast<double>(s.replicates - report.infeasible_count);
    double var_sq = 0.0, var_bound = 0.0;
    for (const auto& dr : draws) {
      if (!dr.feasible) continue;
      const double dev = (dr.estimate - mean) * (dr.estimate - mean) - var;
      var_sq += dev * dev / m;
      var_bound += (dr.bound - mean_bound) * (dr.bound - mean_bound) / m;
    }
    report.se_mean_estimate = std::sqrt(var / m);
    report.se_empirical_variance = std::sqrt(var_sq / m);
    report.se_mean_bound = std::sqrt(var_bound / m);
    report.se_coverage = std::sqrt(cover * (1.0 - cover) / m);
  }
  return report;
}

PotentialOutcomes ReplicatedPopulation::at(int n) const {
  const auto n0 = base.rows();
  const auto t = tail.rows();
  if (n0 == 0 || base.cols() < 2) throw ValidationError("replicated population needs a non-empty base with k >= 2 columns");
  if (t > 0 && tail.cols() != base.cols()) throw ValidationError("population tail must have the same arm count as the base");
  if (n < n0 + t || (n - t) % n0 != 0) {
    throw ValidationError("n = " + std::to_string(n) + " is not a whole number of base copies plus the tail");
  }
  const IndexLayout layout(static_cast<int>(base.cols()), n);
  const Eigen::Index copies = (n - t) / n0;
  Eigen::VectorXd y(layout.size());
  for (int r = 0; r < layout.arms(); ++r) {
    for (Eigen::Index c = 0; c < copies; ++c) y.segment(r * n + c * n0, n0) = base.col(r);
    if (t > 0) y.segment(r * n + copies * n0, t) = tail.col(r);
  }
  return {layout, y};
}

std::optional<Eigen::MatrixXd> ReplicatedPopulation::covariates_at(int n) const {
  if (base_covariates.size() == 0) return std::nullopt;
  const auto n0 = base.rows();
  const auto t = tail.rows();
  if (base_covariates.rows() != n0 || tail_covariates.rows() != t) {
    throw ValidationError("replicated covariates must match the base and tail unit counts");
  }
  const Eigen::Index copies = (n - t) / n0;
  Eigen::MatrixXd x(n, base_covariates.cols());
  for (Eigen::Index c = 0; c < copies; ++c) x.middleRows(c * n0, n0) = base_covariates;
  if (t > 0) x.bottomRows(t) = tail_covariates;
  return x;
}

std::vector<SweepRow> consistency_sweep(const std::function<Design(int)>& family, const EstimatorSpec& spec,
                                        const ReplicatedPopulation& population, const std::vector<int>& ns,
                                        const SweepOptions& options) {
  if (spec.kind == EstimatorKind::WLS && spec.weight_rule == WeightRule::Explicit) {
    throw ValidationError("sweeps need WLS weights given as a rule (m = pi^-1), not a fixed vector");
  }
  std::vector<SweepRow> rows;
  for (int n : ns) {
    const Design design = family(n);
    const PotentialOutcomes y = population.at(n);
    design.layout().require_same(y.layout, "sweep population at n = " + std::to_string(n));
    EstimatorSpec at_n = spec;
    if (auto x = population.covariates_at(n)) at_n.covariates = expand_covariates(*x, design.layout());

    const PiDiagonal pi = inclusion_probabilities(design);
    const auto [d, mask] = first_order_design_matrix(design);
    SweepRow row;
    row.n = n;
    row.estimated = pi.estimated;
    row.variance = taylor_variance(linearization_vector(at_n, y, pi), d);
    row.n_variance = n * row.variance;
    row.first_order_norm = first_order_condition_norm(d);
    if (design.mode() == DesignMode::Exact && design.support_size() <= options.gap_support_limit) {
      const GapReport gap = taylor_gap(at_n, design, y);
      row.gap_computed = true;
      row.taylor_gap = gap.max_gap;
      row.n_taylor_gap = n * gap.max_gap;
      row.infeasible_points = gap.infeasible_points;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace dbvar
