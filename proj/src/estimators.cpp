#include "dbvar/estimators.hpp"

#include <cmath>

#include "dbvar/errors.hpp"

namespace dbvar {

namespace {

constexpr double kIllConditioned = 1e12;

void check_spec(const EstimatorSpec& spec, const IndexLayout& layout) {
  if (spec.contrast.size() != layout.arms()) {
    throw LayoutMismatch("contrast has length " + std::to_string(spec.contrast.size()) + ", expected k = " +
                         std::to_string(layout.arms()));
  }
  if (!spec.contrast.allFinite()) throw ValidationError("contrast must be finite");
  const bool regression = spec.kind == EstimatorKind::OLS || spec.kind == EstimatorKind::WLS;
  if (spec.covariates && !regression) throw ValidationError(to_string(spec.kind) + " does not take covariates");
  if (spec.covariates) {
    if (spec.covariates->arms != layout.arms() || spec.covariates->xx.rows() != layout.size()) {
      throw LayoutMismatch("covariate expansion does not match the design layout");
    }
  }
  if (spec.kind == EstimatorKind::WLS && spec.weight_rule == WeightRule::Explicit) {
    layout.require_size(spec.m.size(), "WLS weights");
    if (!(spec.m.array() > 0.0).all() || !spec.m.allFinite()) throw ValidationError("WLS weights must be positive and finite");
  }
}

}  // namespace

ObservedData ObservedData::observe(const PotentialOutcomes& y, const Assignment& assignment) {
  y.layout.require_same(assignment.layout(), "observed data");
  return {assignment, assignment.indicators().cwiseProduct(y.y)};
}

CovariateExpansion expand_covariates(const Eigen::MatrixXd& x, int k) {
  if (k < 2) throw ValidationError("arm count must be at least 2");
  if (!x.allFinite()) throw ValidationError("covariates must be finite");
  const Eigen::Index n = x.rows();
  const Eigen::Index l = x.cols();
  CovariateExpansion out;
  out.x = x;
  out.arms = k;
  out.xx = Eigen::MatrixXd::Zero(k * n, k + l);
  for (int r = 0; r < k; ++r) {
    out.xx.block(r * n, r, n, 1).setOnes();
    out.xx.block(r * n, k, n, l) = x;
  }
  return out;
}

CovariateExpansion expand_covariates(const Eigen::MatrixXd& x, const IndexLayout& layout) {
  if (x.rows() != layout.units()) {
    throw LayoutMismatch("covariates have " + std::to_string(x.rows()) + " rows, layout has n = " + std::to_string(layout.units()));
  }
  return expand_covariates(x, layout.arms());
}

std::string to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::HT: return "ht";
    case EstimatorKind::CM: return "cm";
    case EstimatorKind::HJ: return "hj";
    case EstimatorKind::OLS: return "ols";
    case EstimatorKind::WLS: return "wls";
  }
  return "?";
}

EstimatorKind parse_estimator_kind(std::string_view text) {
  if (text == "ht") return EstimatorKind::HT;
  if (text == "cm") return EstimatorKind::CM;
  if (text == "hj" || text == "hajek") return EstimatorKind::HJ;
  if (text == "ols") return EstimatorKind::OLS;
  if (text == "wls") return EstimatorKind::WLS;
  throw ValidationError("unknown estimator \"" + std::string(text) + "\" (expected ht, cm, hj, ols or wls)");
}

RegressionForm regression_form(const EstimatorSpec& spec, const PiDiagonal& pi) {
  const IndexLayout& layout = pi.layout;
  check_spec(spec, layout);
  RegressionForm form;
  switch (spec.kind) {
    case EstimatorKind::HT:
      throw ValidationError("the HT estimator has no regression form");
    case EstimatorKind::CM:
      form.xx = intercept_matrix(layout);
      form.m = Eigen::VectorXd::Ones(layout.size());
      break;
    case EstimatorKind::HJ:
      form.xx = intercept_matrix(layout);
      form.m = pi.probs.cwiseInverse();
      break;
    case EstimatorKind::OLS:
    case EstimatorKind::WLS:
      form.xx = spec.covariates ? spec.covariates->xx : intercept_matrix(layout);
      if (spec.kind == EstimatorKind::OLS) {
        form.m = Eigen::VectorXd::Ones(layout.size());
      } else if (spec.weight_rule == WeightRule::InverseProbability) {
        form.m = pi.probs.cwiseInverse();
      } else {
        form.m = spec.m;
      }
      break;
  }
  form.c = Eigen::VectorXd::Zero(form.xx.cols());
  form.c.head(layout.arms()) = spec.contrast;
  return form;
}

CheckedSolve solve_checked(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const std::string& what) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const auto& s = svd.singularValues();
  const double smax = s.size() > 0 ? s(0) : 0.0;
  const double smin = s.size() > 0 ? s(s.size() - 1) : 0.0;
  if (!(smax > 0.0) || smin <= 1e-14 * smax * static_cast<double>(a.rows())) {
    throw EstimationInfeasible(what + " is singular");
  }
  return {a.colPivHouseholderQr().solve(b), smax / smin};
}

Estimate point_estimate(const EstimatorSpec& spec, const ObservedData& data, const PiDiagonal& pi) {
  const IndexLayout& layout = pi.layout;
  layout.require_same(data.assignment.layout(), "observed data");
  layout.require_size(data.y_obs.size(), "observed outcomes");
  check_spec(spec, layout);
  const Eigen::VectorXd r = data.assignment.indicators();
  if (spec.kind == EstimatorKind::HT) {
    // Written as sum_a R_a z_a / pi_a so that HT coincides with its own linearization.
    double total = 0.0;
    for (int a = 0; a < layout.size(); ++a) {
      if (r(a) == 0.0) continue;
      const double z = spec.contrast(layout.arm_of(a)) * data.y_obs(a) / layout.units();
      total += z / pi.probs(a);
    }
    return {total, 1.0, false};
  }
  const RegressionForm form = regression_form(spec, pi);
  const Eigen::VectorXd w = form.m.cwiseProduct(r);
  const Eigen::MatrixXd denom = form.xx.transpose() * w.asDiagonal() * form.xx;
  const Eigen::VectorXd numer = form.xx.transpose() * w.cwiseProduct(data.y_obs);
  const CheckedSolve b = solve_checked(denom, numer, "realized denominator of the " + to_string(spec.kind) + " estimator");
  return {form.c.dot(b.x.col(0)), b.condition, b.condition > kIllConditioned};
}

namespace {

struct PopulationFit {
  LinearizationVector z;
  double target = 0.0;
};

PopulationFit population_fit(const EstimatorSpec& spec, const PotentialOutcomes& y, const PiDiagonal& pi) {
  const IndexLayout& layout = pi.layout;
  layout.require_same(y.layout, "potential outcomes");
  layout.require_size(y.y.size(), "potential outcomes");
  check_spec(spec, layout);
  if (!y.y.allFinite()) throw ValidationError("potential outcomes must be finite");
  PopulationFit out;
  out.z.kind = spec.kind;
  if (spec.kind == EstimatorKind::HT) {
    out.z.z.resize(layout.size());
    for (int a = 0; a < layout.size(); ++a) out.z.z(a) = spec.contrast(layout.arm_of(a)) * y.y(a) / layout.units();
    out.target = out.z.z.sum();
    return out;
  }
  const RegressionForm form = regression_form(spec, pi);
  const Eigen::VectorXd w = form.m.cwiseProduct(pi.probs);
  const Eigen::MatrixXd denom = form.xx.transpose() * w.asDiagonal() * form.xx;
  const CheckedSolve solved =
      solve_checked(denom, form.xx.transpose() * w.cwiseProduct(y.y), "population denominator of the " + to_string(spec.kind) + " estimator");
  const Eigen::VectorXd b = solved.x.col(0);
  const Eigen::VectorXd lever = form.xx * denom.colPivHouseholderQr().solve(form.c);
  const Eigen::VectorXd resid = y.y - form.xx * b;
  out.z.z = pi.probs.cwiseProduct(resid).cwiseProduct(form.m).cwiseProduct(lever);
  out.z.condition = solved.condition;
  out.target = form.c.dot(b);
  return out;
}

}  // namespace

LinearizationVector linearization_vector(const EstimatorSpec& spec, const PotentialOutcomes& y, const PiDiagonal& pi) {
  return population_fit(spec, y, pi).z;
}

double taylor_variance(const LinearizationVector& z, const DesignMatrix& d) {
  if (z.provenance != Provenance::Population) {
    throw ValidationError("taylor_variance needs a population linearization vector, got a plug-in one");
  }
  d.layout.require_size(z.z.size(), "linearization vector");
  const double v = z.z.dot(d.d * z.z);
  return v < 0.0 && v >= -1e-10 ? 0.0 : v;
}

double ht_exact_variance(const PotentialOutcomes& y, const Eigen::VectorXd& c, const DesignMatrix& d) {
  d.layout.require_same(y.layout, "potential outcomes");
  d.layout.require_size(y.y.size(), "potential outcomes");
  if (c.size() != d.layout.arms()) throw LayoutMismatch("contrast length does not match k");
  Eigen::VectorXd z(d.layout.size());
  for (int a = 0; a < d.layout.size(); ++a) z(a) = c(d.layout.arm_of(a)) * y.y(a) / d.layout.units();
  const double v = z.dot(d.d * z);
  return v < 0.0 && v >= -1e-10 ? 0.0 : v;
}

GapReport taylor_gap(const EstimatorSpec& spec, const Design& design, const PotentialOutcomes& y) {
  const PiDiagonal pi = inclusion_probabilities(design);
  const PopulationFit fit = population_fit(spec, y, pi);
  const Eigen::VectorXd weights = fit.z.z.cwiseQuotient(pi.probs);
  // a_c = f(pi) - sum_a z_a; HT is linear in R, so its constant is exactly 0.
  const double a_c = spec.kind == EstimatorKind::HT ? 0.0 : fit.target - fit.z.z.sum();
  GapReport report;
  design.for_each_assignment([&](const Assignment& assignment, double prob) {
    const ObservedData data = ObservedData::observe(y, assignment);
    double estimate = 0.0;
    try {
      estimate = point_estimate(spec, data, pi).value;
    } catch (const EstimationInfeasible&) {
      ++report.infeasible_points;
      report.infeasible_mass += prob;
      return;
    }
    double linear = 0.0;
    for (int a = 0; a < pi.layout.size(); ++a) {
      if (assignment.indicator(a)) linear += weights(a);
    }
    report.max_gap = std::max(report.max_gap, std::abs(estimate - (a_c + linear)));
  });
  return report;
}

}  // namespace dbvar
