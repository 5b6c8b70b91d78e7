#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "dbvar/design.hpp"
#include "dbvar/layout.hpp"

namespace dbvar {

struct PotentialOutcomes {
  IndexLayout layout;
  Eigen::VectorXd y;
};

struct ObservedData {
  Assignment assignment;
  Eigen::VectorXd y_obs;

  static ObservedData observe(const PotentialOutcomes& y, const Assignment& assignment);
};

struct CovariateExpansion {
  Eigen::MatrixXd x;
  Eigen::MatrixXd xx;
  int arms = 2;

  int covariates() const { return static_cast<int>(x.cols()); }
};

CovariateExpansion expand_covariates(const Eigen::MatrixXd& x, int k);
// As above, additionally checking x against the layout's unit count.
CovariateExpansion expand_covariates(const Eigen::MatrixXd& x, const IndexLayout& layout);

enum class EstimatorKind { HT, CM, HJ, OLS, WLS };
std::string to_string(EstimatorKind kind);
EstimatorKind parse_estimator_kind(std::string_view text);

enum class WeightRule { Explicit, InverseProbability };

struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::HT;
  // Length k; padded with zeros for covariate-adjusted estimators.
  Eigen::VectorXd contrast;
  // OLS and WLS only.
  std::optional<CovariateExpansion> covariates;
  // WLS only: diagonal of m, or m = pi^-1.
  Eigen::VectorXd m;
  WeightRule weight_rule = WeightRule::Explicit;
};

enum class Provenance { Population, PlugIn };

struct LinearizationVector {
  Eigen::VectorXd z;
  EstimatorKind kind = EstimatorKind::HT;
  Provenance provenance = Provenance::Population;
  double condition = 1.0;
};

struct Estimate {
  double value = 0.0;
  double condition = 1.0;
  // Set when the denominator's condition number exceeds 1e12.
  bool ill_conditioned = false;
};

// The weighted-least-squares view of CM, HJ, OLS and WLS: the estimate is
// c'(xx' m R xx)^-1 xx' m R y with c padded to xx's width.
struct RegressionForm {
  Eigen::MatrixXd xx;
  Eigen::VectorXd m;
  Eigen::VectorXd c;
};

RegressionForm regression_form(const EstimatorSpec& spec, const PiDiagonal& pi);

struct CheckedSolve {
  Eigen::MatrixXd x;
  double condition = 1.0;
};

// Solves a x = b, throwing EstimationInfeasible when a is singular.
CheckedSolve solve_checked(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const std::string& what);

Estimate point_estimate(const EstimatorSpec& spec, const ObservedData& data, const PiDiagonal& pi);
LinearizationVector linearization_vector(const EstimatorSpec& spec, const PotentialOutcomes& y, const PiDiagonal& pi);

double taylor_variance(const LinearizationVector& z, const DesignMatrix& d);
double ht_exact_variance(const PotentialOutcomes& y, const Eigen::VectorXd& c, const DesignMatrix& d);

struct GapReport {
  double max_gap = 0.0;
  std::int64_t infeasible_points = 0;
  double infeasible_mass = 0.0;
};

// Largest |estimate - (a_c + sum R z / pi)| over the support of an exact design.
GapReport taylor_gap(const EstimatorSpec& spec, const Design& design, const PotentialOutcomes& y);

}  // namespace dbvar
