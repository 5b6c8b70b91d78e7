#pragma once

#include <vector>

#include <Eigen/Dense>

#include "dbvar/bounds.hpp"
#include "dbvar/design.hpp"
#include "dbvar/estimators.hpp"

namespace dbvar {

// dtilde / p elementwise with 0/0 = 0.
struct IpwBoundMatrix {
  IndexLayout layout;
  Eigen::MatrixXd values;
  BoundMethod method = BoundMethod::User;
};

// Throws NotIdentified when dtilde is nonzero where p = 0.
IpwBoundMatrix ipw_bound_matrix(const BoundMatrix& dtilde, const JointProbMatrix& p);

struct BoundEstimate {
  double value = 0.0;
  EstimatorKind estimator = EstimatorKind::HT;
  BoundMethod method = BoundMethod::User;
  bool plug_in = false;
};

BoundEstimate ht_bound_estimate(const PotentialOutcomes& y, const Eigen::VectorXd& c, const Assignment& assignment,
                                const IpwBoundMatrix& ipw);
BoundEstimate ht_bound_estimate(const ObservedData& data, const Eigen::VectorXd& c, const IpwBoundMatrix& ipw);

// R z-hat: population denominators replaced by realized ones and outcomes by
// realized residuals. Only observed coordinates are nonzero.
LinearizationVector plugin_linearization(const EstimatorSpec& spec, const ObservedData& data, const PiDiagonal& pi);

BoundEstimate plugin_bound_estimate(const EstimatorSpec& spec, const ObservedData& data, const PiDiagonal& pi,
                                    const IpwBoundMatrix& ipw);

// Textbook sandwich estimators on the observed n-row regression, written
// independently of the design machinery.
double hc0_sandwich(const ObservedData& data, const CovariateExpansion& xx, const Eigen::VectorXd& c);
double cr0_sandwich(const ObservedData& data, const CovariateExpansion& xx, const Eigen::VectorXd& c,
                    const std::vector<int>& cluster_of_unit);

}  // namespace dbvar
