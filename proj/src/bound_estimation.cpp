#include "dbvar/bound_estimation.hpp"

#include <cmath>
#include <map>

#include "dbvar/errors.hpp"

namespace dbvar {

IpwBoundMatrix ipw_bound_matrix(const BoundMatrix& dtilde, const JointProbMatrix& p) {
  dtilde.layout.require_same(p.layout, "joint probabilities");
  p.layout.require_size(dtilde.dtilde.rows(), "bound matrix");
  p.layout.require_size(p.p.rows(), "joint probabilities");
  if (dtilde.identified == Certification::No) throw NotIdentified("bound matrix is not identified (nonzero on impossible pairs)");
  IpwBoundMatrix out{p.layout, Eigen::MatrixXd::Zero(p.p.rows(), p.p.cols()), dtilde.method};
  for (Eigen::Index a = 0; a < p.p.rows(); ++a) {
    for (Eigen::Index b = 0; b < p.p.cols(); ++b) {
      const double num = dtilde.dtilde(a, b);
      if (p.p(a, b) == 0.0) {
        if (num != 0.0) {
          throw NotIdentified("bound matrix entry (" + std::to_string(a + 1) + ", " + std::to_string(b + 1) +
                              ") is nonzero where the joint assignment probability is 0");
        }
        continue;
      }
      out.values(a, b) = num / p.p(a, b);
    }
  }
  return out;
}

namespace {

double observed_quadratic(const Eigen::VectorXd& rz, const Assignment& assignment, const Eigen::MatrixXd& ipw) {
  const std::vector<int> active = assignment.active();
  double total = 0.0;
  for (int a : active) {
    for (int b : active) total += rz(a) * ipw(a, b) * rz(b);
  }
  return total;
}

}  // namespace

BoundEstimate ht_bound_estimate(const ObservedData& data, const Eigen::VectorXd& c, const IpwBoundMatrix& ipw) {
  const IndexLayout& layout = ipw.layout;
  layout.require_same(data.assignment.layout(), "observed data");
  if (c.size() != layout.arms()) throw LayoutMismatch("contrast length does not match k");
  Eigen::VectorXd rz = Eigen::VectorXd::Zero(layout.size());
  for (int a : data.assignment.active()) rz(a) = c(layout.arm_of(a)) * data.y_obs(a) / layout.units();
  return {observed_quadratic(rz, data.assignment, ipw.values), EstimatorKind::HT, ipw.method, false};
}

BoundEstimate ht_bound_estimate(const PotentialOutcomes& y, const Eigen::VectorXd& c, const Assignment& assignment,
                                const IpwBoundMatrix& ipw) {
  return ht_bound_estimate(ObservedData::observe(y, assignment), c, ipw);
}

LinearizationVector plugin_linearization(const EstimatorSpec& spec, const ObservedData& data, const PiDiagonal& pi) {
  const IndexLayout& layout = pi.layout;
  layout.require_same(data.assignment.layout(), "observed data");
  LinearizationVector out;
  out.kind = spec.kind;
  out.provenance = Provenance::PlugIn;
  out.z = Eigen::VectorXd::Zero(layout.size());
  if (spec.kind == EstimatorKind::HT) {
    if (spec.contrast.size() != layout.arms()) throw LayoutMismatch("contrast length does not match k");
    for (int a : data.assignment.active()) out.z(a) = spec.contrast(layout.arm_of(a)) * data.y_obs(a) / layout.units();
    return out;
  }
  const RegressionForm form = regression_form(spec, pi);
  const Eigen::VectorXd r = data.assignment.indicators();
  const Eigen::VectorXd w = form.m.cwiseProduct(r);
  const Eigen::MatrixXd denom = form.xx.transpose() * w.asDiagonal() * form.xx;
  const CheckedSolve b = solve_checked(denom, form.xx.transpose() * w.cwiseProduct(data.y_obs),
                                       "realized denominator of the " + to_string(spec.kind) + " estimator");
  const Eigen::VectorXd lever = form.xx * denom.colPivHouseholderQr().solve(form.c);
  const Eigen::VectorXd resid = r.cwiseProduct(data.y_obs - form.xx * b.x.col(0));
  out.z = pi.probs.cwiseProduct(resid).cwiseProduct(form.m).cwiseProduct(lever);
  out.condition = b.condition;
  return out;
}

BoundEstimate plugin_bound_estimate(const EstimatorSpec& spec, const ObservedData& data, const PiDiagonal& pi,
                                    const IpwBoundMatrix& ipw) {
  pi.layout.require_same(ipw.layout, "ipw bound matrix");
  const LinearizationVector rz = plugin_linearization(spec, data, pi);
  return {observed_quadratic(rz.z, data.assignment, ipw.values), spec.kind, ipw.method, spec.kind != EstimatorKind::HT};
}

namespace {

struct ObservedRegression {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd bread;
  Eigen::VectorXd resid;
};

// Rows are units; columns are arm dummies followed by the covariates.
ObservedRegression observed_regression(const ObservedData& data, const CovariateExpansion& xx, const Eigen::VectorXd& c) {
  const IndexLayout& layout = data.assignment.layout();
  const int n = layout.units();
  const int k = layout.arms();
  if (xx.arms != k || xx.x.rows() != n) throw LayoutMismatch("covariates do not match the observed data");
  const int q = k + xx.covariates();
  if (c.size() != k && c.size() != q) throw LayoutMismatch("contrast length does not match k");
  ObservedRegression out;
  out.x = Eigen::MatrixXd::Zero(n, q);
  out.y.resize(n);
  for (int i = 0; i < n; ++i) {
    const int r = data.assignment.arm_of_unit(i);
    out.x(i, r) = 1.0;
    out.x.row(i).tail(xx.covariates()) = xx.x.row(i);
    out.y(i) = data.y_obs(layout.flat(r, i));
  }
  const Eigen::MatrixXd xtx = out.x.transpose() * out.x;
  const CheckedSolve beta = solve_checked(xtx, out.x.transpose() * out.y, "X'X of the observed regression");
  out.resid = out.y - out.x * beta.x.col(0);
  Eigen::VectorXd cc = Eigen::VectorXd::Zero(q);
  cc.head(c.size()) = c;
  out.bread = xtx.colPivHouseholderQr().solve(cc);
  return out;
}

}  // namespace

double hc0_sandwich(const ObservedData& data, const CovariateExpansion& xx, const Eigen::VectorXd& c) {
  const ObservedRegression reg = observed_regression(data, xx, c);
  double total = 0.0;
  for (Eigen::Index i = 0; i < reg.x.rows(); ++i) {
    const double s = reg.x.row(i).dot(reg.bread) * reg.resid(i);
    total += s * s;
  }
  return total;
}

double cr0_sandwich(const ObservedData& data, const CovariateExpansion& xx, const Eigen::VectorXd& c,
                    const std::vector<int>& cluster_of_unit) {
  const ObservedRegression reg = observed_regression(data, xx, c);
  if (static_cast<Eigen::Index>(cluster_of_unit.size()) != reg.x.rows()) throw LayoutMismatch("cluster map must list every unit");
  std::map<int, Eigen::VectorXd> score;
  for (Eigen::Index i = 0; i < reg.x.rows(); ++i) {
    auto [it, inserted] = score.try_emplace(cluster_of_unit[static_cast<std::size_t>(i)], Eigen::VectorXd::Zero(reg.x.cols()));
    it->second += reg.x.row(i).transpose() * reg.resid(i);
  }
  double total = 0.0;
  for (const auto& [g, s] : score) {
    const double v = s.dot(reg.bread);
    total += v * v;
  }
  return total;
}

}  // namespace dbvar
