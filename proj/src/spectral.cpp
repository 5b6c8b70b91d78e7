#include "dbvar/spectral.hpp"

#include <algorithm>
#include <cmath>

#include "dbvar/bounds.hpp"
#include "dbvar/errors.hpp"

namespace dbvar {

double psd_threshold(double tol, double largest_magnitude) {
  return std::max(tol * std::max(1.0, largest_magnitude), 1e-10);
}

EigenReport eigen_psd_check(const Eigen::MatrixXd& m, double tol) {
  if (m.rows() != m.cols()) throw ValidationError("eigen check needs a square matrix");
  if (!m.allFinite()) throw NumericalError("eigen check: matrix has non-finite entries");
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  EigenReport report;
  if (sym.rows() == 0) {
    report.psd = true;
    return report;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) throw NumericalError("symmetric eigendecomposition failed");
  report.eigenvalues = solver.eigenvalues().reverse();
  report.eigenvectors = solver.eigenvectors().rowwise().reverse();
  report.max_eig = report.eigenvalues(0);
  report.min_eig = report.eigenvalues(report.eigenvalues.size() - 1);
  report.threshold = psd_threshold(tol, std::max(std::abs(report.max_eig), std::abs(report.min_eig)));
  report.psd = report.min_eig >= -report.threshold;
  return report;
}

DesignComparison compare_designs(const DesignMatrix& a, const DesignMatrix& b, double tol) {
  a.layout.require_same(b.layout, "compare_designs");
  DesignComparison out;
  out.report = eigen_psd_check(a.d - b.d, tol);
  const IndexLayout& layout = a.layout;
  for (Eigen::Index j = 0; j < out.report.eigenvalues.size(); ++j) {
    const double lambda = out.report.eigenvalues(j);
    if (std::abs(lambda) <= out.report.threshold) continue;
    OutcomeProfile profile;
    profile.eigenvalue = lambda;
    profile.direction = out.report.eigenvectors.col(j);
    profile.per_arm = Eigen::Map<const Eigen::MatrixXd>(profile.direction.data(), layout.units(), layout.arms());
    out.profiles.push_back(std::move(profile));
  }
  return out;
}

Eigen::MatrixXd outcomes_from_direction(const Eigen::VectorXd& v, const Eigen::VectorXd& c, const IndexLayout& layout) {
  layout.require_size(v.size(), "direction");
  if (c.size() != layout.arms()) throw LayoutMismatch("contrast length does not match k");
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(layout.units(), layout.arms());
  for (int r = 0; r < layout.arms(); ++r) {
    if (c(r) == 0.0) continue;
    for (int i = 0; i < layout.units(); ++i) y(i, r) = v(layout.flat(r, i)) / c(r);
  }
  return y;
}

double subspace_distance(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v) {
  if (u.rows() != v.rows()) throw ValidationError("subspace_distance: ambient dimensions differ");
  auto projector = [](const Eigen::MatrixXd& m) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), m.cols());
    return Eigen::MatrixXd(q * q.transpose());
  };
  const Eigen::MatrixXd diff = projector(u) - projector(v);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(diff, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

std::string to_string(Relation relation) {
  switch (relation) {
    case Relation::ATighter: return "a-tighter";
    case Relation::BTighter: return "b-tighter";
    case Relation::Equal: return "equal";
    case Relation::Incomparable: return "incomparable";
  }
  return "?";
}

ComparisonVerdict compare_bound_matrices(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double tol) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw LayoutMismatch("compare_bounds: matrix shapes differ");
  ComparisonVerdict verdict;
  verdict.evidence = eigen_psd_check(b - a, tol);
  const EigenReport& e = verdict.evidence;
  const double thr = e.threshold;
  if (e.eigenvalues.size() == 0 || (e.max_eig <= thr && e.min_eig >= -thr)) {
    verdict.relation = Relation::Equal;
  } else if (e.min_eig >= -thr) {
    verdict.relation = Relation::ATighter;
  } else if (e.max_eig <= thr) {
    verdict.relation = Relation::BTighter;
  } else {
    verdict.relation = Relation::Incomparable;
  }
  return verdict;
}

ComparisonVerdict compare_bounds(const BoundMatrix& a, const BoundMatrix& b, double tol) {
  a.layout.require_same(b.layout, "compare_bounds");
  return compare_bound_matrices(a.dtilde, b.dtilde, tol);
}

}  // namespace dbvar
