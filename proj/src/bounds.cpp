#include "dbvar/bounds.hpp"

#include <cmath>

#include "dbvar/errors.hpp"

namespace dbvar {

namespace {

Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

void check_pair(const DesignMatrix& d, const ImpossibilityMask& mask) {
  d.layout.require_same(mask.layout, "impossibility mask");
  d.layout.require_size(d.d.rows(), "design matrix");
  d.layout.require_size(d.d.cols(), "design matrix");
  d.layout.require_size(mask.mask.rows(), "impossibility mask");
  d.layout.require_size(mask.mask.cols(), "impossibility mask");
}

void check_neyman_preconditions(const DesignMatrix& d, const ImpossibilityMask& mask, const Eigen::VectorXd& c) {
  check_pair(d, mask);
  const int k = d.layout.arms();
  const int n = d.layout.units();
  if (c.size() != k) throw LayoutMismatch("contrast length does not match k");
  if (std::abs(c.sum()) > 1e-12) {
    throw PreconditionViolation("Neyman bound: contrast entries must sum to 0 (sum is " + std::to_string(c.sum()) + ")");
  }
  for (int r = 0; r < k; ++r) {
    if (c(r) == 0.0) throw PreconditionViolation("Neyman bound: contrast entry for arm " + std::to_string(r + 1) + " is 0");
  }
  for (int r = 0; r < k; ++r) {
    if (mask.mask.block(r * n, r * n, n, n).maxCoeff() > 0.0) {
      throw PreconditionViolation("Neyman bound: diagonal block d_" + std::to_string(r + 1) + std::to_string(r + 1) +
                                  " has -1 entries (jointly impossible assignments within an arm)");
    }
  }
  const Eigen::MatrixXd ref = d.d.block(0, n, n, n);
  for (int r = 0; r < k; ++r) {
    for (int s = 0; s < k; ++s) {
      if (r == s) continue;
      const double diff = (d.d.block(r * n, s * n, n, n) - ref).cwiseAbs().maxCoeff();
      if (diff > 1e-12) {
        throw PreconditionViolation("Neyman bound: off-diagonal block d_" + std::to_string(r + 1) + std::to_string(s + 1) +
                                    " differs from d_12 (max difference " + std::to_string(diff) + ")");
      }
    }
  }
}

Eigen::MatrixXd neyman_matrix(const DesignMatrix& d, const Eigen::VectorXd& c) {
  const int k = d.layout.arms();
  const int n = d.layout.units();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d.layout.size(), d.layout.size());
  for (int r = 0; r < k; ++r) {
    Eigen::MatrixXd block = Eigen::MatrixXd::Zero(n, n);
    for (int s = 0; s < k; ++s) block += (c(s) / c(r)) * d.d.block(r * n, s * n, n, n);
    out.block(r * n, r * n, n, n) = block;
  }
  return symmetrized(out);
}

}  // namespace

std::string to_string(BoundMethod method) {
  switch (method) {
    case BoundMethod::Neyman: return "neyman";
    case BoundMethod::AronowSamii: return "aronow-samii";
    case BoundMethod::AlgorithmM: return "algorithm-m";
    case BoundMethod::User: return "user";
  }
  return "?";
}

BoundMethod parse_bound_method(std::string_view text) {
  if (text == "neyman") return BoundMethod::Neyman;
  if (text == "as" || text == "aronow-samii") return BoundMethod::AronowSamii;
  if (text == "algm" || text == "algorithm-m" || text == "m") return BoundMethod::AlgorithmM;
  if (text == "user") return BoundMethod::User;
  throw ValidationError("unknown bound method \"" + std::string(text) + "\" (expected neyman, as or algm)");
}

std::string to_string(Certification c) {
  switch (c) {
    case Certification::Yes: return "yes";
    case Certification::No: return "no";
    case Certification::Unchecked: return "unchecked";
  }
  return "?";
}

BoundMatrix certify(BoundMatrix bound, const DesignMatrix& d, const ImpossibilityMask& mask, double tol) {
  check_pair(d, mask);
  bound.layout.require_same(d.layout, "bound matrix");
  d.layout.require_size(bound.dtilde.rows(), "bound matrix");
  d.layout.require_size(bound.dtilde.cols(), "bound matrix");
  const EigenReport report = eigen_psd_check(bound.dtilde - d.d, tol);
  bound.min_eig = report.min_eig;
  bound.tol = tol;
  bound.bounding = report.psd ? Certification::Yes : Certification::No;
  bool zero_on_mask = true;
  for (Eigen::Index a = 0; a < mask.mask.rows() && zero_on_mask; ++a) {
    for (Eigen::Index b = 0; b < mask.mask.cols(); ++b) {
      if (mask.mask(a, b) != 0.0 && std::abs(bound.dtilde(a, b)) > 1e-12) {
        zero_on_mask = false;
        break;
      }
    }
  }
  bound.identified = zero_on_mask ? Certification::Yes : Certification::No;
  return bound;
}

BoundMatrix neyman_bound(const DesignMatrix& d, const ImpossibilityMask& mask, const Eigen::VectorXd& c, double tol) {
  check_neyman_preconditions(d, mask, c);
  BoundMatrix out{d.layout, neyman_matrix(d, c), BoundMethod::Neyman};
  return certify(std::move(out), d, mask, tol);
}

NeymanIdentity neyman_identity_check(const DesignMatrix& d, const ImpossibilityMask& mask, const Eigen::VectorXd& c,
                                     const Eigen::VectorXd& y) {
  check_neyman_preconditions(d, mask, c);
  d.layout.require_size(y.size(), "potential outcomes");
  const int k = d.layout.arms();
  const int n = d.layout.units();
  Eigen::VectorXd z(d.layout.size());
  for (int a = 0; a < d.layout.size(); ++a) z(a) = c(d.layout.arm_of(a)) * y(a) / n;
  const Eigen::MatrixXd dn = neyman_matrix(d, c);
  const double n2 = static_cast<double>(n) * n;
  NeymanIdentity out;
  out.lhs_gap = n2 * z.dot(dn * z) - n2 * z.dot(d.d * z);
  const Eigen::MatrixXd d12 = symmetrized(d.d.block(0, n, n, n));
  for (int r = 0; r < k; ++r) {
    for (int s = r + 1; s < k; ++s) {
      const Eigen::VectorXd tau = y.segment(r * n, n) - y.segment(s * n, n);
      out.rhs_sum += c(r) * c(s) * tau.dot(d12 * tau);
    }
  }
  return out;
}

EigenReport off_diagonal_block_spectrum(const DesignMatrix& d, double tol) {
  const int n = d.layout.units();
  return eigen_psd_check(d.d.block(0, n, n, n), tol);
}

BoundMatrix aronow_samii_bound(const DesignMatrix& d, const ImpossibilityMask& mask, double tol) {
  check_pair(d, mask);
  Eigen::MatrixXd dt = d.d + mask.mask;
  dt.diagonal() += mask.mask.rowwise().sum();
  BoundMatrix out{d.layout, dt, BoundMethod::AronowSamii};
  return certify(std::move(out), d, mask, tol);
}

BoundMatrix algorithm_m_bound(const DesignMatrix& d, const ImpossibilityMask& mask, const AlgorithmMOptions& options) {
  check_pair(d, mask);
  if (options.max_iter < 1) throw ValidationError("algorithm M needs max_iter >= 1");
  const Eigen::MatrixXd& m = mask.mask;
  const Eigen::MatrixXd keep = Eigen::MatrixXd::Ones(m.rows(), m.cols()) - m;
  Eigen::MatrixXd t;
  switch (options.init) {
    case AlgorithmMOptions::Init::Mask:
      t = m;
      break;
    case AlgorithmMOptions::Init::Neyman:
      check_neyman_preconditions(d, mask, options.contrast);
      t = neyman_matrix(d, options.contrast) - d.d;
      break;
    case AlgorithmMOptions::Init::Custom:
      d.layout.require_size(options.custom.rows(), "algorithm M initial matrix");
      d.layout.require_size(options.custom.cols(), "algorithm M initial matrix");
      t = symmetrized(options.custom);
      break;
  }
  t = m + keep.cwiseProduct(t);

  double last_min = 0.0;
  for (int iter = 1; iter <= options.max_iter; ++iter) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(t);
    if (solver.info() != Eigen::Success) throw NumericalError("algorithm M: eigendecomposition failed");
    const Eigen::VectorXd& lambda = solver.eigenvalues();
    last_min = lambda(0);
    const double scale = std::max(1.0, lambda.cwiseAbs().maxCoeff());
    if (last_min >= -options.tol * scale) {
      BoundMatrix out{d.layout, d.d + t, BoundMethod::AlgorithmM};
      out.iterations = iter;
      return certify(std::move(out), d, mask, options.tol);
    }
    const Eigen::MatrixXd& v = solver.eigenvectors();
    t = symmetrized(v * lambda.cwiseMax(0.0).asDiagonal() * v.transpose());
    t = m + keep.cwiseProduct(t);
  }
  throw NonConvergence("algorithm M did not converge in " + std::to_string(options.max_iter) +
                           " iterations (last minimum eigenvalue " + std::to_string(last_min) + ")",
                       options.max_iter, last_min);
}

bool is_invariant_bounding(const Eigen::MatrixXd& dtilde, const IndexLayout& layout) {
  layout.require_size(dtilde.rows(), "bound matrix");
  layout.require_size(dtilde.cols(), "bound matrix");
  const int n = layout.units();
  for (int r = 0; r < layout.arms(); ++r) {
    for (int s = 0; s < layout.arms(); ++s) {
      const Eigen::VectorXd sums = dtilde.block(r * n, s * n, n, n).rowwise().sum();
      if (sums.cwiseAbs().maxCoeff() > 1e-10) return false;
    }
  }
  return true;
}

}  // namespace dbvar
