#pragma once

#include <string>
#include <string_view>
#include <utility>

#include <Eigen/Dense>

#include "dbvar/design.hpp"
#include "dbvar/spectral.hpp"

namespace dbvar {

enum class BoundMethod { Neyman, AronowSamii, AlgorithmM, User };
std::string to_string(BoundMethod method);
BoundMethod parse_bound_method(std::string_view text);

enum class Certification { Yes, No, Unchecked };
std::string to_string(Certification c);

struct BoundMatrix {
  IndexLayout layout;
  Eigen::MatrixXd dtilde;
  BoundMethod method = BoundMethod::User;
  Certification bounding = Certification::Unchecked;
  Certification identified = Certification::Unchecked;
  int iterations = 0;
  double tol = 1e-8;
  // Smallest eigenvalue of dtilde - d from the last certification.
  double min_eig = 0.0;
};

// Checks dtilde - d for PSD-ness and dtilde for zeros on the mask.
BoundMatrix certify(BoundMatrix bound, const DesignMatrix& d, const ImpossibilityMask& mask, double tol = 1e-8);

// Block-diagonal bound with blocks sum_s (c_s / c_r) d_rs. Preconditions are
// checked individually and reported as PreconditionViolation.
BoundMatrix neyman_bound(const DesignMatrix& d, const ImpossibilityMask& mask, const Eigen::VectorXd& c, double tol = 1e-8);

struct NeymanIdentity {
  // n^2 z'dtilde z - n^2 z'd z with z the HT linearization.
  double lhs_gap = 0.0;
  // sum over arm pairs r < s of c_r c_s tau_rs' d_12 tau_rs.
  double rhs_sum = 0.0;
};

NeymanIdentity neyman_identity_check(const DesignMatrix& d, const ImpossibilityMask& mask, const Eigen::VectorXd& c,
                                     const Eigen::VectorXd& y);

// Spectrum of the (symmetrized) first off-diagonal block d_12.
EigenReport off_diagonal_block_spectrum(const DesignMatrix& d, double tol = 1e-8);

BoundMatrix aronow_samii_bound(const DesignMatrix& d, const ImpossibilityMask& mask, double tol = 1e-8);

struct AlgorithmMOptions {
  enum class Init { Mask, Neyman, Custom };
  Init init = Init::Mask;
  // Needed for Init::Neyman.
  Eigen::VectorXd contrast;
  // Needed for Init::Custom.
  Eigen::MatrixXd custom;
  double tol = 1e-8;
  int max_iter = 10000;
};

BoundMatrix algorithm_m_bound(const DesignMatrix& d, const ImpossibilityMask& mask, const AlgorithmMOptions& options = {});

// Every n x n block of dtilde has zero row sums within 1e-10. Whether dtilde
// is a bounding matrix at all is certified separately.
bool is_invariant_bounding(const Eigen::MatrixXd& dtilde, const IndexLayout& layout);

}  // namespace dbvar
