#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dbvar/design.hpp"

namespace dbvar {

struct EigenReport {
  // Descending, with matching eigenvector columns.
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;
  double min_eig = 0.0;
  double max_eig = 0.0;
  // Absolute threshold actually applied: max(tol * max(1, |lambda|max), 1e-10).
  double threshold = 0.0;
  bool psd = false;
};

double psd_threshold(double tol, double largest_magnitude);

// Symmetrizes m as (m + m')/2 and decomposes it.
EigenReport eigen_psd_check(const Eigen::MatrixXd& m, double tol = 1e-8);

struct OutcomeProfile {
  double eigenvalue = 0.0;
  Eigen::VectorXd direction;
  // n x k reshaping of the direction; column r holds arm r.
  Eigen::MatrixXd per_arm;
};

struct DesignComparison {
  EigenReport report;
  // One profile per eigenvalue outside the tolerance band, largest first.
  std::vector<OutcomeProfile> profiles;
};

DesignComparison compare_designs(const DesignMatrix& a, const DesignMatrix& b, double tol = 1e-8);

// Potential outcomes whose HT linearization under contrast c is the given
// direction: y_a = v_a / c_r (entries of arms with c_r = 0 are left at 0).
Eigen::MatrixXd outcomes_from_direction(const Eigen::VectorXd& v, const Eigen::VectorXd& c, const IndexLayout& layout);

// Spectral-norm distance between the orthogonal projectors onto span(u) and span(v).
double subspace_distance(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v);

enum class Relation { ATighter, BTighter, Equal, Incomparable };
std::string to_string(Relation relation);

struct ComparisonVerdict {
  Relation relation = Relation::Equal;
  // Spectrum of b - a.
  EigenReport evidence;
};

struct BoundMatrix;
ComparisonVerdict compare_bounds(const BoundMatrix& a, const BoundMatrix& b, double tol = 1e-8);
ComparisonVerdict compare_bound_matrices(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double tol = 1e-8);

}  // namespace dbvar
