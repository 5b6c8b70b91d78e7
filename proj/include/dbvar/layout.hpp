#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dbvar {

// Stacking convention for kn-length objects. Arms and units are 0-based
// internally; flat(r, i) = r * n + i. File formats use 1-based ids.
class IndexLayout {
 public:
  IndexLayout(int arms, int units);

  int arms() const { return k_; }
  int units() const { return n_; }
  int size() const { return k_ * n_; }

  int flat(int arm, int unit) const { return arm * n_ + unit; }
  int arm_of(int flat) const { return flat / n_; }
  int unit_of(int flat) const { return flat % n_; }

  friend bool operator==(const IndexLayout&, const IndexLayout&) = default;

  // Throws LayoutMismatch naming `what` when the layouts differ.
  void require_same(const IndexLayout& other, const std::string& what) const;
  // Throws LayoutMismatch unless a vector/matrix dimension equals kn.
  void require_size(Eigen::Index dim, const std::string& what) const;

 private:
  int k_;
  int n_;
};

// One realized assignment: the arm of every unit.
class Assignment {
 public:
  Assignment(IndexLayout layout, std::vector<int> arm_of_unit);

  // Validates the one-arm-per-unit invariant of a 0/1 indicator vector.
  static Assignment from_indicators(IndexLayout layout, const Eigen::VectorXd& indicators);

  const IndexLayout& layout() const { return layout_; }
  const std::vector<int>& arms() const { return arms_; }
  int arm_of_unit(int unit) const { return arms_[static_cast<std::size_t>(unit)]; }
  bool indicator(int flat) const { return arms_[static_cast<std::size_t>(layout_.unit_of(flat))] == layout_.arm_of(flat); }
  Eigen::VectorXd indicators() const;
  // Flat indices with indicator 1, ordered by unit.
  std::vector<int> active() const;

  // Unchecked in-place update used by enumeration loops.
  void set_arm(int unit, int arm) { arms_[static_cast<std::size_t>(unit)] = arm; }

 private:
  IndexLayout layout_;
  std::vector<int> arms_;
};

// kn x k matrix of per-arm intercept columns.
Eigen::MatrixXd intercept_matrix(const IndexLayout& layout);

}  // namespace dbvar
