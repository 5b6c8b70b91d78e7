#include "dbvar/layout.hpp"

#include "dbvar/errors.hpp"

namespace dbvar {

IndexLayout::IndexLayout(int arms, int units) : k_(arms), n_(units) {
  if (arms < 2) throw ValidationError("arm count must be at least 2, got " + std::to_string(arms));
  if (units < 1) throw ValidationError("unit count must be at least 1, got " + std::to_string(units));
}

void IndexLayout::require_same(const IndexLayout& other, const std::string& what) const {
  if (*this != other) {
    throw LayoutMismatch(what + ": layout (k=" + std::to_string(other.k_) + ", n=" + std::to_string(other.n_) +
                         ") does not match (k=" + std::to_string(k_) + ", n=" + std::to_string(n_) + ")");
  }
}

void IndexLayout::require_size(Eigen::Index dim, const std::string& what) const {
  if (dim != size()) {
    throw LayoutMismatch(what + ": expected length " + std::to_string(size()) + ", got " + std::to_string(dim));
  }
}

Assignment::Assignment(IndexLayout layout, std::vector<int> arm_of_unit) : layout_(layout), arms_(std::move(arm_of_unit)) {
  if (static_cast<int>(arms_.size()) != layout_.units()) {
    throw LayoutMismatch("assignment has " + std::to_string(arms_.size()) + " units, layout has " +
                         std::to_string(layout_.units()));
  }
  for (int a : arms_) {
    if (a < 0 || a >= layout_.arms()) throw ValidationError("assignment arm out of range: " + std::to_string(a));
  }
}

Assignment Assignment::from_indicators(IndexLayout layout, const Eigen::VectorXd& indicators) {
  layout.require_size(indicators.size(), "assignment indicators");
  std::vector<int> arms(static_cast<std::size_t>(layout.units()), -1);
  for (int i = 0; i < layout.units(); ++i) {
    int hits = 0;
    for (int r = 0; r < layout.arms(); ++r) {
      double v = indicators(layout.flat(r, i));
      if (v == 1.0) {
        arms[static_cast<std::size_t>(i)] = r;
        ++hits;
      } else if (v != 0.0) {
        throw ValidationError("assignment indicators must be 0 or 1");
      }
    }
    if (hits != 1) throw ValidationError("unit " + std::to_string(i + 1) + " must be assigned to exactly one arm");
  }
  return Assignment(layout, std::move(arms));
}

Eigen::VectorXd Assignment::indicators() const {
  Eigen::VectorXd r = Eigen::VectorXd::Zero(layout_.size());
  for (int i = 0; i < layout_.units(); ++i) r(layout_.flat(arm_of_unit(i), i)) = 1.0;
  return r;
}

std::vector<int> Assignment::active() const {
  std::vector<int> out(arms_.size());
  for (int i = 0; i < layout_.units(); ++i) out[static_cast<std::size_t>(i)] = layout_.flat(arm_of_unit(i), i);
  return out;
}

Eigen::MatrixXd intercept_matrix(const IndexLayout& layout) {
  Eigen::MatrixXd one = Eigen::MatrixXd::Zero(layout.size(), layout.arms());
  for (int r = 0; r < layout.arms(); ++r) one.block(r * layout.units(), r, layout.units(), 1).setOnes();
  return one;
}

}  // namespace dbvar
