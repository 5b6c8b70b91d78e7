#include <bit>
#include <cmath>
#include <string>

#include "dbvar/design.hpp"
#include "dbvar/errors.hpp"

namespace dbvar {

namespace {

using Bits = std::vector<std::uint64_t>;

// Probability mass of the support points whose bits are set in both rows.
class SupportMass {
 public:
  explicit SupportMass(std::vector<double> prob) : prob_(std::move(prob)) {
    uniform_ = true;
    for (double p : prob_) uniform_ = uniform_ && p == prob_.front();
  }

  double joint(const std::uint64_t* x, const std::uint64_t* y, std::size_t words) const {
    if (uniform_) {
      std::int64_t count = 0;
      for (std::size_t w = 0; w < words; ++w) count += std::popcount(x[w] & y[w]);
      return static_cast<double>(count) * prob_.front();
    }
    double total = 0.0;
    for (std::size_t w = 0; w < words; ++w) {
      std::uint64_t v = x[w] & y[w];
      while (v != 0) {
        total += prob_[w * 64 + static_cast<std::size_t>(std::countr_zero(v))];
        v &= v - 1;
      }
    }
    return total;
  }

 private:
  std::vector<double> prob_;
  bool uniform_ = true;
};

}  // namespace

double second_order_condition_norm(const Design& design, const Eigen::MatrixXd& dtilde, const SecondOrderOptions& options) {
  const IndexLayout& layout = design.layout();
  layout.require_size(dtilde.rows(), "bound matrix");
  layout.require_size(dtilde.cols(), "bound matrix");
  if (design.mode() != DesignMode::Exact) {
    throw ValidationError("the second-order condition norm needs the exact joint law (monte-carlo design given)");
  }
  const int size = layout.size();
  const auto points = static_cast<std::size_t>(design.support_size());
  const std::size_t words = (points + 63) / 64;

  // Indicator bitset of every flat index across the support.
  std::vector<Bits> rows(static_cast<std::size_t>(size), Bits(words, 0));
  std::vector<double> prob;
  prob.reserve(points);
  design.for_each_assignment([&](const Assignment& a, double p) {
    const std::size_t j = prob.size();
    for (int f : a.active()) rows[static_cast<std::size_t>(f)][j / 64] |= std::uint64_t{1} << (j % 64);
    prob.push_back(p);
  });
  SupportMass mass(std::move(prob));

  // Unordered pairs (a <= b) that can contribute: d~_ab != 0 and p_ab > 0.
  struct Pair {
    double weight;
    double p;
    Bits bits;
  };
  std::vector<Pair> pairs;
  for (int a = 0; a < size; ++a) {
    for (int b = a; b < size; ++b) {
      const double v = 0.5 * (dtilde(a, b) + dtilde(b, a));
      if (v == 0.0) continue;
      Bits both(words);
      for (std::size_t w = 0; w < words; ++w) both[w] = rows[static_cast<std::size_t>(a)][w] & rows[static_cast<std::size_t>(b)][w];
      const double pab = mass.joint(both.data(), both.data(), words);
      if (pab == 0.0) continue;
      pairs.push_back({std::abs(v) * (a == b ? 1.0 : 2.0), pab, std::move(both)});
    }
  }
  const double work = 0.5 * static_cast<double>(pairs.size()) * static_cast<double>(pairs.size() + 1) * static_cast<double>(words);
  if (work > options.budget) {
    throw BudgetExceeded("second-order norm needs about " + std::to_string(work) + " word operations, budget is " +
                         std::to_string(options.budget));
  }

  double total = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (std::size_t j = i; j < pairs.size(); ++j) {
      const double outer = pairs[i].p * pairs[j].p;
      const double fourth = mass.joint(pairs[i].bits.data(), pairs[j].bits.data(), words);
      const double term = pairs[i].weight * pairs[j].weight * std::abs(fourth - outer) / outer;
      total += i == j ? term : 2.0 * term;
    }
  }
  return total / static_cast<double>(layout.units());
}

}  // namespace dbvar
