#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "dbvar/layout.hpp"
#include "dbvar/rational.hpp"

namespace dbvar {

// A probability given either as a float or as an exact fraction.
struct Probability {
  double value = 0.0;
  std::optional<Rational> exact;

  static Probability of(double v) { return {v, std::nullopt}; }
  static Probability of(Rational r) { return {r.to_double(), r}; }
};

struct DesignSpec;

// Independent per-unit draws; probs[i][r] is P(unit i in arm r).
struct BernoulliSpec {
  std::vector<std::vector<Probability>> probs;
};

// Fixed arm counts, all arrangements equally likely.
struct CompleteSpec {
  std::vector<int> counts;
};

// k = 2 only; each pair gets one unit per arm with probability 1/2.
struct PairedSpec {
  std::vector<std::pair<int, int>> pairs;
};

// Independent sub-designs over disjoint unit sets covering all units.
struct BlockSpec {
  std::vector<std::vector<int>> units;
  std::vector<DesignSpec> designs;
};

// cluster_of_unit maps units to clusters 0..m-1; the sub-design has n = m.
struct ClusterSpec {
  std::vector<int> cluster_of_unit;
  std::shared_ptr<const DesignSpec> cluster_design;
};

struct SupportPoint {
  std::vector<int> arms;
  Probability prob;
};

struct CustomSpec {
  std::vector<SupportPoint> support;
};

struct DesignSpec {
  int k = 2;
  int n = 1;
  std::variant<BernoulliSpec, CompleteSpec, PairedSpec, BlockSpec, ClusterSpec, CustomSpec> kind;
};

DesignSpec bernoulli_spec(int k, int n, const std::vector<Probability>& arm_probs);
DesignSpec complete_spec(std::vector<int> counts);
DesignSpec paired_spec(int n, std::vector<std::pair<int, int>> pairs);
DesignSpec block_spec(int k, std::vector<std::vector<int>> units, std::vector<DesignSpec> designs);
DesignSpec cluster_spec(std::vector<int> cluster_of_unit, DesignSpec cluster_design);
DesignSpec custom_spec(int k, int n, std::vector<SupportPoint> support);

enum class DesignMode { Exact, MonteCarlo };

struct DesignOptions {
  double support_cap = 1e6;
  bool allow_monte_carlo = false;
  bool force_monte_carlo = false;
  std::int64_t mc_replicates = 0;
  std::optional<std::uint64_t> seed;
};

// One independent piece of a design. Each slot is a set of units that always
// share an arm (a single unit, or a whole cluster). Either an explicit
// support over slots or a closed-form complete design over slots.
struct Component {
  std::vector<std::vector<int>> slots;
  std::vector<std::vector<int>> support;
  std::vector<double> prob;
  // Exact integer weights summing to total_weight; empty when not exact.
  std::vector<std::int64_t> weight;
  std::int64_t total_weight = 0;
  std::vector<int> counts;

  bool is_complete() const { return !counts.empty(); }
  double support_size() const;
};

struct DesignMoments {
  Eigen::VectorXd pi;
  Eigen::VectorXd pi_se;
  Eigen::MatrixXd p;
  Eigen::MatrixXd d;
  Eigen::MatrixXd mask;
  bool estimated = false;
};

class Design {
 public:
  using Sampler = std::function<Assignment(std::uint64_t seed)>;
  using Visitor = std::function<void(const Assignment&, double probability)>;

  Design(IndexLayout layout, std::vector<Component> components, const DesignOptions& options);
  static Design from_sampler(IndexLayout layout, Sampler sampler, std::int64_t replicates, std::uint64_t seed);

  const IndexLayout& layout() const { return layout_; }
  DesignMode mode() const { return mode_; }
  // Saturates to +inf for sampler-defined designs.
  double support_size() const { return support_size_; }
  const std::vector<Component>& components() const { return components_; }
  std::int64_t mc_replicates() const { return mc_replicates_; }
  std::optional<std::uint64_t> seed() const { return seed_; }

  // Visits every support point of an exact design. The Assignment reference
  // is only valid during the call.
  void for_each_assignment(const Visitor& fn) const;
  std::vector<std::pair<Assignment, double>> enumerate() const;

  Assignment draw(std::uint64_t seed) const;

  const DesignMoments& moments() const;

 private:
  IndexLayout layout_;
  std::vector<Component> components_;
  Sampler sampler_;
  DesignMode mode_ = DesignMode::Exact;
  double support_size_ = 0.0;
  std::int64_t mc_replicates_ = 0;
  std::optional<std::uint64_t> seed_;
  std::shared_ptr<struct MomentCache> cache_;
};

struct PiDiagonal {
  IndexLayout layout;
  Eigen::VectorXd probs;
  // Empty for exact designs.
  Eigen::VectorXd std_error;
  bool estimated = false;
};

struct JointProbMatrix {
  IndexLayout layout;
  Eigen::MatrixXd p;
  bool estimated = false;
};

struct DesignMatrix {
  IndexLayout layout;
  Eigen::MatrixXd d;
  bool estimated = false;
};

struct ImpossibilityMask {
  IndexLayout layout;
  Eigen::MatrixXd mask;
};

Design build_design(const DesignSpec& spec, const DesignOptions& options = {});

PiDiagonal inclusion_probabilities(const Design& design);
JointProbMatrix joint_probabilities(const Design& design);
std::pair<DesignMatrix, ImpossibilityMask> first_order_design_matrix(const Design& design);

double first_order_condition_norm(const DesignMatrix& d);

struct SecondOrderOptions {
  // Upper bound on 64-bit word operations spent on fourth-order moments.
  double budget = 2e9;
};

double second_order_condition_norm(const Design& design, const Eigen::MatrixXd& dtilde,
                                   const SecondOrderOptions& options = {});

// Per-replicate seed derived from the master seed; independent of scheduling.
std::uint64_t replicate_seed(std::uint64_t master, std::uint64_t index);

}  // namespace dbvar
