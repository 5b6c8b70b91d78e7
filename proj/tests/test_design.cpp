#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "dbvar/design.hpp"
#include "dbvar/errors.hpp"
#include "dbvar/spectral.hpp"
#include "oracles.hpp"

using dbvar::Probability;
using dbvar::Rational;

namespace {

auto moments_of(const dbvar::DesignSpec& spec, const dbvar::DesignOptions& options = {}) {
  const dbvar::Design design = dbvar::build_design(spec, options);
  return std::make_tuple(dbvar::inclusion_probabilities(design), dbvar::joint_probabilities(design),
                         dbvar::first_order_design_matrix(design));
}

double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_SUITE("design") {

TEST_CASE("paired design matrix is exact") {
  const auto [pi, p, dm] = moments_of(dbvar::paired_spec(4, {{0, 1}, {2, 3}}));
  CHECK(dm.first.d == fixtures::paired_d());
  CHECK(pi.probs == Eigen::VectorXd::Constant(8, 0.5));
  CHECK_FALSE(dm.first.estimated);
  // Same-unit cross-arm and same-pair same-arm entries are impossible.
  CHECK(dm.second.mask(0, 4) == 1.0);
  CHECK(dm.second.mask(0, 1) == 1.0);
  CHECK(dm.second.mask(0, 5) == 0.0);
  CHECK(dm.second.mask.sum() == 16.0);
}

TEST_CASE("complete design matrix is exact") {
  const auto [pi, p, dm] = moments_of(dbvar::complete_spec({2, 2}));
  CHECK(dm.first.d == fixtures::complete_d());
  CHECK(p.p(0, 1) == 1.0 / 6.0);
  CHECK(p.p(0, 5) == 1.0 / 3.0);
  CHECK(dm.second.mask.sum() == 8.0);
}

TEST_CASE("bernoulli design matrix") {
  const auto [pi, p, dm] = moments_of(dbvar::bernoulli_spec(2, 3, {Probability::of(Rational(3, 4)), Probability::of(Rational(1, 4))}));
  CHECK(dm.first.d(3, 3) == 3.0);
  CHECK(dm.first.d(0, 0) == 1.0 / 3.0);
  CHECK(dm.first.d(0, 1) == 0.0);
  CHECK(dm.first.d(0, 3) == -1.0);
  CHECK(dm.first.d(0, 4) == 0.0);
  CHECK(dm.second.mask.sum() == 6.0);
}

TEST_CASE("random designs match the enumeration oracle") {
  std::mt19937_64 rng(20240601);
  for (int t = 0; t < 150; ++t) {
    const dbvar::DesignSpec spec = gen::random_spec(rng);
    CAPTURE(t);
    const dbvar::Design design = dbvar::build_design(spec);
    const auto pi = dbvar::inclusion_probabilities(design);
    const auto p = dbvar::joint_probabilities(design);
    const auto [d, mask] = dbvar::first_order_design_matrix(design);
    const oracle::Moments o = oracle::moments(spec);
    CHECK(max_abs(pi.probs - o.pi) <= 1e-12);
    CHECK(max_abs(p.p - o.p) <= 1e-12);
    CHECK(max_abs(d.d - o.d) <= 1e-10);
    CHECK(mask.mask == o.mask);

    // Invariants.
    CHECK(max_abs(d.d - d.d.transpose()) == 0.0);
    const Eigen::VectorXd want_diag = pi.probs.cwiseInverse() - Eigen::VectorXd::Ones(pi.probs.size());
    CHECK(max_abs(d.d.diagonal() - want_diag) <= 1e-12);
    const auto eig = dbvar::eigen_psd_check(d.d);
    CHECK(eig.min_eig >= -1e-8 * std::max(1.0, std::abs(eig.max_eig)));
    for (int a = 0; a < d.d.rows(); ++a)
      for (int b = 0; b < d.d.cols(); ++b)
        if (mask.mask(a, b) == 1.0) CHECK(d.d(a, b) == -1.0);

    double total = 0.0;
    design.for_each_assignment([&](const dbvar::Assignment& a, double prob) {
      total += prob;
      CHECK(a.indicators().sum() == static_cast<double>(spec.n));
    });
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("enumerated support matches the oracle support") {
  std::mt19937_64 rng(77);
  for (int t = 0; t < 40; ++t) {
    const dbvar::DesignSpec spec = gen::random_spec(rng);
    const auto want = oracle::enumerate(spec);
    const auto got = dbvar::build_design(spec).enumerate();
    std::map<std::vector<int>, double> merged;
    for (const auto& [a, prob] : got) merged[a.arms()] += prob;
    REQUIRE(merged.size() == want.size());
    for (const auto& pt : want) CHECK(std::abs(merged[pt.arms] - pt.prob) <= 1e-12);
  }
}

TEST_CASE("blocked designs are assembled blockwise without enumeration") {
  // 6^8 support points would exceed the default cap if enumerated.
  std::vector<std::vector<int>> units;
  std::vector<dbvar::DesignSpec> blocks;
  for (int b = 0; b < 8; ++b) {
    units.push_back({4 * b, 4 * b + 1, 4 * b + 2, 4 * b + 3});
    blocks.push_back(dbvar::complete_spec({2, 2}));
  }
  dbvar::DesignOptions opt;
  opt.support_cap = 1e9;
  const auto [pi, p, dm] = moments_of(dbvar::block_spec(2, units, blocks), opt);
  CHECK(dm.first.d.block(0, 0, 4, 4) == fixtures::complete_d().block(0, 0, 4, 4));
  CHECK(dm.first.d(0, 4) == 0.0);
  CHECK(dm.first.d(0, 32) == -1.0);
  CHECK(p.p(0, 4) == 0.25);
}

TEST_CASE("cluster design shares arms within clusters") {
  const auto spec = dbvar::cluster_spec({0, 0, 1, 1, 2, 2}, dbvar::bernoulli_spec(2, 3, {Probability::of(0.5), Probability::of(0.5)}));
  const auto [pi, p, dm] = moments_of(spec);
  CHECK(dm.first.d(0, 1) == 1.0);
  CHECK(dm.first.d(0, 7) == -1.0);
  CHECK(dm.first.d(0, 2) == 0.0);
}

TEST_CASE("first-order condition norm") {
  CHECK(dbvar::first_order_condition_norm({dbvar::IndexLayout(2, 4), Eigen::MatrixXd::Zero(8, 8)}) == 0.0);
  for (auto [n, nt] : {std::pair{4, 2}, {6, 2}, {5, 2}, {9, 3}}) {
    const int nc = n - nt;
    const auto [pi, p, dm] = moments_of(dbvar::complete_spec({nc, nt}));
    const double want = 2.0 * (static_cast<double>(nt) / nc + static_cast<double>(nc) / nt + 2.0);
    CHECK(dbvar::first_order_condition_norm(dm.first) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("second-order condition norm matches full enumeration") {
  std::mt19937_64 rng(5);
  const auto spec = dbvar::complete_spec({2, 2});
  const dbvar::Design design = dbvar::build_design(spec);
  Eigen::MatrixXd neyman = Eigen::MatrixXd::Zero(8, 8);
  const Eigen::MatrixXd d = fixtures::complete_d();
  neyman.block(0, 0, 4, 4) = d.block(0, 0, 4, 4) - d.block(0, 4, 4, 4);
  neyman.block(4, 4, 4, 4) = d.block(4, 4, 4, 4) - d.block(4, 0, 4, 4);
  const double got = dbvar::second_order_condition_norm(design, neyman);
  CHECK(got == doctest::Approx(oracle::second_order_norm(spec, neyman)).epsilon(1e-12));
  CHECK(dbvar::second_order_condition_norm(design, Eigen::MatrixXd::Zero(8, 8)) == 0.0);

  for (int t = 0; t < 10; ++t) {
    const auto s = gen::random_spec(rng, 2);
    const auto dsn = dbvar::build_design(s);
    const int kn = s.k * s.n;
    Eigen::MatrixXd dt = oracle::random_matrix(rng, kn, kn);
    dt = (dt + dt.transpose()).eval();
    CHECK(dbvar::second_order_condition_norm(dsn, dt) == doctest::Approx(oracle::second_order_norm(s, dt)).epsilon(1e-10));
  }
}

TEST_CASE("second-order norm budget and mode checks") {
  const dbvar::Design design = dbvar::build_design(dbvar::complete_spec({2, 2}));
  CHECK_THROWS_AS(dbvar::second_order_condition_norm(design, Eigen::MatrixXd::Ones(8, 8), {1.0}), dbvar::BudgetExceeded);
  dbvar::DesignOptions mc;
  mc.force_monte_carlo = true;
  mc.seed = 1;
  mc.mc_replicates = 100;
  const dbvar::Design sampled = dbvar::build_design(dbvar::complete_spec({2, 2}), mc);
  CHECK_THROWS_AS(dbvar::second_order_condition_norm(sampled, Eigen::MatrixXd::Ones(8, 8)), dbvar::ValidationError);
}

TEST_CASE("support cap and monte-carlo fallback") {
  const auto spec = dbvar::complete_spec({10, 10});
  dbvar::DesignOptions small;
  small.support_cap = 1000;
  CHECK_THROWS_AS(dbvar::build_design(spec, small), dbvar::SupportOverflow);
  small.allow_monte_carlo = true;
  CHECK_THROWS_AS(dbvar::build_design(spec, small), dbvar::ValidationError);
  small.seed = 9;
  small.mc_replicates = 2000;
  const dbvar::Design design = dbvar::build_design(spec, small);
  CHECK(design.mode() == dbvar::DesignMode::MonteCarlo);
  const auto pi = dbvar::inclusion_probabilities(design);
  CHECK(pi.estimated);
  CHECK(pi.std_error.size() == 40);
  for (int a = 0; a < 40; ++a) CHECK(std::abs(pi.probs(a) - 0.5) <= 5 * pi.std_error(a) + 1e-12);
  const auto again = dbvar::inclusion_probabilities(dbvar::build_design(spec, small));
  CHECK(again.probs == pi.probs);
}

TEST_CASE("monte-carlo moments approach exact moments") {
  const auto spec = dbvar::complete_spec({2, 3});
  dbvar::DesignOptions mc;
  mc.force_monte_carlo = true;
  mc.seed = 42;
  mc.mc_replicates = 200000;
  const auto est = dbvar::first_order_design_matrix(dbvar::build_design(spec, mc));
  const auto exact = dbvar::first_order_design_matrix(dbvar::build_design(spec));
  CHECK(est.first.estimated);
  CHECK(max_abs(est.first.d - exact.first.d) < 0.05);
  CHECK(est.second.mask == exact.second.mask);
}

TEST_CASE("draws land in the support and are reproducible") {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 20; ++t) {
    const auto spec = gen::random_spec(rng);
    const dbvar::Design design = dbvar::build_design(spec);
    for (std::uint64_t s = 0; s < 10; ++s) {
      const dbvar::Assignment a = design.draw(s);
      CHECK(oracle::probability(spec, a.arms()) > 0.0);
      CHECK(design.draw(s).arms() == a.arms());
    }
  }
  CHECK(dbvar::replicate_seed(1, 2) == dbvar::replicate_seed(1, 2));
  CHECK(dbvar::replicate_seed(1, 2) != dbvar::replicate_seed(1, 3));
}

TEST_CASE("invalid designs are rejected") {
  CHECK_THROWS_AS(dbvar::build_design(dbvar::complete_spec({4, 0})), dbvar::NonIdentifiedDesign);
  CHECK_THROWS_AS(dbvar::build_design(dbvar::bernoulli_spec(2, 2, {Probability::of(0.5), Probability::of(0.6)})),
                  dbvar::InfeasibleDesign);
  CHECK_THROWS_AS(dbvar::build_design(dbvar::bernoulli_spec(2, 2, {Probability::of(1.0), Probability::of(0.0)})),
                  dbvar::NonIdentifiedDesign);
  CHECK_THROWS_AS(dbvar::build_design(dbvar::paired_spec(4, {{0, 1}, {1, 2}})), dbvar::InfeasibleDesign);
  CHECK_THROWS_AS(dbvar::build_design(dbvar::paired_spec(4, {{0, 1}})), dbvar::InfeasibleDesign);
  CHECK_THROWS_AS(dbvar::build_design(dbvar::block_spec(2, {{0, 1}, {1, 2}}, {dbvar::complete_spec({1, 1}), dbvar::complete_spec({1, 1})})),
                  dbvar::InfeasibleDesign);
  CHECK_THROWS_AS(dbvar::build_design(dbvar::custom_spec(2, 2, {{{0, 1}, Probability::of(Rational(1, 2))}, {{1, 0}, Probability::of(Rational(1, 3))}})),
                  dbvar::InfeasibleDesign);
  CHECK_THROWS_AS(dbvar::build_design(dbvar::custom_spec(2, 2, {{{0, 1}, Probability::of(1.0)}})), dbvar::NonIdentifiedDesign);
}

}
