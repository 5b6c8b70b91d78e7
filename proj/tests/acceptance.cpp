// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dbvar/bound_estimation.hpp"
#include "dbvar/bounds.hpp"
#include "dbvar/errors.hpp"
#include "dbvar/montecarlo.hpp"
#include "dbvar/spectral.hpp"
#include "oracles.hpp"

namespace {

using Clock = std::chrono::steady_clock;
using dbvar::EstimatorKind;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Built {
  dbvar::Design design;
  dbvar::PiDiagonal pi;
  dbvar::JointProbMatrix p;
  dbvar::DesignMatrix d;
  dbvar::ImpossibilityMask mask;
};

Built build(const dbvar::DesignSpec& spec, const dbvar::DesignOptions& options = {}) {
  dbvar::Design design = dbvar::build_design(spec, options);
  auto pi = dbvar::inclusion_probabilities(design);
  auto p = dbvar::joint_probabilities(design);
  auto [d, mask] = dbvar::first_order_design_matrix(design);
  return {std::move(design), std::move(pi), std::move(p), std::move(d), std::move(mask)};
}

Built paired4() { return build(dbvar::paired_spec(4, {{0, 1}, {2, 3}})); }
Built complete42() { return build(dbvar::complete_spec({2, 2})); }

Eigen::VectorXd desc(std::vector<double> v) {
  std::sort(v.begin(), v.end(), std::greater<>());
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

double max_abs(const Eigen::MatrixXd& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

Eigen::VectorXd contrast(std::initializer_list<double> v) {
  Eigen::VectorXd c(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) c(i++) = x;
  return c;
}

dbvar::EstimatorSpec spec_of(EstimatorKind kind, const Eigen::VectorXd& c) {
  dbvar::EstimatorSpec s;
  s.kind = kind;
  s.contrast = c;
  return s;
}

bool exact_backend(const dbvar::Design& design) {
  for (const auto& comp : design.components()) {
    if (!comp.is_complete() && comp.weight.empty()) return false;
  }
  return design.mode() == dbvar::DesignMode::Exact;
}

void criterion_1(Outcome& out) {
  const auto t0 = Clock::now();
  const Built b = paired4();
  const double elapsed = seconds_since(t0);
  const double err = max_abs(b.d.d - fixtures::paired_d());
  out.detail << "max |d - printed| = " << err << ", " << elapsed << " s";
  out.require(b.d.d == fixtures::paired_d(), "entrywise equality");
  out.require(exact_backend(b.design) && !b.d.estimated, "rational backend");
  out.require(elapsed < 1.0, "runtime < 1 s");
}

void criterion_2(Outcome& out) {
  const Built b = complete42();
  out.detail << "max |d - printed| = " << max_abs(b.d.d - fixtures::complete_d());
  out.require(b.d.d == fixtures::complete_d(), "entrywise equality");
  out.require(exact_backend(b.design), "rational backend");
}

void criterion_3(Outcome& out) {
  const Built cr = complete42();
  const Built pr = paired4();
  const auto cmp = dbvar::compare_designs(cr.d, pr.d);
  const Eigen::VectorXd want = desc({8.0 / 3, 0, 0, 0, 0, 0, -4.0 / 3, -4.0 / 3});
  const double spec_err = max_abs(cmp.report.eigenvalues - want);
  double dist = 1.0;
  if (!cmp.profiles.empty()) dist = dbvar::subspace_distance(cmp.profiles[0].direction, fixtures::within_pair_direction());
  out.detail << "spectrum error " << spec_err << ", leading eigenvector distance " << dist;
  out.require(spec_err <= 1e-9, "spectrum within 1e-9");
  out.require(dist <= 1e-6, "leading eigenvector within 1e-6");
}

void criterion_4(Outcome& out) {
  const Built b = paired4();
  const auto as = dbvar::aronow_samii_bound(b.d, b.mask);
  dbvar::AlgorithmMOptions opt;
  opt.tol = 1e-14;
  const auto m = dbvar::algorithm_m_bound(b.d, b.mask, opt);
  const double m_err = max_abs(m.dtilde - fixtures::paired_m());
  const auto gap = dbvar::eigen_psd_check(as.dtilde - m.dtilde);
  const double gap_err = max_abs(gap.eigenvalues - desc({2, 2, 2, 2, 0, 0, 0, 0}));
  const auto verdict = dbvar::compare_bounds(m, as);
  out.detail << "AS error " << max_abs(as.dtilde - fixtures::paired_as()) << ", M error " << m_err << " after " << m.iterations
             << " iterations, AS-M spectrum error " << gap_err << ", verdict " << dbvar::to_string(verdict.relation);
  out.require(as.dtilde == fixtures::paired_as(), "AS exact");
  out.require(m_err <= 1e-12, "M within 1e-12");
  out.require(gap_err <= 1e-9, "AS-M spectrum");
  out.require(verdict.relation == dbvar::Relation::ATighter, "M tighter");
}

void criterion_5(Outcome& out) {
  const Built b = paired4();
  dbvar::AlgorithmMOptions opt;
  opt.tol = 1e-14;
  const auto m = dbvar::algorithm_m_bound(b.d, b.mask, opt);
  const Eigen::MatrixXd inv = fixtures::paired_invariant();
  const double e1 = max_abs(dbvar::eigen_psd_check(inv - b.d.d).eigenvalues - desc({8, 0, 0, 0, 0, 0, 0, 0}));
  const double e2 = max_abs(dbvar::eigen_psd_check(inv - m.dtilde).eigenvalues - desc({4, 0, 0, 0, 0, 0, 0, -4}));
  const auto verdict = dbvar::compare_bound_matrices(inv, m.dtilde);
  out.detail << "INVAR-d spectrum error " << e1 << ", INVAR-M spectrum error " << e2 << ", verdict "
             << dbvar::to_string(verdict.relation);
  out.require(e1 <= 1e-9, "INVAR-d spectrum");
  out.require(e2 <= 1e-9, "INVAR-M spectrum");
  out.require(verdict.relation == dbvar::Relation::Incomparable, "incomparable");
}

dbvar::EstimatorSpec ols_spec(const Eigen::MatrixXd& x) {
  auto s = spec_of(EstimatorKind::OLS, contrast({-1, 1}));
  s.covariates = dbvar::expand_covariates(x, 2);
  return s;
}

void criterion_6(Outcome& out) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(6);
  double worst = 0.0;
  int hc0 = 0;
  int skipped = 0;
  int saturated = 0;
  while (hc0 < 200) {
    const int n = gen::uniform_int(rng, 4, 12);
    const int l = gen::uniform_int(rng, 0, 3);
    // A saturated fit has zero residuals; both sides are rounding noise.
    if (n <= 2 + l) {
      ++saturated;
      continue;
    }
    const Built b = build(gen::random_bernoulli(rng, 2, n));
    const auto ipw = dbvar::ipw_bound_matrix(dbvar::aronow_samii_bound(b.d, b.mask), b.p);
    const Eigen::MatrixXd x = oracle::random_matrix(rng, n, l);
    const Eigen::MatrixXd y = oracle::random_matrix(rng, n, 2);
    const auto spec = ols_spec(x);
    const auto data = dbvar::ObservedData::observe({b.d.layout, oracle::stack(y)}, b.design.draw(rng()));
    double plug = 0.0;
    try {
      plug = dbvar::plugin_bound_estimate(spec, data, b.pi, ipw).value;
    } catch (const dbvar::EstimationInfeasible&) {
      ++skipped;
      continue;
    }
    const double want = oracle::hc0_loops(data.assignment.arms(), y, x, 2, spec.contrast, {});
    worst = std::max(worst, std::abs(plug - want) / std::max(std::abs(want), 1e-300));
    ++hc0;
  }
  int cr0 = 0;
  while (cr0 < 100) {
    const int m = gen::uniform_int(rng, 3, 5);
    const int n = gen::uniform_int(rng, m, 10);
    const int l = gen::uniform_int(rng, 0, 2);
    if (n <= 2 + l) {
      ++saturated;
      continue;
    }
    std::vector<int> cluster(n);
    for (int i = 0; i < n; ++i) cluster[i] = i < m ? i : gen::uniform_int(rng, 0, m - 1);
    std::shuffle(cluster.begin(), cluster.end(), rng);
    const Built b = build(dbvar::cluster_spec(cluster, gen::random_bernoulli(rng, 2, m)));
    const auto ipw = dbvar::ipw_bound_matrix(dbvar::neyman_bound(b.d, b.mask, contrast({-1, 1})), b.p);
    const Eigen::MatrixXd x = oracle::random_matrix(rng, n, l);
    const Eigen::MatrixXd y = oracle::random_matrix(rng, n, 2);
    const auto spec = ols_spec(x);
    const auto data = dbvar::ObservedData::observe({b.d.layout, oracle::stack(y)}, b.design.draw(rng()));
    double plug = 0.0;
    try {
      plug = dbvar::plugin_bound_estimate(spec, data, b.pi, ipw).value;
    } catch (const dbvar::EstimationInfeasible&) {
      ++skipped;
      continue;
    }
    const double want = oracle::hc0_loops(data.assignment.arms(), y, x, 2, spec.contrast, cluster);
    worst = std::max(worst, std::abs(plug - want) / std::max(std::abs(want), 1e-300));
    ++cr0;
  }
  const double elapsed = seconds_since(t0);
  out.detail << hc0 << " HC0 + " << cr0 << " CR0 datasets (" << skipped << " rank-deficient draws and " << saturated << " saturated datasets redrawn), max relative error " << worst
             << ", " << elapsed << " s";
  out.require(worst <= 1e-10, "relative error <= 1e-10");
  out.require(elapsed < 30.0, "runtime < 30 s");
}

void criterion_7(Outcome& out) {
  std::mt19937_64 rng(7);
  double bias = 0.0;
  double var_err = 0.0;
  double bound_err = 0.0;
  int neyman_valid = 0;
  for (int t = 0; t < 100; ++t) {
    const auto spec = gen::random_spec(rng);
    const Built b = build(spec);
    const dbvar::IndexLayout layout = b.d.layout;
    const Eigen::MatrixXd y = oracle::random_matrix(rng, spec.n, spec.k);
    const Eigen::VectorXd ys = oracle::stack(y);
    Eigen::VectorXd c = oracle::random_matrix(rng, spec.k, 1, 0.5, 2.0).col(0);
    // Every other contrast sums to zero so the Neyman bound can apply.
    if (t % 2 == 1) c.array() -= c.mean();
    Eigen::VectorXd z(layout.size());
    for (int a = 0; a < layout.size(); ++a) z(a) = c(layout.arm_of(a)) * ys(a) / spec.n;

    const auto points = oracle::enumerate(spec);
    const Eigen::VectorXd pi = oracle::moments(spec).pi;
    const double estimand = c.dot(y.colwise().mean().transpose());
    double mean = 0.0;
    for (const auto& pt : points) mean += pt.prob * oracle::ht(pt.arms, y, c, pi);
    double var = 0.0;
    for (const auto& pt : points) var += pt.prob * std::pow(oracle::ht(pt.arms, y, c, pi) - mean, 2);
    bias = std::max(bias, std::abs(mean - estimand));
    const double zdz = z.dot(b.d.d * z);
    var_err = std::max(var_err, std::abs(var - zdz) / std::max(1.0, std::abs(zdz)));

    std::vector<dbvar::BoundMatrix> bounds = {dbvar::aronow_samii_bound(b.d, b.mask), dbvar::algorithm_m_bound(b.d, b.mask)};
    try {
      bounds.push_back(dbvar::neyman_bound(b.d, b.mask, c));
      ++neyman_valid;
    } catch (const dbvar::PreconditionViolation&) {
    }
    for (const auto& bound : bounds) {
      const auto ipw = dbvar::ipw_bound_matrix(bound, b.p);
      double mean_bound = 0.0;
      for (const auto& pt : points) {
        mean_bound += pt.prob * dbvar::ht_bound_estimate({layout, ys}, c, dbvar::Assignment(layout, pt.arms), ipw).value;
      }
      const double want = z.dot(bound.dtilde * z);
      bound_err = std::max(bound_err, std::abs(mean_bound - want) / std::max(1.0, std::abs(want)));
    }
  }
  out.detail << "100 triples (" << neyman_valid << " Neyman-valid), max bias " << bias << ", max variance error " << var_err
             << ", max mean-bound error " << bound_err;
  out.require(bias <= 1e-12, "bias <= 1e-12");
  out.require(var_err <= 1e-9, "variance = z'dz");
  out.require(bound_err <= 1e-9, "mean bound = z'dtilde z");
}

void criterion_8(Outcome& out) {
  std::mt19937_64 rng(8);
  double worst = 0.0;
  double min_rhs = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int k = gen::uniform_int(rng, 2, 3);
    dbvar::DesignSpec spec;
    if (t % 2 == 0) {
      std::vector<int> counts(k);
      for (int& m : counts) m = gen::uniform_int(rng, 2, k == 2 ? 4 : 3);
      spec = dbvar::complete_spec(counts);
    } else {
      spec = gen::random_bernoulli(rng, k, gen::uniform_int(rng, 2, k == 2 ? 6 : 4));
    }
    const Built b = build(spec);
    Eigen::VectorXd c = oracle::random_matrix(rng, k, 1).col(0);
    c.array() -= c.mean();
    const Eigen::VectorXd y = oracle::random_matrix(rng, k * spec.n, 1).col(0);
    const auto id = dbvar::neyman_identity_check(b.d, b.mask, c, y);
    worst = std::max(worst, std::abs(id.lhs_gap - id.rhs_sum));
    min_rhs = std::min(min_rhs, id.rhs_sum);
  }
  out.detail << "100 instances, max |lhs - rhs| " << worst << ", min rhs " << min_rhs;
  out.require(worst <= 1e-9, "lhs = rhs within 1e-9");
  out.require(min_rhs >= -1e-10, "rhs >= -1e-10");
}

dbvar::BoundMatrix neyman_complete(const Built& b) { return dbvar::neyman_bound(b.d, b.mask, contrast({-1, 1})); }

void criterion_9(Outcome& out) {
  double first_err = 0.0;
  for (auto [n, nt] : {std::pair{4, 2}, {5, 2}, {6, 2}, {6, 3}, {7, 3}, {8, 3}, {8, 4}, {9, 4}, {10, 3}, {10, 5}}) {
    const int nc = n - nt;
    const Built b = build(dbvar::complete_spec({nc, nt}));
    const double want = 2.0 * (static_cast<double>(nt) / nc + static_cast<double>(nc) / nt + 2.0);
    first_err = std::max(first_err, std::abs(dbvar::first_order_condition_norm(b.d) - want));
  }
  const auto spec = dbvar::complete_spec({2, 2});
  const Built b4 = build(spec);
  const Eigen::MatrixXd ney4 = neyman_complete(b4).dtilde;
  const double lib = dbvar::second_order_condition_norm(b4.design, ney4);
  const double brute = oracle::second_order_norm(spec, ney4);
  std::vector<double> seq;
  for (int n : {4, 8, 12}) {
    const Built b = build(dbvar::complete_spec({n / 2, n / 2}));
    seq.push_back(dbvar::second_order_condition_norm(b.design, neyman_complete(b).dtilde));
  }
  bool non_increasing = true;
  for (std::size_t i = 1; i < seq.size(); ++i) non_increasing = non_increasing && seq[i] <= seq[i - 1] * (1 + 1e-12);
  out.detail << "first-order max error " << first_err << ", second-order " << lib << " vs brute force " << brute
             << ", sequence n=4,8,12: " << seq[0] << ", " << seq[1] << ", " << seq[2];
  out.require(first_err <= 1e-10, "first-order formula");
  out.require(std::abs(lib - brute) <= 1e-8, "second-order vs brute force");
  out.require(non_increasing, "second-order non-increasing over n");
}

dbvar::Design tiled(int n, const dbvar::DesignSpec& base, const std::optional<dbvar::DesignSpec>& tail) {
  std::vector<std::vector<int>> units;
  std::vector<dbvar::DesignSpec> designs;
  int next = 0;
  const int t = tail ? tail->n : 0;
  for (int b = 0; b < (n - t) / base.n; ++b) {
    units.emplace_back();
    for (int i = 0; i < base.n; ++i) units.back().push_back(next++);
    designs.push_back(base);
  }
  if (tail) {
    units.emplace_back();
    for (int i = 0; i < t; ++i) units.back().push_back(next++);
    designs.push_back(*tail);
  }
  dbvar::DesignOptions opt;
  opt.support_cap = 1e12;
  return dbvar::build_design(dbvar::block_spec(base.k, units, designs), opt);
}

void criterion_10(Outcome& out) {
  dbvar::ReplicatedPopulation pop;
  pop.base.resize(4, 2);
  pop.base << 1, 2, 3, 5, 0, 1, 2, 4;
  const Eigen::VectorXd c = contrast({-1, 1});

  const auto block = [](int n) { return tiled(n, dbvar::complete_spec({2, 2}), std::nullopt); };
  const auto rows = dbvar::consistency_sweep(block, spec_of(EstimatorKind::HT, c), pop, {4, 8, 16, 32});
  double spread = 0.0;
  for (const auto& r : rows) spread = std::max(spread, std::abs(r.n_variance - rows[0].n_variance));
  out.detail << "tiled n*Var(HT) = " << rows[0].n_variance << " (spread " << spread << ")";

  const auto complete = [](int n) {
    dbvar::DesignOptions opt;
    opt.support_cap = 1e12;
    return dbvar::build_design(dbvar::complete_spec({n / 2, n / 2}), opt);
  };
  const auto cr = dbvar::consistency_sweep(complete, spec_of(EstimatorKind::HT, c), pop, {4, 8, 16, 32});
  out.detail << "; complete(n, n/2) n*Var(HT), info only:";
  for (const auto& r : cr) out.detail << ' ' << r.n_variance;
  out.require(spread <= 1e-9, "tiled n*Var constant");

  // Pairs plus one Bernoulli unit, so arm sizes vary and CM/HJ are nonlinear.
  dbvar::ReplicatedPopulation gap_pop = pop;
  gap_pop.tail.resize(1, 2);
  gap_pop.tail << 1, 2;
  const dbvar::DesignSpec pair_base = dbvar::paired_spec(4, {{0, 1}, {2, 3}});
  const dbvar::DesignSpec leftover = dbvar::bernoulli_spec(2, 1, {dbvar::Probability::of(dbvar::Rational(3, 4)), dbvar::Probability::of(dbvar::Rational(1, 4))});
  const auto family = [&](int n) { return tiled(n, pair_base, leftover); };
  for (EstimatorKind kind : {EstimatorKind::CM, EstimatorKind::HJ}) {
    const auto g = dbvar::consistency_sweep(family, spec_of(kind, c), gap_pop, {9, 17, 33});
    double log_sum = 0.0;
    bool computed = true;
    for (const auto& r : g) {
      computed = computed && r.gap_computed && r.n_taylor_gap > 0.0;
      if (computed) log_sum += std::log(r.n_taylor_gap);
    }
    double fit = 0.0;
    if (computed) {
      const double scale = std::exp(log_sum / static_cast<double>(g.size()));
      for (const auto& r : g) fit = std::max(fit, std::abs(r.n_taylor_gap / scale - 1.0));
    }
    out.detail << "; " << dbvar::to_string(kind) << " n*gap at n=9,17,33:";
    for (const auto& r : g) out.detail << ' ' << r.n_taylor_gap;
    out.detail << " (fit deviation " << fit << ")";
    out.require(computed, dbvar::to_string(kind) + " gap computed");
    out.require(fit <= 0.2, dbvar::to_string(kind) + " gap ~ C/n within 20%");
  }
}

void criterion_11(Outcome& out) {
  std::mt19937_64 rng(11);
  for (EstimatorKind kind : {EstimatorKind::CM, EstimatorKind::HJ, EstimatorKind::OLS, EstimatorKind::WLS}) {
    int done = 0;
    double worst = 0.0;
    while (done < 20) {
      const auto spec = gen::random_spec(rng);
      const Built b = build(spec);
      const Eigen::MatrixXd y = oracle::random_matrix(rng, spec.n, spec.k);
      const dbvar::PotentialOutcomes po{b.d.layout, oracle::stack(y)};
      auto s = spec_of(kind, oracle::random_matrix(rng, spec.k, 1).col(0));
      if (kind == EstimatorKind::OLS || kind == EstimatorKind::WLS) s.covariates = dbvar::expand_covariates(oracle::random_matrix(rng, spec.n, 2), spec.k);
      if (kind == EstimatorKind::WLS) s.m = oracle::random_matrix(rng, spec.k * spec.n, 1, 0.5, 2.0).col(0);
      dbvar::LinearizationVector z;
      try {
        z = dbvar::linearization_vector(s, po, b.pi);
      } catch (const dbvar::EstimationInfeasible&) {
        continue;
      }
      const auto form = dbvar::regression_form(s, b.pi);
      const Eigen::VectorXd fd = oracle::fd_linearization(
          [&](const Eigen::VectorXd& r) { return oracle::weighted_functional(r, form.xx, form.m, po.y, form.c); }, b.pi.probs);
      worst = std::max(worst, max_abs(z.z - fd) / std::max(1e-8, max_abs(fd)));
      ++done;
    }
    out.detail << (kind == EstimatorKind::CM ? "" : ", ") << dbvar::to_string(kind) << " max relative error " << worst;
    out.require(worst <= 1e-4, dbvar::to_string(kind) + " within 1e-4");
  }
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"paired design matrix", criterion_1},
      {"complete design matrix", criterion_2},
      {"complete vs paired spectrum", criterion_3},
      {"AS and M bounds", criterion_4},
      {"invariant bound spectra", criterion_5},
      {"HC0 and CR0 equivalence", criterion_6},
      {"unbiasedness by enumeration", criterion_7},
      {"Neyman identity", criterion_8},
      {"condition norms", criterion_9},
      {"Taylor rates", criterion_10},
      {"finite-difference linearization", criterion_11},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome out;
    try {
      criteria[i].second(out);
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail << " [exception: " << e.what() << "]";
    }
    failed += out.pass ? 0 : 1;
    std::printf("criterion %2zu %s  %s: %s\n", i + 1, out.pass ? "PASS" : "FAIL", criteria[i].first.c_str(), out.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
