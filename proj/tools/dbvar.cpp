#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dbvar/bound_estimation.hpp"
#include "dbvar/bounds.hpp"
#include "dbvar/design_json.hpp"
#include "dbvar/errors.hpp"
#include "dbvar/io.hpp"
#include "dbvar/montecarlo.hpp"
#include "dbvar/spectral.hpp"
#include "scenario.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 2;
constexpr int kNumerical = 3;

void write_json(const std::string& path, const ordered_json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw dbvar::ValidationError("cannot write " + path);
  out << j.dump(2) << '\n';
}

std::string out_dir(const std::string& dir) {
  fs::create_directories(dir);
  return dir;
}

std::vector<double> to_list(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

ordered_json eigen_json(const dbvar::EigenReport& r) {
  return {{"eigenvalues", to_list(r.eigenvalues)}, {"psd", r.psd}, {"min_eig", r.min_eig}, {"max_eig", r.max_eig}, {"threshold", r.threshold}};
}

dbvar::IndexLayout layout_for(Eigen::Index size, int k) {
  if (k < 2 || size % k != 0) throw dbvar::LayoutMismatch("matrix size " + std::to_string(size) + " is not a multiple of k = " + std::to_string(k));
  return {k, static_cast<int>(size / k)};
}

dbvar::DesignMatrix read_design_matrix(const std::string& path, int k) {
  Eigen::MatrixXd d = dbvar::read_matrix_csv_file(path);
  if (d.rows() != d.cols()) throw dbvar::ValidationError(path + ": matrix must be square");
  return {layout_for(d.rows(), k), d, false};
}

// Integral support sizes print as integers; saturated ones stay floating.
ordered_json support_size_json(double size) {
  if (std::isfinite(size) && size < 9.007199254740992e15) return static_cast<std::int64_t>(size);
  return size;
}

struct DesignArgs {
  std::string spec;
  std::string out = ".";
  std::optional<double> cap;
  std::optional<std::uint64_t> seed;
};

int cmd_design(const DesignArgs& a) {
  dbvar::ParsedDesign parsed = dbvar::load_design_file(a.spec);
  if (a.cap) parsed.options.support_cap = *a.cap;
  if (a.seed) parsed.options.seed = a.seed;
  const dbvar::Design design = dbvar::build_design(parsed.spec, parsed.options);
  const dbvar::PiDiagonal pi = dbvar::inclusion_probabilities(design);
  const dbvar::JointProbMatrix p = dbvar::joint_probabilities(design);
  const auto [d, mask] = dbvar::first_order_design_matrix(design);
  const std::string dir = out_dir(a.out);
  dbvar::write_matrix_csv_file(dir + "/pi.csv", pi.probs.transpose());
  dbvar::write_matrix_csv_file(dir + "/p.csv", p.p);
  dbvar::write_matrix_csv_file(dir + "/d.csv", d.d);
  dbvar::write_matrix_csv_file(dir + "/mask.csv", mask.mask);
  ordered_json summary = {{"k", design.layout().arms()},
                          {"n", design.layout().units()},
                          {"mode", design.mode() == dbvar::DesignMode::Exact ? "exact" : "mc"},
                          {"support_size", support_size_json(design.support_size())},
                          {"estimated", pi.estimated},
                          {"first_order_norm", dbvar::first_order_condition_norm(d)},
                          {"d_min_eig", dbvar::eigen_psd_check(d.d).min_eig}};
  if (pi.estimated) {
    summary["mc_replicates"] = design.mc_replicates();
    summary["pi_std_error"] = to_list(pi.std_error);
  }
  write_json(dir + "/summary.json", summary);
  return kOk;
}

struct BoundArgs {
  std::string d_path;
  std::string mask_path;
  std::string method = "as";
  std::string contrast;
  std::string candidate;
  std::string init = "mask";
  std::string out = ".";
  int k = 2;
  double tol = 1e-8;
  int max_iter = 10000;
};

int cmd_bound(const BoundArgs& a) {
  const dbvar::DesignMatrix d = read_design_matrix(a.d_path, a.k);
  const dbvar::ImpossibilityMask mask{d.layout, dbvar::read_matrix_csv_file(a.mask_path)};
  d.layout.require_size(mask.mask.rows(), "mask");
  d.layout.require_size(mask.mask.cols(), "mask");
  auto contrast = [&] {
    if (a.contrast.empty()) throw dbvar::ValidationError("--contrast is required for this method");
    return dbvar::parse_vector_list(a.contrast, "--contrast");
  };
  dbvar::BoundMatrix bound{d.layout, Eigen::MatrixXd()};
  if (a.method == "verify") {
    if (a.candidate.empty()) throw dbvar::ValidationError("--method verify needs --candidate");
    bound.dtilde = dbvar::read_matrix_csv_file(a.candidate);
    bound = dbvar::certify(bound, d, mask, a.tol);
  } else {
    switch (dbvar::parse_bound_method(a.method)) {
      case dbvar::BoundMethod::Neyman:
        bound = dbvar::neyman_bound(d, mask, contrast(), a.tol);
        break;
      case dbvar::BoundMethod::AronowSamii:
        bound = dbvar::aronow_samii_bound(d, mask, a.tol);
        break;
      case dbvar::BoundMethod::AlgorithmM: {
        dbvar::AlgorithmMOptions opt;
        opt.tol = a.tol;
        opt.max_iter = a.max_iter;
        if (a.init == "neyman") {
          opt.init = dbvar::AlgorithmMOptions::Init::Neyman;
          opt.contrast = contrast();
        } else if (a.init != "mask") {
          throw dbvar::ValidationError("--init must be mask or neyman");
        }
        bound = dbvar::algorithm_m_bound(d, mask, opt);
        break;
      }
      case dbvar::BoundMethod::User:
        throw dbvar::ValidationError("use --method verify with --candidate for user bounds");
    }
  }
  const std::string dir = out_dir(a.out);
  dbvar::write_matrix_csv_file(dir + "/bound.csv", bound.dtilde);
  write_json(dir + "/certification.json",
             {{"method", a.method == "verify" ? "user" : dbvar::to_string(bound.method)},
              {"certified_bounding", dbvar::to_string(bound.bounding)},
              {"certified_identified", dbvar::to_string(bound.identified)},
              {"bounding", bound.bounding == dbvar::Certification::Yes},
              {"identified", bound.identified == dbvar::Certification::Yes},
              {"invariant", dbvar::is_invariant_bounding(bound.dtilde, d.layout)},
              {"iterations", bound.iterations},
              {"tol", bound.tol},
              {"min_eig", bound.min_eig}});
  return kOk;
}

struct EstimateArgs {
  std::string design;
  std::string data;
  std::string estimator = "ht";
  std::string contrast;
  std::string bound = "as";
  std::string covariates;
  std::string wls_weights;
  std::string out;
  double tol = 1e-8;
};

int cmd_estimate(const EstimateArgs& a) {
  const dbvar::ParsedDesign parsed = dbvar::load_design_file(a.design);
  const dbvar::Design design = dbvar::build_design(parsed.spec, parsed.options);
  const dbvar::IndexLayout layout = design.layout();
  const dbvar::ObservedData data = dbvar::read_observed_csv_file(a.data, layout);

  dbvar::EstimatorSpec spec;
  spec.kind = dbvar::parse_estimator_kind(a.estimator);
  spec.contrast = dbvar::parse_vector_list(a.contrast, "--contrast");
  if (!a.covariates.empty()) spec.covariates = dbvar::expand_covariates(dbvar::read_covariates_csv_file(a.covariates, layout.units()), layout);
  if (spec.kind == dbvar::EstimatorKind::WLS) {
    if (a.wls_weights.empty()) throw dbvar::ValidationError("wls needs --wls-weights (a CSV file or inverse_pi)");
    if (a.wls_weights == "inverse_pi") {
      spec.weight_rule = dbvar::WeightRule::InverseProbability;
    } else {
      spec.m = dbvar::read_weights_csv_file(a.wls_weights, layout);
    }
  }

  const dbvar::PiDiagonal pi = dbvar::inclusion_probabilities(design);
  const dbvar::JointProbMatrix p = dbvar::joint_probabilities(design);
  const auto [d, mask] = dbvar::first_order_design_matrix(design);
  dbvar::BoundMatrix bound{layout, Eigen::MatrixXd()};
  switch (dbvar::parse_bound_method(a.bound)) {
    case dbvar::BoundMethod::Neyman:
      bound = dbvar::neyman_bound(d, mask, spec.contrast, a.tol);
      break;
    case dbvar::BoundMethod::AronowSamii:
      bound = dbvar::aronow_samii_bound(d, mask, a.tol);
      break;
    case dbvar::BoundMethod::AlgorithmM: {
      dbvar::AlgorithmMOptions opt;
      opt.tol = a.tol;
      bound = dbvar::algorithm_m_bound(d, mask, opt);
      break;
    }
    case dbvar::BoundMethod::User:
      throw dbvar::ValidationError("--bound must be neyman, as or algm");
  }
  const dbvar::IpwBoundMatrix ipw = dbvar::ipw_bound_matrix(bound, p);
  const dbvar::Estimate est = dbvar::point_estimate(spec, data, pi);
  const dbvar::BoundEstimate be = dbvar::plugin_bound_estimate(spec, data, pi, ipw);
  write_json(a.out, {{"point_estimate", est.value},
                     {"bound_estimate", be.value},
                     {"bound_method", dbvar::to_string(be.method)},
                     {"estimator", dbvar::to_string(spec.kind)},
                     {"se", std::sqrt(std::max(be.value, 0.0))},
                     {"plug_in", be.plug_in},
                     {"condition", est.condition},
                     {"ill_conditioned", est.ill_conditioned},
                     {"design_estimated", pi.estimated}});
  return kOk;
}

struct CompareArgs {
  std::string a;
  std::string b;
  std::string as = "designs";
  std::string contrast;
  std::string vectors;
  std::string out;
  int k = 2;
  double tol = 1e-8;
};

int cmd_compare(const CompareArgs& a) {
  const dbvar::DesignMatrix da = read_design_matrix(a.a, a.k);
  const dbvar::DesignMatrix db = read_design_matrix(a.b, a.k);
  da.layout.require_same(db.layout, "compare");
  ordered_json j;
  if (a.as == "designs") {
    const dbvar::DesignComparison cmp = dbvar::compare_designs(da, db, a.tol);
    j = eigen_json(cmp.report);
    ordered_json profiles = ordered_json::array();
    const std::optional<Eigen::VectorXd> c =
        a.contrast.empty() ? std::nullopt : std::optional<Eigen::VectorXd>(dbvar::parse_vector_list(a.contrast, "--contrast"));
    for (const auto& prof : cmp.profiles) {
      const Eigen::MatrixXd arms = c ? dbvar::outcomes_from_direction(prof.direction, *c, da.layout) : prof.per_arm;
      ordered_json cols = ordered_json::array();
      for (Eigen::Index r = 0; r < arms.cols(); ++r) cols.push_back(to_list(arms.col(r)));
      profiles.push_back({{"eigenvalue", prof.eigenvalue}, {c ? "outcomes_per_arm" : "direction_per_arm", cols}});
    }
    j["profiles"] = profiles;
    if (!a.vectors.empty()) dbvar::write_matrix_csv_file(a.vectors, cmp.report.eigenvectors);
  } else if (a.as == "bounds") {
    const dbvar::ComparisonVerdict v = dbvar::compare_bound_matrices(da.d, db.d, a.tol);
    j = {{"relation", dbvar::to_string(v.relation)}, {"evidence", eigen_json(v.evidence)}};
    if (!a.vectors.empty()) dbvar::write_matrix_csv_file(a.vectors, v.evidence.eigenvectors);
  } else {
    throw dbvar::ValidationError("--as must be designs or bounds");
  }
  write_json(a.out, j);
  return kOk;
}

struct SimulateArgs {
  std::string scenario;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
};

int cmd_simulate(const SimulateArgs& a) {
  const dbvar::cli::LoadedScenario loaded = dbvar::cli::load_scenario(a.scenario, a.seed);
  const std::string dir = out_dir(a.out);
  if (loaded.sweep) {
    const auto& s = *loaded.sweep;
    const auto rows = dbvar::consistency_sweep(s.family, s.estimator, s.population, s.ns);
    std::ofstream csv(dir + "/trend.csv");
    if (!csv) throw dbvar::ValidationError("cannot write " + dir + "/trend.csv");
    csv << "n,variance,n_variance,taylor_gap,n_taylor_gap,first_order_norm,infeasible_points,estimated\n";
    ordered_json arr = ordered_json::array();
    for (const auto& r : rows) {
      csv << r.n << ',' << dbvar::format_double(r.variance) << ',' << dbvar::format_double(r.n_variance) << ','
          << (r.gap_computed ? dbvar::format_double(r.taylor_gap) : "") << ',' << (r.gap_computed ? dbvar::format_double(r.n_taylor_gap) : "")
          << ',' << dbvar::format_double(r.first_order_norm) << ',' << r.infeasible_points << ',' << (r.estimated ? 1 : 0) << '\n';
      ordered_json row = {{"n", r.n}, {"variance", r.variance}, {"n_variance", r.n_variance}, {"first_order_norm", r.first_order_norm}};
      if (r.gap_computed) {
        row["taylor_gap"] = r.taylor_gap;
        row["n_taylor_gap"] = r.n_taylor_gap;
        row["infeasible_points"] = r.infeasible_points;
      }
      arr.push_back(row);
    }
    write_json(dir + "/trend.json", {{"estimator", dbvar::to_string(s.estimator.kind)}, {"rows", arr}});
    return kOk;
  }
  const dbvar::SimReport r = dbvar::run_scenario(*loaded.run);
  ordered_json j = {{"mode", r.mode == dbvar::SimMode::Exact ? "exact" : "mc"},
                    {"draws", r.draws},
                    {"estimand", r.estimand},
                    {"mean_estimate", r.mean_estimate},
                    {"bias", r.bias},
                    {"empirical_variance", r.empirical_variance},
                    {"taylor_variance", r.taylor_variance},
                    {"mean_bound_estimate", r.mean_bound_estimate},
                    {"bound_value", r.bound_value},
                    {"coverage", r.coverage},
                    {"infeasible_count", r.infeasible_count},
                    {"infeasible_mass", r.infeasible_mass},
                    {"conditional", r.conditional},
                    {"negative_bound_count", r.negative_bound_count},
                    {"design_estimated", r.design_estimated}};
  if (r.mode == dbvar::SimMode::MonteCarlo) {
    j["se_mean_estimate"] = r.se_mean_estimate;
    j["se_empirical_variance"] = r.se_empirical_variance;
    j["se_mean_bound"] = r.se_mean_bound;
    j["se_coverage"] = r.se_coverage;
  }
  write_json(dir + "/report.json", j);
  std::ofstream csv(dir + "/report.csv");
  if (!csv) throw dbvar::ValidationError("cannot write " + dir + "/report.csv");
  csv << "metric,value\n";
  for (const auto& [key, value] : j.items()) {
    if (value.is_number_float()) {
      csv << key << ',' << dbvar::format_double(value.get<double>()) << '\n';
    } else if (value.is_number() || value.is_boolean()) {
      csv << key << ',' << value.dump() << '\n';
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Design-based variances, variance bounds and bound estimators"};
  app.require_subcommand(1);

  DesignArgs design_args;
  auto* design = app.add_subcommand("design", "Compute pi, p, d and the impossibility mask of a design");
  design->add_option("spec", design_args.spec, "Design JSON")->required();
  design->add_option("--out", design_args.out, "Output directory");
  design->add_option("--cap", design_args.cap, "Support size cap for exact mode");
  design->add_option("--seed", design_args.seed, "Seed for monte-carlo mode");

  BoundArgs bound_args;
  auto* bound = app.add_subcommand("bound", "Build or verify a variance bound matrix");
  bound->add_option("d", bound_args.d_path, "Design matrix CSV")->required();
  bound->add_option("mask", bound_args.mask_path, "Impossibility mask CSV")->required();
  bound->add_option("--method", bound_args.method, "neyman | as | algm | verify");
  bound->add_option("--contrast", bound_args.contrast, "Contrast, e.g. -1,1");
  bound->add_option("--candidate", bound_args.candidate, "Bound CSV to verify");
  bound->add_option("--init", bound_args.init, "Algorithm M start: mask | neyman");
  bound->add_option("--k", bound_args.k, "Arm count");
  bound->add_option("--tol", bound_args.tol, "PSD tolerance");
  bound->add_option("--max-iter", bound_args.max_iter, "Algorithm M iteration limit");
  bound->add_option("--out", bound_args.out, "Output directory");

  EstimateArgs est_args;
  auto* estimate = app.add_subcommand("estimate", "Point estimate and variance bound estimate from observed data");
  estimate->add_option("design", est_args.design, "Design JSON")->required();
  estimate->add_option("data", est_args.data, "Observed data CSV")->required();
  estimate->add_option("--estimator", est_args.estimator, "ht | cm | hj | ols | wls");
  estimate->add_option("--contrast", est_args.contrast, "Contrast, e.g. -1,1")->required();
  estimate->add_option("--bound", est_args.bound, "neyman | as | algm");
  estimate->add_option("--covariates", est_args.covariates, "Covariates CSV");
  estimate->add_option("--wls-weights", est_args.wls_weights, "WLS weights CSV or inverse_pi");
  estimate->add_option("--tol", est_args.tol, "PSD tolerance");
  estimate->add_option("--out", est_args.out, "Report path (stdout when omitted)");

  CompareArgs cmp_args;
  auto* compare = app.add_subcommand("compare", "Compare two design matrices or two bound matrices");
  compare->add_option("a", cmp_args.a, "First matrix CSV")->required();
  compare->add_option("b", cmp_args.b, "Second matrix CSV")->required();
  compare->add_option("--as", cmp_args.as, "designs | bounds");
  compare->add_option("--k", cmp_args.k, "Arm count");
  compare->add_option("--tol", cmp_args.tol, "Eigenvalue tolerance");
  compare->add_option("--contrast", cmp_args.contrast, "Report outcome profiles under this contrast");
  compare->add_option("--vectors", cmp_args.vectors, "Eigenvector CSV sidecar");
  compare->add_option("--out", cmp_args.out, "Report path (stdout when omitted)");

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "Run a simulation scenario or a consistency sweep");
  simulate->add_option("scenario", sim_args.scenario, "Scenario JSON")->required();
  simulate->add_option("--out", sim_args.out, "Output directory");
  simulate->add_option("--seed", sim_args.seed, "Master seed (overrides the scenario)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }

  try {
    if (*design) return cmd_design(design_args);
    if (*bound) return cmd_bound(bound_args);
    if (*estimate) return cmd_estimate(est_args);
    if (*compare) return cmd_compare(cmp_args);
    if (*simulate) return cmd_simulate(sim_args);
  } catch (const dbvar::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const dbvar::NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  }
  return kValidation;
}
