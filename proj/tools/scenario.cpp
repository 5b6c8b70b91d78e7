#include "scenario.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "dbvar/design_json.hpp"
#include "dbvar/errors.hpp"
#include "dbvar/io.hpp"

namespace dbvar::cli {

namespace {

using nlohmann::json;

void require_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) throw ValidationError(where + ": unknown field \"" + it.key() + "\"");
  }
}

double number_of(const json& v, const std::string& what) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) return parse_number(v.get<std::string>(), what);
  throw ValidationError(what + ": expected a number");
}

Eigen::VectorXd vector_of(const json& v, const std::string& what) {
  if (!v.is_array()) throw ValidationError(what + ": expected a list");
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = number_of(v[i], what);
  return out;
}

// Rows of a list-of-lists; rows[r] is one inner list.
Eigen::MatrixXd rows_of(const json& v, const std::string& what) {
  if (!v.is_array() || v.empty()) throw ValidationError(what + ": expected a non-empty list of lists");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(v[0].size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Eigen::VectorXd row = vector_of(v[i], what);
    if (row.size() != out.cols()) throw ValidationError(what + ": rows have different lengths");
    out.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return out;
}

std::string resolve(const std::filesystem::path& dir, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? p : (dir / path).string();
}

ParsedDesign design_of(const json& j, const std::filesystem::path& dir) {
  if (j.contains("design_file")) return load_design_file(resolve(dir, j.at("design_file").get<std::string>()));
  if (!j.contains("design")) throw ValidationError("scenario: missing \"design\" or \"design_file\"");
  return parse_design_text(j.at("design").dump());
}

EstimatorSpec estimator_of(const json& j, const IndexLayout* layout, const std::filesystem::path& dir) {
  EstimatorSpec spec;
  spec.kind = parse_estimator_kind(j.value("estimator", std::string("ht")));
  if (!j.contains("contrast")) throw ValidationError("scenario: missing \"contrast\"");
  spec.contrast = vector_of(j.at("contrast"), "scenario contrast");
  if (j.contains("wls_weights")) {
    const auto& w = j.at("wls_weights");
    if (w.is_string() && w.get<std::string>() == "inverse_pi") {
      spec.weight_rule = WeightRule::InverseProbability;
    } else if (w.is_string()) {
      if (!layout) throw ValidationError("scenario: weight files are not supported in sweeps");
      spec.m = read_weights_csv_file(resolve(dir, w.get<std::string>()), *layout);
    } else {
      spec.m = vector_of(w, "scenario wls_weights");
    }
  }
  return spec;
}

std::function<Design(int)> family_of(const json& f, double cap) {
  require_keys(f, {"type", "counts_fraction", "p", "design", "tail_design"}, "sweep family");
  const std::string type = f.value("type", std::string());
  DesignOptions options;
  options.support_cap = cap;
  if (type == "complete") {
    const double frac = f.contains("counts_fraction") ? number_of(f.at("counts_fraction"), "counts_fraction") : 0.5;
    return [frac, options](int n) {
      const int nt = static_cast<int>(std::lround(frac * n));
      return build_design(complete_spec({n - nt, nt}), options);
    };
  }
  if (type == "bernoulli") {
    const double p = f.contains("p") ? number_of(f.at("p"), "p") : 0.5;
    return [p, options](int n) { return build_design(bernoulli_spec(2, n, {Probability::of(1.0 - p), Probability::of(p)}), options); };
  }
  if (type == "paired") {
    return [options](int n) {
      std::vector<std::pair<int, int>> pairs;
      for (int i = 0; i + 1 < n; i += 2) pairs.emplace_back(i, i + 1);
      return build_design(paired_spec(n, pairs), options);
    };
  }
  if (type == "tiled") {
    const DesignSpec base = parse_design_text(f.at("design").dump()).spec;
    std::optional<DesignSpec> tail;
    if (f.contains("tail_design")) tail = parse_design_text(f.at("tail_design").dump()).spec;
    return [base, tail, options](int n) {
      const int t = tail ? tail->n : 0;
      if ((n - t) % base.n != 0 || n - t < base.n) throw ValidationError("n = " + std::to_string(n) + " does not tile the base design");
      std::vector<std::vector<int>> units;
      std::vector<DesignSpec> designs;
      int next = 0;
      for (int c = 0; c < (n - t) / base.n; ++c) {
        units.emplace_back();
        for (int i = 0; i < base.n; ++i) units.back().push_back(next++);
        designs.push_back(base);
      }
      if (tail) {
        units.emplace_back();
        for (int i = 0; i < t; ++i) units.back().push_back(next++);
        designs.push_back(*tail);
      }
      return build_design(block_spec(base.k, units, designs), options);
    };
  }
  throw ValidationError("sweep family: unknown type \"" + type + "\" (expected complete, bernoulli, paired or tiled)");
}

}  // namespace

LoadedScenario load_scenario(const std::string& path, std::optional<std::uint64_t> seed_override) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": malformed JSON (" + std::string(e.what()) + ")");
  }
  const std::filesystem::path dir = std::filesystem::path(path).parent_path();
  LoadedScenario out;
  try {
    if (j.contains("sweep")) {
      require_keys(j, {"sweep", "base", "tail", "base_covariates", "tail_covariates", "estimator", "contrast", "wls_weights"}, "scenario");
      const json& s = j.at("sweep");
      require_keys(s, {"ns", "family", "cap"}, "sweep");
      LoadedScenario::Sweep sweep;
      for (const auto& n : s.at("ns")) sweep.ns.push_back(n.get<int>());
      sweep.family = family_of(s.at("family"), s.contains("cap") ? number_of(s.at("cap"), "cap") : 1e6);
      sweep.estimator = estimator_of(j, nullptr, dir);
      // Outcome lists are given per arm; the population stores units as rows.
      sweep.population.base = rows_of(j.at("base"), "base").transpose();
      if (j.contains("tail")) sweep.population.tail = rows_of(j.at("tail"), "tail").transpose();
      if (j.contains("base_covariates")) sweep.population.base_covariates = rows_of(j.at("base_covariates"), "base_covariates");
      if (j.contains("tail_covariates")) sweep.population.tail_covariates = rows_of(j.at("tail_covariates"), "tail_covariates");
      out.sweep = std::move(sweep);
      return out;
    }
    require_keys(j,
                 {"design", "design_file", "outcomes", "outcomes_file", "estimator", "contrast", "covariates", "covariates_file",
                  "wls_weights", "bound", "algm", "mode", "replicates", "seed"},
                 "scenario");
    const std::string mode = j.value("mode", std::string("exact"));
    if (mode != "exact" && mode != "mc") throw ValidationError("scenario: \"mode\" must be \"exact\" or \"mc\"");
    std::optional<std::uint64_t> seed = seed_override;
    if (!seed && j.contains("seed")) seed = j.at("seed").get<std::uint64_t>();

    ParsedDesign parsed = design_of(j, dir);
    if (parsed.options.allow_monte_carlo && !parsed.options.seed) parsed.options.seed = seed;
    Design design = build_design(parsed.spec, parsed.options);
    const IndexLayout layout = design.layout();

    PotentialOutcomes y{layout, Eigen::VectorXd()};
    if (j.contains("outcomes_file")) {
      y = read_outcomes_csv_file(resolve(dir, j.at("outcomes_file").get<std::string>()), layout);
    } else if (j.contains("outcomes")) {
      const Eigen::MatrixXd rows = rows_of(j.at("outcomes"), "outcomes");
      if (rows.rows() != layout.arms() || rows.cols() != layout.units()) {
        throw LayoutMismatch("scenario outcomes must be k = " + std::to_string(layout.arms()) + " lists of n = " +
                             std::to_string(layout.units()) + " values");
      }
      y.y.resize(layout.size());
      for (int r = 0; r < layout.arms(); ++r) y.y.segment(r * layout.units(), layout.units()) = rows.row(r).transpose();
    } else {
      throw ValidationError("scenario: missing \"outcomes\" or \"outcomes_file\"");
    }

    EstimatorSpec spec = estimator_of(j, &layout, dir);
    if (j.contains("covariates_file")) {
      spec.covariates = expand_covariates(read_covariates_csv_file(resolve(dir, j.at("covariates_file").get<std::string>()), layout.units()), layout);
    } else if (j.contains("covariates")) {
      spec.covariates = expand_covariates(rows_of(j.at("covariates"), "covariates"), layout);
    }

    AlgorithmMOptions algm;
    if (j.contains("algm")) {
      const json& a = j.at("algm");
      require_keys(a, {"tol", "max_iter", "init"}, "algm");
      algm.tol = a.value("tol", algm.tol);
      algm.max_iter = a.value("max_iter", algm.max_iter);
      const std::string init = a.value("init", std::string("mask"));
      if (init == "neyman") {
        algm.init = AlgorithmMOptions::Init::Neyman;
        algm.contrast = spec.contrast;
      } else if (init != "mask") {
        throw ValidationError("algm: \"init\" must be \"mask\" or \"neyman\"");
      }
    }

    out.run = SimScenario{std::move(design),
                          y,
                          spec,
                          parse_bound_method(j.value("bound", std::string("as"))),
                          std::nullopt,
                          algm,
                          mode == "mc" ? SimMode::MonteCarlo : SimMode::Exact,
                          j.value("replicates", std::int64_t{0}),
                          seed};
    return out;
  } catch (const json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

}  // namespace dbvar::cli
