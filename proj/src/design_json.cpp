#include "dbvar/design_json.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dbvar/errors.hpp"

namespace dbvar {

namespace {

using nlohmann::json;

void require_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) throw ValidationError(where + ": unknown field \"" + it.key() + "\"");
  }
}

int get_int(const json& j, const char* key, const std::string& where) {
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw ValidationError(where + ": \"" + key + "\" must be an integer");
  return v.get<int>();
}

// Dyadic doubles such as 0.5 or 0.25 are exact fractions; keep them exact.
Probability probability_of_double(double x) {
  for (std::int64_t den = 1; den <= (std::int64_t{1} << 30); den *= 2) {
    double scaled = x * static_cast<double>(den);
    if (scaled == std::floor(scaled) && std::abs(scaled) < 9e15) {
      return Probability::of(Rational(static_cast<std::int64_t>(scaled), den));
    }
  }
  return Probability::of(x);
}

Probability parse_probability(const json& v, const std::string& where) {
  if (v.is_number()) return probability_of_double(v.get<double>());
  if (v.is_string()) {
    auto r = Rational::parse(v.get<std::string>());
    if (!r) throw ValidationError(where + ": cannot parse probability \"" + v.get<std::string>() + "\"");
    return Probability::of(*r);
  }
  throw ValidationError(where + ": probability must be a number or an \"a/b\" string");
}

std::vector<Probability> parse_prob_list(const json& v, int k, const std::string& where) {
  if (!v.is_array() || static_cast<int>(v.size()) != k) {
    throw ValidationError(where + ": expected a list of " + std::to_string(k) + " probabilities");
  }
  std::vector<Probability> out;
  for (const auto& e : v) out.push_back(parse_probability(e, where));
  return out;
}

std::vector<int> parse_ids(const json& v, const std::string& where) {
  if (!v.is_array()) throw ValidationError(where + ": expected a list of 1-based ids");
  std::vector<int> out;
  for (const auto& e : v) {
    if (!e.is_number_integer() || e.get<int>() < 1) throw ValidationError(where + ": ids must be positive integers");
    out.push_back(e.get<int>() - 1);
  }
  return out;
}

DesignSpec parse_spec(const json& j, std::optional<int> k_default, std::optional<int> n_default, const std::string& where,
                      bool top_level) {
  if (!j.is_object()) throw ValidationError(where + ": design must be a JSON object");
  if (!j.contains("type") || !j.at("type").is_string()) throw ValidationError(where + ": missing string field \"type\"");
  const std::string type = j.at("type").get<std::string>();
  std::set<std::string> common = {"type", "k", "n"};
  if (top_level) common.insert({"mode", "mc_replicates", "seed", "cap"});

  DesignSpec spec;
  spec.k = j.contains("k") ? get_int(j, "k", where) : k_default.value_or(2);
  if (j.contains("n")) {
    spec.n = get_int(j, "n", where);
  } else if (n_default) {
    spec.n = *n_default;
  } else if (type == "complete" && j.contains("counts") && j.at("counts").is_array()) {
    spec.n = 0;
    for (const auto& c : j.at("counts")) spec.n += c.is_number_integer() ? c.get<int>() : 0;
  } else if (type == "cluster" && j.contains("clusters") && j.at("clusters").is_array()) {
    spec.n = static_cast<int>(j.at("clusters").size());
  } else {
    throw ValidationError(where + ": missing field \"n\"");
  }
  if (spec.k < 2) throw ValidationError(where + ": k must be at least 2");
  if (spec.n < 1) throw ValidationError(where + ": n must be at least 1");

  auto allow = [&](std::initializer_list<const char*> extra) {
    auto keys = common;
    for (const char* e : extra) keys.insert(e);
    require_keys(j, keys, where);
  };

  if (type == "bernoulli") {
    allow({"p", "arm_probs", "probs"});
    BernoulliSpec b;
    if (j.contains("probs")) {
      const auto& rows = j.at("probs");
      if (!rows.is_array() || static_cast<int>(rows.size()) != spec.n) {
        throw ValidationError(where + ": \"probs\" must list " + std::to_string(spec.n) + " rows");
      }
      for (const auto& row : rows) b.probs.push_back(parse_prob_list(row, spec.k, where));
    } else if (j.contains("arm_probs")) {
      b.probs.assign(static_cast<std::size_t>(spec.n), parse_prob_list(j.at("arm_probs"), spec.k, where));
    } else if (j.contains("p")) {
      if (spec.k != 2) throw ValidationError(where + ": \"p\" is only valid for k = 2; use \"arm_probs\"");
      Probability p = parse_probability(j.at("p"), where);
      Probability q = p.exact ? Probability::of(Rational(1) - *p.exact) : Probability::of(1.0 - p.value);
      b.probs.assign(static_cast<std::size_t>(spec.n), {q, p});
    } else {
      throw ValidationError(where + ": bernoulli design needs \"p\", \"arm_probs\" or \"probs\"");
    }
    spec.kind = std::move(b);
  } else if (type == "complete") {
    allow({"counts", "n_t"});
    CompleteSpec c;
    if (j.contains("counts")) {
      const auto& v = j.at("counts");
      if (!v.is_array()) throw ValidationError(where + ": \"counts\" must be a list");
      for (const auto& e : v) {
        if (!e.is_number_integer()) throw ValidationError(where + ": counts must be integers");
        c.counts.push_back(e.get<int>());
      }
    } else if (j.contains("n_t")) {
      if (spec.k != 2) throw ValidationError(where + ": \"n_t\" is only valid for k = 2; use \"counts\"");
      int nt = get_int(j, "n_t", where);
      c.counts = {spec.n - nt, nt};
    } else {
      throw ValidationError(where + ": complete design needs \"counts\" or \"n_t\"");
    }
    spec.kind = std::move(c);
  } else if (type == "paired") {
    allow({"pairs"});
    PairedSpec p;
    const auto& v = j.at("pairs");
    if (!v.is_array()) throw ValidationError(where + ": \"pairs\" must be a list");
    for (const auto& pr : v) {
      auto ids = parse_ids(pr, where + " pair");
      if (ids.size() != 2) throw ValidationError(where + ": each pair must list two unit ids");
      p.pairs.emplace_back(ids[0], ids[1]);
    }
    spec.kind = std::move(p);
  } else if (type == "block") {
    allow({"blocks"});
    BlockSpec b;
    const auto& v = j.at("blocks");
    if (!v.is_array()) throw ValidationError(where + ": \"blocks\" must be a list");
    for (std::size_t g = 0; g < v.size(); ++g) {
      const std::string bw = where + " block " + std::to_string(g + 1);
      require_keys(v[g], {"units", "design"}, bw);
      b.units.push_back(parse_ids(v[g].at("units"), bw));
      b.designs.push_back(parse_spec(v[g].at("design"), spec.k, static_cast<int>(b.units.back().size()), bw, false));
    }
    spec.kind = std::move(b);
  } else if (type == "cluster") {
    allow({"clusters", "design"});
    ClusterSpec c;
    c.cluster_of_unit = parse_ids(j.at("clusters"), where + " clusters");
    int m = 0;
    for (int g : c.cluster_of_unit) m = std::max(m, g + 1);
    c.cluster_design = std::make_shared<const DesignSpec>(parse_spec(j.at("design"), spec.k, m, where + " cluster design", false));
    spec.kind = std::move(c);
  } else if (type == "custom") {
    allow({"support"});
    CustomSpec c;
    const auto& v = j.at("support");
    if (!v.is_array()) throw ValidationError(where + ": \"support\" must be a list");
    for (const auto& point : v) {
      require_keys(point, {"arms", "prob"}, where + " support point");
      c.support.push_back({parse_ids(point.at("arms"), where + " support arms"), parse_probability(point.at("prob"), where)});
    }
    spec.kind = std::move(c);
  } else {
    throw ValidationError(where + ": unknown design type \"" + type + "\"");
  }
  return spec;
}

std::pair<int, int> line_column(std::string_view text, std::size_t byte) {
  int line = 1;
  int col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

ParsedDesign parse_design_text(std::string_view text) {
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    // The reported byte is one past the offending character.
    auto [line, col] = line_column(text, e.byte > 0 ? e.byte - 1 : 0);
    throw ValidationError("malformed JSON at line " + std::to_string(line) + ", column " + std::to_string(col));
  }
  try {
    ParsedDesign out{parse_spec(j, std::nullopt, std::nullopt, "design", true), {}};
    if (j.contains("cap")) {
      if (!j.at("cap").is_number() || j.at("cap").get<double>() < 1) throw ValidationError("design: \"cap\" must be a positive number");
      out.options.support_cap = j.at("cap").get<double>();
    }
    if (j.contains("mode")) {
      const std::string mode = j.at("mode").is_string() ? j.at("mode").get<std::string>() : "";
      if (mode == "mc") {
        out.options.allow_monte_carlo = true;
      } else if (mode != "exact") {
        throw ValidationError("design: \"mode\" must be \"exact\" or \"mc\"");
      }
    }
    if (j.contains("mc_replicates")) {
      if (!j.at("mc_replicates").is_number_integer()) throw ValidationError("design: \"mc_replicates\" must be an integer");
      out.options.mc_replicates = j.at("mc_replicates").get<std::int64_t>();
    }
    if (j.contains("seed")) {
      if (!j.at("seed").is_number_unsigned()) throw ValidationError("design: \"seed\" must be a non-negative integer");
      out.options.seed = j.at("seed").get<std::uint64_t>();
    }
    return out;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("design: ") + e.what());
  }
}

ParsedDesign load_design_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_design_text(buffer.str());
}

}  // namespace dbvar
