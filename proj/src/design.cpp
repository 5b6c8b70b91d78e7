#include "dbvar/design.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "dbvar/errors.hpp"
#include "moment_cache.hpp"

namespace dbvar {

namespace {

std::string unit_label(int unit) { return "unit " + std::to_string(unit + 1); }

// Multinomial coefficient m! / prod(counts!), saturating to +inf.
double multinomial(const std::vector<int>& counts) {
  long double total = 1.0L;
  int placed = 0;
  for (int c : counts) {
    for (int j = 1; j <= c; ++j) {
      total = total * static_cast<long double>(placed + j) / static_cast<long double>(j);
      if (total > 1e300L) return std::numeric_limits<double>::infinity();
    }
    placed += c;
  }
  return static_cast<double>(std::round(total));
}

std::int64_t lcm_checked(std::int64_t a, std::int64_t b) {
  std::int64_t g = std::gcd(a, b);
  __int128 v = static_cast<__int128>(a / g) * b;
  if (v > std::numeric_limits<std::int64_t>::max()) throw RationalOverflow("lcm overflow");
  return static_cast<std::int64_t>(v);
}

// Fills prob/weight for an enumerated component and validates the total.
void set_support_probabilities(Component& comp, const std::vector<Probability>& probs, const std::string& what) {
  comp.prob.clear();
  comp.weight.clear();
  comp.total_weight = 0;
  bool all_exact = true;
  double total = 0.0;
  for (const auto& p : probs) {
    if (!(p.value > 0.0) || p.value > 1.0 || !std::isfinite(p.value)) {
      throw InfeasibleDesign(what + ": support probabilities must lie in (0,1]");
    }
    if (p.exact && !(Rational(0) < *p.exact)) throw InfeasibleDesign(what + ": support probabilities must be positive");
    comp.prob.push_back(p.value);
    total += p.value;
    all_exact = all_exact && p.exact.has_value();
  }
  if (all_exact) {
    try {
      std::int64_t l = 1;
      for (const auto& p : probs) l = lcm_checked(l, p.exact->den());
      std::int64_t sum = 0;
      for (const auto& p : probs) {
        std::int64_t w = static_cast<std::int64_t>(static_cast<__int128>(p.exact->num()) * (l / p.exact->den()));
        comp.weight.push_back(w);
        if (__builtin_add_overflow(sum, w, &sum)) throw RationalOverflow("weight overflow");
      }
      if (sum != l) throw InfeasibleDesign(what + ": support probabilities sum to " + std::to_string(sum) + "/" +
                                           std::to_string(l) + ", not 1");
      comp.total_weight = l;
      return;
    } catch (const RationalOverflow&) {
      comp.weight.clear();
      comp.total_weight = 0;
    }
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw InfeasibleDesign(what + ": support probabilities sum to " + std::to_string(total) + ", not 1");
  }
}

// Every slot must have every arm with probability strictly inside (0,1).
void check_identified(const Component& comp, int k) {
  const int m = static_cast<int>(comp.slots.size());
  auto fail = [&](int slot, int arm) {
    throw NonIdentifiedDesign(unit_label(comp.slots[static_cast<std::size_t>(slot)].front()) + " has probability 0 or 1 of arm " +
                              std::to_string(arm + 1) + " (design not identified)");
  };
  if (comp.is_complete()) {
    for (int r = 0; r < k; ++r) {
      if (comp.counts[static_cast<std::size_t>(r)] == 0 || comp.counts[static_cast<std::size_t>(r)] == m) fail(0, r);
    }
    return;
  }
  for (int s = 0; s < m; ++s) {
    std::vector<char> seen(static_cast<std::size_t>(k), 0);
    for (const auto& point : comp.support) seen[static_cast<std::size_t>(point[static_cast<std::size_t>(s)])] = 1;
    for (int r = 0; r < k; ++r) {
      if (!seen[static_cast<std::size_t>(r)]) fail(s, r);
    }
  }
}

std::vector<int> arms_of_counts(const std::vector<int>& counts) {
  std::vector<int> arms;
  for (std::size_t r = 0; r < counts.size(); ++r) arms.insert(arms.end(), static_cast<std::size_t>(counts[r]), static_cast<int>(r));
  return arms;
}

// Replace slot indices of a sub-design by the unit sets they stand for.
Component remap(Component comp, const std::vector<std::vector<int>>& index_units) {
  for (auto& slot : comp.slots) {
    std::vector<int> units;
    for (int idx : slot) {
      const auto& u = index_units[static_cast<std::size_t>(idx)];
      units.insert(units.end(), u.begin(), u.end());
    }
    slot = std::move(units);
  }
  return comp;
}

std::vector<int> check_partition(const std::vector<std::vector<int>>& groups, int n, const std::string& what) {
  std::vector<int> owner(static_cast<std::size_t>(n), -1);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) throw InfeasibleDesign(what + " " + std::to_string(g + 1) + " is empty");
    for (int u : groups[g]) {
      if (u < 0 || u >= n) throw InfeasibleDesign(what + " refers to " + unit_label(u) + " outside 1.." + std::to_string(n));
      if (owner[static_cast<std::size_t>(u)] != -1) throw InfeasibleDesign(unit_label(u) + " appears in more than one " + what);
      owner[static_cast<std::size_t>(u)] = static_cast<int>(g);
    }
  }
  for (int u = 0; u < n; ++u) {
    if (owner[static_cast<std::size_t>(u)] == -1) throw InfeasibleDesign(unit_label(u) + " is not covered by any " + what);
  }
  return owner;
}

std::vector<Component> build_components(const DesignSpec& spec) {
  const int k = spec.k;
  const int n = spec.n;
  (void)IndexLayout(k, n);
  std::vector<Component> out;

  if (const auto* b = std::get_if<BernoulliSpec>(&spec.kind)) {
    if (static_cast<int>(b->probs.size()) != n) throw InfeasibleDesign("bernoulli design needs probabilities for all " + std::to_string(n) + " units");
    for (int i = 0; i < n; ++i) {
      const auto& row = b->probs[static_cast<std::size_t>(i)];
      if (static_cast<int>(row.size()) != k) throw InfeasibleDesign(unit_label(i) + ": expected " + std::to_string(k) + " arm probabilities");
      Component comp;
      comp.slots = {{i}};
      std::vector<Probability> kept;
      for (int r = 0; r < k; ++r) {
        const auto& p = row[static_cast<std::size_t>(r)];
        if (p.value < 0.0 || p.value > 1.0 || !std::isfinite(p.value)) throw InfeasibleDesign(unit_label(i) + ": probability outside [0,1]");
        if (p.value == 0.0) continue;
        comp.support.push_back({r});
        kept.push_back(p);
      }
      set_support_probabilities(comp, kept, unit_label(i));
      out.push_back(std::move(comp));
    }
  } else if (const auto* c = std::get_if<CompleteSpec>(&spec.kind)) {
    if (static_cast<int>(c->counts.size()) != k) throw InfeasibleDesign("complete design needs one count per arm");
    int total = 0;
    for (int v : c->counts) {
      if (v < 0) throw InfeasibleDesign("complete design counts must be non-negative");
      total += v;
    }
    if (total != n) throw InfeasibleDesign("complete design counts sum to " + std::to_string(total) + ", expected n = " + std::to_string(n));
    Component comp;
    for (int i = 0; i < n; ++i) comp.slots.push_back({i});
    comp.counts = c->counts;
    out.push_back(std::move(comp));
  } else if (const auto* pr = std::get_if<PairedSpec>(&spec.kind)) {
    if (k != 2) throw InfeasibleDesign("paired design requires k = 2");
    std::vector<std::vector<int>> groups;
    for (auto [a, b] : pr->pairs) groups.push_back({a, b});
    check_partition(groups, n, "pair");
    for (auto [a, b] : pr->pairs) {
      if (a == b) throw InfeasibleDesign("pair repeats " + unit_label(a));
      Component comp;
      comp.slots = {{a}, {b}};
      comp.support = {{0, 1}, {1, 0}};
      set_support_probabilities(comp, {Probability::of(Rational(1, 2)), Probability::of(Rational(1, 2))}, "pair");
      out.push_back(std::move(comp));
    }
  } else if (const auto* bl = std::get_if<BlockSpec>(&spec.kind)) {
    if (bl->units.size() != bl->designs.size()) throw InfeasibleDesign("block design needs one sub-design per block");
    check_partition(bl->units, n, "block");
    for (std::size_t g = 0; g < bl->units.size(); ++g) {
      const auto& sub = bl->designs[g];
      if (sub.k != k) throw InfeasibleDesign("block " + std::to_string(g + 1) + " has a different arm count");
      if (sub.n != static_cast<int>(bl->units[g].size())) {
        throw InfeasibleDesign("block " + std::to_string(g + 1) + " sub-design has n = " + std::to_string(sub.n) + " but " +
                               std::to_string(bl->units[g].size()) + " units");
      }
      std::vector<std::vector<int>> index_units;
      for (int u : bl->units[g]) index_units.push_back({u});
      for (auto& comp : build_components(sub)) out.push_back(remap(std::move(comp), index_units));
    }
  } else if (const auto* cl = std::get_if<ClusterSpec>(&spec.kind)) {
    if (!cl->cluster_design) throw InfeasibleDesign("cluster design needs a cluster-level design");
    if (static_cast<int>(cl->cluster_of_unit.size()) != n) throw InfeasibleDesign("cluster map must list all " + std::to_string(n) + " units");
    int m = 0;
    for (int g : cl->cluster_of_unit) {
      if (g < 0) throw InfeasibleDesign("cluster ids must be positive");
      m = std::max(m, g + 1);
    }
    std::vector<std::vector<int>> members(static_cast<std::size_t>(m));
    for (int i = 0; i < n; ++i) members[static_cast<std::size_t>(cl->cluster_of_unit[static_cast<std::size_t>(i)])].push_back(i);
    for (int g = 0; g < m; ++g) {
      if (members[static_cast<std::size_t>(g)].empty()) throw InfeasibleDesign("cluster " + std::to_string(g + 1) + " has no units");
    }
    const auto& sub = *cl->cluster_design;
    if (sub.k != k) throw InfeasibleDesign("cluster-level design has a different arm count");
    if (sub.n != m) throw InfeasibleDesign("cluster-level design has n = " + std::to_string(sub.n) + " but there are " + std::to_string(m) + " clusters");
    for (auto& comp : build_components(sub)) out.push_back(remap(std::move(comp), members));
  } else if (const auto* cu = std::get_if<CustomSpec>(&spec.kind)) {
    if (cu->support.empty()) throw InfeasibleDesign("custom design has an empty support");
    Component comp;
    for (int i = 0; i < n; ++i) comp.slots.push_back({i});
    std::vector<Probability> probs;
    for (const auto& point : cu->support) {
      if (static_cast<int>(point.arms.size()) != n) throw InfeasibleDesign("custom support point must assign all " + std::to_string(n) + " units");
      for (int a : point.arms) {
        if (a < 0 || a >= k) throw InfeasibleDesign("custom support point uses arm outside 1.." + std::to_string(k));
      }
      comp.support.push_back(point.arms);
      probs.push_back(point.prob);
    }
    set_support_probabilities(comp, probs, "custom support");
    out.push_back(std::move(comp));
  }
  for (const auto& comp : out) check_identified(comp, k);
  return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Materialized support of a component: local arm rows and probabilities.
struct ComponentSupport {
  std::vector<std::vector<int>> rows;
  std::vector<double> prob;
};

ComponentSupport materialize(const Component& comp) {
  if (!comp.is_complete()) return {comp.support, comp.prob};
  ComponentSupport out;
  std::vector<int> arms = arms_of_counts(comp.counts);
  do {
    out.rows.push_back(arms);
  } while (std::next_permutation(arms.begin(), arms.end()));
  out.prob.assign(out.rows.size(), 1.0 / static_cast<double>(out.rows.size()));
  return out;
}

}  // namespace

double Component::support_size() const { return is_complete() ? multinomial(counts) : static_cast<double>(support.size()); }

DesignSpec bernoulli_spec(int k, int n, const std::vector<Probability>& arm_probs) {
  return {k, n, BernoulliSpec{std::vector<std::vector<Probability>>(static_cast<std::size_t>(n), arm_probs)}};
}

DesignSpec complete_spec(std::vector<int> counts) {
  int n = std::accumulate(counts.begin(), counts.end(), 0);
  int k = static_cast<int>(counts.size());
  return {k, n, CompleteSpec{std::move(counts)}};
}

DesignSpec paired_spec(int n, std::vector<std::pair<int, int>> pairs) { return {2, n, PairedSpec{std::move(pairs)}}; }

DesignSpec block_spec(int k, std::vector<std::vector<int>> units, std::vector<DesignSpec> designs) {
  int n = 0;
  for (const auto& u : units) n += static_cast<int>(u.size());
  return {k, n, BlockSpec{std::move(units), std::move(designs)}};
}

DesignSpec cluster_spec(std::vector<int> cluster_of_unit, DesignSpec cluster_design) {
  int n = static_cast<int>(cluster_of_unit.size());
  int k = cluster_design.k;
  return {k, n, ClusterSpec{std::move(cluster_of_unit), std::make_shared<const DesignSpec>(std::move(cluster_design))}};
}

DesignSpec custom_spec(int k, int n, std::vector<SupportPoint> support) { return {k, n, CustomSpec{std::move(support)}}; }

std::uint64_t replicate_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

Design::Design(IndexLayout layout, std::vector<Component> components, const DesignOptions& options)
    : layout_(layout),
      components_(std::move(components)),
      mc_replicates_(options.mc_replicates),
      seed_(options.seed),
      cache_(std::make_shared<MomentCache>()) {
  double size = 1.0;
  for (const auto& comp : components_) size *= comp.support_size();
  support_size_ = size;
  const bool fits = size <= options.support_cap;
  if (fits && !options.force_monte_carlo) {
    mode_ = DesignMode::Exact;
  } else if (options.allow_monte_carlo || options.force_monte_carlo) {
    if (!seed_) throw ValidationError("monte-carlo mode requires a seed");
    if (mc_replicates_ <= 0) throw ValidationError("monte-carlo mode requires a positive replicate count");
    mode_ = DesignMode::MonteCarlo;
  } else {
    throw SupportOverflow("design support size " + std::to_string(size) + " exceeds the cap " +
                          std::to_string(options.support_cap) + " and monte-carlo mode was not enabled");
  }
}

Design Design::from_sampler(IndexLayout layout, Sampler sampler, std::int64_t replicates, std::uint64_t seed) {
  DesignOptions options;
  options.force_monte_carlo = true;
  options.mc_replicates = replicates;
  options.seed = seed;
  Design d(layout, {}, options);
  d.support_size_ = std::numeric_limits<double>::infinity();
  d.sampler_ = std::move(sampler);
  return d;
}

void Design::for_each_assignment(const Visitor& fn) const {
  if (mode_ != DesignMode::Exact) throw ValidationError("support enumeration requires an exact-mode design");
  std::vector<ComponentSupport> supports;
  supports.reserve(components_.size());
  for (const auto& comp : components_) supports.push_back(materialize(comp));

  Assignment current(layout_, std::vector<int>(static_cast<std::size_t>(layout_.units()), 0));
  std::vector<std::size_t> pos(components_.size(), 0);
  auto apply = [&](std::size_t c) {
    const auto& row = supports[c].rows[pos[c]];
    const auto& slots = components_[c].slots;
    for (std::size_t s = 0; s < slots.size(); ++s) {
      for (int u : slots[s]) current.set_arm(u, row[s]);
    }
  };
  for (std::size_t c = 0; c < components_.size(); ++c) apply(c);
  while (true) {
    double prob = 1.0;
    for (std::size_t c = 0; c < components_.size(); ++c) prob *= supports[c].prob[pos[c]];
    fn(current, prob);
    std::size_t c = 0;
    for (; c < components_.size(); ++c) {
      if (++pos[c] < supports[c].rows.size()) {
        apply(c);
        break;
      }
      pos[c] = 0;
      apply(c);
    }
    if (c == components_.size()) break;
  }
}

std::vector<std::pair<Assignment, double>> Design::enumerate() const {
  std::vector<std::pair<Assignment, double>> out;
  for_each_assignment([&](const Assignment& a, double p) { out.emplace_back(a, p); });
  return out;
}

Assignment Design::draw(std::uint64_t seed) const {
  if (sampler_) return sampler_(seed);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<int> arms(static_cast<std::size_t>(layout_.units()), 0);
  for (const auto& comp : components_) {
    std::vector<int> row;
    if (comp.is_complete()) {
      row = arms_of_counts(comp.counts);
      std::shuffle(row.begin(), row.end(), rng);
    } else {
      double u = unif(rng);
      std::size_t pick = comp.prob.size() - 1;
      double acc = 0.0;
      for (std::size_t j = 0; j < comp.prob.size(); ++j) {
        acc += comp.prob[j];
        if (u < acc) {
          pick = j;
          break;
        }
      }
      row = comp.support[pick];
    }
    for (std::size_t s = 0; s < comp.slots.size(); ++s) {
      for (int u : comp.slots[s]) arms[static_cast<std::size_t>(u)] = row[s];
    }
  }
  return Assignment(layout_, std::move(arms));
}

Design build_design(const DesignSpec& spec, const DesignOptions& options) {
  IndexLayout layout(spec.k, spec.n);
  return Design(layout, build_components(spec), options);
}

}  // namespace dbvar
