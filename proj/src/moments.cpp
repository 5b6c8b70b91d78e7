#include <cmath>
#include <string>

#include "dbvar/design.hpp"
#include "dbvar/errors.hpp"
#include "moment_cache.hpp"
#include "parallel.hpp"

namespace dbvar {

namespace {

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;
using CountVector = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>;

// First and second moments of one component at slot level, index r * m + s.
struct SlotMoments {
  bool exact = false;
  std::int64_t total = 0;
  CountVector ca;
  CountMatrix cab;
  Eigen::VectorXd a;
  Eigen::MatrixXd pab;
};

SlotMoments slot_moments(const Component& comp, int k) {
  const int m = static_cast<int>(comp.slots.size());
  const int km = k * m;
  SlotMoments out;
  if (comp.is_complete()) {
    out.exact = true;
    out.total = static_cast<std::int64_t>(m) * (m - 1);
    out.ca.resize(km);
    out.cab.setZero(km, km);
    for (int r = 0; r < k; ++r) {
      const std::int64_t nr = comp.counts[static_cast<std::size_t>(r)];
      for (int s = 0; s < m; ++s) out.ca(r * m + s) = nr * (m - 1);
      for (int q = 0; q < k; ++q) {
        const std::int64_t nq = comp.counts[static_cast<std::size_t>(q)];
        const std::int64_t joint = r == q ? nr * (nr - 1) : nr * nq;
        for (int s = 0; s < m; ++s) {
          for (int t = 0; t < m; ++t) {
            if (s != t) out.cab(r * m + s, q * m + t) = joint;
          }
        }
      }
    }
    return out;
  }
  if (comp.total_weight > 0) {
    out.exact = true;
    out.total = comp.total_weight;
    out.ca.setZero(km);
    out.cab.setZero(km, km);
    for (std::size_t j = 0; j < comp.support.size(); ++j) {
      const auto& row = comp.support[j];
      const std::int64_t w = comp.weight[j];
      for (int s = 0; s < m; ++s) {
        const int a = row[static_cast<std::size_t>(s)] * m + s;
        out.ca(a) += w;
        for (int t = 0; t < m; ++t) out.cab(a, row[static_cast<std::size_t>(t)] * m + t) += w;
      }
    }
    return out;
  }
  out.a.setZero(km);
  out.pab.setZero(km, km);
  for (std::size_t j = 0; j < comp.support.size(); ++j) {
    const auto& row = comp.support[j];
    const double w = comp.prob[j];
    for (int s = 0; s < m; ++s) {
      const int a = row[static_cast<std::size_t>(s)] * m + s;
      out.a(a) += w;
      for (int t = 0; t < m; ++t) out.pab(a, row[static_cast<std::size_t>(t)] * m + t) += w;
    }
  }
  return out;
}

// Writes p, d and mask for one pair of flat indices from integer counts.
void set_from_counts(DesignMoments& mo, int a, int b, std::int64_t cab, std::int64_t ca, std::int64_t cb, std::int64_t total) {
  mo.p(a, b) = ratio_to_double(cab, total);
  if (cab == 0) {
    mo.mask(a, b) = 1.0;
    mo.d(a, b) = -1.0;
  } else {
    const __int128 den = static_cast<__int128>(ca) * cb;
    mo.d(a, b) = ratio_to_double(static_cast<__int128>(cab) * total - den, den);
  }
}

void set_from_doubles(DesignMoments& mo, int a, int b, double pab) {
  mo.p(a, b) = pab;
  if (pab == 0.0) {
    mo.mask(a, b) = 1.0;
    mo.d(a, b) = -1.0;
  } else {
    const double outer = mo.pi(a) * mo.pi(b);
    mo.d(a, b) = (pab - outer) / outer;
  }
}

void init(DesignMoments& mo, int size) {
  mo.pi = Eigen::VectorXd::Zero(size);
  mo.p = Eigen::MatrixXd::Zero(size, size);
  mo.d = Eigen::MatrixXd::Zero(size, size);
  mo.mask = Eigen::MatrixXd::Zero(size, size);
}

DesignMoments exact_moments(const IndexLayout& layout, const std::vector<Component>& components) {
  const int k = layout.arms();
  const int n = layout.units();
  DesignMoments mo;
  init(mo, layout.size());

  struct Local {
    int component;
    int slot;
  };
  std::vector<Local> where(static_cast<std::size_t>(n));
  std::vector<SlotMoments> sm;
  for (std::size_t c = 0; c < components.size(); ++c) {
    sm.push_back(slot_moments(components[c], k));
    for (std::size_t s = 0; s < components[c].slots.size(); ++s) {
      for (int u : components[c].slots[s]) where[static_cast<std::size_t>(u)] = {static_cast<int>(c), static_cast<int>(s)};
    }
  }
  auto slot_index = [&](int arm, const Local& l) {
    return arm * static_cast<int>(components[static_cast<std::size_t>(l.component)].slots.size()) + l.slot;
  };

  for (int a = 0; a < layout.size(); ++a) {
    const Local& la = where[static_cast<std::size_t>(layout.unit_of(a))];
    const SlotMoments& m = sm[static_cast<std::size_t>(la.component)];
    const int qa = slot_index(layout.arm_of(a), la);
    mo.pi(a) = m.exact ? ratio_to_double(m.ca(qa), m.total) : m.a(qa);
  }

  for (int a = 0; a < layout.size(); ++a) {
    const int ra = layout.arm_of(a);
    const Local& la = where[static_cast<std::size_t>(layout.unit_of(a))];
    const SlotMoments& m = sm[static_cast<std::size_t>(la.component)];
    const int qa = slot_index(ra, la);
    for (int b = 0; b < layout.size(); ++b) {
      const int rb = layout.arm_of(b);
      const Local& lb = where[static_cast<std::size_t>(layout.unit_of(b))];
      if (lb.component != la.component) {
        // Independent components: p factorizes and d vanishes.
        mo.p(a, b) = mo.pi(a) * mo.pi(b);
        continue;
      }
      const int qb = slot_index(rb, lb);
      const bool same_slot = lb.slot == la.slot;
      if (m.exact) {
        const std::int64_t cab = same_slot ? (ra == rb ? m.ca(qa) : 0) : m.cab(qa, qb);
        set_from_counts(mo, a, b, cab, m.ca(qa), m.ca(qb), m.total);
      } else {
        const double pab = same_slot ? (ra == rb ? m.a(qa) : 0.0) : m.pab(qa, qb);
        set_from_doubles(mo, a, b, pab);
      }
    }
  }
  return mo;
}

DesignMoments monte_carlo_moments(const Design& design) {
  const IndexLayout& layout = design.layout();
  const int size = layout.size();
  const std::int64_t reps = design.mc_replicates();
  const std::uint64_t master = *design.seed();
  const int workers = detail::worker_count();
  std::vector<CountMatrix> joint(static_cast<std::size_t>(workers), CountMatrix::Zero(size, size));
  detail::parallel_chunks(reps, 1024, [&](int worker, std::int64_t begin, std::int64_t end) {
    CountMatrix& acc = joint[static_cast<std::size_t>(worker)];
    for (std::int64_t r = begin; r < end; ++r) {
      const Assignment draw = design.draw(replicate_seed(master, static_cast<std::uint64_t>(r)));
      const std::vector<int> active = draw.active();
      for (int a : active) {
        for (int b : active) acc(a, b) += 1;
      }
    }
  });
  CountMatrix total = CountMatrix::Zero(size, size);
  for (const auto& j : joint) total += j;

  DesignMoments mo;
  init(mo, size);
  mo.estimated = true;
  mo.pi_se.resize(size);
  for (int a = 0; a < size; ++a) {
    const std::int64_t ca = total(a, a);
    if (ca == 0 || ca == reps) {
      throw NonIdentifiedDesign("estimated inclusion probability of unit " + std::to_string(layout.unit_of(a) + 1) + ", arm " +
                                std::to_string(layout.arm_of(a) + 1) + " is " + (ca == 0 ? "0" : "1") +
                                " over " + std::to_string(reps) + " replicates");
    }
    mo.pi(a) = ratio_to_double(ca, reps);
    mo.pi_se(a) = std::sqrt(mo.pi(a) * (1.0 - mo.pi(a)) / static_cast<double>(reps));
  }
  for (int a = 0; a < size; ++a) {
    for (int b = 0; b < size; ++b) set_from_counts(mo, a, b, total(a, b), total(a, a), total(b, b), reps);
  }
  return mo;
}

}  // namespace

const DesignMoments& Design::moments() const {
  std::call_once(cache_->once, [&] {
    cache_->value = mode_ == DesignMode::Exact ? exact_moments(layout_, components_) : monte_carlo_moments(*this);
  });
  return cache_->value;
}

PiDiagonal inclusion_probabilities(const Design& design) {
  const auto& mo = design.moments();
  return {design.layout(), mo.pi, mo.pi_se, mo.estimated};
}

JointProbMatrix joint_probabilities(const Design& design) {
  const auto& mo = design.moments();
  return {design.layout(), mo.p, mo.estimated};
}

std::pair<DesignMatrix, ImpossibilityMask> first_order_design_matrix(const Design& design) {
  const auto& mo = design.moments();
  return {DesignMatrix{design.layout(), mo.d, mo.estimated}, ImpossibilityMask{design.layout(), mo.mask}};
}

double first_order_condition_norm(const DesignMatrix& d) {
  return d.d.cwiseAbs().sum() / static_cast<double>(d.layout.units());
}

}  // namespace dbvar
