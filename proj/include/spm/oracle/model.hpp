#pragma once

// Finite-support model shared by the exact solvers: symmetry classes, the
// candidate price grid, and Bayes-filtered beliefs over mixture components.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "spm/econ.hpp"
#include "spm/settings.hpp"

namespace spm::oracle {

/// One belief atom: mixture component, accumulated objective (max-min only), mass.
struct Particle {
  int comp = 0;
  double acc = 0.0;
  double w = 0.0;
};

/// Normalized particle list sorted by (comp, acc). For additive objectives the
/// accumulated value is tracked outside the belief and acc stays 0.
using Belief = std::vector<Particle>;

struct Outcome {
  ItemSet bundle;
  double prob = 0.0;
  double reward = 0.0;  // expected immediate objective increment given this outcome
  Belief child;
};

inline bool additive(Objective o) { return o != Objective::maxmin; }

/// Candidate prices: 0, the midpoint of every gap between adjacent distinct
/// values, and one price above the maximum. Revenue grids also contain the values.
inline std::vector<double> price_grid_from_values(std::vector<double> values, bool include_values) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::vector<double> grid{0.0};
  for (std::size_t k = 0; k + 1 < values.size(); ++k) grid.push_back(0.5 * (values[k] + values[k + 1]));
  const double top = values.empty() ? 0.0 : values.back();
  grid.push_back(top > 0.0 ? 2.0 * top : 1.0);
  if (include_values)
    for (double v : values)
      if (v > 0.0) grid.push_back(v);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

inline std::vector<double> singleton_values(const Valuation& v, int m) {
  std::vector<double> out;
  for (int j = 0; j < m; ++j) out.push_back(value_of(v, ItemSet::single(j)));
  return out;
}

class Model {
 public:
  Model(const FiniteSupport& support, Objective objective) : support_(support), objective_(objective) {
    n_ = support_.num_agents();
    m_ = support_.num_items;
    if (n_ < 1) throw InputError("oracle needs at least one agent");
    build_agent_classes();
    build_item_classes();
    for (auto s : agent_members_) agent_bits_.push_back(s.bits());
    for (auto s : item_members_) item_bits_.push_back(s.bits());
    std::vector<double> all;
    for (const auto& c : support_.components)
      for (const auto& a : c.agents)
        for (const auto& v : a.values)
          for (double x : singleton_values(v, m_)) all.push_back(x);
    grid_ = price_grid_from_values(all, objective_ == Objective::revenue);
  }

  int n() const { return n_; }
  int m() const { return m_; }
  Objective objective() const { return objective_; }
  const FiniteSupport& support() const { return support_; }
  const std::vector<double>& grid() const { return grid_; }
  int num_components() const { return static_cast<int>(support_.components.size()); }

  int agent_class(int i) const { return agent_class_[static_cast<std::size_t>(i)]; }
  int num_agent_classes() const { return static_cast<int>(agent_members_.size()); }
  AgentSet agent_class_members(int c) const { return agent_members_[static_cast<std::size_t>(c)]; }
  int item_class(int j) const { return item_class_[static_cast<std::size_t>(j)]; }
  int num_item_classes() const { return static_cast<int>(item_members_.size()); }
  ItemSet item_class_members(int c) const { return item_members_[static_cast<std::size_t>(c)]; }

  Belief prior() const {
    Belief b;
    const double acc0 = additive(objective_) ? 0.0 : std::numeric_limits<double>::infinity();
    for (int c = 0; c < num_components(); ++c) b.push_back({c, acc0, support_.components[static_cast<std::size_t>(c)].weight});
    return b;
  }

  /// Lowest remaining member of each agent class, in increasing id order.
  std::vector<int> representatives(AgentSet s) const {
    std::vector<int> reps;
    for (int c = 0; c < num_agent_classes(); ++c) {
      const AgentSet in = agent_members_[static_cast<std::size_t>(c)] & s;
      if (!in.empty()) reps.push_back(in.lowest());
    }
    std::sort(reps.begin(), reps.end());
    return reps;
  }

  /// Price vector with one grid level per item class (levels of absent classes ignored).
  std::vector<double> prices_from_levels(const std::vector<int>& levels) const {
    std::vector<double> p(static_cast<std::size_t>(m_), 0.0);
    for (int j = 0; j < m_; ++j) p[static_cast<std::size_t>(j)] = grid_[static_cast<std::size_t>(levels[static_cast<std::size_t>(item_class(j))])];
    return p;
  }

  /// All price vectors over the item classes present in `items`, in
  /// lexicographic order of the resulting price vector.
  std::vector<std::vector<double>> price_vectors(ItemSet items) const {
    std::vector<int> present;
    for (int c = 0; c < num_item_classes(); ++c)
      if (!(item_members_[static_cast<std::size_t>(c)] & items).empty()) present.push_back(c);
    // item classes are numbered by their lowest member, so odometer order is lexicographic
    std::vector<int> levels(static_cast<std::size_t>(num_item_classes()), 0);
    std::vector<std::vector<double>> out;
    const int g = static_cast<int>(grid_.size());
    while (true) {
      out.push_back(prices_from_levels(levels));
      int k = static_cast<int>(present.size()) - 1;
      while (k >= 0 && ++levels[static_cast<std::size_t>(present[static_cast<std::size_t>(k)])] == g)
        levels[static_cast<std::size_t>(present[static_cast<std::size_t>(k--)])] = 0;
      if (k < 0) break;
    }
    return out;
  }

  /// Bayes update of the belief for one offer; outcomes sorted by bundle bits.
  std::vector<Outcome> transition(ItemSet items, const Belief& belief, int agent,
                                   const std::vector<double>& prices) const {
    std::vector<Outcome> outs;
    auto slot = [&](ItemSet b) -> Outcome& {
      for (auto& o : outs)
        if (o.bundle == b) return o;
      outs.push_back(Outcome{b, 0.0, 0.0, {}});
      return outs.back();
    };
    for (const auto& p : belief) {
      const Marginal& g = support_.components[static_cast<std::size_t>(p.comp)].agents[static_cast<std::size_t>(agent)];
      for (std::size_t k = 0; k < g.values.size(); ++k) {
        const double mass = p.w * g.probs[k];
        if (mass <= 0.0) continue;
        const Purchase buy = best_response(g.values[k], prices, items);
        Outcome& o = slot(buy.bundle);
        o.prob += mass;
        if (objective_ == Objective::welfare) {
          o.reward += mass * buy.value;
          o.child.push_back({p.comp, 0.0, mass});
        } else if (objective_ == Objective::revenue) {
          o.reward += mass * buy.payment;
          o.child.push_back({p.comp, 0.0, mass});
        } else {
          o.child.push_back({p.comp, std::min(p.acc, buy.value), mass});
        }
      }
    }
    for (auto& o : outs) {
      o.reward /= o.prob;
      for (auto& q : o.child) q.w /= o.prob;
      canonicalize(o.child);
    }
    std::sort(outs.begin(), outs.end(), [](const Outcome& a, const Outcome& b) { return a.bundle.bits() < b.bundle.bits(); });
    return outs;
  }

  /// Objective-to-go once no further sale can happen.
  double terminal_value(AgentSet agents, const Belief& belief) const {
    if (additive(objective_)) return 0.0;
    if (!agents.empty()) return 0.0;  // unvisited agents end with the empty bundle
    double total = 0.0;
    for (const auto& p : belief) total += p.w * p.acc;
    return total;
  }

  static void canonicalize(Belief& b) {
    std::sort(b.begin(), b.end(), [](const Particle& x, const Particle& y) {
      return x.comp != y.comp ? x.comp < y.comp : x.acc < y.acc;
    });
    Belief merged;
    for (const auto& p : b) {
      if (!merged.empty() && merged.back().comp == p.comp && merged.back().acc == p.acc) {
        merged.back().w += p.w;
      } else {
        merged.push_back(p);
      }
    }
    b = std::move(merged);
  }

  /// Canonical key of an agent set: member counts per exchangeable class.
  std::uint64_t agent_key(AgentSet s) const { return class_key(s.bits(), agent_bits_); }
  std::uint64_t item_key(ItemSet s) const { return class_key(s.bits(), item_bits_); }

 private:

  static std::uint64_t class_key(std::uint64_t bits, const std::vector<std::uint64_t>& classes) {
    std::uint64_t key = 0;
    int shift = 0;
    for (std::uint64_t members : classes) {
      const int width = std::bit_width(static_cast<unsigned>(std::popcount(members)));
      key |= static_cast<std::uint64_t>(std::popcount(bits & members)) << shift;
      shift += width;
    }
    return key;
  }

  // Agents are exchangeable when their marginals coincide in every component.
  void build_agent_classes() {
    agent_class_.assign(static_cast<std::size_t>(n_), -1);
    for (int i = 0; i < n_; ++i) {
      if (agent_class_[static_cast<std::size_t>(i)] >= 0) continue;
      const int c = static_cast<int>(agent_members_.size());
      agent_members_.push_back(AgentSet::single(i));
      agent_class_[static_cast<std::size_t>(i)] = c;
      for (int k = i + 1; k < n_; ++k) {
        if (agent_class_[static_cast<std::size_t>(k)] >= 0) continue;
        bool same = true;
        for (const auto& comp : support_.components) {
          const auto& a = comp.agents[static_cast<std::size_t>(i)];
          const auto& b = comp.agents[static_cast<std::size_t>(k)];
          same = same && a.values == b.values && a.probs == b.probs;
        }
        if (same) {
          agent_members_.back().insert(k);
          agent_class_[static_cast<std::size_t>(k)] = c;
        }
      }
    }
  }

  static bool symmetric_items(const Valuation& v, int j, int k, int m) {
    if (const auto* u = std::get_if<UnitDemand>(&v)) return u->item_values[j] == u->item_values[k];
    if (const auto* a = std::get_if<AdditiveTypes>(&v)) return a->type_of_item[j] == a->type_of_item[k];
    const auto& t = std::get<BundleTable>(v).values;
    for (std::uint64_t b = 0; b < (std::uint64_t{1} << m); ++b) {
      const bool bj = (b >> j) & 1U, bk = (b >> k) & 1U;
      if (bj == bk) continue;
      const std::uint64_t swapped = b ^ ((std::uint64_t{1} << j) | (std::uint64_t{1} << k));
      if (t[b] != t[swapped]) return false;
    }
    return true;
  }

  // Items are identical when swapping them leaves every valuation unchanged.
  void build_item_classes() {
    item_class_.assign(static_cast<std::size_t>(m_), -1);
    for (int j = 0; j < m_; ++j) {
      if (item_class_[static_cast<std::size_t>(j)] >= 0) continue;
      const int c = static_cast<int>(item_members_.size());
      item_members_.push_back(ItemSet::single(j));
      item_class_[static_cast<std::size_t>(j)] = c;
      for (int k = j + 1; k < m_; ++k) {
        if (item_class_[static_cast<std::size_t>(k)] >= 0) continue;
        bool same = true;
        for (const auto& comp : support_.components)
          for (const auto& a : comp.agents)
            for (const auto& v : a.values) same = same && symmetric_items(v, j, k, m_);
        if (same) {
          item_members_.back().insert(k);
          item_class_[static_cast<std::size_t>(k)] = c;
        }
      }
    }
  }

  FiniteSupport support_;
  Objective objective_;
  int n_ = 0;
  int m_ = 0;
  std::vector<int> agent_class_;
  std::vector<AgentSet> agent_members_;
  std::vector<int> item_class_;
  std::vector<ItemSet> item_members_;
  std::vector<std::uint64_t> agent_bits_;
  std::vector<std::uint64_t> item_bits_;
  std::vector<double> grid_;
};

/// Relative tolerance used when comparing action values.
inline bool strictly_better(double a, double b) { return a > b + 1e-12 * std::max(1.0, std::abs(b)); }

}  // namespace spm::oracle
