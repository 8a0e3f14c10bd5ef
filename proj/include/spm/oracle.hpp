#pragma once

// Exact solvers on finite-support settings.

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "spm/episode.hpp"
#include "spm/matching.hpp"
#include "spm/oracle/belief_dp.hpp"
#include "spm/oracle/model.hpp"
#include "spm/oracle/policy_tree.hpp"
#include "spm/oracle/statistic_search.hpp"

namespace spm::oracle {

inline const FiniteSupport& finite_support(const SettingSpec& spec) {
  if (!spec.support) throw UnsupportedError("setting '" + spec.name + "' has no finite support");
  return *spec.support;
}

/// Expected offline optimum over the support.
inline double expected_offline_optimum(const SettingSpec& spec, Objective objective,
                                       std::size_t limit = 65536) {
  double total = 0.0;
  for (const auto& [profile, prob] : enumerate_support(spec, limit)) total += prob * offline_optimum(profile, objective);
  return total;
}

struct PriceGrid {
  bool anonymous = true;
  std::vector<std::vector<double>> per_agent;  // one list, or one per agent
};

/// {0} plus one price inside every gap between adjacent support values plus
/// one price above the maximum (revenue grids also hold the support values).
inline PriceGrid candidate_prices(const SettingSpec& spec, bool anonymous, Objective objective = Objective::welfare) {
  const auto& f = finite_support(spec);
  const int n = f.num_agents();
  std::vector<std::vector<double>> vals(static_cast<std::size_t>(n));
  for (const auto& c : f.components)
    for (int i = 0; i < n; ++i)
      for (const auto& v : c.agents[static_cast<std::size_t>(i)].values)
        for (double x : singleton_values(v, f.num_items)) vals[static_cast<std::size_t>(i)].push_back(x);
  PriceGrid g{anonymous, {}};
  const bool rev = objective == Objective::revenue;
  if (anonymous) {
    std::vector<double> all;
    for (const auto& v : vals) all.insert(all.end(), v.begin(), v.end());
    g.per_agent.push_back(price_grid_from_values(all, rev));
  } else {
    for (const auto& v : vals) g.per_agent.push_back(price_grid_from_values(v, rev));
  }
  return g;
}

// ---------------------------------------------------------------------------
// Evaluation by pushing every support profile through a policy

/// Exact expectation for deterministic policies on enumerable supports.
inline double value_of_policy(const Policy& policy, const SettingSpec& spec, Objective objective,
                              StatisticKind kind = StatisticKind::allocation_matrix, std::size_t limit = 65536) {
  if (!policy.deterministic(Mode::eval)) throw InputError("exact evaluation needs a deterministic policy");
  const EpisodeOptions opt{kind, objective, false, Mode::eval};
  double total = 0.0;
  Rng rng = make_rng(0);
  for (const auto& [profile, prob] : enumerate_support(spec, limit))
    total += prob * run_episode_on_profile(policy, profile, opt, rng).objective;
  return total;
}

inline double value_of_policy(const PolicyTree& tree, const SettingSpec& spec, Objective objective) {
  return value_of_policy(TreePolicy(tree), spec, objective);
}

inline double value_of_policy(const Schedule& s, const SettingSpec& spec, Objective objective) {
  return value_of_policy(SchedulePolicy(s.order, s.prices), spec, objective);
}

/// Random serial dictatorship: average over all visiting orders.
inline double rsd_value(const SettingSpec& spec, Objective objective, int max_agents = 8) {
  if (spec.n > max_agents) throw SizeError("too many agents to average over every order");
  std::vector<int> order(static_cast<std::size_t>(spec.n));
  std::iota(order.begin(), order.end(), 0);
  const std::vector<std::vector<double>> zeros(order.size(), std::vector<double>(static_cast<std::size_t>(spec.m), 0.0));
  double total = 0.0;
  int count = 0;
  do {
    total += value_of_policy(SchedulePolicy(order, zeros), spec, objective);
    ++count;
  } while (std::next_permutation(order.begin(), order.end()));
  return total / count;
}

// ---------------------------------------------------------------------------
// Optimal mechanisms

struct Budget {
  std::size_t dp_states = 20'000'000;
  std::size_t search_expansions = 50'000'000;
  std::size_t tree_nodes = 2'000'000;
  std::size_t orders = 50'000;
};

enum class StaticClass { ASP, PSP, SO };

inline std::string_view to_string(StaticClass c) {
  switch (c) {
    case StaticClass::ASP: return "ASP";
    case StaticClass::PSP: return "PSP";
    case StaticClass::SO: return "SO";
  }
  return "?";
}

struct StaticSolution {
  double value = 0.0;
  Schedule schedule;  // SO: prices left empty, they adapt
  std::optional<PolicyTree> tree;
};

struct Solution {
  double value = 0.0;
  MechanismClass cls = MechanismClass::SPM;
  std::optional<PolicyTree> tree;
  std::optional<Schedule> schedule;  // static classes
};

class Oracle {
 public:
  Oracle(const SettingSpec& spec, Objective objective, Budget budget = {})
      : spec_(spec), objective_(objective), budget_(budget), model_(finite_support(spec), objective),
        full_(model_, {}, budget.dp_states) {}

  Oracle(const Oracle&) = delete;
  Oracle& operator=(const Oracle&) = delete;

  const Model& model() const { return model_; }
  BeliefDp& full_dp() { return full_; }

  /// Optimum over all deterministic policies (full observation history).
  double full_value() { return full_.value(AgentSet::full(model_.n()), ItemSet::full(model_.m()), model_.prior()); }

  PolicyTree full_tree() {
    return unroll(model_, [this](const History&, AgentSet s, ItemSet i, const Belief& b) { return full_.best(s, i, b).action; },
                  budget_.tree_nodes);
  }

  /// Best policy that sees remaining agents and items only.
  SearchResult agents_items() {
    StatisticSearch search(model_, full_, {SearchKey::agents_items, std::nullopt, budget_.search_expansions});
    return search.solve();
  }

  PolicyTree tree_from_table(const std::map<std::pair<std::uint64_t, std::uint64_t>, Action>& table, bool agents_only) {
    const std::vector<double> zeros(static_cast<std::size_t>(model_.m()), 0.0);
    return unroll(
        model_,
        [&](const History&, AgentSet s, ItemSet i, const Belief&) {
          auto it = table.find({s.bits(), agents_only ? 0 : i.bits()});
          return it != table.end() ? it->second : Action{s.lowest(), zeros};
        },
        budget_.tree_nodes);
  }

  StaticSolution asp() {
    std::vector<std::pair<double, std::vector<double>>> cands;
    for (auto& p : model_.price_vectors(ItemSet::full(model_.m()))) {
      BeliefDp fixed(model_, {p, std::nullopt}, budget_.dp_states);
      cands.emplace_back(fixed.value(AgentSet::full(model_.n()), ItemSet::full(model_.m()), model_.prior()), p);
    }
    std::stable_sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::optional<StaticSolution> best;
    for (const auto& [bound, p] : cands) {
      if (best && bound <= best->value + tol()) break;
      BeliefDp fixed(model_, {p, std::nullopt}, budget_.dp_states);
      StatisticSearch search(model_, fixed, {SearchKey::agents, p, budget_.search_expansions});
      auto r = search.solve(best ? best->value : -std::numeric_limits<double>::infinity());
      if (r.found && (!best || r.value > best->value + tol())) {
        Schedule s = schedule_from_decisions(model_, r.decisions);
        for (auto& q : s.prices) q = p;
        best = StaticSolution{r.value, s, std::nullopt};
      }
    }
    return *best;
  }

  StaticSolution psp() {
    const StaticSolution a = asp();
    StatisticSearch search(model_, full_, {SearchKey::agents, std::nullopt, budget_.search_expansions});
    auto r = search.solve(a.value);
    if (!r.found) return a;
    return StaticSolution{r.value, schedule_from_decisions(model_, r.decisions), std::nullopt};
  }

  /// Static visiting order, prices adapting to the whole history.
  StaticSolution so() {
    std::optional<StaticSolution> best;
    for (const auto& order : canonical_orders(model_, budget_.orders)) {
      BeliefDp dp(model_, {std::nullopt, order}, budget_.dp_states);
      const double v = dp.value(AgentSet::full(model_.n()), ItemSet::full(model_.m()), model_.prior());
      if (!best || v > best->value + tol()) best = StaticSolution{v, Schedule{order, {}}, std::nullopt};
    }
    return *best;
  }

  StaticSolution optimal_static(StaticClass c) {
    switch (c) {
      case StaticClass::ASP: return asp();
      case StaticClass::PSP: return psp();
      case StaticClass::SO: return so();
    }
    return asp();
  }

  /// Adaptive visiting order under one anonymous price vector fixed up front.
  std::pair<double, std::vector<double>> adaptive_order_static_price() {
    std::optional<std::pair<double, std::vector<double>>> best;
    for (auto& p : model_.price_vectors(ItemSet::full(model_.m()))) {
      BeliefDp fixed(model_, {p, std::nullopt}, budget_.dp_states);
      const double v = fixed.value(AgentSet::full(model_.n()), ItemSet::full(model_.m()), model_.prior());
      if (!best || v > best->first + tol()) best = std::make_pair(v, p);
    }
    return *best;
  }

  /// Optimal value for a policy restricted to the given statistic; the tree is
  /// built when requested (it can be exponentially large).
  Solution solve(StatisticKind kind, bool build_tree = true) {
    Solution s;
    s.cls = constrain(kind);
    switch (kind) {
      case StatisticKind::none:
      case StatisticKind::remaining_agents: {
        auto st = kind == StatisticKind::none ? asp() : psp();
        s.value = st.value;
        s.schedule = st.schedule;
        if (build_tree) {
          std::map<std::pair<std::uint64_t, std::uint64_t>, Action> table;
          AgentSet agents = AgentSet::full(model_.n());
          for (std::size_t t = 0; t < st.schedule.order.size(); ++t) {
            table[{agents.bits(), 0}] = Action{st.schedule.order[t], st.schedule.prices[t]};
            agents = agents.without(AgentSet::single(st.schedule.order[t]));
          }
          s.tree = tree_from_table(table, true);
        }
        return s;
      }
      case StatisticKind::items_agents_left: {
        auto r = agents_items();
        s.value = r.value;
        if (build_tree) s.tree = tree_from_table(r.decisions, false);
        return s;
      }
      case StatisticKind::allocation_matrix:
      case StatisticKind::price_allocation_matrix:
        // A deterministic policy's allocation matrix determines its whole
        // history (replay the policy), so both see as much as the full history.
        s.value = full_value();
        if (build_tree) s.tree = full_tree();
        return s;
    }
    return s;
  }

 private:
  double tol() const { return 1e-9 * std::max(1.0, model_.grid().back()); }

  SettingSpec spec_;
  Objective objective_;
  Budget budget_;
  Model model_;
  BeliefDp full_;
};

inline PolicyTree optimal_adaptive_spm(const SettingSpec& spec, Objective objective, StatisticKind kind) {
  Oracle o(spec, objective);
  return *o.solve(kind, true).tree;
}

inline StaticSolution optimal_static(const SettingSpec& spec, Objective objective, StaticClass c) {
  Oracle o(spec, objective);
  return o.optimal_static(c);
}

}  // namespace spm::oracle

namespace spm::oracle {

/// Personalized static prices on independent settings with identical items,
/// visiting agents by decreasing E[v | v > p] (agents that never buy go last).
/// Maximizes over per-agent price grids; evaluated by profile simulation.
inline StaticSolution sorted_order_psp(const SettingSpec& spec) {
  const auto& f = finite_support(spec);
  if (!f.independent()) throw InputError("sorted-order pricing needs independent values");
  const int n = spec.n, m = spec.m;
  const auto grids = candidate_prices(spec, false).per_agent;
  const auto& agents = f.components[0].agents;
  std::vector<std::size_t> level(static_cast<std::size_t>(n), 0);
  std::optional<StaticSolution> best;
  while (true) {
    std::vector<std::pair<double, int>> key;
    std::vector<double> price(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const double p = grids[static_cast<std::size_t>(i)][level[static_cast<std::size_t>(i)]];
      price[static_cast<std::size_t>(i)] = p;
      double q = 0.0, ev = 0.0;
      const auto& g = agents[static_cast<std::size_t>(i)];
      for (std::size_t k = 0; k < g.values.size(); ++k) {
        const double v = value_of(g.values[k], ItemSet::single(0));
        if (v > p) {
          q += g.probs[k];
          ev += g.probs[k] * v;
        }
      }
      key.emplace_back(q > 0.0 ? ev / q : -std::numeric_limits<double>::infinity(), i);
    }
    std::stable_sort(key.begin(), key.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    Schedule s;
    for (const auto& [_, i] : key) {
      s.order.push_back(i);
      s.prices.emplace_back(static_cast<std::size_t>(m), price[static_cast<std::size_t>(i)]);
    }
    const double v = value_of_policy(s, spec, Objective::welfare);
    if (!best || v > best->value + 1e-12 * std::max(1.0, std::abs(best->value))) best = StaticSolution{v, s, std::nullopt};
    int k = 0;
    while (k < n && ++level[static_cast<std::size_t>(k)] == grids[static_cast<std::size_t>(k)].size()) level[static_cast<std::size_t>(k++)] = 0;
    if (k == n) break;
  }
  return *best;
}

}  // namespace spm::oracle
