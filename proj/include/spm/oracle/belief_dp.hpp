#pragma once

// Backward induction over (remaining agents, remaining items, belief). The
// belief is the Bayes-filtered mixture over support components, which is the
// full observable history up to what matters for the future.

#include <cstring>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "spm/oracle/model.hpp"

namespace spm::oracle {

/// Restrictions on the actions the solver may take.
struct ActionFilter {
  std::optional<std::vector<double>> fixed_prices;  // one price vector for every round
  std::optional<std::vector<int>> order;            // agent visited in each round
};

struct Choice {
  Action action;
  double q = 0.0;
};

class BeliefDp {
 public:
  explicit BeliefDp(const Model& model, ActionFilter filter = {}, std::size_t max_states = 20'000'000)
      : model_(model), filter_(std::move(filter)), max_states_(max_states) {
    if (filter_.order && static_cast<int>(filter_.order->size()) != model_.n())
      throw InputError("forced order must list every agent once");
    if (filter_.fixed_prices && static_cast<int>(filter_.fixed_prices->size()) != model_.m())
      throw InputError("fixed price vector must have one entry per item");
  }

  const Model& model() const { return model_; }
  std::size_t states() const { return memo_.size(); }

  /// Optimal expected objective-to-go.
  double value(AgentSet agents, ItemSet items, const Belief& belief) {
    if (agents.empty() || items.empty()) return model_.terminal_value(agents, belief);
    const std::string key = memo_key(agents, items, belief);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    double best = -std::numeric_limits<double>::infinity();
    for (int a : candidate_agents(agents))
      for (const auto& p : candidate_prices(items)) best = std::max(best, q(agents, items, belief, a, p));
    if (memo_.size() >= max_states_) throw SizeError("belief DP exceeded its state budget");
    memo_.emplace(key, best);
    return best;
  }

  double q(AgentSet agents, ItemSet items, const Belief& belief, int agent, const std::vector<double>& prices) {
    double total = 0.0;
    const AgentSet rest = agents.without(AgentSet::single(agent));
    for (const auto& o : model_.transition(items, belief, agent, prices))
      total += o.prob * (o.reward + value(rest, items.without(o.bundle), o.child));
    return total;
  }

  /// Best value when the next visited agent is fixed.
  double q_agent(AgentSet agents, ItemSet items, const Belief& belief, int agent) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& p : candidate_prices(items)) best = std::max(best, q(agents, items, belief, agent, p));
    return best;
  }

  /// Optimal action; ties go to the smaller agent id, then the
  /// lexicographically smaller price vector.
  Choice best(AgentSet agents, ItemSet items, const Belief& belief) {
    if (agents.empty()) throw ProtocolError("no agent left to visit");
    std::optional<Choice> out;
    std::vector<int> cands;
    if (filter_.order) {
      cands = candidate_agents(agents);
    } else {
      cands = agents.ids();  // exact tie-break over actual ids
    }
    for (int a : cands)
      for (const auto& p : candidate_prices(items)) {
        const double v = items.empty() ? model_.terminal_value(agents, belief) : q(agents, items, belief, a, p);
        if (!out || strictly_better(v, out->q)) out = Choice{Action{a, p}, v};
      }
    return *out;
  }

  std::vector<int> candidate_agents(AgentSet agents) const {
    if (filter_.order) {
      const int round = model_.n() - agents.size();
      const int a = (*filter_.order)[static_cast<std::size_t>(round)];
      if (!agents.contains(a)) throw ProtocolError("forced order revisits an agent");
      return {a};
    }
    return model_.representatives(agents);
  }

  std::vector<std::vector<double>> candidate_prices(ItemSet items) const {
    if (filter_.fixed_prices) return {*filter_.fixed_prices};
    return model_.price_vectors(items);
  }

 private:
  std::string memo_key(AgentSet agents, ItemSet items, const Belief& belief) const {
    std::string key;
    key.reserve(16 + belief.size() * 20);
    auto put = [&key](const auto& x) {
      char buf[sizeof(x)];
      std::memcpy(buf, &x, sizeof(x));
      key.append(buf, sizeof(x));
    };
    put(model_.agent_key(agents));
    put(model_.item_key(items));
    for (const auto& p : belief) {
      put(p.comp);
      put(static_cast<std::int64_t>(std::llround(p.w * 0x1.0p44)));
      if (!additive(model_.objective())) put(p.acc);
    }
    return key;
  }

  const Model& model_;
  ActionFilter filter_;
  std::size_t max_states_;
  std::unordered_map<std::string, double> memo_;
};

}  // namespace spm::oracle
