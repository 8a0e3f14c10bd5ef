#pragma once

// Branch and bound over policies that only see a coarse statistic of the
// history: remaining agents and items (one decision per (S, I)), or remaining
// agents only (one decision per round, i.e. a static schedule). Histories that
// share a statistic value are merged into one unnormalized particle list; the
// bound replaces every open node by the full-information optimum.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "spm/oracle/belief_dp.hpp"

namespace spm::oracle {

enum class SearchKey { agents, agents_items };

struct SearchOptions {
  SearchKey key = SearchKey::agents_items;
  std::optional<std::vector<double>> fixed_prices;  // anonymous static prices
  std::size_t max_expansions = 50'000'000;
};

struct SearchResult {
  bool found = false;  // false: nothing beat the incumbent
  double value = 0.0;
  std::map<std::pair<std::uint64_t, std::uint64_t>, Action> decisions;  // (S bits, I bits or 0) -> action
  std::size_t expansions = 0;
};

class StatisticSearch {
 public:
  StatisticSearch(const Model& model, BeliefDp& bound, SearchOptions opt)
      : model_(model), bound_(bound), opt_(std::move(opt)) {
    tol_ = 1e-9 * std::max(1.0, model_.grid().back());
  }

  /// `incumbent` is a known achievable value (pruning starts from it).
  SearchResult solve(double incumbent = -std::numeric_limits<double>::infinity()) {
    best_ = incumbent;
    best_found_ = false;
    pending_.clear();
    accrued_ = 0.0;
    pending_ub_ = 0.0;
    decisions_.clear();
    expansions_ = 0;
    Group root{ItemSet::full(model_.m()), model_.prior()};
    add_child(AgentSet::full(model_.n()), root);
    recurse();
    SearchResult r;
    r.found = best_found_;
    r.value = best_found_ ? best_ : incumbent;
    r.decisions = best_decisions_;
    r.expansions = expansions_;
    return r;
  }

 private:
  struct Group {
    ItemSet items;
    Belief parts;  // unnormalized
  };
  struct Node {
    AgentSet agents;
    std::vector<Group> groups;
    double ub = 0.0;
  };
  using Key = std::tuple<int, std::uint64_t, std::uint64_t>;  // round, S bits, I bits

  struct Child {
    AgentSet agents;
    Group group;
  };
  struct Candidate {
    Action action;
    double ub = 0.0;
    double accrued = 0.0;
    std::vector<Child> children;
  };

  static double mass(const Belief& b) {
    double s = 0.0;
    for (const auto& p : b) s += p.w;
    return s;
  }

  static Belief normalized(const Belief& b, double total) {
    Belief out = b;
    for (auto& p : out) p.w /= total;
    return out;
  }

  double group_bound(AgentSet agents, const Group& g) {
    const double w = mass(g.parts);
    return w * bound_.value(agents, g.items, normalized(g.parts, w));
  }

  Key key_of(AgentSet agents, ItemSet items) const {
    const int round = model_.n() - agents.size();
    return {round, agents.bits(), opt_.key == SearchKey::agents_items ? items.bits() : 0};
  }

  void add_child(AgentSet agents, const Group& g) {
    auto [it, fresh] = pending_.try_emplace(key_of(agents, g.items), Node{agents, {}, 0.0});
    Node& node = it->second;
    pending_ub_ -= node.ub;
    bool merged = false;
    for (auto& h : node.groups) {
      if (h.items != g.items) continue;
      h.parts.insert(h.parts.end(), g.parts.begin(), g.parts.end());
      Model::canonicalize(h.parts);
      merged = true;
    }
    if (!merged) node.groups.push_back(g);
    node.ub = 0.0;
    for (const auto& h : node.groups) node.ub += group_bound(node.agents, h);
    pending_ub_ += node.ub;
  }

  std::vector<Candidate> candidates(const Node& node) {
    std::vector<int> agents =
        opt_.key == SearchKey::agents ? model_.representatives(node.agents) : node.agents.ids();
    ItemSet any_items;
    for (const auto& g : node.groups) any_items = any_items | g.items;
    std::vector<std::vector<double>> prices;
    if (opt_.fixed_prices) {
      prices = {*opt_.fixed_prices};
    } else {
      prices = model_.price_vectors(any_items);
    }
    std::vector<Candidate> out;
    for (int a : agents) {
      std::vector<std::string> seen;
      const AgentSet rest = node.agents.without(AgentSet::single(a));
      for (const auto& p : prices) {
        Candidate c{Action{a, p}, 0.0, 0.0, {}};
        std::string sig;
        for (const auto& g : node.groups) {
          const double w = mass(g.parts);
          const Belief b = normalized(g.parts, w);
          for (auto& o : model_.transition(g.items, b, a, p)) {
            const double pm = w * o.prob;
            c.accrued += pm * o.reward;
            sig += std::to_string(g.items.bits()) + ':' + std::to_string(o.bundle.bits()) + ':' +
                   std::to_string(std::llround(o.prob * 0x1.0p40)) + ':' + std::to_string(std::llround(o.reward * 0x1.0p30)) + ';';
            Group child{g.items.without(o.bundle), o.child};
            for (auto& q : child.parts) {
              q.w *= pm;
              if (!additive(model_.objective())) sig += std::to_string(q.acc) + ',';
            }
            if (rest.empty() || child.items.empty()) {
              c.accrued += pm * model_.terminal_value(rest, o.child);
            } else {
              c.ub += group_bound(rest, child);
              c.children.push_back({rest, std::move(child)});
            }
          }
        }
        if (std::find(seen.begin(), seen.end(), sig) != seen.end()) continue;
        seen.push_back(sig);
        c.ub += c.accrued;
        out.push_back(std::move(c));
      }
    }
    std::stable_sort(out.begin(), out.end(), [](const Candidate& x, const Candidate& y) { return x.ub > y.ub; });
    return out;
  }

  void recurse() {
    if (pending_.empty()) {
      if (accrued_ > best_ + tol_ || (!best_found_ && accrued_ >= best_ - tol_)) {
        best_ = accrued_;
        best_found_ = true;
        best_decisions_ = decisions_;
      }
      return;
    }
    if (++expansions_ > opt_.max_expansions) throw SizeError("statistic search exceeded its expansion budget");
    auto it = pending_.begin();
    const Key key = it->first;
    const Node node = it->second;
    pending_.erase(it);
    pending_ub_ -= node.ub;
    const auto cands = candidates(node);
    const std::pair<std::uint64_t, std::uint64_t> dkey{std::get<1>(key), std::get<2>(key)};
    for (const auto& c : cands) {
      const double ub = accrued_ + pending_ub_ + c.ub;
      if (best_found_ ? ub <= best_ + tol_ : ub < best_ - tol_) break;
      // apply
      const auto saved_pending = snapshot(c.children);
      const double saved_ub = pending_ub_;
      const double saved_acc = accrued_;
      accrued_ += c.accrued;
      for (const auto& ch : c.children) add_child(ch.agents, ch.group);
      decisions_[dkey] = c.action;
      recurse();
      decisions_.erase(dkey);
      restore(saved_pending);
      pending_ub_ = saved_ub;
      accrued_ = saved_acc;
    }
    pending_.emplace(key, node);
    pending_ub_ += node.ub;
  }

  // Touched pending entries before applying children (nullopt: absent).
  std::vector<std::pair<Key, std::optional<Node>>> snapshot(const std::vector<Child>& children) const {
    std::vector<std::pair<Key, std::optional<Node>>> out;
    for (const auto& ch : children) {
      const Key k = key_of(ch.agents, ch.group.items);
      bool dup = false;
      for (const auto& [kk, _] : out) dup = dup || kk == k;
      if (dup) continue;
      auto it = pending_.find(k);
      out.emplace_back(k, it == pending_.end() ? std::nullopt : std::optional<Node>(it->second));
    }
    return out;
  }

  void restore(const std::vector<std::pair<Key, std::optional<Node>>>& saved) {
    for (const auto& [k, node] : saved) {
      if (node) {
        pending_[k] = *node;
      } else {
        pending_.erase(k);
      }
    }
  }

  const Model& model_;
  BeliefDp& bound_;
  SearchOptions opt_;
  double tol_ = 1e-9;
  std::map<Key, Node> pending_;
  double accrued_ = 0.0;
  double pending_ub_ = 0.0;
  double best_ = 0.0;
  bool best_found_ = false;
  std::map<std::pair<std::uint64_t, std::uint64_t>, Action> decisions_, best_decisions_;
  std::size_t expansions_ = 0;
};

// ---------------------------------------------------------------------------
// Static schedules

struct Schedule {
  std::vector<int> order;
  std::vector<std::vector<double>> prices;  // per round
};

/// Exact expected objective of a static schedule, by pushing the belief
/// through every purchase outcome.
inline double evaluate_schedule(const Model& model, const Schedule& s) {
  if (static_cast<int>(s.order.size()) != model.n() || s.prices.size() != s.order.size())
    throw InputError("schedule must visit every agent once");
  std::map<std::uint64_t, Belief> groups{{ItemSet::full(model.m()).bits(), model.prior()}};
  AgentSet agents = AgentSet::full(model.n());
  double value = 0.0;
  for (std::size_t t = 0; t < s.order.size(); ++t) {
    const int a = s.order[t];
    if (!agents.contains(a)) throw InputError("schedule visits an agent twice");
    agents = agents.without(AgentSet::single(a));
    std::map<std::uint64_t, Belief> next;
    for (const auto& [bits, parts] : groups) {
      double w = 0.0;
      for (const auto& p : parts) w += p.w;
      Belief b = parts;
      for (auto& p : b) p.w /= w;
      for (auto& o : model.transition(ItemSet(bits), b, a, s.prices[t])) {
        value += w * o.prob * o.reward;
        auto& dst = next[ItemSet(bits).without(o.bundle).bits()];
        for (auto q : o.child) {
          q.w *= w * o.prob;
          dst.push_back(q);
        }
      }
    }
    for (auto& [_, parts] : next) Model::canonicalize(parts);
    groups = std::move(next);
  }
  for (const auto& [_, parts] : groups) value += model.terminal_value(AgentSet{}, parts);
  return value;
}

/// Converts a chain of remaining-agent decisions into a schedule; rounds the
/// search never needed (no items left) visit leftover agents at zero prices.
inline Schedule schedule_from_decisions(const Model& model,
                                        const std::map<std::pair<std::uint64_t, std::uint64_t>, Action>& d) {
  Schedule s;
  AgentSet agents = AgentSet::full(model.n());
  while (!agents.empty()) {
    auto it = d.find({agents.bits(), 0});
    Action a = it != d.end() ? it->second : Action{agents.lowest(), std::vector<double>(static_cast<std::size_t>(model.m()), 0.0)};
    s.order.push_back(a.agent);
    s.prices.push_back(a.prices);
    agents = agents.without(AgentSet::single(a.agent));
  }
  return s;
}

/// Visiting orders up to exchanging agents of the same class.
inline std::vector<std::vector<int>> canonical_orders(const Model& model, std::size_t limit) {
  std::vector<int> labels;
  for (int i = 0; i < model.n(); ++i) labels.push_back(model.agent_class(i));
  std::sort(labels.begin(), labels.end());
  std::vector<std::vector<int>> out;
  do {
    if (out.size() >= limit) throw SizeError("too many visiting orders to enumerate");
    std::vector<int> order;
    std::vector<AgentSet> left;
    for (int c = 0; c < model.num_agent_classes(); ++c) left.push_back(model.agent_class_members(c));
    for (int c : labels) {
      const int a = left[static_cast<std::size_t>(c)].lowest();
      left[static_cast<std::size_t>(c)] = left[static_cast<std::size_t>(c)].without(AgentSet::single(a));
      order.push_back(a);
    }
    out.push_back(std::move(order));
  } while (std::next_permutation(labels.begin(), labels.end()));
  return out;
}

}  // namespace spm::oracle
