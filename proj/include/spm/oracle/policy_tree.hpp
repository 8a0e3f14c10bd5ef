#pragma once

// Explicit decision trees over observation histories, built by unrolling any
// deterministic decision rule through the Bayes-filtered beliefs.

#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "spm/episode.hpp"
#include "spm/oracle/model.hpp"

namespace spm::oracle {

struct HistoryStep {
  int agent = -1;
  std::vector<double> prices;
  ItemSet bundle;
};
using History = std::vector<HistoryStep>;

struct TreeNode {
  struct Child {
    ItemSet bundle;
    double prob = 0.0;
    int node = -1;
  };
  AgentSet agents;
  ItemSet items;
  bool leaf = false;
  Action action;
  double value = 0.0;  // expected final objective given the history leading here
  std::vector<Child> children;
};

struct PolicyTree {
  int n = 0;
  int m = 0;
  std::vector<TreeNode> nodes;

  double value() const { return nodes.empty() ? 0.0 : nodes[0].value; }

  int depth() const {
    std::function<int(int)> walk = [&](int k) {
      int d = 0;
      for (const auto& c : nodes[static_cast<std::size_t>(k)].children) d = std::max(d, 1 + walk(c.node));
      return d;
    };
    return nodes.empty() ? 0 : walk(0);
  }

  /// Node reached by following the purchases of the first `rounds` visited agents.
  int follow(const std::function<ItemSet(int agent)>& bought, int rounds) const {
    int k = 0;
    for (int t = 0; t < rounds; ++t) {
      const TreeNode& node = nodes[static_cast<std::size_t>(k)];
      if (node.leaf) throw ProtocolError("history is longer than the tree");
      const ItemSet b = bought(node.action.agent);
      int next = -1;
      for (const auto& c : node.children)
        if (c.bundle == b) next = c.node;
      if (next < 0) throw ProtocolError("history leaves the policy tree");
      k = next;
    }
    return k;
  }
};

using DecisionRule = std::function<Action(const History&, AgentSet, ItemSet, const Belief&)>;

/// Builds the tree of `decide` with exact node values.
inline PolicyTree unroll(const Model& model, const DecisionRule& decide, std::size_t max_nodes = 2'000'000) {
  PolicyTree tree{model.n(), model.m(), {}};
  History history;
  std::function<int(AgentSet, ItemSet, const Belief&, double)> build = [&](AgentSet agents, ItemSet items,
                                                                          const Belief& belief, double past) {
    if (tree.nodes.size() >= max_nodes) throw SizeError("policy tree exceeds its node budget");
    const int k = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(TreeNode{agents, items, false, {}, 0.0, {}});
    if (agents.empty()) {
      tree.nodes[static_cast<std::size_t>(k)].leaf = true;
      tree.nodes[static_cast<std::size_t>(k)].value = past + model.terminal_value(agents, belief);
      return k;
    }
    Action a = decide(history, agents, items, belief);
    if (!agents.contains(a.agent)) throw ProtocolError("decision rule selected a visited agent");
    double value = 0.0;
    std::vector<TreeNode::Child> children;
    for (const auto& o : model.transition(items, belief, a.agent, a.prices)) {
      history.push_back({a.agent, a.prices, o.bundle});
      const int child = build(agents.without(AgentSet::single(a.agent)), items.without(o.bundle), o.child, past + o.reward);
      history.pop_back();
      children.push_back({o.bundle, o.prob, child});
      value += o.prob * tree.nodes[static_cast<std::size_t>(child)].value;
    }
    auto& node = tree.nodes[static_cast<std::size_t>(k)];
    node.action = std::move(a);
    node.value = value;
    node.children = std::move(children);
    return k;
  };
  build(AgentSet::full(model.n()), ItemSet::full(model.m()), model.prior(), 0.0);
  return tree;
}

/// Text dump, one line per internal node: path -> agent prices value.
inline std::string dump_tree(const PolicyTree& tree) {
  std::ostringstream os;
  os.precision(12);
  std::function<void(int, const std::string&)> walk = [&](int k, const std::string& path) {
    const auto& node = tree.nodes[static_cast<std::size_t>(k)];
    if (node.leaf) return;
    os << (path.empty() ? "/" : path) << " -> agent " << node.action.agent << " prices [";
    bool first = true;
    for (int j : node.items) {
      if (!first) os << ',';
      os << node.action.prices[static_cast<std::size_t>(j)];
      first = false;
    }
    os << "] value " << node.value << '\n';
    for (const auto& c : node.children)
      walk(c.node, path + "/" + std::to_string(node.action.agent) + ":" + c.bundle.to_string());
  };
  if (!tree.nodes.empty()) walk(0, "");
  return os.str();
}

/// Plays a policy tree from allocation-matrix observations: the allocation rows
/// of the visited agents, read in the order the tree visits them, recover the
/// whole history of a deterministic policy.
class TreePolicy : public Policy {
 public:
  explicit TreePolicy(PolicyTree tree) : tree_(std::move(tree)) {}

  ActionChoice act(std::span<const double> obs, AgentSet agents, ItemSet, Mode, Rng&) const override {
    const int n = tree_.n, m = tree_.m;
    if (obs.size() < static_cast<std::size_t>(n + m + n * m))
      throw InputError("tree policy needs the allocation-matrix statistic");
    auto bought = [&](int agent) {
      ItemSet b;
      for (int j = 0; j < m; ++j)
        if (obs[static_cast<std::size_t>(n + m + agent * m + j)] > 0.5) b.insert(j);
      return b;
    };
    const int k = tree_.follow(bought, n - agents.size());
    return {tree_.nodes[static_cast<std::size_t>(k)].action, 0.0, {}};
  }
  bool deterministic(Mode) const override { return true; }
  const PolicyTree& tree() const { return tree_; }

 private:
  PolicyTree tree_;
};

/// Deterministic rule on explicit histories (e.g. a mechanism written as
/// prose), played from allocation-matrix observations by replaying itself.
class HistoryPolicy : public Policy {
 public:
  using Rule = std::function<Action(const History&)>;
  HistoryPolicy(int n, int m, Rule rule) : n_(n), m_(m), rule_(std::move(rule)) {}

  ActionChoice act(std::span<const double> obs, AgentSet agents, ItemSet, Mode, Rng&) const override {
    if (obs.size() < static_cast<std::size_t>(n_ + m_ + n_ * m_))
      throw InputError("history policy needs the allocation-matrix statistic");
    History h;
    const int rounds = n_ - agents.size();
    for (int t = 0; t < rounds; ++t) {
      Action a = rule_(h);
      ItemSet b;
      for (int j = 0; j < m_; ++j)
        if (obs[static_cast<std::size_t>(n_ + m_ + a.agent * m_ + j)] > 0.5) b.insert(j);
      h.push_back({a.agent, std::move(a.prices), b});
    }
    return {rule_(h), 0.0, {}};
  }
  bool deterministic(Mode) const override { return true; }

 private:
  int n_, m_;
  Rule rule_;
};

/// Policy keyed by the (remaining agents, remaining items) statistic.
class StatisticTablePolicy : public Policy {
 public:
  StatisticTablePolicy(int n, int m, std::map<std::pair<std::uint64_t, std::uint64_t>, Action> table,
                       Action fallback)
      : n_(n), m_(m), table_(std::move(table)), fallback_(std::move(fallback)) {}

  ActionChoice act(std::span<const double>, AgentSet agents, ItemSet items, Mode, Rng&) const override {
    if (auto it = table_.find({agents.bits(), items.bits()}); it != table_.end()) return {it->second, 0.0, {}};
    // states the optimum never reaches with items left: lowest agent, zero prices
    Action a = fallback_;
    a.agent = agents.lowest();
    return {a, 0.0, {}};
  }
  bool deterministic(Mode) const override { return true; }
  const std::map<std::pair<std::uint64_t, std::uint64_t>, Action>& table() const { return table_; }

 private:
  int n_, m_;
  std::map<std::pair<std::uint64_t, std::uint64_t>, Action> table_;
  Action fallback_;
};

}  // namespace spm::oracle
