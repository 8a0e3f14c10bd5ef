#pragma once

// Economic framework for sequential price mechanisms: valuations, agent best
// response, the round transition and the three objectives.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "spm/core/bitset.hpp"
#include "spm/core/errors.hpp"

namespace spm {

using AgentId = int;
using ItemId = int;

inline constexpr int kMaxItems = 64;
inline constexpr int kMaxAgents = 64;
inline constexpr int kMaxTableItems = 12;

// ---------------------------------------------------------------------------
// Valuations

/// Bundle value is the largest single-item value in the bundle.
struct UnitDemand {
  std::vector<double> item_values;
  bool operator==(const UnitDemand&) const = default;
};

/// Bundle value is the sum, over item types, of the type value when the bundle
/// holds at least one unit of that type.
struct AdditiveTypes {
  std::vector<int> type_of_item;
  std::vector<double> type_values;
  bool operator==(const AdditiveTypes&) const = default;
};

/// Explicit value for every bundle, indexed by the bundle bitmask.
struct BundleTable {
  std::vector<double> values;
  bool operator==(const BundleTable&) const = default;
};

using Valuation = std::variant<UnitDemand, AdditiveTypes, BundleTable>;

inline int item_count(const Valuation& v) {
  return std::visit(
      [](const auto& val) -> int {
        using T = std::decay_t<decltype(val)>;
        if constexpr (std::is_same_v<T, UnitDemand>) {
          return static_cast<int>(val.item_values.size());
        } else if constexpr (std::is_same_v<T, AdditiveTypes>) {
          return static_cast<int>(val.type_of_item.size());
        } else {
          return std::countr_zero(val.values.size());
        }
      },
      v);
}

inline double value_of(const Valuation& v, ItemSet bundle) {
  return std::visit(
      [bundle](const auto& val) -> double {
        using T = std::decay_t<decltype(val)>;
        if constexpr (std::is_same_v<T, UnitDemand>) {
          double best = 0.0;
          for (int j : bundle) best = std::max(best, val.item_values[j]);
          return best;
        } else if constexpr (std::is_same_v<T, AdditiveTypes>) {
          std::uint64_t seen = 0;
          double total = 0.0;
          for (int j : bundle) {
            const int t = val.type_of_item[j];
            if (((seen >> t) & 1U) == 0) {
              seen |= std::uint64_t{1} << t;
              total += val.type_values[t];
            }
          }
          return total;
        } else {
          return val.values[bundle.bits()];
        }
      },
      v);
}

/// Largest value this valuation assigns to any bundle.
inline double max_value(const Valuation& v) {
  return std::visit(
      [](const auto& val) -> double {
        using T = std::decay_t<decltype(val)>;
        if constexpr (std::is_same_v<T, UnitDemand>) {
          double best = 0.0;
          for (double x : val.item_values) best = std::max(best, x);
          return best;
        } else if constexpr (std::is_same_v<T, AdditiveTypes>) {
          std::vector<bool> present(val.type_values.size(), false);
          for (int t : val.type_of_item) present[t] = true;
          double total = 0.0;
          for (std::size_t t = 0; t < present.size(); ++t)
            if (present[t]) total += val.type_values[t];
          return total;
        } else {
          return *std::max_element(val.values.begin(), val.values.end());
        }
      },
      v);
}

inline Valuation scaled(const Valuation& v, double factor) {
  return std::visit(
      [factor](auto val) -> Valuation {
        using T = std::decay_t<decltype(val)>;
        if constexpr (std::is_same_v<T, UnitDemand>) {
          for (double& x : val.item_values) x *= factor;
        } else if constexpr (std::is_same_v<T, AdditiveTypes>) {
          for (double& x : val.type_values) x *= factor;
        } else {
          for (double& x : val.values) x *= factor;
        }
        return val;
      },
      v);
}

/// Expands any valuation into its explicit bundle table (m <= kMaxTableItems).
inline BundleTable to_table(const Valuation& v) {
  const int m = item_count(v);
  if (m > kMaxTableItems) throw SizeError("bundle table limited to 12 items");
  BundleTable t;
  t.values.resize(std::size_t{1} << m);
  for (std::uint64_t b = 0; b < t.values.size(); ++b) t.values[b] = value_of(v, ItemSet(b));
  return t;
}

inline void validate_valuation(const Valuation& v, int m) {
  if (item_count(v) != m) throw InputError("valuation item count does not match profile");
  std::visit(
      [m](const auto& val) {
        using T = std::decay_t<decltype(val)>;
        if constexpr (std::is_same_v<T, UnitDemand>) {
          for (double x : val.item_values)
            if (!(x >= 0.0)) throw InputError("negative or NaN item value");
        } else if constexpr (std::is_same_v<T, AdditiveTypes>) {
          for (int t : val.type_of_item)
            if (t < 0 || t >= static_cast<int>(val.type_values.size()))
              throw InputError("item type out of range");
          for (double x : val.type_values)
            if (!(x >= 0.0)) throw InputError("negative or NaN type value");
        } else {
          if (m > kMaxTableItems) throw SizeError("bundle table limited to 12 items");
          if (val.values.size() != (std::size_t{1} << m)) throw InputError("bundle table size must be 2^m");
          if (val.values[0] != 0.0) throw InputError("empty bundle must have value 0");
          for (double x : val.values)
            if (!(x >= 0.0)) throw InputError("negative or NaN bundle value");
        }
      },
      v);
}

// ---------------------------------------------------------------------------
// Valuation profile

class ValuationProfile {
 public:
  ValuationProfile() = default;
  ValuationProfile(int num_items, std::vector<Valuation> agents)
      : num_items_(num_items), agents_(std::move(agents)) {
    if (num_items_ < 0 || num_items_ > kMaxItems) throw InputError("item count out of range");
    if (agents_.size() > static_cast<std::size_t>(kMaxAgents)) throw InputError("too many agents");
    for (const auto& v : agents_) validate_valuation(v, num_items_);
  }

  int num_agents() const { return static_cast<int>(agents_.size()); }
  int num_items() const { return num_items_; }
  const Valuation& valuation(AgentId i) const {
    check_agent(i);
    return agents_[static_cast<std::size_t>(i)];
  }
  const std::vector<Valuation>& valuations() const { return agents_; }

  void check_agent(AgentId i) const {
    if (i < 0 || i >= num_agents()) throw InputError("unknown agent id " + std::to_string(i));
  }
  void check_items(ItemSet s) const {
    if (!s.subset_of(ItemSet::full(num_items_))) throw InputError("unknown item id in " + s.to_string());
  }

  double max_value() const {
    double best = 0.0;
    for (const auto& v : agents_) best = std::max(best, spm::max_value(v));
    return best;
  }

  ValuationProfile scaled(double factor) const {
    std::vector<Valuation> out;
    out.reserve(agents_.size());
    for (const auto& v : agents_) out.push_back(spm::scaled(v, factor));
    return ValuationProfile(num_items_, std::move(out));
  }

  bool operator==(const ValuationProfile&) const = default;

 private:
  int num_items_ = 0;
  std::vector<Valuation> agents_;
};

inline double bundle_value(const ValuationProfile& profile, AgentId agent, ItemSet bundle) {
  profile.check_agent(agent);
  profile.check_items(bundle);
  return value_of(profile.valuation(agent), bundle);
}

// ---------------------------------------------------------------------------
// Best response

struct Purchase {
  ItemSet bundle;
  double payment = 0.0;
  double value = 0.0;
  bool operator==(const Purchase&) const = default;
};

inline double price_of(std::span<const double> prices, ItemSet bundle) {
  double total = 0.0;
  for (int j : bundle) total += prices[static_cast<std::size_t>(j)];
  return total;
}

/// Strict preference between two candidate bundles: higher utility, then higher
/// value, then fewer items, then the lexicographically smaller item set. The
/// empty bundle (utility 0, value 0) therefore beats any worthless free bundle.
inline bool preferred(double u_a, double v_a, ItemSet a, double u_b, double v_b, ItemSet b) {
  if (u_a != u_b) return u_a > u_b;
  if (v_a != v_b) return v_a > v_b;
  if (a.size() != b.size()) return a.size() < b.size();
  return lex_less(a, b);
}

/// Utility-maximizing bundle of `available` at `prices` (indexed by item id).
inline Purchase best_response(const Valuation& valuation, std::span<const double> prices,
                              ItemSet available) {
  Purchase best;  // empty bundle
  double best_u = 0.0;
  std::visit(
      [&](const auto& val) {
        using T = std::decay_t<decltype(val)>;
        if constexpr (std::is_same_v<T, UnitDemand>) {
          for (int j : available) {
            const double v = val.item_values[j];
            const double u = v - prices[j];
            if (preferred(u, v, ItemSet::single(j), best_u, best.value, best.bundle)) {
              best = {ItemSet::single(j), prices[j], v};
              best_u = u;
            }
          }
        } else if constexpr (std::is_same_v<T, AdditiveTypes>) {
          // Types are independent: per type take the cheapest available unit
          // (lowest id on ties) when it is strictly worth it, or free and valued.
          const std::size_t num_types = val.type_values.size();
          std::vector<int> cheapest(num_types, -1);
          for (int j : available) {
            const int t = val.type_of_item[j];
            if (cheapest[t] < 0 || prices[j] < prices[cheapest[t]]) cheapest[t] = j;
          }
          for (std::size_t t = 0; t < num_types; ++t) {
            const int j = cheapest[t];
            if (j < 0) continue;
            const double v = val.type_values[t];
            const double u = v - prices[j];
            if (u > 0.0 || (u == 0.0 && v > 0.0)) {
              best.bundle.insert(j);
              best.payment += prices[j];
              best.value += v;
            }
          }
        } else {
          // Enumerate subsets of the available items.
          const std::uint64_t avail = available.bits();
          for (std::uint64_t sub = avail;; sub = (sub - 1) & avail) {
            const ItemSet s(sub);
            const double v = val.values[sub];
            const double pay = price_of(prices, s);
            const double u = v - pay;
            if (preferred(u, v, s, best_u, best.value, best.bundle)) {
              best = {s, pay, v};
              best_u = u;
            }
            if (sub == 0) break;
          }
        }
      },
      valuation);
  return best;
}

inline Purchase best_response(const ValuationProfile& profile, AgentId agent,
                              std::span<const double> prices, ItemSet available) {
  profile.check_agent(agent);
  profile.check_items(available);
  if (prices.size() != static_cast<std::size_t>(profile.num_items()))
    throw InputError("price vector must have one entry per item");
  for (int j : available)
    if (!(prices[static_cast<std::size_t>(j)] >= 0.0)) throw InputError("prices must be nonnegative");
  return best_response(profile.valuation(agent), prices, available);
}

// ---------------------------------------------------------------------------
// Mechanism state and the round transition

struct Action {
  AgentId agent = -1;
  std::vector<double> prices;  // one entry per item; entries of sold items are ignored
  bool operator==(const Action&) const = default;
};

struct MechanismState {
  int num_agents = 0;
  int num_items = 0;
  AgentSet remaining_agents;
  ItemSet remaining_items;
  std::vector<ItemSet> allocation;
  std::vector<double> payments;
  int round = 0;

  static MechanismState initial(int n, int m) {
    MechanismState s;
    s.num_agents = n;
    s.num_items = m;
    s.remaining_agents = AgentSet::full(n);
    s.remaining_items = ItemSet::full(m);
    s.allocation.assign(static_cast<std::size_t>(n), ItemSet{});
    s.payments.assign(static_cast<std::size_t>(n), 0.0);
    return s;
  }

  bool done() const { return remaining_agents.empty(); }

  /// Throws ProtocolError describing the first violated invariant.
  void check_invariants() const {
    ItemSet seen = remaining_items;
    for (int i = 0; i < num_agents; ++i) {
      const ItemSet b = allocation[static_cast<std::size_t>(i)];
      if (!seen.disjoint(b)) throw ProtocolError("allocated bundles overlap");
      seen = seen | b;
      if (remaining_agents.contains(i) && (!b.empty() || payments[static_cast<std::size_t>(i)] != 0.0))
        throw ProtocolError("unvisited agent holds items or payments");
      if (payments[static_cast<std::size_t>(i)] < 0.0) throw ProtocolError("negative payment");
    }
    if (seen != ItemSet::full(num_items)) throw ProtocolError("items lost from the market");
    if (round != num_agents - remaining_agents.size()) throw ProtocolError("round counter out of sync");
  }

  bool operator==(const MechanismState&) const = default;
};

struct RoundResult {
  MechanismState state;
  Purchase purchase;
};

inline RoundResult apply_round(const MechanismState& state, const Action& action,
                               const ValuationProfile& profile) {
  if (profile.num_agents() != state.num_agents || profile.num_items() != state.num_items)
    throw InputError("profile does not match mechanism state dimensions");
  if (action.agent < 0 || action.agent >= state.num_agents)
    throw ProtocolError("action selects unknown agent " + std::to_string(action.agent));
  if (!state.remaining_agents.contains(action.agent))
    throw ProtocolError("action selects already visited agent " + std::to_string(action.agent));
  if (action.prices.size() != static_cast<std::size_t>(state.num_items))
    throw ProtocolError("action must post one price per item");
  for (int j : state.remaining_items)
    if (!(action.prices[static_cast<std::size_t>(j)] >= 0.0))
      throw ProtocolError("negative price on item " + std::to_string(j));

  RoundResult r{state, best_response(profile.valuation(action.agent), action.prices, state.remaining_items)};
  auto& next = r.state;
  next.remaining_agents.erase(action.agent);
  next.remaining_items = next.remaining_items.without(r.purchase.bundle);
  next.allocation[static_cast<std::size_t>(action.agent)] = r.purchase.bundle;
  next.payments[static_cast<std::size_t>(action.agent)] = r.purchase.payment;
  next.round += 1;
  return r;
}

// ---------------------------------------------------------------------------
// Objectives

enum class Objective { welfare, revenue, maxmin };

inline std::string_view to_string(Objective o) {
  switch (o) {
    case Objective::welfare: return "welfare";
    case Objective::revenue: return "revenue";
    case Objective::maxmin: return "maxmin";
  }
  return "?";
}

inline Objective parse_objective(std::string_view s) {
  if (s == "welfare") return Objective::welfare;
  if (s == "revenue") return Objective::revenue;
  if (s == "maxmin" || s == "max-min") return Objective::maxmin;
  throw InputError("unknown objective '" + std::string(s) + "'");
}

inline double objective_value(Objective objective, std::span<const ItemSet> allocation,
                              std::span<const double> payments, const ValuationProfile& profile) {
  const int n = profile.num_agents();
  if (allocation.size() != static_cast<std::size_t>(n) || payments.size() != static_cast<std::size_t>(n))
    throw InputError("allocation/payments must have one entry per agent");
  switch (objective) {
    case Objective::welfare: {
      double total = 0.0;
      for (int i = 0; i < n; ++i) total += value_of(profile.valuation(i), allocation[i]);
      return total;
    }
    case Objective::revenue: {
      double total = 0.0;
      for (double p : payments) total += p;
      return total;
    }
    case Objective::maxmin: {
      if (n == 0) return 0.0;
      double lo = std::numeric_limits<double>::infinity();
      for (int i = 0; i < n; ++i) lo = std::min(lo, value_of(profile.valuation(i), allocation[i]));
      return lo;
    }
  }
  return 0.0;
}

inline double objective_value(Objective objective, const MechanismState& state,
                              const ValuationProfile& profile) {
  return objective_value(objective, state.allocation, state.payments, profile);
}

}  // namespace spm
