#pragma once

// Episode execution: observation statistics, the policy interface, mechanism
// class labels, terminal rewards and a deterministic parallel runner.

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "spm/core/random.hpp"
#include "spm/econ.hpp"
#include "spm/matching.hpp"
#include "spm/settings.hpp"

namespace spm {

enum class StatisticKind { none, remaining_agents, items_agents_left, allocation_matrix, price_allocation_matrix };

inline std::string_view to_string(StatisticKind k) {
  switch (k) {
    case StatisticKind::none: return "none";
    case StatisticKind::remaining_agents: return "remaining_agents";
    case StatisticKind::items_agents_left: return "items_agents_left";
    case StatisticKind::allocation_matrix: return "allocation_matrix";
    case StatisticKind::price_allocation_matrix: return "price_allocation_matrix";
  }
  return "?";
}

inline StatisticKind parse_statistic(std::string_view s) {
  for (auto k : {StatisticKind::none, StatisticKind::remaining_agents, StatisticKind::items_agents_left,
                 StatisticKind::allocation_matrix, StatisticKind::price_allocation_matrix})
    if (s == to_string(k)) return k;
  throw InputError("unknown statistic kind '" + std::string(s) + "'");
}

inline int statistic_length(StatisticKind k, int n, int m) {
  switch (k) {
    case StatisticKind::none: return 0;
    case StatisticKind::remaining_agents: return n;
    case StatisticKind::items_agents_left: return n + m;
    case StatisticKind::allocation_matrix: return n + m + n * m;
    case StatisticKind::price_allocation_matrix: return n + m + 2 * n * m;
  }
  return 0;
}

enum class MechanismClass { ASP, PSP, SPM };

inline std::string_view to_string(MechanismClass c) {
  switch (c) {
    case MechanismClass::ASP: return "ASP";
    case MechanismClass::PSP: return "PSP";
    case MechanismClass::SPM: return "SPM";
  }
  return "?";
}

/// Mechanism class realizable by policies that see only the given statistic.
inline MechanismClass constrain(StatisticKind k) {
  switch (k) {
    case StatisticKind::none: return MechanismClass::ASP;
    case StatisticKind::remaining_agents: return MechanismClass::PSP;
    default: return MechanismClass::SPM;
  }
}

/// Prices offered to each visited agent, row-major n x m; unvisited rows are 0.
using PriceHistory = std::vector<double>;

/// Layout: remaining-agent bits, remaining-item bits, allocation matrix
/// (row-major agent x item), offered-price matrix.
inline std::vector<double> make_statistic(StatisticKind kind, const MechanismState& state,
                                          std::span<const double> price_history) {
  const int n = state.num_agents;
  const int m = state.num_items;
  std::vector<double> obs;
  obs.reserve(static_cast<std::size_t>(statistic_length(kind, n, m)));
  if (kind == StatisticKind::none) return obs;
  for (int i = 0; i < n; ++i) obs.push_back(state.remaining_agents.contains(i) ? 1.0 : 0.0);
  if (kind == StatisticKind::remaining_agents) return obs;
  for (int j = 0; j < m; ++j) obs.push_back(state.remaining_items.contains(j) ? 1.0 : 0.0);
  if (kind == StatisticKind::items_agents_left) return obs;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) obs.push_back(state.allocation[static_cast<std::size_t>(i)].contains(j) ? 1.0 : 0.0);
  if (kind == StatisticKind::allocation_matrix) return obs;
  if (price_history.size() != static_cast<std::size_t>(n * m)) throw InputError("price history must be n x m");
  obs.insert(obs.end(), price_history.begin(), price_history.end());
  return obs;
}

// ---------------------------------------------------------------------------
// Policies

enum class Mode { train, eval };

struct ActionChoice {
  Action action;
  double log_prob = 0.0;
  std::vector<double> raw;  // policy-specific sample (e.g. pre-squash prices)
};

class Policy {
 public:
  virtual ~Policy() = default;
  /// Must return an agent in `agents`; prices for every item (unavailable ones ignored).
  virtual ActionChoice act(std::span<const double> obs, AgentSet agents, ItemSet items, Mode mode,
                           Rng& rng) const = 0;
  /// True when eval-mode actions are a deterministic function of the observation.
  virtual bool deterministic(Mode mode) const { return mode == Mode::eval; }
};

/// Random serial dictatorship: uniformly random remaining agent, all prices 0.
class RsdPolicy : public Policy {
 public:
  explicit RsdPolicy(int num_items) : m_(num_items) {}
  ActionChoice act(std::span<const double>, AgentSet agents, ItemSet, Mode, Rng& rng) const override {
    if (agents.empty()) throw ProtocolError("no remaining agent to select");
    const auto ids = agents.ids();
    const int k = static_cast<int>(ids.size());
    return {Action{ids[static_cast<std::size_t>(uniform_int(rng, k))], std::vector<double>(m_, 0.0)},
            -std::log(static_cast<double>(k)), {}};
  }
  bool deterministic(Mode) const override { return false; }

 private:
  int m_;
};

/// Fixed visiting order and per-round price vectors, ignoring observations.
class SchedulePolicy : public Policy {
 public:
  SchedulePolicy(std::vector<int> order, std::vector<std::vector<double>> prices)
      : order_(std::move(order)), prices_(std::move(prices)) {
    if (order_.size() != prices_.size()) throw InputError("schedule needs one price vector per round");
  }
  ActionChoice act(std::span<const double>, AgentSet agents, ItemSet, Mode, Rng&) const override {
    const auto round = static_cast<std::size_t>(static_cast<int>(order_.size()) - agents.size());
    if (round >= order_.size()) throw ProtocolError("schedule exhausted");
    return {Action{order_[round], prices_[round]}, 0.0, {}};
  }
  bool deterministic(Mode) const override { return true; }
  const std::vector<int>& order() const { return order_; }
  const std::vector<std::vector<double>>& prices() const { return prices_; }

 private:
  std::vector<int> order_;
  std::vector<std::vector<double>> prices_;
};

// ---------------------------------------------------------------------------
// Trajectories

struct StepRecord {
  std::vector<double> observation;
  AgentSet agents;
  ItemSet items;
  Action action;
  ItemSet purchased;
  double payment = 0.0;
  double log_prob = 0.0;
  std::vector<double> raw;
};

struct TrajectoryRecord {
  std::uint64_t seed = 0;
  std::string setting;
  StatisticKind kind = StatisticKind::allocation_matrix;
  std::vector<StepRecord> steps;
  std::vector<ItemSet> allocation;
  std::vector<double> payments;
  double objective = 0.0;
  double reward = 0.0;
};

struct EpisodeOptions {
  StatisticKind kind = StatisticKind::allocation_matrix;
  Objective objective = Objective::welfare;
  bool variance_reduction = false;
  Mode mode = Mode::train;
};

/// Policy-independent quantity subtracted from the terminal reward.
inline double reward_baseline(const ValuationProfile& profile, Objective objective) {
  if (objective == Objective::maxmin) return 0.0;
  return offline_optimum(profile, Objective::welfare);
}

inline TrajectoryRecord run_episode_on_profile(const Policy& policy, const ValuationProfile& profile,
                                               const EpisodeOptions& opt, Rng& rng) {
  const int n = profile.num_agents();
  const int m = profile.num_items();
  TrajectoryRecord rec;
  rec.kind = opt.kind;
  auto state = MechanismState::initial(n, m);
  PriceHistory prices(static_cast<std::size_t>(n * m), 0.0);
  rec.steps.reserve(static_cast<std::size_t>(n));
  while (!state.done()) {
    StepRecord step;
    step.observation = make_statistic(opt.kind, state, prices);
    step.agents = state.remaining_agents;
    step.items = state.remaining_items;
    ActionChoice choice = policy.act(step.observation, state.remaining_agents, state.remaining_items, opt.mode, rng);
    if (!state.remaining_agents.contains(choice.action.agent))
      throw ProtocolError("policy selected agent " + std::to_string(choice.action.agent) + " outside the remaining set");
    auto result = apply_round(state, choice.action, profile);
    for (int j : state.remaining_items)
      prices[static_cast<std::size_t>(choice.action.agent * m + j)] = choice.action.prices[static_cast<std::size_t>(j)];
    step.action = std::move(choice.action);
    step.purchased = result.purchase.bundle;
    step.payment = result.purchase.payment;
    step.log_prob = choice.log_prob;
    step.raw = std::move(choice.raw);
    rec.steps.push_back(std::move(step));
    state = std::move(result.state);
  }
  rec.allocation = state.allocation;
  rec.payments = state.payments;
  rec.objective = objective_value(opt.objective, state, profile);
  rec.reward = rec.objective;
  if (opt.variance_reduction) rec.reward -= reward_baseline(profile, opt.objective);
  return rec;
}

/// Samples the profile from `seed` (stream 0) and drives the policy with an
/// independent stream derived from the same seed.
inline TrajectoryRecord run_episode(const Policy& policy, const SettingSpec& spec, const EpisodeOptions& opt,
                                    std::uint64_t seed) {
  const ValuationProfile profile = sample_profile(spec, seed);
  Rng rng = make_rng(derive_seed(seed, 1));
  TrajectoryRecord rec = run_episode_on_profile(policy, profile, opt, rng);
  rec.seed = seed;
  rec.setting = spec.name;
  return rec;
}

inline unsigned default_threads() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

/// Runs one episode per seed on `threads` workers; results are ordered by seed index.
inline std::vector<TrajectoryRecord> run_episodes(const Policy& policy, const SettingSpec& spec,
                                                  const EpisodeOptions& opt, const std::vector<std::uint64_t>& seeds,
                                                  unsigned threads = 1) {
  std::vector<TrajectoryRecord> out(seeds.size());
  threads = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(seeds.size())));
  if (threads <= 1) {
    for (std::size_t k = 0; k < seeds.size(); ++k) out[k] = run_episode(policy, spec, opt, seeds[k]);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t k = t; k < seeds.size(); k += threads) out[k] = run_episode(policy, spec, opt, seeds[k]);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

/// One line per trajectory: seed, setting, kind, rounds as agent:prices->bundle, objective.
inline std::string dump_trajectory(const TrajectoryRecord& rec) {
  std::ostringstream os;
  os.precision(10);
  os << "seed=" << rec.seed << " setting=" << rec.setting << " kind=" << to_string(rec.kind) << " rounds=";
  for (std::size_t t = 0; t < rec.steps.size(); ++t) {
    const auto& s = rec.steps[t];
    if (t > 0) os << ';';
    os << s.action.agent << ":[";
    bool first = true;
    for (int j : s.items) {
      if (!first) os << ',';
      os << s.action.prices[static_cast<std::size_t>(j)];
      first = false;
    }
    os << "]->" << s.purchased.to_string();
  }
  os << " objective=" << rec.objective << " reward=" << rec.reward;
  return os.str();
}

}  // namespace spm
