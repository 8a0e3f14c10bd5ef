#pragma once

// Neural SPM policy: the first n outputs score agents (masked softmax while
// training, argmax at evaluation), the last m set item prices through a
// sigmoid-squashed mean with a learned, state-independent spread.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "spm/episode.hpp"
#include "spm/learner/mlp.hpp"

namespace spm::learn {

enum class Architecture { mlp, linear };

inline std::string_view to_string(Architecture a) { return a == Architecture::mlp ? "mlp" : "linear"; }

inline Architecture parse_architecture(std::string_view s) {
  if (s == "mlp") return Architecture::mlp;
  if (s == "linear") return Architecture::linear;
  throw InputError("unknown architecture '" + std::string(s) + "'");
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

/// Policy network parameters: one flat vector holding the network followed by
/// m log standard deviations.
class PolicyModel {
 public:
  PolicyModel(int n, int m, StatisticKind kind, Architecture arch, int hidden, double price_cap)
      : n_(n), m_(m), kind_(kind), arch_(arch), cap_(price_cap) {
    std::vector<int> sizes{statistic_length(kind, n, m)};
    if (arch == Architecture::mlp) {
      sizes.push_back(hidden);
      sizes.push_back(hidden);
    }
    sizes.push_back(n + m);
    net_ = Mlp(sizes);
    theta_ = VectorXd::Zero(static_cast<Eigen::Index>(net_.num_params() + static_cast<std::size_t>(m)));
  }

  void init(Rng& rng, double log_std) {
    net_.init(net_params(), rng, 0.01);
    log_std_params().setConstant(log_std);
  }

  int n() const { return n_; }
  int m() const { return m_; }
  StatisticKind kind() const { return kind_; }
  Architecture architecture() const { return arch_; }
  double price_cap() const { return cap_; }
  const Mlp& net() const { return net_; }

  VectorXd& theta() { return theta_; }
  const VectorXd& theta() const { return theta_; }
  Eigen::VectorBlock<VectorXd> net_params() { return theta_.head(static_cast<Eigen::Index>(net_.num_params())); }
  Eigen::VectorBlock<const VectorXd> net_params() const { return theta_.head(static_cast<Eigen::Index>(net_.num_params())); }
  Eigen::VectorBlock<VectorXd> log_std_params() { return theta_.tail(m_); }
  Eigen::VectorBlock<const VectorXd> log_std_params() const { return theta_.tail(m_); }

  /// Agent scores then raw price outputs.
  VectorXd forward(std::span<const double> obs) const {
    if (static_cast<int>(obs.size()) != net_.input_size()) throw InputError("observation length does not match statistic kind");
    MatrixXd x = Eigen::Map<const MatrixXd>(obs.data(), static_cast<Eigen::Index>(obs.size()), 1);
    return net_.forward(net_params(), x).col(0);
  }

 private:
  int n_, m_;
  StatisticKind kind_;
  Architecture arch_;
  double cap_;
  Mlp net_;
  VectorXd theta_;
};

/// Masked softmax over remaining agents (visited agents get probability 0).
inline VectorXd masked_softmax(const Eigen::Ref<const VectorXd>& scores, AgentSet agents) {
  if (agents.empty()) throw ProtocolError("every agent is masked");
  double hi = -std::numeric_limits<double>::infinity();
  for (int i : agents) hi = std::max(hi, scores[i]);
  VectorXd p = VectorXd::Zero(scores.size());
  double z = 0.0;
  for (int i : agents) z += (p[i] = std::exp(scores[i] - hi));
  return p / z;
}

struct SampledAction {
  Action action;
  double log_prob = 0.0;
  std::vector<double> raw;  // unclamped price draws, one per item
};

// The squashed mean spans [-margin, 1 + margin] * cap so that both 0 and cap
// are reachable with finite outputs once clamped.
constexpr double kPriceMargin = 0.1;

inline double price_mean(double out, double cap) { return cap * ((1.0 + 2.0 * kPriceMargin) * sigmoid(out) - kPriceMargin); }

inline double price_mean_slope(double out, double cap) {
  const double sg = sigmoid(out);
  return cap * (1.0 + 2.0 * kPriceMargin) * sg * (1.0 - sg);
}

/// Log-probability of choosing `agent` and drawing `raw` on the remaining items.
inline double action_log_prob(const Eigen::Ref<const VectorXd>& out, const Eigen::Ref<const VectorXd>& log_std, int n,
                              AgentSet agents, ItemSet items, int agent, std::span<const double> raw, double cap) {
  const VectorXd p = masked_softmax(out.head(n), agents);
  double lp = std::log(p[agent]);
  for (int j : items) {
    const double s = std::exp(log_std[j]);
    const double z = (raw[static_cast<std::size_t>(j)] - price_mean(out[n + j], cap)) / s;
    lp += -0.5 * z * z - log_std[j] - kLogSqrt2Pi;
  }
  return lp;
}

inline SampledAction select_action(const Eigen::Ref<const VectorXd>& out, const Eigen::Ref<const VectorXd>& log_std,
                                   int n, int m, AgentSet agents, ItemSet items, Mode mode, double cap, Rng& rng) {
  const VectorXd p = masked_softmax(out.head(n), agents);
  SampledAction s;
  int agent = -1;
  if (mode == Mode::eval) {
    for (int i : agents)
      if (agent < 0 || out[i] > out[agent]) agent = i;
  } else {
    double u = uniform01(rng);
    for (int i : agents) {
      agent = i;
      if ((u -= p[i]) < 0.0) break;
    }
  }
  s.action.agent = agent;
  s.action.prices.assign(static_cast<std::size_t>(m), 0.0);
  s.raw.assign(static_cast<std::size_t>(m), 0.0);
  for (int j = 0; j < m; ++j) {
    const double mean = price_mean(out[n + j], cap);
    double x = mean;
    if (mode == Mode::train && items.contains(j)) x += std::exp(log_std[j]) * standard_normal(rng);
    s.raw[static_cast<std::size_t>(j)] = x;
    s.action.prices[static_cast<std::size_t>(j)] = std::clamp(x, 0.0, cap);
  }
  s.log_prob = action_log_prob(out, log_std, n, agents, items, agent, s.raw, cap);
  return s;
}

/// Adapter to the episode runner.
class NetPolicy : public Policy {
 public:
  explicit NetPolicy(const PolicyModel& model) : model_(model) {}
  ActionChoice act(std::span<const double> obs, AgentSet agents, ItemSet items, Mode mode, Rng& rng) const override {
    const VectorXd out = model_.forward(obs);
    auto s = select_action(out, model_.log_std_params(), model_.n(), model_.m(), agents, items, mode, model_.price_cap(), rng);
    return {std::move(s.action), s.log_prob, std::move(s.raw)};
  }
  bool deterministic(Mode mode) const override { return mode == Mode::eval; }

 private:
  const PolicyModel& model_;
};

}  // namespace spm::learn
