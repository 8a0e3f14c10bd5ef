#pragma once

// Clipped-surrogate policy optimization with a separate value network and
// generalized advantage estimation. Rewards arrive only at the end of an episode.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "spm/learner/policy.hpp"

namespace spm::learn {

struct PpoParams {
  double clip = 0.2;
  double gamma = 1.0;
  double lambda = 0.95;
  double entropy = 0.01;
  int epochs = 4;
  int minibatch = 256;
  bool normalize_advantages = true;
  bool use_value = true;
};

struct Sample {
  std::vector<double> obs;
  AgentSet agents;
  ItemSet items;
  int agent = -1;
  std::vector<double> raw;
  double old_log_prob = 0.0;
  double advantage = 0.0;
  double ret = 0.0;
};

/// Value network input -> H -> H -> 1 (or affine for the linear architecture).
inline Mlp make_value_net(int input, Architecture arch, int hidden) {
  if (arch == Architecture::linear) return Mlp({input, 1});
  return Mlp({input, hidden, hidden, 1});
}

inline MatrixXd stack_obs(const std::vector<Sample>& batch, const std::vector<std::size_t>& idx, int input) {
  MatrixXd x(input, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto& o = batch[idx[k]].obs;
    for (int r = 0; r < input; ++r) x(r, static_cast<Eigen::Index>(k)) = o[static_cast<std::size_t>(r)];
  }
  return x;
}

/// Converts trajectories to samples with GAE advantages and returns.
inline std::vector<Sample> build_samples(const std::vector<TrajectoryRecord>& trajs, const Mlp* value_net,
                                         const VectorXd* value_theta, const PpoParams& p) {
  std::vector<Sample> out;
  for (const auto& tr : trajs) {
    const std::size_t T = tr.steps.size();
    std::vector<double> v(T + 1, 0.0);
    if (p.use_value && value_net != nullptr && T > 0) {
      MatrixXd x(value_net->input_size(), static_cast<Eigen::Index>(T));
      for (std::size_t t = 0; t < T; ++t)
        for (int r = 0; r < value_net->input_size(); ++r) x(r, static_cast<Eigen::Index>(t)) = tr.steps[t].observation[static_cast<std::size_t>(r)];
      const MatrixXd vals = value_net->forward(*value_theta, x);
      for (std::size_t t = 0; t < T; ++t) v[t] = vals(0, static_cast<Eigen::Index>(t));
    }
    double adv = 0.0;
    std::vector<Sample> ep(T);
    for (std::size_t k = T; k-- > 0;) {
      const double r = k + 1 == T ? tr.reward : 0.0;
      const double delta = r + p.gamma * v[k + 1] - v[k];
      adv = delta + p.gamma * p.lambda * adv;
      const auto& s = tr.steps[k];
      ep[k] = Sample{s.observation, s.agents, s.items, s.action.agent, s.raw, s.log_prob, adv, adv + v[k]};
    }
    for (auto& s : ep) out.push_back(std::move(s));
  }
  if (p.normalize_advantages && out.size() > 1) {
    double mean = 0.0, sq = 0.0;
    for (const auto& s : out) mean += s.advantage;
    mean /= static_cast<double>(out.size());
    for (const auto& s : out) sq += (s.advantage - mean) * (s.advantage - mean);
    const double sd = std::sqrt(sq / static_cast<double>(out.size()));
    for (auto& s : out) s.advantage = (s.advantage - mean) / (sd + 1e-8);
  }
  return out;
}

struct LossReport {
  double loss = 0.0;
  double surrogate = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
};

/// Loss = -(mean clipped surrogate) - entropy_weight * mean entropy; adds its
/// gradient w.r.t. the policy parameters into `grad` when given.
inline LossReport policy_loss(const PolicyModel& model, const Eigen::Ref<const VectorXd>& theta,
                              const std::vector<Sample>& batch, const std::vector<std::size_t>& idx,
                              const PpoParams& p, VectorXd* grad) {
  const int n = model.n(), m = model.m();
  const double cap = model.price_cap();
  const auto& net = model.net();
  const auto net_theta = theta.head(static_cast<Eigen::Index>(net.num_params()));
  const auto log_std = theta.tail(m);
  Mlp::Cache cache;
  const MatrixXd out = net.forward(net_theta, stack_obs(batch, idx, net.input_size()), grad ? &cache : nullptr);
  const auto B = static_cast<Eigen::Index>(idx.size());
  MatrixXd d_out = MatrixXd::Zero(n + m, B);
  VectorXd d_log_std = VectorXd::Zero(m);
  LossReport rep;
  for (Eigen::Index k = 0; k < B; ++k) {
    const Sample& s = batch[idx[static_cast<std::size_t>(k)]];
    const VectorXd o = out.col(k);
    const VectorXd pa = masked_softmax(o.head(n), s.agents);
    double lp = std::log(pa[s.agent]);
    double ent = 0.0;
    for (int i : s.agents)
      if (pa[i] > 0.0) ent -= pa[i] * std::log(pa[i]);
    const double ent_cat = ent;
    for (int j : s.items) {
      const double sd = std::exp(log_std[j]);
      const double z = (s.raw[static_cast<std::size_t>(j)] - price_mean(o[n + j], cap)) / sd;
      lp += -0.5 * z * z - log_std[j] - kLogSqrt2Pi;
      ent += log_std[j] + 0.5 + kLogSqrt2Pi;
    }
    const double ratio = std::exp(lp - s.old_log_prob);
    const double A = s.advantage;
    const double clipped = std::clamp(ratio, 1.0 - p.clip, 1.0 + p.clip);
    const double surr = std::min(ratio * A, clipped * A);
    rep.surrogate += surr;
    rep.entropy += ent;
    const bool active = (A >= 0.0) ? ratio <= 1.0 + p.clip : ratio >= 1.0 - p.clip;
    if (!active) rep.clip_fraction += 1.0;
    if (!grad) continue;
    // d(loss)/d(log prob) and d(loss)/d(entropy)
    const double g_lp = active ? -ratio * A : 0.0;
    const double g_ent = -p.entropy;
    for (int i : s.agents) {
      const double dlp = (i == s.agent ? 1.0 : 0.0) - pa[i];
      const double dent = -pa[i] * (std::log(pa[i]) + ent_cat);
      d_out(i, k) = g_lp * dlp + g_ent * dent;
    }
    for (int j : s.items) {
      const double sd = std::exp(log_std[j]);
      const double diff = s.raw[static_cast<std::size_t>(j)] - price_mean(o[n + j], cap);
      d_out(n + j, k) = g_lp * diff / (sd * sd) * price_mean_slope(o[n + j], cap);
      d_log_std[j] += g_lp * (diff * diff / (sd * sd) - 1.0) + g_ent;
    }
  }
  const double inv = 1.0 / static_cast<double>(std::max<Eigen::Index>(B, 1));
  rep.surrogate *= inv;
  rep.entropy *= inv;
  rep.clip_fraction *= inv;
  rep.loss = -rep.surrogate - p.entropy * rep.entropy;
  if (!std::isfinite(rep.loss)) throw TrainingError("policy loss is not finite");
  if (grad) {
    d_out *= inv;
    net.backward(net_theta, cache, d_out, grad->head(static_cast<Eigen::Index>(net.num_params())));
    grad->tail(m) += d_log_std * inv;
  }
  return rep;
}

/// 0.5 * mean squared error of the value net against returns.
inline double value_loss(const Mlp& net, const Eigen::Ref<const VectorXd>& theta, const std::vector<Sample>& batch,
                         const std::vector<std::size_t>& idx, VectorXd* grad) {
  Mlp::Cache cache;
  const MatrixXd v = net.forward(theta, stack_obs(batch, idx, net.input_size()), grad ? &cache : nullptr);
  const auto B = static_cast<Eigen::Index>(idx.size());
  MatrixXd d = MatrixXd::Zero(1, B);
  double loss = 0.0;
  for (Eigen::Index k = 0; k < B; ++k) {
    const double e = v(0, k) - batch[idx[static_cast<std::size_t>(k)]].ret;
    loss += 0.5 * e * e;
    d(0, k) = e / static_cast<double>(B);
  }
  loss /= static_cast<double>(std::max<Eigen::Index>(B, 1));
  if (!std::isfinite(loss)) throw TrainingError("value loss is not finite");
  if (grad) net.backward(theta, cache, d, *grad);
  return loss;
}

struct UpdateReport {
  LossReport policy;
  double value = 0.0;
};

/// K epochs of shuffled minibatch steps on policy and value parameters.
inline UpdateReport ppo_update(PolicyModel& model, RmsAdam& policy_opt, const Mlp& value_net, VectorXd& value_theta,
                               RmsAdam& value_opt, const std::vector<Sample>& batch, const PpoParams& p, Rng& rng) {
  UpdateReport rep;
  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t mb = static_cast<std::size_t>(std::max(1, p.minibatch));
  VectorXd g(model.theta().size());
  VectorXd gv(value_theta.size());
  for (int e = 0; e < p.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += mb) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + mb)));
      g.setZero();
      rep.policy = policy_loss(model, model.theta(), batch, idx, p, &g);
      if (!g.allFinite()) throw TrainingError("policy gradient is not finite");
      policy_opt.step(model.theta(), g);
      if (p.use_value) {
        gv.setZero();
        rep.value = value_loss(value_net, value_theta, batch, idx, &gv);
        value_opt.step(value_theta, gv);
      }
    }
  }
  return rep;
}

}  // namespace spm::learn
