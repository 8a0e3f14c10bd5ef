#pragma once

// Training loop, evaluation protocol and seed selection.

#include <boost/math/distributions/students_t.hpp>
#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "spm/learner/ppo.hpp"
#include "spm/settings.hpp"

namespace spm::learn {

struct TrainConfig {
  std::string setting = "two_worlds";
  SettingParams setting_params;
  StatisticKind kind = StatisticKind::allocation_matrix;
  std::optional<Objective> objective;  // default: the setting's own
  Architecture architecture = Architecture::mlp;
  int hidden = 64;
  long total_steps = 200'000;
  int batch_steps = 2048;
  PpoParams ppo;
  double learning_rate = 3e-4;
  double price_cap = 1.0;
  double init_log_std = -1.0;
  bool variance_reduction = true;
  bool normalize_setting = true;
  long eval_interval = 20'000;
  int eval_episodes = 2000;
  std::size_t exact_eval_limit = 4096;  // exact expectation when the support is at most this large
  std::uint64_t eval_seed = 0x5eed0e7a1ULL;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6};
  unsigned threads = 1;

  void validate() const {
    auto positive = [](double x, const char* what) {
      if (!(x > 0)) throw ValidationError(std::string(what) + " must be positive");
    };
    positive(static_cast<double>(hidden), "hidden");
    positive(static_cast<double>(total_steps), "total_steps");
    positive(batch_steps, "batch_steps");
    positive(ppo.minibatch, "minibatch");
    positive(ppo.epochs, "epochs");
    positive(learning_rate, "learning_rate");
    positive(price_cap, "price_cap");
    positive(static_cast<double>(eval_interval), "eval_interval");
    positive(eval_episodes, "eval_episodes");
    if (!(ppo.gamma > 0.0 && ppo.gamma <= 1.0)) throw ValidationError("gamma must lie in (0, 1]");
    if (!(ppo.clip > 0.0 && ppo.clip < 1.0)) throw ValidationError("clip must lie in (0, 1)");
    if (!(ppo.lambda >= 0.0 && ppo.lambda <= 1.0)) throw ValidationError("lambda must lie in [0, 1]");
    if (ppo.entropy < 0.0) throw ValidationError("entropy weight must be nonnegative");
    if (seeds.empty()) throw ValidationError("at least one seed is required");
  }
};

struct CurvePoint {
  long step = 0;
  double mean = 0.0;
  double std = 0.0;
};

struct LearningCurve {
  std::uint64_t seed = 0;
  std::vector<CurvePoint> points;

  double average() const {
    double s = 0.0;
    for (const auto& p : points) s += p.mean;
    return points.empty() ? 0.0 : s / static_cast<double>(points.size());
  }
  double final() const { return points.empty() ? 0.0 : points.back().mean; }
};

/// Setting actually trained on (normalized to values in [0, 1] by default).
inline SettingSpec training_setting(const TrainConfig& cfg) {
  const SettingSpec raw = make_setting(cfg.setting, cfg.setting_params);
  return cfg.normalize_setting ? normalize(raw) : raw;
}

/// Mean and standard deviation of the objective under the deterministic
/// evaluation policy: exact over small finite supports, otherwise on fresh
/// samples drawn from a stream disjoint from training.
class Evaluator {
 public:
  Evaluator(const SettingSpec& spec, Objective objective, StatisticKind kind, const TrainConfig& cfg)
      : spec_(spec), objective_(objective), kind_(kind), cfg_(cfg) {
    if (spec_.support && spec_.support->profile_count() <= static_cast<double>(cfg.exact_eval_limit))
      support_ = enumerate_support(spec_, cfg.exact_eval_limit);
  }

  bool exact() const { return support_.has_value(); }

  CurvePoint operator()(const Policy& policy, long step, int round) const {
    const EpisodeOptions opt{kind_, objective_, false, Mode::eval};
    double s1 = 0.0, s2 = 0.0, w = 0.0;
    if (support_) {
      Rng rng = make_rng(0);
      for (const auto& [profile, prob] : *support_) {
        const double v = run_episode_on_profile(policy, profile, opt, rng).objective;
        s1 += prob * v;
        s2 += prob * v * v;
        w += prob;
      }
    } else {
      std::vector<std::uint64_t> seeds;
      for (int e = 0; e < cfg_.eval_episodes; ++e)
        seeds.push_back(derive_seed(cfg_.eval_seed, static_cast<std::uint64_t>(round) * 1'000'003ULL + static_cast<std::uint64_t>(e)));
      for (const auto& rec : run_episodes(policy, spec_, opt, seeds, cfg_.threads)) {
        s1 += rec.objective;
        s2 += rec.objective * rec.objective;
        w += 1.0;
      }
    }
    const double mean = s1 / w;
    return {step, mean, std::sqrt(std::max(0.0, s2 / w - mean * mean))};
  }

 private:
  SettingSpec spec_;
  Objective objective_;
  StatisticKind kind_;
  TrainConfig cfg_;
  std::optional<std::vector<WeightedProfile>> support_;
};

struct TrainResult {
  LearningCurve curve;
  std::vector<double> theta;
};

/// Trains one seed on `spec`; evaluates at step 0, every eval_interval steps
/// and at the end.
inline TrainResult train_on(const SettingSpec& spec, const TrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const Objective objective = cfg.objective.value_or(spec.objective_default);
  const double cap = cfg.price_cap * (cfg.normalize_setting ? 1.0 : spec.vmax);
  Rng rng = make_rng(derive_seed(seed, 0x1));
  PolicyModel model(spec.n, spec.m, cfg.kind, cfg.architecture, cfg.hidden, cap);
  model.init(rng, cfg.init_log_std);
  const int input = statistic_length(cfg.kind, spec.n, spec.m);
  const Mlp value_net = make_value_net(input, cfg.architecture, cfg.hidden);
  VectorXd value_theta = VectorXd::Zero(static_cast<Eigen::Index>(value_net.num_params()));
  value_net.init(value_theta, rng, 1.0);
  RmsAdam popt(static_cast<std::size_t>(model.theta().size()), cfg.learning_rate);
  RmsAdam vopt(value_net.num_params(), cfg.learning_rate);
  const Evaluator evaluate(spec, objective, cfg.kind, cfg);
  const NetPolicy policy(model);
  const EpisodeOptions opt{cfg.kind, objective, cfg.variance_reduction, Mode::train};

  TrainResult result;
  result.curve.seed = seed;
  int round = 0;
  result.curve.points.push_back(evaluate(policy, 0, round++));
  long steps = 0;
  long next_eval = cfg.eval_interval;
  std::uint64_t episode = 0;
  const std::uint64_t train_stream = derive_seed(seed, 0x2);
  while (steps < cfg.total_steps) {
    const long episodes = std::max(1L, (static_cast<long>(cfg.batch_steps) + spec.n - 1) / spec.n);
    std::vector<std::uint64_t> seeds;
    for (long e = 0; e < episodes; ++e) seeds.push_back(derive_seed(train_stream, episode++));
    const auto trajs = run_episodes(policy, spec, opt, seeds, cfg.threads);
    for (const auto& t : trajs) steps += static_cast<long>(t.steps.size());
    const auto batch = build_samples(trajs, &value_net, &value_theta, cfg.ppo);
    ppo_update(model, popt, value_net, value_theta, vopt, batch, cfg.ppo, rng);
    if (steps >= next_eval || steps >= cfg.total_steps) {
      result.curve.points.push_back(evaluate(policy, steps, round++));
      while (next_eval <= steps) next_eval += cfg.eval_interval;
    }
  }
  result.theta.assign(model.theta().data(), model.theta().data() + model.theta().size());
  return result;
}

inline TrainResult train(const TrainConfig& cfg, std::uint64_t seed) { return train_on(training_setting(cfg), cfg, seed); }

// ---------------------------------------------------------------------------
// Seed selection

struct AggregatePoint {
  long step = 0;
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct Aggregate {
  std::vector<std::uint64_t> selected;  // seeds, best first
  std::vector<AggregatePoint> points;
  AggregatePoint final_point() const { return points.empty() ? AggregatePoint{} : points.back(); }
};

/// Two-sided 95% Student-t half-width factor for k samples.
inline double t95(int k) {
  if (k < 2) return 0.0;
  boost::math::students_t dist(static_cast<double>(k - 1));
  return boost::math::quantile(dist, 0.975);
}

/// Ranks seeds by mean evaluation over the whole curve, keeps the best `top`
/// and averages them pointwise with a 95% t-interval.
inline Aggregate seed_protocol(const std::vector<LearningCurve>& curves, std::size_t expected = 6, std::size_t top = 3) {
  if (curves.size() != expected)
    throw InputError("seed protocol needs " + std::to_string(expected) + " curves, got " + std::to_string(curves.size()));
  if (top == 0 || top > curves.size()) throw InputError("invalid number of selected seeds");
  std::vector<std::size_t> order(curves.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return curves[a].average() > curves[b].average(); });
  order.resize(top);
  const std::size_t len = curves[order[0]].points.size();
  for (std::size_t k : order)
    if (curves[k].points.size() != len) throw InputError("curves have different evaluation schedules");
  Aggregate agg;
  for (std::size_t k : order) agg.selected.push_back(curves[k].seed);
  const double t = t95(static_cast<int>(top));
  for (std::size_t i = 0; i < len; ++i) {
    double mean = 0.0;
    for (std::size_t k : order) mean += curves[k].points[i].mean;
    mean /= static_cast<double>(top);
    double ss = 0.0;
    for (std::size_t k : order) ss += (curves[k].points[i].mean - mean) * (curves[k].points[i].mean - mean);
    const double half = top > 1 ? t * std::sqrt(ss / static_cast<double>(top - 1)) / std::sqrt(static_cast<double>(top)) : 0.0;
    agg.points.push_back({curves[order[0]].points[i].step, mean, mean - half, mean + half});
  }
  return agg;
}

/// Final performance of the selected seeds: each seed's evaluations averaged
/// over the last `window` points, then the t-interval across seeds.
inline AggregatePoint final_performance(const std::vector<LearningCurve>& curves, const Aggregate& agg, std::size_t window) {
  std::vector<double> xs;
  for (auto seed : agg.selected)
    for (const auto& c : curves)
      if (c.seed == seed) {
        const std::size_t w = std::clamp<std::size_t>(window, 1, c.points.size());
        double s = 0.0;
        for (std::size_t k = c.points.size() - w; k < c.points.size(); ++k) s += c.points[k].mean;
        xs.push_back(s / static_cast<double>(w));
        break;
      }
  if (xs.empty()) throw InputError("no selected curves");
  const double k = static_cast<double>(xs.size());
  double mean = 0.0, ss = 0.0;
  for (double x : xs) mean += x / k;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double half = xs.size() > 1 ? t95(static_cast<int>(xs.size())) * std::sqrt(ss / (k - 1.0)) / std::sqrt(k) : 0.0;
  return {agg.points.empty() ? 0 : agg.points.back().step, mean, mean - half, mean + half};
}

/// Trains every configured seed (sequentially) and returns their curves.
inline std::vector<LearningCurve> train_seeds(const TrainConfig& cfg) {
  std::vector<LearningCurve> out;
  for (auto s : cfg.seeds) out.push_back(train(cfg, s).curve);
  return out;
}

}  // namespace spm::learn
