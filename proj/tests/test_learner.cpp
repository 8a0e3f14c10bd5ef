#include <gtest/gtest.h>

#include "spm/learner/train.hpp"

using namespace spm;
using namespace spm::learn;

namespace {

PolicyModel random_model(StatisticKind kind, Architecture arch, int n, int m, std::uint64_t seed, int hidden = 5) {
  PolicyModel model(n, m, kind, arch, hidden, 1.0);
  Rng rng = make_rng(seed);
  model.init(rng, -0.5);
  // larger weights than the default init so every nonlinearity matters
  for (Eigen::Index k = 0; k < model.theta().size(); ++k) model.theta()[k] += 0.5 * standard_normal(rng);
  return model;
}

std::vector<double> random_obs(int len, Rng& rng) {
  std::vector<double> x(static_cast<std::size_t>(len));
  for (double& v : x) v = uniform(rng, -1.0, 1.0);
  return x;
}

std::vector<Sample> random_batch(const PolicyModel& model, int count, Rng& rng) {
  std::vector<Sample> batch;
  for (int k = 0; k < count; ++k) {
    Sample s;
    s.obs = random_obs(model.net().input_size(), rng);
    s.agents = AgentSet::full(model.n()).without(AgentSet::single(k % model.n()));
    s.items = ItemSet::full(model.m()).without(ItemSet::single(k % model.m()));
    const VectorXd out = model.forward(s.obs);
    const auto a = select_action(out, model.log_std_params(), model.n(), model.m(), s.agents, s.items, Mode::train,
                                 model.price_cap(), rng);
    s.agent = a.action.agent;
    s.raw = a.raw;
    s.old_log_prob = a.log_prob + uniform(rng, -0.1, 0.1);  // ratios away from 1, inside the clip band
    s.advantage = uniform(rng, -1.0, 1.0);
    batch.push_back(s);
  }
  return batch;
}

}  // namespace

TEST(Forward, ZeroParametersGiveZeroOutputs) {
  PolicyModel model(3, 2, StatisticKind::allocation_matrix, Architecture::mlp, 8, 1.0);
  Rng rng = make_rng(1);
  const auto out = model.forward(random_obs(statistic_length(StatisticKind::allocation_matrix, 3, 2), rng));
  ASSERT_EQ(out.size(), 5);
  EXPECT_EQ(out.norm(), 0.0);
  EXPECT_THROW(model.forward(std::vector<double>(3, 0.0)), InputError);
}

TEST(Forward, LinearArchitectureIsAffine) {
  const auto model = random_model(StatisticKind::price_allocation_matrix, Architecture::linear, 3, 2, 7);
  Rng rng = make_rng(2);
  const int len = statistic_length(StatisticKind::price_allocation_matrix, 3, 2);
  const auto x = random_obs(len, rng);
  std::vector<double> ax(x), zero(static_cast<std::size_t>(len), 0.0);
  for (double& v : ax) v *= 2.5;
  const VectorXd f0 = model.forward(zero);
  const VectorXd lhs = model.forward(ax) - f0;
  const VectorXd rhs = 2.5 * (model.forward(x) - f0);
  EXPECT_LT((lhs - rhs).norm(), 1e-12);
}

TEST(Forward, GradientMatchesFiniteDifferences) {
  for (auto arch : {Architecture::mlp, Architecture::linear}) {
    auto model = random_model(StatisticKind::allocation_matrix, arch, 3, 2, 11);
    Rng rng = make_rng(3);
    const auto obs = random_obs(model.net().input_size(), rng);
    const MatrixXd x = Eigen::Map<const MatrixXd>(obs.data(), static_cast<Eigen::Index>(obs.size()), 1);
    const auto& net = model.net();
    VectorXd theta = model.net_params();
    Mlp::Cache cache;
    net.forward(theta, x, &cache);
    const double h = 1e-5;
    int checked = 0;
    for (int o = 0; o < net.output_size(); ++o) {
      VectorXd g = VectorXd::Zero(theta.size());
      MatrixXd d = MatrixXd::Zero(net.output_size(), 1);
      d(o, 0) = 1.0;
      net.backward(theta, cache, d, g);
      for (Eigen::Index k = 0; k < theta.size(); ++k) {
        VectorXd tp = theta, tm = theta;
        tp[k] += h;
        tm[k] -= h;
        const double fd = (net.forward(tp, x)(o, 0) - net.forward(tm, x)(o, 0)) / (2 * h);
        EXPECT_NEAR(g[k], fd, 1e-4 * std::max(1.0, std::abs(fd))) << "output " << o << " param " << k;
        ++checked;
      }
    }
    EXPECT_GT(checked, 0);
  }
}

TEST(SelectAction, EvalPicksHighestRemainingScore) {
  VectorXd out(3 + 1);
  out << 0.3, 0.9, 0.5, 0.0;
  VectorXd log_std = VectorXd::Constant(1, -1.0);
  Rng rng = make_rng(4);
  AgentSet remaining = AgentSet::of({0, 2});
  const auto a = select_action(out, log_std, 3, 1, remaining, ItemSet::full(1), Mode::eval, 1.0, rng);
  EXPECT_EQ(a.action.agent, 2);
  EXPECT_DOUBLE_EQ(a.action.prices[0], 0.5);  // sigmoid(0) scaled to the cap
  EXPECT_THROW(select_action(out, log_std, 3, 1, AgentSet{}, ItemSet::full(1), Mode::eval, 1.0, rng), ProtocolError);
}

TEST(SelectAction, MaskedSoftmaxIsADistributionOverRemainingAgents) {
  Rng rng = make_rng(5);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = 1 + uniform_int(rng, 12);
    VectorXd s(n);
    for (int i = 0; i < n; ++i) s[i] = uniform(rng, -20, 20);
    AgentSet mask;
    for (int i = 0; i < n; ++i)
      if (bernoulli(rng, 0.5)) mask.insert(i);
    if (mask.empty()) mask.insert(uniform_int(rng, n));
    const VectorXd p = masked_softmax(s, mask);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    for (int i = 0; i < n; ++i) {
      if (!mask.contains(i)) {
        EXPECT_EQ(p[i], 0.0);
      }
    }
  }
}

TEST(SelectAction, TrainApproachesEvalInTheLimit) {
  Rng rng = make_rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    VectorXd out(4 + 3);
    for (int k = 0; k < 7; ++k) out[k] = uniform(rng, -2, 2);
    VectorXd sharp = out;
    sharp.head(4) *= 1e4;  // temperature -> 0
    const VectorXd log_std = VectorXd::Constant(3, -40.0);  // std -> 0
    const AgentSet agents = AgentSet::of({1, 2, 3});
    const auto e = select_action(sharp, log_std, 4, 3, agents, ItemSet::full(3), Mode::eval, 1.0, rng);
    const auto t = select_action(sharp, log_std, 4, 3, agents, ItemSet::full(3), Mode::train, 1.0, rng);
    EXPECT_EQ(e.action.agent, t.action.agent);
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(e.action.prices[j], t.action.prices[j], 1e-12);
  }
}

TEST(Surrogate, IdenticalParametersGiveUnitRatios) {
  auto model = random_model(StatisticKind::items_agents_left, Architecture::mlp, 4, 2, 8);
  Rng rng = make_rng(9);
  auto batch = random_batch(model, 16, rng);
  double mean_adv = 0.0;
  for (auto& s : batch) {
    s.old_log_prob = action_log_prob(model.forward(s.obs), model.log_std_params(), 4, s.agents, s.items, s.agent, s.raw, 1.0);
    mean_adv += s.advantage / 16.0;
  }
  std::vector<std::size_t> idx(16);
  std::iota(idx.begin(), idx.end(), 0);
  PpoParams p;
  const auto rep = policy_loss(model, model.theta(), batch, idx, p, nullptr);
  EXPECT_EQ(rep.clip_fraction, 0.0);
  EXPECT_NEAR(rep.surrogate, mean_adv, 1e-12);
}

TEST(Surrogate, GradientMatchesFiniteDifferences) {
  for (auto arch : {Architecture::mlp, Architecture::linear}) {
    auto model = random_model(StatisticKind::allocation_matrix, arch, 3, 2, 12);
    Rng rng = make_rng(10);
    const auto batch = random_batch(model, 3, rng);
    const std::vector<std::size_t> idx{0, 1, 2};
    PpoParams p;
    p.entropy = 0.05;
    VectorXd g = VectorXd::Zero(model.theta().size());
    policy_loss(model, model.theta(), batch, idx, p, &g);
    const double h = 1e-5;
    for (Eigen::Index k = 0; k < g.size(); ++k) {
      VectorXd tp = model.theta(), tm = model.theta();
      tp[k] += h;
      tm[k] -= h;
      const double fd = (policy_loss(model, tp, batch, idx, p, nullptr).loss - policy_loss(model, tm, batch, idx, p, nullptr).loss) / (2 * h);
      EXPECT_NEAR(g[k], fd, 1e-4 * std::max(1.0, std::abs(fd))) << "param " << k;
    }
  }
}

TEST(Surrogate, NonFiniteLossAborts) {
  auto model = random_model(StatisticKind::remaining_agents, Architecture::mlp, 3, 1, 13);
  Rng rng = make_rng(11);
  auto batch = random_batch(model, 2, rng);
  batch[0].advantage = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(policy_loss(model, model.theta(), batch, {0, 1}, PpoParams{}, nullptr), TrainingError);
}

TEST(Surrogate, ConstantRewardShiftLeavesGradientUnchanged) {
  // value function off, lambda = 1: every step's advantage is its episode
  // reward, and batch normalization removes any common shift
  const auto spec = make_setting("prop4");
  auto model = random_model(StatisticKind::allocation_matrix, Architecture::mlp, spec.n, spec.m, 14);
  const NetPolicy pol(model);
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8};
  auto trajs = run_episodes(pol, spec, {StatisticKind::allocation_matrix, Objective::welfare, false, Mode::train}, seeds);
  PpoParams p;
  p.use_value = false;
  p.lambda = 1.0;
  auto shifted = trajs;
  for (auto& t : shifted) t.reward += 37.5;
  const auto a = build_samples(trajs, nullptr, nullptr, p);
  const auto b = build_samples(shifted, nullptr, nullptr, p);
  std::vector<std::size_t> idx(a.size());
  std::iota(idx.begin(), idx.end(), 0);
  VectorXd ga = VectorXd::Zero(model.theta().size()), gb = ga;
  policy_loss(model, model.theta(), a, idx, p, &ga);
  policy_loss(model, model.theta(), b, idx, p, &gb);
  EXPECT_LT((ga - gb).lpNorm<Eigen::Infinity>(), 1e-8);
}

TEST(Gae, TerminalRewardOnly) {
  TrajectoryRecord tr;
  tr.steps.resize(3);
  for (auto& s : tr.steps) s.raw = {0.0};
  tr.reward = 2.0;
  PpoParams p;
  p.use_value = false;
  p.normalize_advantages = false;
  p.lambda = 0.5;
  const auto s = build_samples({tr}, nullptr, nullptr, p);
  ASSERT_EQ(s.size(), 3U);
  EXPECT_DOUBLE_EQ(s[2].advantage, 2.0);
  EXPECT_DOUBLE_EQ(s[1].advantage, 1.0);
  EXPECT_DOUBLE_EQ(s[0].advantage, 0.5);
}

TEST(Train, SingleAgentBanditLearnsToSell) {
  const auto spec = independent_identical_setting("bandit", 1, {{{1.0, 1.0}}});
  TrainConfig cfg;
  cfg.kind = StatisticKind::remaining_agents;
  cfg.normalize_setting = false;
  cfg.price_cap = 2.0;  // initial mean price sits at the value
  cfg.total_steps = 10'000;
  cfg.batch_steps = 256;
  cfg.ppo.minibatch = 64;
  cfg.eval_interval = 2'000;
  cfg.learning_rate = 1e-3;
  cfg.hidden = 16;
  const auto r = train_on(spec, cfg, 1);
  EXPECT_DOUBLE_EQ(r.curve.final(), 1.0);
  // the learned mean price is below the value
  PolicyModel model(1, 1, cfg.kind, cfg.architecture, cfg.hidden, 2.0);
  model.theta() = Eigen::Map<const VectorXd>(r.theta.data(), static_cast<Eigen::Index>(r.theta.size()));
  EXPECT_LT(price_mean(model.forward(std::vector<double>{1.0})[1], 2.0), 1.0);
}

TEST(Train, FixedSeedIsDeterministic) {
  TrainConfig cfg;
  cfg.setting = "prop2";
  cfg.total_steps = 3'000;
  cfg.batch_steps = 300;
  cfg.ppo.minibatch = 100;
  cfg.eval_interval = 1'000;
  cfg.hidden = 8;
  const auto a = train(cfg, 42), b = train(cfg, 42);
  ASSERT_EQ(a.theta.size(), b.theta.size());
  EXPECT_EQ(a.theta, b.theta);
  ASSERT_EQ(a.curve.points.size(), b.curve.points.size());
  for (std::size_t k = 0; k < a.curve.points.size(); ++k) EXPECT_EQ(a.curve.points[k].mean, b.curve.points[k].mean);
  cfg.threads = 3;
  const auto c = train(cfg, 42);
  EXPECT_EQ(a.theta, c.theta);
}

TEST(Train, RejectsInvalidConfig) {
  TrainConfig cfg;
  cfg.ppo.gamma = 0.0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = TrainConfig{};
  cfg.ppo.clip = 1.0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = TrainConfig{};
  cfg.batch_steps = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(Train, ActionsStayInsideTheMasks) {
  const auto spec = normalize(make_setting("kitchen_sink"));
  auto model = random_model(StatisticKind::price_allocation_matrix, Architecture::mlp, spec.n, spec.m, 15);
  const NetPolicy pol(model);
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    const auto rec = run_episode(pol, spec, {StatisticKind::price_allocation_matrix, Objective::welfare, true, Mode::train}, seed);
    for (const auto& s : rec.steps) {
      EXPECT_TRUE(s.agents.contains(s.action.agent));
      EXPECT_TRUE(s.purchased.subset_of(s.items));
      for (double p : s.action.prices) {
        EXPECT_GE(p, 0.0);
        EXPECT_LE(p, 1.0);
      }
    }
  }
}

TEST(SeedProtocol, TopThreeOfSix) {
  std::vector<LearningCurve> curves;
  for (int k = 1; k <= 6; ++k) curves.push_back({static_cast<std::uint64_t>(k), {{0, double(k), 0}, {10, double(k), 0}}});
  const auto agg = seed_protocol(curves);
  EXPECT_EQ(agg.selected, (std::vector<std::uint64_t>{6, 5, 4}));
  for (const auto& p : agg.points) EXPECT_DOUBLE_EQ(p.mean, 5.0);
  // reference Student-t interval on {4, 5, 6}: t(0.975, 2) * s / sqrt(3), s = 1
  const double half = 4.302652729911275 / std::sqrt(3.0);
  EXPECT_NEAR(agg.points[0].ci_low, 5.0 - half, 1e-9);
  EXPECT_NEAR(agg.points[0].ci_high, 5.0 + half, 1e-9);
  curves.pop_back();
  EXPECT_THROW(seed_protocol(curves), InputError);
}

TEST(SeedProtocol, IdenticalSeedsGiveZeroWidth) {
  std::vector<LearningCurve> curves;
  for (int k = 1; k <= 6; ++k) curves.push_back({static_cast<std::uint64_t>(k), {{0, 0.25, 0}, {5, 0.75, 0}}});
  const auto agg = seed_protocol(curves);
  EXPECT_DOUBLE_EQ(agg.points[1].mean, 0.75);
  EXPECT_DOUBLE_EQ(agg.points[1].ci_low, 0.75);
  EXPECT_DOUBLE_EQ(agg.points[1].ci_high, 0.75);
}
