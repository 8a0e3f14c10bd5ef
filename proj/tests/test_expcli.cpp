#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "spm/exp/experiment.hpp"

using namespace spm;
using namespace spm::exp;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("spm_expcli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

const SummaryRow& row(const RunReport& r, const std::string& arm) {
  for (const auto& x : r.rows)
    if (x.arm == arm) return x;
  throw std::runtime_error("no arm " + arm);
}

constexpr const char* kProp4 = R"(
setting = prop4
[arm]
name = spm
type = oracle_spm
[arm]
name = rsd
type = rsd
)";

constexpr const char* kTinyTraining = R"(
setting = prop2
seed = 5
train.total_steps = 2000
train.batch_steps = 200
train.minibatch = 50
train.eval_interval = 1000
train.hidden = 8
[arm]
name = full
type = learned
kind = price_allocation_matrix
[arm]
name = static
type = learned
kind = remaining_agents
train.learning_rate = 1e-3
[arm]
name = spm
type = oracle_spm
)";

}  // namespace

TEST(Config, ParsesGlobalsArmsAndOverrides) {
  const auto cfg = parse_config(R"(
# comment
setting = correlated
setting.n = 6
setting.delta = 0.25
objective = welfare
seed = 9
train.total_steps = 5000
[arm]
name = a
type = learned
kind = none
architecture = linear
train.hidden = 16
[arm]
name = b
type = rsd
)");
  EXPECT_EQ(cfg.setting, "correlated");
  EXPECT_EQ(cfg.setting_params.at("n"), 6.0);
  ASSERT_EQ(cfg.arms.size(), 2U);
  const auto tc = arm_train_config(cfg, cfg.arms[0]);
  EXPECT_EQ(tc.total_steps, 5000);
  EXPECT_EQ(tc.hidden, 16);
  EXPECT_EQ(tc.architecture, learn::Architecture::linear);
  EXPECT_EQ(tc.kind, StatisticKind::none);
  EXPECT_EQ(tc.seeds.size(), 6U);
  EXPECT_EQ(tc.seeds[0], derive_seed(9, 1));
  EXPECT_EQ(arm_train_config(cfg, cfg.arms[1]).hidden, 64);
}

TEST(Config, ErrorsCarryTheLine) {
  try {
    parse_config("setting = prop1\n[arm]\nname = a\ntype = bandit\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4);
  }
  try {
    parse_config("setting = prop1\ntrain.learning_rate = fast\n[arm]\nname = a\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2);
  }
  EXPECT_THROW(parse_config("setting = prop1\n"), ValidationError);  // no arms
  EXPECT_THROW(parse_config("setting = nowhere\n[arm]\nname = a\n"), ValidationError);
  EXPECT_THROW(parse_config("setting = prop1\n[arm]\nname = a\n[arm]\nname = a\n"), ValidationError);
  EXPECT_THROW(parse_config("setting = prop1\nbogus = 1\n[arm]\nname = a\n"), ValidationError);
}

TEST(Run, Prop4OracleAndRsdNormalized) {
  const auto dir = scratch("prop4");
  const auto rep = run_experiment(parse_config(kProp4), {Verb::solve, dir.string()});
  EXPECT_NEAR(*row(rep, "spm").value, 19.375 / 15.0, 1e-9);
  EXPECT_LT(*row(rep, "rsd").value, *row(rep, "spm").value);
  EXPECT_NEAR(*row(rep, "rsd").ratio, *row(rep, "rsd").value / (19.375 / 15.0), 1e-12);
  EXPECT_TRUE(rep.violations.empty());
  for (const char* f : {"summary.csv", "manifest.txt", "config.txt", "vtable.csv"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_NE(slurp(dir / "manifest.txt").find("config_hash="), std::string::npos);
}

TEST(Run, VTableUnnormalized) {
  auto cfg = parse_config(kProp4);
  cfg.normalize = false;
  const auto dir = scratch("vtable");
  run_experiment(cfg, {Verb::solve, dir.string()});
  const std::string t = slurp(dir / "vtable.csv");
  EXPECT_NE(t.find("\n1 2 3 4,2,*,19.375\n"), std::string::npos);
  EXPECT_NE(t.find("\n2 3,1,*,8.5\n"), std::string::npos);
  EXPECT_NE(t.find("\n1 3 4,2,1,15.75\n"), std::string::npos);
}

TEST(Run, OracleOnContinuousSettingIsRejected) {
  const auto cfg = parse_config("setting = correlated\n[arm]\nname = o\ntype = oracle_spm\n");
  EXPECT_THROW(run_experiment(cfg, {Verb::solve, scratch("cont").string()}), ValidationError);
}

TEST(Run, SizeErrorStaysWithItsArm) {
  const auto cfg = parse_config("oracle.dp_states = 20\n" + std::string(kProp4));
  const auto rep = run_experiment(cfg, {Verb::solve, scratch("size").string()});
  ASSERT_EQ(rep.rows.size(), 2U);
  EXPECT_TRUE(rep.size_errors);
  EXPECT_EQ(row(rep, "spm").status, "size_error");
  EXPECT_FALSE(row(rep, "spm").value.has_value());
  EXPECT_EQ(row(rep, "rsd").status, "ok");
  EXPECT_NEAR(*row(rep, "rsd").value, 12.75 / 15.0, 1e-9);
}

TEST(Run, SameMasterSeedGivesIdenticalCsvs) {
  const auto a = scratch("det_a"), b = scratch("det_b");
  const auto cfg = parse_config(kTinyTraining);
  run_experiment(cfg, {Verb::train, a.string()});
  RunOptions opt{Verb::train, b.string()};
  opt.parallel_arms = true;
  run_experiment(cfg, opt);
  for (const char* f : {"full_curves.csv", "full_aggregate.csv", "static_curves.csv", "summary.csv"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  const auto c = compare({a, b});
  for (const auto& r : c.rows) EXPECT_EQ(r.max_difference, 0.0) << r.arm;
  // a different master seed changes the curves
  const auto d = scratch("det_d");
  run_experiment(cfg, {Verb::train, d.string(), 6});
  EXPECT_NE(slurp(a / "full_curves.csv"), slurp(d / "full_curves.csv"));
  // evaluate reloads the saved parameters
  evaluate_experiment(cfg, {Verb::evaluate, a.string()});
  const std::string ev = slurp(a / "evaluation.csv");
  EXPECT_EQ(std::count(ev.begin(), ev.end(), '\n'), 1 + 12);
  EXPECT_TRUE(fs::exists(a / "trajectories.txt"));
  EXPECT_THROW(evaluate_experiment(cfg, {Verb::evaluate, scratch("missing").string()}), ValidationError);
}

TEST(Run, CurveCsvLayout) {
  const auto dir = scratch("layout");
  run_experiment(parse_config(kTinyTraining), {Verb::train, dir.string()});
  std::istringstream curves(slurp(dir / "full_curves.csv"));
  std::string header;
  std::getline(curves, header);
  EXPECT_EQ(header, "step,seed,eval_mean,eval_std");
  std::istringstream agg(slurp(dir / "full_aggregate.csv"));
  std::getline(agg, header);
  EXPECT_EQ(header, "step,top3_mean,ci_low,ci_high");
  int lines = 0;
  for (std::string l; std::getline(agg, l);) ++lines;
  EXPECT_EQ(lines, 3);  // steps 0, 1000, 2000
}

TEST(Compare, FlagsMonotonicityViolations) {
  std::vector<SummaryRow> rows;
  rows.push_back({"asp", "oracle_asp", "-", 2.0, 2.0, 2.0, {}, {}, "", "ok"});
  rows.push_back({"psp", "learned", "remaining_agents", 1.0, 0.9, 1.1, {}, {}, "", "ok"});
  rows.push_back({"full", "learned", "allocation_matrix", 2.5, 2.4, 2.6, {}, {}, "", "ok"});
  const auto v = monotonicity_violations(rows);
  ASSERT_EQ(v.size(), 1U);
  EXPECT_NE(v[0].find("asp"), std::string::npos);
  rows[1].ci_high = 2.0;  // overlapping interval is allowed
  EXPECT_TRUE(monotonicity_violations(rows).empty());
}

TEST(Compare, RejectsDifferentSettings) {
  const auto a = scratch("cmp_a"), b = scratch("cmp_b");
  run_experiment(parse_config(kProp4), {Verb::solve, a.string()});
  run_experiment(parse_config("setting = prop1\n[arm]\nname = spm\ntype = oracle_spm\n"), {Verb::solve, b.string()});
  EXPECT_THROW(compare({a, b}), InputError);
  EXPECT_THROW(compare({scratch("nothing")}), InputError);
}

namespace {

int run_cli(const std::string& args) {
  const int rc = std::system((std::string(SPM_CLI_PATH) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

fs::path write_config(const std::string& name, const std::string& text) {
  const fs::path p = fs::temp_directory_path() / ("spm_expcli_" + name + ".cfg");
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST(Cli, ExitCodes) {
  const auto out = scratch("cli");
  EXPECT_EQ(run_cli("solve --config " + write_config("ok", kProp4).string() + " --out " + out.string()), 0);
  EXPECT_TRUE(fs::exists(out / "summary.csv"));
  EXPECT_EQ(run_cli("solve --config " + write_config("empty", "setting = prop4\n").string() + " --out " + out.string()), 2);
  EXPECT_EQ(run_cli("solve --config /nonexistent.cfg"), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("solve --config " + write_config("budget", "oracle.dp_states = 20\n" + std::string(kProp4)).string() +
                    " --out " + out.string()),
            3);
  EXPECT_EQ(run_cli("compare " + out.string() + " " + out.string()), 0);
}
