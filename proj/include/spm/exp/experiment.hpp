#pragma once

// Experiment runner: oracle solves, baselines and learned arms for one
// setting, written as CSV artifacts plus a manifest; and a comparison of
// several artifact directories.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <mutex>

#include "spm/exp/config.hpp"
#include "spm/oracle.hpp"

namespace spm::exp {

namespace fs = std::filesystem;

enum class Verb { solve, train, evaluate };

inline std::string_view to_string(Verb v) {
  switch (v) {
    case Verb::solve: return "solve";
    case Verb::train: return "train";
    case Verb::evaluate: return "evaluate";
  }
  return "?";
}

inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.15g", x);
  return buf;
}

inline std::string fmt(const std::optional<double>& x) { return x ? fmt(*x) : std::string(); }

struct SummaryRow {
  std::string arm;
  std::string type;
  std::string kind = "-";
  std::optional<double> value, ci_low, ci_high;
  std::optional<double> oracle_ref;
  std::optional<double> ratio;
  std::string seeds;  // provenance: seed set or evaluation stream
  std::string status = "ok";
};

/// Position in the information hierarchy ASP < PSP < SPM(items/agents left) <
/// SPM(full history); -1 for arms outside it.
inline int class_level(const std::string& type, const std::string& kind) {
  if (type == "oracle_asp") return 0;
  if (type == "oracle_psp") return 1;
  if (type == "rsd") return -1;
  if (kind == "none") return 0;
  if (kind == "remaining_agents") return 1;
  if (kind == "items_agents_left") return 2;
  return 3;
}

/// Pairs (lower, higher) where the arm with less information beats the one
/// with more by more than their intervals allow.
inline std::vector<std::string> monotonicity_violations(const std::vector<SummaryRow>& rows) {
  std::vector<std::string> out;
  for (const auto& a : rows)
    for (const auto& b : rows) {
      const int la = class_level(a.type, a.kind), lb = class_level(b.type, b.kind);
      if (la < 0 || lb < 0 || la >= lb || !a.value || !b.value) continue;
      const double lo = a.ci_low.value_or(*a.value), hi = b.ci_high.value_or(*b.value);
      if (lo > hi + 1e-9 * std::max({1.0, std::abs(lo), std::abs(hi)}))
        out.push_back(a.arm + " (" + fmt(*a.value) + ") > " + b.arm + " (" + fmt(*b.value) + ")");
    }
  return out;
}

struct RunReport {
  fs::path dir;
  std::vector<SummaryRow> rows;
  std::vector<std::string> violations;
  bool size_errors = false;
};

namespace run_detail {

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ValidationError("cannot write '" + p.string() + "'");
  f << text;
}

inline std::string seed_list(const std::vector<std::uint64_t>& seeds) {
  std::string s;
  for (std::size_t k = 0; k < seeds.size(); ++k) s += (k ? " " : "") + std::to_string(seeds[k]);
  return s;
}

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string s = "arm,type,kind,value,ci_low,ci_high,oracle_ref,ratio,seeds,status\n";
  for (const auto& r : rows)
    s += r.arm + "," + r.type + "," + r.kind + "," + fmt(r.value) + "," + fmt(r.ci_low) + "," + fmt(r.ci_high) + "," +
         fmt(r.oracle_ref) + "," + fmt(r.ratio) + "," + r.seeds + "," + r.status + "\n";
  return s;
}

/// Exact oracle values, computed once per class and remembered (including
/// size errors) so arms and references share them.
class OracleCache {
 public:
  OracleCache(const SettingSpec& spec, Objective objective, oracle::Budget budget)
      : spec_(spec), objective_(objective), budget_(budget) {}

  std::optional<double> get(const std::string& cls) {
    std::lock_guard lock(mu_);
    if (!spec_.support) return std::nullopt;
    if (auto it = values_.find(cls); it != values_.end()) return it->second;
    std::optional<double> v;
    try {
      if (!oracle_) oracle_.emplace(spec_, objective_, budget_);
      if (cls == "asp") v = oracle_->asp().value;
      else if (cls == "psp") v = oracle_->psp().value;
      else v = oracle_->solve(parse_statistic(cls), false).value;
    } catch (const SizeError&) {
      v = std::nullopt;
      oracle_.reset();  // a partial memo may be over budget; start afresh next time
    }
    values_[cls] = v;
    return v;
  }

  oracle::Oracle* oracle() {
    std::lock_guard lock(mu_);
    if (!spec_.support) return nullptr;
    if (!oracle_) oracle_.emplace(spec_, objective_, budget_);
    return &*oracle_;
  }

 private:
  SettingSpec spec_;
  Objective objective_;
  oracle::Budget budget_;
  std::mutex mu_;
  std::optional<oracle::Oracle> oracle_;
  std::map<std::string, std::optional<double>> values_;
};

inline std::string class_of(const ArmConfig& arm) {
  switch (arm.type) {
    case ArmType::oracle_asp: return "asp";
    case ArmType::oracle_psp: return "psp";
    case ArmType::rsd: return "allocation_matrix";
    case ArmType::oracle_spm:
    case ArmType::learned:
      if (arm.kind == StatisticKind::none) return "asp";
      if (arm.kind == StatisticKind::remaining_agents) return "psp";
      return std::string(spm::to_string(arm.kind));
  }
  return "allocation_matrix";
}

/// Reference class for ratios: the arm's own class for learned arms, the full
/// optimum for baselines and restricted oracles.
inline std::string reference_class(const ArmConfig& arm) {
  if (arm.type == ArmType::learned) return class_of(arm);
  return "allocation_matrix";
}

inline void write_theta(const fs::path& p, const std::vector<double>& theta) {
  std::string s;
  char buf[40];
  for (double x : theta) {
    std::snprintf(buf, sizeof buf, "%.17g\n", x);
    s += buf;
  }
  write_text(p, s);
}

inline std::vector<double> read_theta(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw ValidationError("missing trained parameters '" + p.string() + "' (run train first)");
  std::vector<double> out;
  double x;
  while (f >> x) out.push_back(x);
  return out;
}

inline std::string curves_csv(const std::vector<learn::LearningCurve>& curves) {
  std::string s = "step,seed,eval_mean,eval_std\n";
  for (const auto& c : curves)
    for (const auto& p : c.points) s += std::to_string(p.step) + "," + std::to_string(c.seed) + "," + fmt(p.mean) + "," + fmt(p.std) + "\n";
  return s;
}

inline std::string aggregate_csv(const learn::Aggregate& agg) {
  std::string s = "step,top3_mean,ci_low,ci_high\n";
  for (const auto& p : agg.points) s += std::to_string(p.step) + "," + fmt(p.mean) + "," + fmt(p.ci_low) + "," + fmt(p.ci_high) + "\n";
  return s;
}

/// V(S, x) table for independent values with identical items: optimal value
/// of the residual problem with agents S and x items, overall and with a
/// fixed first agent. Agent ids are 1-based.
inline std::optional<std::string> vtable_csv(oracle::Oracle& o, int max_agents) {
  const auto& model = o.model();
  if (model.num_components() != 1 || model.num_item_classes() != 1 || model.n() > max_agents) return std::nullopt;
  const int n = model.n(), m = model.m();
  std::string s = "agents,items,first,value\n";
  const auto prior = model.prior();
  for (std::uint64_t bits = 1; bits < (std::uint64_t{1} << n); ++bits) {
    const AgentSet agents(bits);
    std::string name;
    for (int i : agents) name += (name.empty() ? "" : " ") + std::to_string(i + 1);
    for (int x = 1; x <= std::min(m, agents.size()); ++x) {
      const ItemSet items = ItemSet::full(x);
      s += name + "," + std::to_string(x) + ",*," + fmt(o.full_dp().value(agents, items, prior)) + "\n";
      for (int i : agents)
        s += name + "," + std::to_string(x) + "," + std::to_string(i + 1) + "," + fmt(o.full_dp().q_agent(agents, items, prior, i)) + "\n";
    }
  }
  return s;
}

inline learn::CurvePoint evaluate_rsd(const SettingSpec& spec, Objective objective, const learn::TrainConfig& tc, std::string& provenance) {
  if (spec.support && spec.n <= 8) {
    provenance = "exact";
    return {0, oracle::rsd_value(spec, objective), 0.0};
  }
  provenance = "eval_seed=" + std::to_string(tc.eval_seed);
  const learn::Evaluator ev(spec, objective, StatisticKind::none, tc);
  return ev(RsdPolicy(spec.m), 0, 0);
}

}  // namespace run_detail

struct RunOptions {
  Verb verb = Verb::train;
  std::optional<std::string> out = std::nullopt;
  std::optional<std::uint64_t> seed = std::nullopt;
  bool parallel_arms = false;
  std::ostream* log = nullptr;
};

/// Runs the configured arms and writes the artifact directory. Oracle size
/// errors are reported per arm; other arms still run.
inline RunReport run_experiment(ExperimentConfig cfg, const RunOptions& opt) {
  using namespace run_detail;
  if (opt.out) cfg.out = *opt.out;
  if (opt.seed) cfg.seed = *opt.seed;
  const SettingSpec raw = make_setting(cfg.setting, cfg.setting_params);
  const SettingSpec spec = cfg.normalize ? normalize(raw) : raw;
  const Objective objective = cfg.objective.value_or(spec.objective_default);
  for (const auto& a : cfg.arms)
    if (is_oracle(a.type) && !spec.support)
      throw ValidationError("arm '" + a.name + "': exact oracle needs a finite setting, '" + spec.name + "' is continuous");
  std::vector<learn::TrainConfig> tcs;
  for (const auto& a : cfg.arms) tcs.push_back(arm_train_config(cfg, a));

  RunReport rep;
  rep.dir = cfg.out;
  fs::create_directories(rep.dir);
  auto log = [&](const std::string& s) {
    if (opt.log) *opt.log << s << std::endl;
  };
  OracleCache cache(spec, objective, cfg.budget);
  std::vector<SummaryRow> rows(cfg.arms.size());

  auto run_arm = [&](std::size_t k) {
    const ArmConfig& arm = cfg.arms[k];
    const auto& tc = tcs[k];
    SummaryRow& row = rows[k];
    row.arm = arm.name;
    row.type = std::string(to_string(arm.type));
    if (arm.type == ArmType::learned || arm.type == ArmType::oracle_spm) row.kind = std::string(spm::to_string(arm.kind));
    if (is_oracle(arm.type)) {
      row.value = cache.get(class_of(arm));
      row.seeds = "exact";
      if (!row.value) {
        row.status = "size_error";
        return;
      }
      row.ci_low = row.ci_high = row.value;
    } else if (arm.type == ArmType::rsd) {
      const auto p = evaluate_rsd(spec, objective, tc, row.seeds);
      row.value = p.mean;
      const double half = row.seeds == "exact" ? 0.0 : 1.96 * p.std / std::sqrt(static_cast<double>(tc.eval_episodes));
      row.ci_low = p.mean - half;
      row.ci_high = p.mean + half;
    } else if (opt.verb == Verb::solve) {
      row.status = "skipped";
      return;
    } else {
      std::vector<learn::LearningCurve> curves;
      for (auto seed : tc.seeds) {
        log("arm " + arm.name + ": training seed " + std::to_string(seed));
        auto r = learn::train_on(spec, tc, seed);
        write_theta(rep.dir / ("params_" + arm.name + "_" + std::to_string(seed) + ".txt"), r.theta);
        curves.push_back(std::move(r.curve));
      }
      const std::size_t top = std::min<std::size_t>(3, curves.size());
      const auto agg = learn::seed_protocol(curves, tc.seeds.size(), top);
      const auto fin = learn::final_performance(curves, agg, cfg.final_window);
      write_text(rep.dir / (arm.name + "_curves.csv"), curves_csv(curves));
      write_text(rep.dir / (arm.name + "_aggregate.csv"), aggregate_csv(agg));
      row.value = fin.mean;
      row.ci_low = fin.ci_low;
      row.ci_high = fin.ci_high;
      row.seeds = seed_list(agg.selected) + " of " + seed_list(tc.seeds);
    }
    if (cfg.oracle_reference && spec.support) {
      row.oracle_ref = cache.get(reference_class(arm));
      if (row.oracle_ref && row.value && *row.oracle_ref != 0.0) row.ratio = *row.value / *row.oracle_ref;
    }
  };

  if (opt.parallel_arms) {
    std::vector<std::future<void>> jobs;
    for (std::size_t k = 0; k < cfg.arms.size(); ++k) jobs.push_back(std::async(std::launch::async, run_arm, k));
    for (auto& j : jobs) j.get();
  } else {
    for (std::size_t k = 0; k < cfg.arms.size(); ++k) run_arm(k);
  }

  for (const auto& r : rows) rep.size_errors = rep.size_errors || r.status == "size_error";
  rep.rows = rows;
  rep.violations = monotonicity_violations(rows);
  write_text(rep.dir / "summary.csv", summary_csv(rows));
  if (auto* o = cache.oracle()) {
    try {
      if (auto v = vtable_csv(*o, cfg.vtable_max_agents)) write_text(rep.dir / "vtable.csv", *v);
    } catch (const SizeError&) {
      log("vtable skipped: state budget exceeded");
    }
  }
  std::string manifest;
  manifest += "verb=" + std::string(to_string(opt.verb)) + "\n";
  char hash[24];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(cfg.text)));
  manifest += "config_hash=" + std::string(hash) + "\n";
  manifest += "master_seed=" + std::to_string(cfg.seed) + "\n";
  manifest += "setting=" + cfg.setting + "\n";
  for (const auto& [k, v] : cfg.setting_params) manifest += "setting." + k + "=" + fmt(v) + "\n";
  manifest += "objective=" + std::string(to_string(objective)) + "\n";
  manifest += "normalized=" + std::string(cfg.normalize ? "true" : "false") + "\n";
  manifest += "final_window=" + std::to_string(cfg.final_window) + "\n";
  for (std::size_t k = 0; k < cfg.arms.size(); ++k) {
    manifest += "arm." + cfg.arms[k].name + ".type=" + std::string(to_string(cfg.arms[k].type)) + "\n";
    if (cfg.arms[k].type == ArmType::learned || cfg.arms[k].type == ArmType::rsd) {
      manifest += "arm." + cfg.arms[k].name + ".seeds=" + seed_list(tcs[k].seeds) + "\n";
      manifest += "arm." + cfg.arms[k].name + ".eval_seed=" + std::to_string(tcs[k].eval_seed) + "\n";
    }
  }
  for (const auto& v : rep.violations) manifest += "monotonicity_violation=" + v + "\n";
  write_text(rep.dir / "manifest.txt", manifest);
  write_text(rep.dir / "config.txt", cfg.text);
  return rep;
}

/// Re-evaluates the trained parameters of every learned arm on a fresh
/// evaluation stream and dumps a few sampled trajectories per arm.
inline fs::path evaluate_experiment(ExperimentConfig cfg, const RunOptions& opt, int dumps = 10) {
  using namespace run_detail;
  if (opt.out) cfg.out = *opt.out;
  if (opt.seed) cfg.seed = *opt.seed;
  const SettingSpec raw = make_setting(cfg.setting, cfg.setting_params);
  const SettingSpec spec = cfg.normalize ? normalize(raw) : raw;
  const Objective objective = cfg.objective.value_or(spec.objective_default);
  const fs::path dir = cfg.out;
  std::string csv = "arm,seed,eval_mean,eval_std\n", traj;
  for (const auto& arm : cfg.arms) {
    auto tc = arm_train_config(cfg, arm);
    tc.eval_seed = derive_seed(tc.eval_seed, 0xe7a1);
    const EpisodeOptions eo{arm.kind, objective, false, Mode::eval};
    if (arm.type == ArmType::rsd) {
      std::string prov;
      const auto p = evaluate_rsd(spec, objective, tc, prov);
      csv += arm.name + ",-," + fmt(p.mean) + "," + fmt(p.std) + "\n";
      for (int e = 0; e < dumps; ++e)
        traj += arm.name + " " + dump_trajectory(run_episode(RsdPolicy(spec.m), spec, eo, derive_seed(tc.eval_seed, static_cast<std::uint64_t>(e)))) + "\n";
      continue;
    }
    if (arm.type != ArmType::learned) continue;
    const double cap = tc.price_cap * (cfg.normalize ? 1.0 : spec.vmax);
    const learn::Evaluator ev(spec, objective, arm.kind, tc);
    for (auto seed : tc.seeds) {
      learn::PolicyModel model(spec.n, spec.m, arm.kind, tc.architecture, tc.hidden, cap);
      const auto theta = read_theta(dir / ("params_" + arm.name + "_" + std::to_string(seed) + ".txt"));
      if (static_cast<Eigen::Index>(theta.size()) != model.theta().size())
        throw ValidationError("parameter file for arm '" + arm.name + "' does not match its architecture");
      model.theta() = Eigen::Map<const Eigen::VectorXd>(theta.data(), model.theta().size());
      const learn::NetPolicy pol(model);
      const auto p = ev(pol, 0, 0);
      csv += arm.name + "," + std::to_string(seed) + "," + fmt(p.mean) + "," + fmt(p.std) + "\n";
      if (seed == tc.seeds.front())
        for (int e = 0; e < dumps; ++e)
          traj += arm.name + " " + dump_trajectory(run_episode(pol, spec, eo, derive_seed(tc.eval_seed, static_cast<std::uint64_t>(e)))) + "\n";
    }
  }
  write_text(dir / "evaluation.csv", csv);
  write_text(dir / "trajectories.txt", traj);
  return dir;
}

// ---------------------------------------------------------------------------
// Comparison

struct ComparedRow {
  std::string arm;
  std::vector<std::optional<double>> values;  // one per directory
  double max_difference = 0.0;
};

struct Comparison {
  std::vector<std::string> dirs;
  std::vector<ComparedRow> rows;
  std::vector<std::string> violations;
};

namespace compare_detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::optional<double> num(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

inline std::map<std::string, std::string> read_manifest(const fs::path& dir) {
  std::ifstream f(dir / "manifest.txt");
  if (!f) throw InputError("'" + dir.string() + "' has no manifest");
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(f, line))
    if (auto eq = line.find('='); eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  return kv;
}

}  // namespace compare_detail

inline std::vector<SummaryRow> read_summary(const fs::path& dir) {
  using namespace compare_detail;
  std::ifstream f(dir / "summary.csv");
  if (!f) throw InputError("'" + dir.string() + "' has no summary.csv");
  std::string line;
  std::getline(f, line);
  std::vector<SummaryRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto c = split(line, ',');
    if (c.size() != 10) throw InputError("malformed summary row in '" + dir.string() + "'");
    rows.push_back({c[0], c[1], c[2], num(c[3]), num(c[4]), num(c[5]), num(c[6]), num(c[7]), c[8], c[9]});
  }
  return rows;
}

/// Merges the summaries of directories run on the same setting and objective.
inline Comparison compare(const std::vector<fs::path>& dirs) {
  using namespace compare_detail;
  if (dirs.empty()) throw InputError("nothing to compare");
  Comparison out;
  std::map<std::string, std::string> ref;
  std::vector<SummaryRow> all;
  std::map<std::string, std::size_t> index;
  for (std::size_t d = 0; d < dirs.size(); ++d) {
    auto man = read_manifest(dirs[d]);
    std::map<std::string, std::string> key;
    for (const auto& [k, v] : man)
      if (k.rfind("setting", 0) == 0 || k == "objective" || k == "normalized") key[k] = v;
    if (d == 0) ref = key;
    else if (key != ref) throw InputError("'" + dirs[d].string() + "' was run on a different setting or objective");
    out.dirs.push_back(dirs[d].string());
    for (auto& r : read_summary(dirs[d])) {
      auto [it, fresh] = index.emplace(r.arm, out.rows.size());
      if (fresh) out.rows.push_back({r.arm, std::vector<std::optional<double>>(dirs.size()), 0.0});
      out.rows[it->second].values[d] = r.value;
      all.push_back(r);
    }
  }
  for (auto& row : out.rows) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& v : row.values)
      if (v) {
        lo = std::min(lo, *v);
        hi = std::max(hi, *v);
      }
    row.max_difference = hi >= lo ? hi - lo : 0.0;
  }
  out.violations = monotonicity_violations(all);
  return out;
}

inline std::string comparison_csv(const Comparison& c) {
  std::string s = "arm";
  for (std::size_t d = 0; d < c.dirs.size(); ++d) s += ",value_" + std::to_string(d);
  s += ",max_difference\n";
  for (const auto& r : c.rows) {
    s += r.arm;
    for (const auto& v : r.values) s += "," + fmt(v);
    s += "," + fmt(r.max_difference) + "\n";
  }
  return s;
}

}  // namespace spm::exp
