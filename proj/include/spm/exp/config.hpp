#pragma once

// Experiment configuration: flat `key = value` lines, one `[arm]` block per
// arm. Global keys before the first block; `train.*` keys override TrainConfig
// fields globally or per arm, `setting.*` keys are setting parameters and
// `oracle.*` keys set the exact solvers' budgets.
//
//   setting = correlated
//   setting.n = 20
//   objective = welfare
//   seed = 7
//   train.total_steps = 100000
//   [arm]
//   name = full
//   type = learned
//   kind = price_allocation_matrix

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "spm/learner/train.hpp"
#include "spm/oracle.hpp"

namespace spm::exp {

/// Malformed configuration text; carries the offending line (0 when global).
class ParseError : public ValidationError {
 public:
  ParseError(int line, const std::string& what)
      : ValidationError(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

enum class ArmType { rsd, oracle_asp, oracle_psp, oracle_spm, learned };

inline std::string_view to_string(ArmType t) {
  switch (t) {
    case ArmType::rsd: return "rsd";
    case ArmType::oracle_asp: return "oracle_asp";
    case ArmType::oracle_psp: return "oracle_psp";
    case ArmType::oracle_spm: return "oracle_spm";
    case ArmType::learned: return "learned";
  }
  return "?";
}

inline ArmType parse_arm_type(std::string_view s) {
  for (auto t : {ArmType::rsd, ArmType::oracle_asp, ArmType::oracle_psp, ArmType::oracle_spm, ArmType::learned})
    if (s == to_string(t)) return t;
  throw InputError("unknown arm type '" + std::string(s) + "'");
}

inline bool is_oracle(ArmType t) { return t == ArmType::oracle_asp || t == ArmType::oracle_psp || t == ArmType::oracle_spm; }

struct ArmConfig {
  std::string name;
  ArmType type = ArmType::learned;
  StatisticKind kind = StatisticKind::allocation_matrix;
  std::map<std::string, std::string> train;  // per-arm overrides
  int line = 0;
};

struct ExperimentConfig {
  std::string setting;
  SettingParams setting_params;
  std::optional<Objective> objective;
  bool normalize = true;
  bool oracle_reference = true;  // solve the matching oracle class for every arm when possible
  int vtable_max_agents = 10;
  std::size_t final_window = 1;  // trailing evaluations averaged into final performance
  oracle::Budget budget;
  std::string out = "results";
  std::uint64_t seed = 1;
  std::map<std::string, std::string> train;
  std::vector<ArmConfig> arms;
  std::string text;  // source, hashed into the manifest
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace config_detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double to_double(const std::string& v, int line, const std::string& key) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ParseError(line, "'" + key + "' expects a number, got '" + v + "'");
  }
}

inline long to_long(const std::string& v, int line, const std::string& key) {
  const double x = to_double(v, line, key);
  if (x != std::floor(x)) throw ParseError(line, "'" + key + "' expects an integer, got '" + v + "'");
  return static_cast<long>(x);
}

inline bool to_bool(const std::string& v, int line, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ParseError(line, "'" + key + "' expects true/false, got '" + v + "'");
}

}  // namespace config_detail

/// Applies `train.*` overrides (key without the prefix) onto a TrainConfig.
inline void apply_train_override(learn::TrainConfig& c, const std::string& key, const std::string& v, int line = 0) {
  using namespace config_detail;
  if (key == "total_steps") c.total_steps = to_long(v, line, key);
  else if (key == "batch_steps") c.batch_steps = static_cast<int>(to_long(v, line, key));
  else if (key == "hidden") c.hidden = static_cast<int>(to_long(v, line, key));
  else if (key == "learning_rate") c.learning_rate = to_double(v, line, key);
  else if (key == "price_cap") c.price_cap = to_double(v, line, key);
  else if (key == "init_log_std") c.init_log_std = to_double(v, line, key);
  else if (key == "variance_reduction") c.variance_reduction = to_bool(v, line, key);
  else if (key == "eval_interval") c.eval_interval = to_long(v, line, key);
  else if (key == "eval_episodes") c.eval_episodes = static_cast<int>(to_long(v, line, key));
  else if (key == "exact_eval_limit") c.exact_eval_limit = static_cast<std::size_t>(to_long(v, line, key));
  else if (key == "threads") c.threads = static_cast<unsigned>(to_long(v, line, key));
  else if (key == "clip") c.ppo.clip = to_double(v, line, key);
  else if (key == "gamma") c.ppo.gamma = to_double(v, line, key);
  else if (key == "lambda") c.ppo.lambda = to_double(v, line, key);
  else if (key == "entropy") c.ppo.entropy = to_double(v, line, key);
  else if (key == "epochs") c.ppo.epochs = static_cast<int>(to_long(v, line, key));
  else if (key == "minibatch") c.ppo.minibatch = static_cast<int>(to_long(v, line, key));
  else if (key == "normalize_advantages") c.ppo.normalize_advantages = to_bool(v, line, key);
  else if (key == "use_value") c.ppo.use_value = to_bool(v, line, key);
  else if (key == "architecture") {
    try {
      c.architecture = learn::parse_architecture(v);
    } catch (const InputError& e) {
      throw ParseError(line, e.what());
    }
  } else if (key == "seeds") {
    const long k = to_long(v, line, key);
    if (k < 1) throw ParseError(line, "'seeds' must be positive");
    c.seeds.resize(static_cast<std::size_t>(k));
  } else {
    throw ParseError(line, "unknown training key '" + key + "'");
  }
}

/// Parses configuration text; checks arm names, types and the setting.
inline ExperimentConfig parse_config(std::string_view text) {
  using namespace config_detail;
  ExperimentConfig cfg;
  cfg.text = std::string(text);
  std::istringstream in(cfg.text);
  std::string raw;
  int line = 0;
  ArmConfig* arm = nullptr;
  std::set<std::string> arm_keys;
  while (std::getline(in, raw)) {
    ++line;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string s = trim(raw);
    if (s.empty()) continue;
    if (s == "[arm]") {
      cfg.arms.push_back({});
      arm = &cfg.arms.back();
      arm->line = line;
      arm_keys.clear();
      continue;
    }
    if (s.front() == '[') throw ParseError(line, "unknown section '" + s + "'");
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ParseError(line, "expected key = value");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key.empty()) throw ParseError(line, "empty key");
    if (key.rfind("train.", 0) == 0) {
      learn::TrainConfig probe;
      apply_train_override(probe, key.substr(6), value, line);
      (arm ? arm->train : cfg.train)[key.substr(6)] = value;
      continue;
    }
    if (arm) {
      if (!arm_keys.insert(key).second) throw ParseError(line, "duplicate key '" + key + "'");
      try {
        if (key == "name") arm->name = value;
        else if (key == "type") arm->type = parse_arm_type(value);
        else if (key == "kind") arm->kind = parse_statistic(value);
        else if (key == "architecture") arm->train["architecture"] = value;
        else throw ParseError(line, "unknown arm key '" + key + "'");
      } catch (const ParseError&) {
        throw;
      } catch (const std::exception& e) {
        throw ParseError(line, e.what());
      }
      continue;
    }
    if (key.rfind("setting.", 0) == 0) cfg.setting_params[key.substr(8)] = to_double(value, line, key);
    else if (key == "setting") cfg.setting = value;
    else if (key == "objective") {
      try {
        cfg.objective = parse_objective(value);
      } catch (const std::exception& e) {
        throw ParseError(line, e.what());
      }
    } else if (key == "normalize") cfg.normalize = to_bool(value, line, key);
    else if (key == "oracle_reference") cfg.oracle_reference = to_bool(value, line, key);
    else if (key == "vtable_max_agents") cfg.vtable_max_agents = static_cast<int>(to_long(value, line, key));
    else if (key == "final_window") {
      const long w = to_long(value, line, key);
      if (w < 1) throw ParseError(line, "'final_window' must be positive");
      cfg.final_window = static_cast<std::size_t>(w);
    } else if (key == "oracle.dp_states") cfg.budget.dp_states = static_cast<std::size_t>(to_long(value, line, key));
    else if (key == "oracle.search_expansions") cfg.budget.search_expansions = static_cast<std::size_t>(to_long(value, line, key));
    else if (key == "oracle.tree_nodes") cfg.budget.tree_nodes = static_cast<std::size_t>(to_long(value, line, key));
    else if (key == "oracle.orders") cfg.budget.orders = static_cast<std::size_t>(to_long(value, line, key));
    else if (key == "out") cfg.out = value;
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(to_long(value, line, key));
    else throw ParseError(line, "unknown key '" + key + "'");
  }
  if (cfg.setting.empty()) throw ParseError(0, "missing 'setting'");
  try {
    make_setting(cfg.setting, cfg.setting_params);
  } catch (const std::exception& e) {
    throw ParseError(0, e.what());
  }
  if (cfg.arms.empty()) throw ParseError(0, "no arms configured");
  std::set<std::string> names;
  for (auto& a : cfg.arms) {
    if (a.name.empty()) throw ParseError(a.line, "arm without a name");
    if (a.name.find_first_of(" \t,/\\") != std::string::npos) throw ParseError(a.line, "arm name '" + a.name + "' has separators");
    if (!names.insert(a.name).second) throw ParseError(a.line, "duplicate arm name '" + a.name + "'");
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot read config '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

/// Training configuration of a learned arm: defaults, then global overrides,
/// then the arm's; seeds derived from the master seed.
inline learn::TrainConfig arm_train_config(const ExperimentConfig& cfg, const ArmConfig& arm) {
  learn::TrainConfig c;
  c.setting = cfg.setting;
  c.setting_params = cfg.setting_params;
  c.objective = cfg.objective;
  c.normalize_setting = cfg.normalize;
  c.kind = arm.kind;
  for (const auto& [k, v] : cfg.train) apply_train_override(c, k, v);
  for (const auto& [k, v] : arm.train) apply_train_override(c, k, v, arm.line);
  for (std::size_t k = 0; k < c.seeds.size(); ++k) c.seeds[k] = derive_seed(cfg.seed, k + 1);
  c.eval_seed = derive_seed(cfg.seed, 0);
  c.validate();
  return c;
}

}  // namespace spm::exp
