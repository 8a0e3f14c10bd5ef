#pragma once

// Named value-distribution settings: samplers, exact finite supports where the
// distribution is discrete, and normalization to a highest value of 1.

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spm/core/random.hpp"
#include "spm/econ.hpp"

namespace spm {

/// Discrete distribution of one agent's valuation.
struct Marginal {
  std::vector<Valuation> values;
  std::vector<double> probs;
};

/// Agents are independent within a component; components are mixed by weight.
struct Component {
  double weight = 1.0;
  std::vector<Marginal> agents;
};

struct FiniteSupport {
  int num_items = 0;
  std::vector<Component> components;

  int num_agents() const { return components.empty() ? 0 : static_cast<int>(components[0].agents.size()); }

  /// Number of profiles in the expanded product (without merging duplicates).
  double profile_count() const {
    double total = 0.0;
    for (const auto& c : components) {
      double k = 1.0;
      for (const auto& a : c.agents) k *= static_cast<double>(a.values.size());
      total += k;
    }
    return total;
  }

  bool independent() const { return components.size() == 1; }
};

using SettingParams = std::map<std::string, double>;
using Sampler = std::function<ValuationProfile(Rng&)>;

struct SettingSpec {
  std::string name;
  SettingParams params;
  int n = 0;
  int m = 0;
  Objective objective_default = Objective::welfare;
  std::optional<FiniteSupport> support;
  Sampler sampler;
  double vmax = 0.0;
};

using WeightedProfile = std::pair<ValuationProfile, double>;

inline constexpr double kDefaultSupportLimit = 1 << 16;

/// Visits every profile of a finite support with its probability.
template <typename Visit>
void for_each_profile(const FiniteSupport& support, Visit&& visit) {
  const int n = support.num_agents();
  std::vector<int> idx(n, 0);
  for (const auto& comp : support.components) {
    if (comp.weight <= 0.0) continue;
    std::fill(idx.begin(), idx.end(), 0);
    while (true) {
      double prob = comp.weight;
      std::vector<Valuation> vals;
      vals.reserve(n);
      for (int i = 0; i < n; ++i) {
        prob *= comp.agents[i].probs[idx[i]];
        vals.push_back(comp.agents[i].values[idx[i]]);
      }
      if (prob > 0.0) visit(ValuationProfile(support.num_items, std::move(vals)), prob);
      int i = 0;
      while (i < n && ++idx[i] == static_cast<int>(comp.agents[i].values.size())) idx[i++] = 0;
      if (i == n) break;
    }
  }
}

inline std::vector<WeightedProfile> enumerate_support(const SettingSpec& spec,
                                                      double limit = kDefaultSupportLimit) {
  if (!spec.support) throw UnsupportedError("setting '" + spec.name + "' has no finite support");
  if (spec.support->profile_count() > limit)
    throw SizeError("support of '" + spec.name + "' too large to enumerate");
  std::vector<WeightedProfile> out;
  for_each_profile(*spec.support, [&](ValuationProfile p, double w) { out.emplace_back(std::move(p), w); });
  return out;
}

inline ValuationProfile sample_profile(const SettingSpec& spec, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return spec.sampler(rng);
}

inline void validate_support(const FiniteSupport& s, int n, int m) {
  double total = 0.0;
  for (const auto& c : s.components) {
    if (!(c.weight > 0.0)) throw ValidationError("component weight must be positive");
    if (static_cast<int>(c.agents.size()) != n) throw ValidationError("component agent count mismatch");
    total += c.weight;
    for (const auto& a : c.agents) {
      if (a.values.empty() || a.values.size() != a.probs.size()) throw ValidationError("malformed marginal");
      double pa = 0.0;
      for (double p : a.probs) {
        if (!(p > 0.0)) throw ValidationError("marginal probabilities must be positive");
        pa += p;
      }
      if (std::abs(pa - 1.0) > 1e-12) throw ValidationError("marginal probabilities must sum to 1");
      for (const auto& v : a.values) validate_valuation(v, m);
    }
  }
  if (std::abs(total - 1.0) > 1e-12) throw ValidationError("component weights must sum to 1");
}

/// Divides every value by vmax; vmax becomes 1.
inline SettingSpec normalize(const SettingSpec& spec) {
  if (!(spec.vmax > 0.0)) throw ValidationError("cannot normalize setting '" + spec.name + "' with vmax 0");
  const double f = 1.0 / spec.vmax;
  SettingSpec out = spec;
  out.vmax = 1.0;
  if (out.support) {
    for (auto& c : out.support->components)
      for (auto& a : c.agents)
        for (auto& v : a.values) v = scaled(v, f);
  }
  out.sampler = [inner = spec.sampler, f](Rng& rng) { return inner(rng).scaled(f); };
  return out;
}

// ---------------------------------------------------------------------------
// Catalog

namespace settings_detail {

inline Valuation same_value(int m, double x) { return UnitDemand{std::vector<double>(m, x)}; }

inline Marginal point(Valuation v) { return Marginal{{std::move(v)}, {1.0}}; }

inline Marginal uniform_over(int m, std::vector<double> xs) {
  Marginal g;
  for (double x : xs) {
    g.values.push_back(same_value(m, x));
    g.probs.push_back(1.0 / static_cast<double>(xs.size()));
  }
  return g;
}

inline Marginal discrete(std::vector<std::pair<Valuation, double>> vs) {
  Marginal g;
  for (auto& [v, p] : vs) {
    g.values.push_back(std::move(v));
    g.probs.push_back(p);
  }
  return g;
}

inline double pick(Rng& rng, std::initializer_list<double> xs) {
  const auto* it = xs.begin();
  return it[uniform_int(rng, static_cast<int>(xs.size()))];
}

inline std::vector<Valuation> identical(int n, int m, const std::vector<double>& v) {
  std::vector<Valuation> out;
  for (int i = 0; i < n; ++i) out.push_back(same_value(m, v[i]));
  return out;
}

inline double param(const SettingParams& p, const std::string& key, double fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

inline void check_params(const std::string& name, const SettingParams& p, std::initializer_list<const char*> allowed) {
  for (const auto& [k, v] : p) {
    bool ok = false;
    for (const char* a : allowed) ok |= (k == a);
    if (!ok) throw InputError("setting '" + name + "' has no parameter '" + k + "'");
  }
}

inline FiniteSupport single_component(int m, std::vector<Marginal> agents) {
  return FiniteSupport{m, {Component{1.0, std::move(agents)}}};
}

// Two agents, one item, values uniform on {1,3}.
inline SettingSpec prop1() {
  SettingSpec s{"prop1", {}, 2, 1, Objective::welfare, {}, {}, 3.0};
  s.support = single_component(1, {uniform_over(1, {1, 3}), uniform_over(1, {1, 3})});
  s.sampler = [](Rng& rng) { return ValuationProfile(1, identical(2, 1, {pick(rng, {1, 3}), pick(rng, {1, 3})})); };
  return s;
}

// Three agents, two identical items, values uniform on {1,3}.
inline SettingSpec prop2() {
  SettingSpec s{"prop2", {}, 3, 2, Objective::welfare, {}, {}, 3.0};
  s.support = single_component(2, {uniform_over(2, {1, 3}), uniform_over(2, {1, 3}), uniform_over(2, {1, 3})});
  s.sampler = [](Rng& rng) {
    std::vector<double> v(3);
    for (double& x : v) x = pick(rng, {1, 3});
    return ValuationProfile(2, identical(3, 2, v));
  };
  return s;
}

// Agent 0's value tells which of agents 1..3 draw from {2,12} and which from {3,8}.
inline SettingSpec prop3_bellwether() {
  SettingSpec s{"prop3_bellwether", {}, 6, 2, Objective::welfare, {}, {}, 15.0};
  const int m = 2;
  auto high = uniform_over(m, {2, 12});
  auto low = uniform_over(m, {3, 8});
  auto four = point(same_value(m, 4));
  FiniteSupport f{m, {}};
  f.components.push_back({0.5, {point(same_value(m, 15)), high, low, low, four, four}});
  f.components.push_back({0.5, {point(same_value(m, 1)), low, high, high, four, four}});
  s.support = f;
  s.sampler = [](Rng& rng) {
    const double v0 = pick(rng, {1, 15});
    auto from_high = [&] { return pick(rng, {2, 12}); };
    auto from_low = [&] { return pick(rng, {3, 8}); };
    std::vector<double> v{v0, 0, 0, 0, 4, 4};
    v[1] = v0 == 15 ? from_high() : from_low();
    for (int i = 2; i <= 3; ++i) v[i] = v0 == 15 ? from_low() : from_high();
    return ValuationProfile(2, identical(6, 2, v));
  };
  return s;
}

// Four independent agents, two identical items.
inline SettingSpec prop4() {
  SettingSpec s{"prop4", {}, 4, 2, Objective::welfare, {}, {}, 15.0};
  s.support = single_component(2, {uniform_over(2, {1, 15}), uniform_over(2, {3, 12}), uniform_over(2, {2, 8}),
                                   uniform_over(2, {2, 8})});
  s.sampler = [](Rng& rng) {
    std::vector<double> v{pick(rng, {1, 15}), pick(rng, {3, 12}), pick(rng, {2, 8}), pick(rng, {2, 8})};
    return ValuationProfile(2, identical(4, 2, v));
  };
  return s;
}

// Agents A, B (items 0,1) reveal which of C, D should go first for item 2.
inline SettingSpec prop8_linear() {
  SettingSpec s{"prop8_linear", {}, 4, 3, Objective::welfare, {}, {}, 10.0};
  // (vA(0), vA(1), vB(0), vB(1)) for the six equiprobable options
  static constexpr double kOptions[6][4] = {{10, 10, 10, 10}, {0, 0, 0, 0},  {10, 0, 0, 0},
                                             {0, 10, 0, 0},   {0, 0, 10, 0}, {0, 0, 0, 10}};
  auto item2 = [](double x) { return UnitDemand{{0, 0, x}}; };
  FiniteSupport f{3, {}};
  for (int k = 0; k < 6; ++k) {
    const auto& o = kOptions[k];
    Marginal a = point(UnitDemand{{o[0], o[1], 0}});
    Marginal b = point(UnitDemand{{o[2], o[3], 0}});
    Marginal risky = discrete({{item2(10), 0.1}, {item2(0), 0.9}});
    Marginal steady = point(item2(5));
    // options 0 and 1: best A/B allocation is worth 20 or 0
    if (k < 2) {
      f.components.push_back({1.0 / 6.0, {a, b, risky, steady}});
    } else {
      f.components.push_back({1.0 / 6.0, {a, b, steady, risky}});
    }
  }
  s.support = f;
  s.sampler = [](Rng& rng) {
    const auto& o = kOptions[uniform_int(rng, 6)];
    // best welfare achievable by A and B on items 0 and 1
    const double ab = std::max(std::max(o[0], o[1]), std::max(o[2], o[3]));
    const double both = std::max(o[0] + o[3], o[1] + o[2]);
    const double best = std::max(ab, both);
    const double risky = bernoulli(rng, 0.1) ? 10 : 0;
    const bool carl_risky = best == 20 || best == 0;
    std::vector<Valuation> v{UnitDemand{{o[0], o[1], 0}}, UnitDemand{{o[2], o[3], 0}},
                             UnitDemand{{0, 0, carl_risky ? risky : 5}}, UnitDemand{{0, 0, carl_risky ? 5 : risky}}};
    return ValuationProfile(3, v);
  };
  return s;
}

// Blue, red and yellow agents; item 0 is red, item 1 is yellow.
inline SettingSpec appD_nonidentical() {
  SettingSpec s{"appD_nonidentical", {}, 3, 2, Objective::welfare, {}, {}, 15.0};
  Marginal blue = discrete({{UnitDemand{{15, 1}}, 0.5}, {UnitDemand{{1, 15}}, 0.5}});
  Marginal red, yellow;
  for (double own : {12.0, 3.0})
    for (double other : {8.0, 2.0}) {
      red.values.push_back(UnitDemand{{own, other}});
      red.probs.push_back(0.25);
      yellow.values.push_back(UnitDemand{{other, own}});
      yellow.probs.push_back(0.25);
    }
  s.support = single_component(2, {blue, red, yellow});
  s.sampler = [](Rng& rng) {
    const bool blue_red = bernoulli(rng, 0.5);
    const double r_own = pick(rng, {12, 3}), r_other = pick(rng, {8, 2});
    const double y_own = pick(rng, {12, 3}), y_other = pick(rng, {8, 2});
    return ValuationProfile(2, {UnitDemand{{blue_red ? 15.0 : 1.0, blue_red ? 1.0 : 15.0}},
                                UnitDemand{{r_own, r_other}}, UnitDemand{{y_other, y_own}}});
  };
  return s;
}

// Common level z ~ U[(1-d)/2, (1+d)/2]; each value ~ U[z - (1-d)/2, z + (1-d)/2].
inline std::vector<double> correlated_values(Rng& rng, int n, double delta) {
  const double half = (1.0 - delta) / 2.0;
  const double z = uniform(rng, half, 1.0 - half);
  std::vector<double> v(n);
  for (double& x : v) x = uniform(rng, z - half, z + half);
  return v;
}

inline SettingSpec correlated(const SettingParams& p, const std::string& name = "correlated",
                              Objective objective = Objective::welfare) {
  check_params(name, p, {"n", "m", "delta"});
  const int n = static_cast<int>(param(p, "n", 20));
  const int m = static_cast<int>(param(p, "m", 5));
  const double delta = param(p, "delta", 0.5);
  if (n < 1 || n > kMaxAgents || m < 1 || m > kMaxItems) throw InputError("correlated: n/m out of range");
  if (!(delta >= 0.0 && delta <= 1.0)) throw InputError("correlated: delta must lie in [0,1]");
  SettingSpec s{name, {{"n", n}, {"m", m}, {"delta", delta}}, n, m, objective, {}, {}, 1.0};
  s.sampler = [n, m, delta](Rng& rng) { return ValuationProfile(m, identical(n, m, correlated_values(rng, n, delta))); };
  return s;
}

// 10 red, 10 yellow, 10 blue agents; items 0..9 red, 10..19 yellow.
inline SettingSpec colors() {
  SettingSpec s{"colors", {}, 30, 20, Objective::welfare, {}, {}, 2.0};
  auto colored = [](double red, double yellow) {
    std::vector<double> v(20);
    for (int j = 0; j < 20; ++j) v[j] = j < 10 ? red : yellow;
    return UnitDemand{v};
  };
  std::vector<Marginal> agents;
  for (int i = 0; i < 10; ++i) agents.push_back(point(colored(1, 0)));
  for (int i = 0; i < 10; ++i) agents.push_back(point(colored(0, 1)));
  // Marginally a blue agent prefers red with probability E[x] = 1/2,
  // independently of the other blue agents.
  for (int i = 0; i < 10; ++i) agents.push_back(discrete({{colored(2, 0), 0.5}, {colored(0, 2), 0.5}}));
  s.support = single_component(20, agents);
  s.sampler = [colored](Rng& rng) {
    std::vector<Valuation> v;
    for (int i = 0; i < 10; ++i) v.push_back(colored(1, 0));
    for (int i = 0; i < 10; ++i) v.push_back(colored(0, 1));
    for (int i = 0; i < 10; ++i) {
      const double x = uniform01(rng);
      v.push_back(bernoulli(rng, x) ? colored(2, 0) : colored(0, 2));
    }
    return ValuationProfile(20, v);
  };
  return s;
}

inline SettingSpec two_worlds() {
  SettingSpec s{"two_worlds", {}, 10, 1, Objective::welfare, {}, {}, 1.0};
  FiniteSupport f{1, {}};
  f.components.push_back({0.5, std::vector<Marginal>(10, uniform_over(1, {0.6, 1.0}))});
  f.components.push_back({0.5, std::vector<Marginal>(10, uniform_over(1, {0.1, 0.4}))});
  s.support = f;
  s.sampler = [](Rng& rng) {
    const bool high = bernoulli(rng, 0.5);
    std::vector<double> v(10);
    for (double& x : v) x = high ? pick(rng, {0.6, 1.0}) : pick(rng, {0.1, 0.4});
    return ValuationProfile(1, identical(10, 1, v));
  };
  return s;
}

inline SettingSpec inventory() {
  SettingSpec s{"inventory", {}, 20, 10, Objective::welfare, {}, {}, 1.0};
  s.support = single_component(10, std::vector<Marginal>(20, uniform_over(10, {0.5, 1.0})));
  s.sampler = [](Rng& rng) {
    std::vector<double> v(20);
    for (double& x : v) x = pick(rng, {0.5, 1.0});
    return ValuationProfile(10, identical(20, 10, v));
  };
  return s;
}

// Items A=0, B=1, C=2. Encoded literally as listed, including agent 1's value
// for C in the first branch.
inline SettingSpec kitchen_sink() {
  SettingSpec s{"kitchen_sink", {}, 3, 3, Objective::welfare, {}, {}, 5.0};
  auto on = [](int item, double x) {
    std::vector<double> v(3, 0.0);
    v[item] = x;
    return UnitDemand{v};
  };
  FiniteSupport f{3, {}};
  f.components.push_back({0.5, {point(on(0, 0.01)), point(on(2, 1)), discrete({{on(2, 5), 0.2}, {on(2, 0.5), 0.8}})}});
  f.components.push_back({0.5, {point(on(1, 0.01)), discrete({{on(2, 2), 0.2}, {on(2, 0), 0.8}}), point(on(2, 0.499))}});
  s.support = f;
  s.sampler = [on](Rng& rng) {
    if (bernoulli(rng, 0.5)) {
      return ValuationProfile(3, {on(0, 0.01), on(2, 1), on(2, bernoulli(rng, 0.2) ? 5 : 0.5)});
    }
    return ValuationProfile(3, {on(1, 0.01), on(2, bernoulli(rng, 0.2) ? 2 : 0), on(2, 0.499)});
  };
  return s;
}

// Agents 0..2 draw {0,60}; if exactly agent k is high, agent 3+k draws {40,0}
// and the other two of agents 3..5 draw {21,0}; otherwise agents 3..5 have 0.
inline SettingSpec id_setting() {
  SettingSpec s{"id_setting", {}, 6, 2, Objective::welfare, {}, {}, 60.0};
  const int m = 2;
  FiniteSupport f{m, {}};
  for (int mask = 0; mask < 8; ++mask) {
    std::vector<Marginal> agents;
    for (int i = 0; i < 3; ++i) agents.push_back(point(same_value(m, (mask >> i) & 1 ? 60 : 0)));
    const int k = std::popcount(static_cast<unsigned>(mask)) == 1 ? std::countr_zero(static_cast<unsigned>(mask)) : -1;
    for (int i = 0; i < 3; ++i) {
      if (k < 0) {
        agents.push_back(point(same_value(m, 0)));
      } else {
        agents.push_back(uniform_over(m, {i == k ? 40.0 : 21.0, 0.0}));
      }
    }
    f.components.push_back({0.125, agents});
  }
  s.support = f;
  s.sampler = [](Rng& rng) {
    std::vector<double> v(6, 0.0);
    int high = 0, who = -1;
    for (int i = 0; i < 3; ++i) {
      v[i] = pick(rng, {0, 60});
      if (v[i] > 0) {
        ++high;
        who = i;
      }
    }
    if (high == 1)
      for (int i = 0; i < 3; ++i) v[3 + i] = i == who ? pick(rng, {40, 0}) : pick(rng, {21, 0});
    return ValuationProfile(2, identical(6, 2, v));
  };
  return s;
}

// 10 agents, items 0..1 of type A and 2..5 of type B; per type the values
// follow the correlated process with delta = 0.5 and a per-type common level.
inline SettingSpec additive_types() {
  SettingSpec s{"additive_types", {}, 10, 6, Objective::welfare, {}, {}, 2.0};
  s.sampler = [](Rng& rng) {
    const auto a = correlated_values(rng, 10, 0.5);
    const auto b = correlated_values(rng, 10, 0.5);
    std::vector<Valuation> v;
    for (int i = 0; i < 10; ++i) v.push_back(AdditiveTypes{{0, 0, 1, 1, 1, 1}, {a[i], b[i]}});
    return ValuationProfile(6, v);
  };
  return s;
}

// Agent 0 orange, 1..4 blue, 5..8 red; items 0..4 black, 5..9 white.
inline SettingSpec maxmin_colors() {
  SettingSpec s{"maxmin_colors", {}, 9, 10, Objective::maxmin, {}, {}, 1.0};
  s.sampler = [](Rng& rng) {
    const bool first = bernoulli(rng, 0.5);
    auto agent = [](double black, double white) {
      std::vector<double> v(10);
      for (int j = 0; j < 10; ++j) v[j] = j < 5 ? black : white;
      return UnitDemand{v};
    };
    std::vector<Valuation> v;
    const double orange = uniform(rng, 0.5, 1.0);
    v.push_back(first ? agent(orange, 0) : agent(0, orange));
    // agents 1..4 are blue, 5..8 red; the "low" group wants black at U[.4,.5]
    for (int i = 1; i <= 8; ++i) {
      const bool blue = i <= 4;
      const bool low_group = first ? blue : !blue;
      if (low_group) {
        const double black = uniform(rng, 0.4, 0.5);
        v.push_back(agent(black, uniform(rng, 0.0, 0.25)));
      } else {
        const double black = uniform(rng, 0.9, 1.0);
        v.push_back(agent(black, uniform(rng, 0.4, 0.5)));
      }
    }
    return ValuationProfile(10, v);
  };
  return s;
}

}  // namespace settings_detail

inline std::vector<std::string> setting_names() {
  return {"prop1",          "prop2",          "prop3_bellwether",   "prop4",       "prop8_linear",
          "appD_nonidentical", "correlated",  "colors",             "two_worlds",  "inventory",
          "kitchen_sink",   "id_setting",     "additive_types",     "revenue_correlated", "maxmin_colors"};
}

inline SettingSpec make_setting(const std::string& name, const SettingParams& params = {}) {
  namespace d = settings_detail;
  SettingSpec s;
  if (name == "correlated") return d::correlated(params);
  if (name == "revenue_correlated") return d::correlated(params, name, Objective::revenue);
  if (name == "prop1") s = d::prop1();
  else if (name == "prop2") s = d::prop2();
  else if (name == "prop3_bellwether") s = d::prop3_bellwether();
  else if (name == "prop4") s = d::prop4();
  else if (name == "prop8_linear") s = d::prop8_linear();
  else if (name == "appD_nonidentical") s = d::appD_nonidentical();
  else if (name == "colors") s = d::colors();
  else if (name == "two_worlds") s = d::two_worlds();
  else if (name == "inventory") s = d::inventory();
  else if (name == "kitchen_sink") s = d::kitchen_sink();
  else if (name == "id_setting") s = d::id_setting();
  else if (name == "additive_types") s = d::additive_types();
  else if (name == "maxmin_colors") s = d::maxmin_colors();
  else throw InputError("unknown setting '" + name + "'");
  d::check_params(name, params, {});
  if (s.support) validate_support(*s.support, s.n, s.m);
  return s;
}

/// Every catalog setting with default parameters.
inline std::vector<SettingSpec> setting_catalog() {
  std::vector<SettingSpec> out;
  for (const auto& name : setting_names()) out.push_back(make_setting(name));
  return out;
}

/// Builds an independent-values finite setting of identical unit-demand items
/// from per-agent value lists and probabilities (used for randomized checks).
inline SettingSpec independent_identical_setting(const std::string& name, int m,
                                                 const std::vector<std::vector<std::pair<double, double>>>& agents) {
  const int n = static_cast<int>(agents.size());
  std::vector<Marginal> marg;
  double vmax = 0.0;
  for (const auto& a : agents) {
    Marginal g;
    for (auto [v, p] : a) {
      g.values.push_back(settings_detail::same_value(m, v));
      g.probs.push_back(p);
      vmax = std::max(vmax, v);
    }
    marg.push_back(g);
  }
  SettingSpec s{name, {}, n, m, Objective::welfare, settings_detail::single_component(m, marg), {}, vmax};
  validate_support(*s.support, n, m);
  s.sampler = [support = *s.support, n, m](Rng& rng) {
    std::vector<Valuation> v;
    for (int i = 0; i < n; ++i) {
      const auto& g = support.components[0].agents[i];
      double u = uniform01(rng);
      std::size_t k = 0;
      while (k + 1 < g.probs.size() && u >= g.probs[k]) u -= g.probs[k++];
      v.push_back(g.values[k]);
    }
    return ValuationProfile(m, v);
  };
  return s;
}

}  // namespace spm
