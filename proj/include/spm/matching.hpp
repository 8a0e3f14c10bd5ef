#pragma once

// Offline (full-information) optimum of a realized profile.

#include <algorithm>
#include <limits>
#include <vector>

#include "spm/econ.hpp"

namespace spm {

/// Maximum-weight assignment of rows to columns (each used at most once) for a
/// nonnegative weight matrix; unassigned rows/columns contribute 0. Returns the
/// column chosen for each row, or -1.
inline std::vector<int> max_weight_assignment(const std::vector<std::vector<double>>& w, int cols) {
  const int rows = static_cast<int>(w.size());
  const int k = std::max(rows, cols);
  if (k == 0) return {};
  // Square cost matrix for minimization, padded with zero weights.
  std::vector<std::vector<double>> cost(k + 1, std::vector<double>(k + 1, 0.0));
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) cost[i + 1][j + 1] = -w[i][j];

  // Shortest augmenting path Hungarian method with potentials, 1-based.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(k + 1, 0.0), v(k + 1, 0.0);
  std::vector<int> p(k + 1, 0), way(k + 1, 0);
  for (int i = 1; i <= k; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(k + 1, inf);
    std::vector<char> used(k + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= k; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0][j] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= k; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assign(rows, -1);
  for (int j = 1; j <= k; ++j) {
    const int i = p[j] - 1;
    if (i < rows && j - 1 < cols && w[i][j - 1] > 0.0) assign[i] = j - 1;
  }
  return assign;
}

namespace detail {

inline bool all_unit_demand(const ValuationProfile& p) {
  for (const auto& v : p.valuations())
    if (!std::holds_alternative<UnitDemand>(v)) return false;
  return true;
}

inline bool all_additive(const ValuationProfile& p) {
  for (const auto& v : p.valuations())
    if (!std::holds_alternative<AdditiveTypes>(v)) return false;
  return true;
}

inline double unit_demand_welfare(const ValuationProfile& p) {
  std::vector<std::vector<double>> w;
  for (const auto& v : p.valuations()) w.push_back(std::get<UnitDemand>(v).item_values);
  const auto assign = max_weight_assignment(w, p.num_items());
  double total = 0.0;
  for (std::size_t i = 0; i < assign.size(); ++i)
    if (assign[i] >= 0) total += w[i][assign[i]];
  return total;
}

// Per type, the units go to the agents with the highest type values.
inline double additive_welfare(const ValuationProfile& p) {
  double total = 0.0;
  const auto& first = std::get<AdditiveTypes>(p.valuation(0));
  for (const auto& v : p.valuations())
    if (std::get<AdditiveTypes>(v).type_of_item != first.type_of_item)
      throw UnsupportedError("additive agents must share the item type map");
  const std::size_t types = first.type_values.size();
  for (std::size_t t = 0; t < types; ++t) {
    const auto units = std::count(first.type_of_item.begin(), first.type_of_item.end(), static_cast<int>(t));
    std::vector<double> vals;
    for (const auto& v : p.valuations()) vals.push_back(std::get<AdditiveTypes>(v).type_values[t]);
    std::sort(vals.rbegin(), vals.rend());
    for (std::size_t i = 0; i < vals.size() && static_cast<long>(i) < units; ++i) total += vals[i];
  }
  return total;
}

// best[S] over agents processed so far: optimal welfare using item subset S.
inline double table_welfare(const ValuationProfile& p) {
  const int m = p.num_items();
  if (m > kMaxTableItems) throw SizeError("exhaustive welfare search limited to 12 items");
  const std::size_t full = std::size_t{1} << m;
  std::vector<double> best(full, 0.0);
  for (const auto& v : p.valuations()) {
    const BundleTable t = to_table(v);
    std::vector<double> next = best;
    for (std::size_t s = 0; s < full; ++s)
      for (std::size_t b = s; b != 0; b = (b - 1) & s) next[s] = std::max(next[s], best[s ^ b] + t.values[b]);
    best = std::move(next);
  }
  return best[full - 1];
}

// Largest t such that every agent can get a distinct item worth at least t.
inline double unit_demand_maxmin(const ValuationProfile& p) {
  const int n = p.num_agents();
  const int m = p.num_items();
  if (n == 0) return 0.0;
  if (n > m) return 0.0;
  std::vector<double> levels;
  for (const auto& v : p.valuations())
    for (double x : std::get<UnitDemand>(v).item_values) levels.push_back(x);
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  auto feasible = [&](double t) {
    std::vector<std::vector<double>> w(n, std::vector<double>(m, 0.0));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) w[i][j] = std::get<UnitDemand>(p.valuation(i)).item_values[j] >= t ? 1.0 : 0.0;
    const auto a = max_weight_assignment(w, m);
    return std::count_if(a.begin(), a.end(), [](int j) { return j >= 0; }) == n;
  };
  double best = 0.0;
  int lo = 0, hi = static_cast<int>(levels.size()) - 1;
  while (lo <= hi) {
    const int mid = (lo + hi) / 2;
    if (feasible(levels[mid])) {
      best = levels[mid];
      lo = mid + 1;
    } else {
      hi = mid - 1;
    }
  }
  return best;
}

// Exhaustive item-to-agent assignment for general valuations.
inline double brute_force_maxmin(const ValuationProfile& p) {
  const int n = p.num_agents();
  const int m = p.num_items();
  if (n == 0) return 0.0;
  double states = 1.0;
  for (int j = 0; j < m; ++j) states *= (n + 1);
  if (states > 2e6) throw SizeError("max-min offline search too large");
  std::vector<int> owner(m, 0);  // 0 = unassigned, else agent + 1
  double best = 0.0;
  while (true) {
    std::vector<ItemSet> bundles(n);
    for (int j = 0; j < m; ++j)
      if (owner[j] > 0) bundles[owner[j] - 1].insert(j);
    double lo = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) lo = std::min(lo, value_of(p.valuation(i), bundles[i]));
    best = std::max(best, lo);
    int j = 0;
    while (j < m && ++owner[j] > n) owner[j++] = 0;
    if (j == m) break;
  }
  return best;
}

}  // namespace detail

/// Optimal welfare of the realized profile; revenue uses the same value as its
/// offline reference. Max-min is the best achievable minimum value.
inline double offline_optimum(const ValuationProfile& profile, Objective objective) {
  if (profile.num_agents() == 0 || profile.num_items() == 0) return 0.0;
  if (objective == Objective::maxmin) {
    if (detail::all_unit_demand(profile)) return detail::unit_demand_maxmin(profile);
    return detail::brute_force_maxmin(profile);
  }
  if (detail::all_unit_demand(profile)) return detail::unit_demand_welfare(profile);
  if (detail::all_additive(profile)) return detail::additive_welfare(profile);
  return detail::table_welfare(profile);
}

}  // namespace spm
