#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "specmon/env_sim.hpp"
#include "specmon/metrics.hpp"

namespace oracle {

using Cell = std::pair<int, int>;  // (t, band)
using CellSet = std::set<Cell>;

inline CellSet cells(const std::vector<std::vector<int>>& grid, int t0, int t1) {
  CellSet s;
  for (int t = t0; t <= t1; ++t) {
    for (int b = 0; b < static_cast<int>(grid[t].size()); ++b) {
      if (grid[t][b]) s.insert({t, b});
    }
  }
  return s;
}

// IoU of the (time, band) sets active in pred and truth over steps t0..t1.
inline double set_iou(const std::vector<std::vector<int>>& pred, const std::vector<std::vector<int>>& truth, int t0,
                      int t1) {
  const auto p = cells(pred, t0, t1);
  const auto q = cells(truth, t0, t1);
  CellSet inter, uni;
  std::set_intersection(p.begin(), p.end(), q.begin(), q.end(), std::inserter(inter, inter.end()));
  std::set_union(p.begin(), p.end(), q.begin(), q.end(), std::inserter(uni, uni.end()));
  if (uni.empty()) return 1.0;
  return static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

inline std::vector<std::vector<int>> grid_from_bits(unsigned bits, int steps, int bands) {
  std::vector<std::vector<int>> g(steps, std::vector<int>(bands, 0));
  for (int t = 0; t < steps; ++t) {
    for (int b = 0; b < bands; ++b) g[t][b] = (bits >> (t * bands + b)) & 1U;
  }
  return g;
}

// Counts mismatches between the library IoU family and the set oracle for a
// pair of grids.
inline int iou_mismatches(const std::vector<std::vector<int>>& pred, const std::vector<std::vector<int>>& truth) {
  const int steps = static_cast<int>(truth.size());
  std::vector<specmon::OverlapCounts> counts;
  int bad = 0;
  for (int t = 0; t < steps; ++t) {
    std::vector<float> p(pred[t].begin(), pred[t].end());
    counts.push_back(specmon::overlap(p, truth[t]));
    if (specmon::iou_instant(p, truth[t]) != set_iou(pred, truth, t, t)) ++bad;
    for (int n = 1; n <= steps + 1; ++n) {
      const int t0 = std::max(0, t - n + 1);
      const std::span<const specmon::OverlapCounts> upto(counts);
      if (specmon::iou_block(upto, n) != set_iou(pred, truth, t0, t)) ++bad;
      if (t >= n) {
        const double want = set_iou(pred, truth, t - n, t) - set_iou(pred, truth, t - n + 1, t);
        if (specmon::iou_diff_block(upto, t, n) != want) ++bad;
      }
    }
    if (specmon::iou_cumulative(counts) != set_iou(pred, truth, 0, t)) ++bad;
  }
  return bad;
}

inline specmon::IntRange draw_range(std::mt19937_64& rng, int lo_min, int lo_max, int extra) {
  const int lo = std::uniform_int_distribution<int>(lo_min, lo_max)(rng);
  return {lo, lo + std::uniform_int_distribution<int>(0, extra)(rng)};
}

// A random valid spec; `stationary` forces change_prob = 0.
inline specmon::EnvSpec random_spec(std::mt19937_64& rng, bool stationary) {
  for (;;) {
    specmon::EnvSpec s;
    s.name = "random";
    s.n_bands = std::uniform_int_distribution<int>(6, 30)(rng);
    s.number = draw_range(rng, 1, 2, 2);
    s.width = draw_range(rng, 2, 4, 2);
    s.period = draw_range(rng, 2, 10, 3);
    s.duty_cycle = draw_range(rng, 1, s.period.lo - 1, 3);
    s.start = draw_range(rng, 0, 6, 6);
    if (std::bernoulli_distribution(0.3)(rng)) {
      s.freq = specmon::IntRange{0, s.n_bands - s.width.hi};
    } else {
      s.freq.reset();
    }
    s.change_prob = stationary ? 0.0 : 0.05;
    if (specmon::validate_spec(s).empty()) return s;
  }
}

inline int lcm_periods(const std::vector<specmon::SignalPair>& pairs) {
  int l = 1;
  for (const auto& p : pairs) l = std::lcm(l, p.period);
  return l;
}

// Violations of pair exclusivity, periodicity, pre-start silence and
// determinism for one environment.
struct SimViolations {
  int exclusivity = 0;
  int periodicity = 0;
  int pre_start = 0;
  int determinism = 0;
  int total() const { return exclusivity + periodicity + pre_start + determinism; }
};

inline SimViolations simulator_violations(const specmon::EnvSpec& spec, std::uint64_t seed) {
  SimViolations v;
  auto env = specmon::sample_environment(spec, seed);
  auto again = specmon::sample_environment(spec, seed);
  const auto pairs = env.pairs();
  const bool stationary = spec.change_prob == 0.0;
  const int steps = spec.start.hi + 2 * spec.period.hi * 3 + 8;
  std::vector<std::vector<int>> grid, grid2;
  std::vector<std::vector<specmon::SignalPair>> history;
  for (int t = 0; t < steps; ++t) {
    env.advance(t);
    again.advance(t);
    grid.push_back(env.state_at(t));
    grid2.push_back(again.state_at(t));
    history.push_back(env.pairs());
    if (env.pairs() != again.pairs()) ++v.determinism;
    for (int b = 0; b < spec.n_bands; ++b) {
      const auto o = env.observe(t, b);
      if (o.detection != (grid[t][b] != 0 ? 1 : 0)) ++v.determinism;
    }
  }
  if (grid != grid2) ++v.determinism;

  for (int t = 0; t < steps; ++t) {
    const auto& ps = history[t];
    // Cell occupancy rebuilt from the pair model.
    std::vector<int> owners(spec.n_bands, 0);
    for (const auto& p : ps) {
      ++owners[p.freq_lo];
      ++owners[p.upper()];
    }
    for (const auto& p : ps) {
      const int lo = grid[t][p.freq_lo] != 0;
      const int hi = grid[t][p.upper()] != 0;
      const bool exclusive = owners[p.freq_lo] == 1 && owners[p.upper()] == 1;
      if (t < p.start) {
        if (exclusive && (lo || hi)) ++v.pre_start;
        continue;
      }
      if (exclusive && lo + hi != 1) ++v.exclusivity;
      if (!lo && !hi) ++v.exclusivity;
    }
    for (int b = 0; b < spec.n_bands; ++b) {
      bool any = false;
      for (const auto& p : ps) any = any || p.active(t, b);
      if (any != (grid[t][b] != 0)) ++v.pre_start;
    }
  }
  if (stationary && !pairs.empty()) {
    const int l = lcm_periods(pairs);
    int t0 = 0;
    for (const auto& p : pairs) t0 = std::max(t0, p.start);
    for (int t = t0; t + l < steps; ++t) {
      if (grid[t] != grid[t + l]) ++v.periodicity;
    }
    for (const auto& p : pairs) {
      for (int t = p.start; t + p.period < steps; ++t) {
        if (p.active_band(t) != p.active_band(t + p.period)) ++v.periodicity;
      }
    }
  }
  return v;
}

}  // namespace oracle
