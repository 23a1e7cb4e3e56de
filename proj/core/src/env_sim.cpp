#include "specmon/env_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "specmon/errors.hpp"

namespace specmon {

namespace {

int draw(IntRange r, std::mt19937_64& rng) {
  return std::uniform_int_distribution<int>(r.lo, r.hi)(rng);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

void check_range(const char* name, IntRange r, std::vector<std::string>& out) {
  if (r.lo > r.hi) {
    std::ostringstream os;
    os << name << " range has lo > hi ([" << r.lo << ", " << r.hi << "])";
    out.push_back(os.str());
  }
}

}  // namespace

IntRange EnvSpec::period_for_class(int class_id) const {
  if (class_id >= 1 && class_id <= static_cast<int>(class_period.size())) {
    return class_period[class_id - 1];
  }
  return period;
}

std::vector<std::string> validate_spec(const EnvSpec& spec) {
  std::vector<std::string> out;
  check_range("number", spec.number, out);
  check_range("width", spec.width, out);
  check_range("period", spec.period, out);
  check_range("duty_cycle", spec.duty_cycle, out);
  check_range("start", spec.start, out);
  if (spec.freq) check_range("freq", *spec.freq, out);
  for (const auto& r : spec.class_period) check_range("class period", r, out);
  if (!out.empty()) return out;

  if (spec.n_bands < 2) out.emplace_back("n_bands must be >= 2");
  if (spec.n_classes < 1) out.emplace_back("n_classes must be >= 1");
  if (spec.number.lo < 0) out.emplace_back("number must be >= 0");
  if (spec.width.lo < 2) out.emplace_back("width must be >= 2");
  if (spec.width.hi > spec.n_bands) out.emplace_back("width.hi must be <= n_bands");
  if (spec.period.lo < 2) out.emplace_back("period must be >= 2");
  if (spec.duty_cycle.lo < 1) out.emplace_back("duty_cycle must be >= 1");
  if (spec.start.lo < 0) out.emplace_back("start must be >= 0");
  if (!(spec.change_prob >= 0.0 && spec.change_prob <= 1.0)) {
    out.emplace_back("change_prob must lie in [0, 1]");
  }
  if (!(spec.noise_prob >= 0.0 && spec.noise_prob <= 1.0)) {
    out.emplace_back("noise_prob must lie in [0, 1]");
  }
  // Every period a pair can draw must admit at least one duty value below it.
  auto duty_ok = [&](IntRange period) { return spec.duty_cycle.lo < period.lo; };
  bool duty_feasible = duty_ok(spec.period);
  for (int c = 1; c <= static_cast<int>(spec.class_period.size()); ++c) {
    duty_feasible = duty_feasible && duty_ok(spec.class_period[c - 1]);
    if (spec.class_period[c - 1].lo < 2) out.emplace_back("class period must be >= 2");
  }
  if (!duty_feasible) out.emplace_back("duty_cycle must be < period for all feasible draws");
  if (spec.freq) {
    if (spec.freq->lo < 0) out.emplace_back("freq.lo must be >= 0");
    if (spec.freq->hi + spec.width.hi - 1 >= spec.n_bands) {
      out.emplace_back("freq range places pairs outside [0, n_bands)");
    }
  }
  if (static_cast<int>(spec.class_period.size()) > spec.n_classes) {
    out.emplace_back("class period table longer than n_classes");
  }
  return out;
}

void require_valid(const EnvSpec& spec) {
  const auto violations = validate_spec(spec);
  if (violations.empty()) return;
  std::ostringstream os;
  os << "invalid environment spec";
  if (!spec.name.empty()) os << " '" << spec.name << "'";
  os << ":";
  for (const auto& v : violations) os << "\n  - " << v;
  throw ConfigError(os.str());
}

void Environment::check_band(int band) const {
  if (band < 0 || band >= n_bands()) {
    throw UsageError("band " + std::to_string(band) + " outside [0, " +
                     std::to_string(n_bands()) + ")");
  }
}

SignalPair sample_pair(const EnvSpec& spec, std::mt19937_64& rng) {
  SignalPair p;
  p.width = draw(spec.width, rng);
  p.class_id = spec.n_classes > 1 ? draw({1, spec.n_classes}, rng) : 1;
  p.period = draw(spec.period_for_class(p.class_id), rng);
  p.duty_cycle = draw({spec.duty_cycle.lo, std::min(spec.duty_cycle.hi, p.period - 1)}, rng);
  p.freq_lo = spec.freq ? draw(*spec.freq, rng) : draw({0, spec.n_bands - p.width}, rng);
  p.start = draw(spec.start, rng);
  return p;
}

EnvironmentInstance sample_environment(const EnvSpec& spec, std::uint64_t seed) {
  require_valid(spec);
  std::mt19937_64 rng(seed);
  const int n = draw(spec.number, rng);
  std::vector<SignalPair> pairs;
  pairs.reserve(n);
  for (int i = 0; i < n; ++i) pairs.push_back(sample_pair(spec, rng));
  EnvironmentInstance env(spec, std::move(pairs), seed);
  return env;
}

EnvironmentInstance::EnvironmentInstance(EnvSpec spec, std::vector<SignalPair> pairs,
                                         std::uint64_t seed)
    : spec_(std::move(spec)), pairs_(std::move(pairs)), seed_(seed), rng_(splitmix64(seed)) {}

int EnvironmentInstance::advance_nonstationary(int t) {
  if (spec_.change_prob <= 0.0) return 0;
  std::bernoulli_distribution change(spec_.change_prob);
  int changed = 0;
  for (auto& p : pairs_) {
    if (!change(rng_)) continue;
    p.period = draw(spec_.period_for_class(p.class_id), rng_);
    p.duty_cycle = draw({spec_.duty_cycle.lo, std::min(spec_.duty_cycle.hi, p.period - 1)}, rng_);
    p.freq_lo = spec_.freq ? draw(*spec_.freq, rng_) : draw({0, spec_.n_bands - p.width}, rng_);
    p.start = t;
    ++changed;
  }
  return changed;
}

std::vector<int> EnvironmentInstance::compute_state(int t) const {
  std::vector<int> labels(spec_.n_bands, 0);
  // Iterate in reverse so the lowest-index pair's label wins on overlap.
  for (auto it = pairs_.rbegin(); it != pairs_.rend(); ++it) {
    const int b = it->active_band(t);
    if (b >= 0) labels[b] = it->class_id;
  }
  return labels;
}

Observation EnvironmentInstance::observe(int t, int band) const {
  check_band(band);
  Observation obs;
  for (const auto& p : pairs_) {
    if (p.active(t, band)) {
      obs = {1, p.class_id};
      break;
    }
  }
  if (spec_.noise_prob > 0.0) {
    const std::uint64_t h =
        splitmix64(seed_ ^ splitmix64((static_cast<std::uint64_t>(t) << 32) ^
                                      static_cast<std::uint64_t>(band)));
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    if (u < spec_.noise_prob) obs = obs.detection ? Observation{} : Observation{1, 1};
  }
  return obs;
}

ScriptedEnvironment::ScriptedEnvironment(std::vector<std::vector<int>> grid, int n_bands,
                                         int n_classes)
    : grid_(std::move(grid)), n_bands_(n_bands), n_classes_(n_classes) {
  for (const auto& row : grid_) {
    if (static_cast<int>(row.size()) != n_bands_) {
      throw UsageError("scripted grid row width does not match n_bands");
    }
  }
}

std::vector<int> ScriptedEnvironment::compute_state(int t) const {
  if (t < 0 || t >= length()) throw UsageError("scripted environment has no row " + std::to_string(t));
  return grid_[t];
}

Observation ScriptedEnvironment::observe(int t, int band) const {
  check_band(band);
  if (t < 0 || t >= length()) throw UsageError("scripted environment has no row " + std::to_string(t));
  const int label = grid_[t][band];
  return label ? Observation{1, label} : Observation{};
}

std::vector<std::vector<int>> truth_grid(Environment& env, int steps) {
  std::vector<std::vector<int>> grid;
  grid.reserve(steps);
  for (int t = 0; t < steps; ++t) {
    env.advance(t);
    grid.push_back(env.state_at(t));
  }
  return grid;
}

BandVector BandVector::binary(std::span<const int> labels) {
  BandVector v;
  v.mode = BandMode::kBinary;
  v.n_bands = static_cast<int>(labels.size());
  v.values.reserve(labels.size());
  for (int l : labels) v.values.push_back(l != 0 ? 1.0F : 0.0F);
  return v;
}

BandVector BandVector::probability(std::vector<float> p) {
  BandVector v;
  v.mode = BandMode::kProbability;
  v.n_bands = static_cast<int>(p.size());
  v.values = std::move(p);
  return v;
}

BandVector BandVector::class_distribution(std::vector<float> rows, int n_bands, int n_classes) {
  if (static_cast<int>(rows.size()) != n_bands * (n_classes + 1)) {
    throw UsageError("class distribution size mismatch");
  }
  BandVector v;
  v.mode = BandMode::kClassDistribution;
  v.n_bands = n_bands;
  v.n_classes = n_classes;
  v.values = std::move(rows);
  return v;
}

float BandVector::activity(int band) const {
  if (mode == BandMode::kClassDistribution) {
    return 1.0F - values[static_cast<std::size_t>(band) * (n_classes + 1)];
  }
  return values[band];
}

std::vector<float> BandVector::activity_vector() const {
  std::vector<float> out(n_bands);
  for (int b = 0; b < n_bands; ++b) out[b] = activity(b);
  return out;
}

int BandVector::label(int band, float threshold) const {
  if (activity(band) < threshold) return 0;
  if (mode != BandMode::kClassDistribution) return 1;
  const auto* row = values.data() + static_cast<std::size_t>(band) * (n_classes + 1);
  return static_cast<int>(std::max_element(row + 1, row + n_classes + 1) - row);
}

bool BandVector::is_valid() const {
  switch (mode) {
    case BandMode::kBinary:
      return static_cast<int>(values.size()) == n_bands &&
             std::all_of(values.begin(), values.end(), [](float v) { return v == 0.0F || v == 1.0F; });
    case BandMode::kProbability:
      return static_cast<int>(values.size()) == n_bands &&
             std::all_of(values.begin(), values.end(), [](float v) { return v >= 0.0F && v <= 1.0F; });
    case BandMode::kClassDistribution: {
      if (static_cast<int>(values.size()) != n_bands * (n_classes + 1)) return false;
      for (int b = 0; b < n_bands; ++b) {
        const auto* row = values.data() + static_cast<std::size_t>(b) * (n_classes + 1);
        const double s = std::accumulate(row, row + n_classes + 1, 0.0);
        if (std::abs(s - 1.0) > 1e-6) return false;
        if (std::any_of(row, row + n_classes + 1, [](float v) { return v < 0.0F; })) return false;
      }
      return true;
    }
  }
  return false;
}

}  // namespace specmon
