#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace specmon {

// Inclusive integer range [lo, hi].
struct IntRange {
  int lo = 0;
  int hi = 0;

  static constexpr IntRange fixed(int v) { return {v, v}; }
  constexpr int size() const { return hi - lo + 1; }
  constexpr bool contains(int v) const { return v >= lo && v <= hi; }
  constexpr bool degenerate() const { return lo == hi; }
  friend constexpr bool operator==(const IntRange&, const IntRange&) = default;
};

// Population model over environments. Every field is a range that is drawn
// from independently (per pair) when an environment is sampled.
struct EnvSpec {
  std::string name;
  IntRange number{2, 2};
  IntRange width{2, 2};
  IntRange period{8, 9};
  IntRange duty_cycle{4, 4};
  std::optional<IntRange> freq;  // nullopt: uniform over feasible placements
  IntRange start{0, 0};
  int n_bands = 20;
  int n_classes = 1;
  double change_prob = 0.0;
  // Optional per-class period table (index class_id - 1). Empty: every class
  // uses `period`.
  std::vector<IntRange> class_period;
  // Probability that a detection is flipped. Not part of the spec file format.
  double noise_prob = 0.0;

  IntRange period_for_class(int class_id) const;
  friend bool operator==(const EnvSpec&, const EnvSpec&) = default;
};

// Returns one human-readable message per violated invariant; empty when the
// spec is usable.
std::vector<std::string> validate_spec(const EnvSpec& spec);

// Throws ConfigError listing every violation.
void require_valid(const EnvSpec& spec);

// One interacting pair. The lower band is active for the first `duty_cycle`
// steps of every period, the upper band for the remainder.
struct SignalPair {
  int freq_lo = 0;
  int width = 2;
  int period = 8;
  int duty_cycle = 4;
  int start = 0;
  int class_id = 1;

  int upper() const { return freq_lo + width - 1; }
  bool covers(int band) const { return band == freq_lo || band == upper(); }
  // Band active at t, or -1 before the pair starts.
  int active_band(int t) const {
    if (t < start) return -1;
    const int phase = (t - start) % period;
    return phase < duty_cycle ? freq_lo : upper();
  }
  bool active(int t, int band) const { return active_band(t) == band; }
  // Identity on dynamics only; class labels are ignored.
  bool same_dynamics(const SignalPair& o) const {
    return freq_lo == o.freq_lo && width == o.width && period == o.period &&
           duty_cycle == o.duty_cycle && start == o.start;
  }
  friend bool operator==(const SignalPair&, const SignalPair&) = default;
};

struct Observation {
  int detection = 0;
  int class_id = 0;  // 0 when nothing detected
  friend bool operator==(const Observation&, const Observation&) = default;
};

// Hidden spectrum process seen by the episode runner. `state_at` exposes the
// full truth and is counted so tests can prove a code path never reads it.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual int n_bands() const = 0;
  virtual int n_classes() const = 0;
  // Called once per step before the step is observed.
  virtual void advance(int /*t*/) {}
  // Per-band class label at t (0 = no signal).
  std::vector<int> state_at(int t) const {
    ++truth_reads_;
    return compute_state(t);
  }
  // Noiseless (unless a noise hook is configured) detection at one band.
  virtual Observation observe(int t, int band) const = 0;

  std::int64_t truth_reads() const { return truth_reads_; }

 protected:
  virtual std::vector<int> compute_state(int t) const = 0;
  void check_band(int band) const;

 private:
  mutable std::int64_t truth_reads_ = 0;
};

// A concrete environment drawn from an EnvSpec.
class EnvironmentInstance final : public Environment {
 public:
  EnvironmentInstance(EnvSpec spec, std::vector<SignalPair> pairs, std::uint64_t seed);

  int n_bands() const override { return spec_.n_bands; }
  int n_classes() const override { return spec_.n_classes; }
  void advance(int t) override { advance_nonstationary(t); }
  Observation observe(int t, int band) const override;

  // Re-draws pair parameters with probability change_prob each; returns the
  // number of pairs that changed.
  int advance_nonstationary(int t);

  const std::vector<SignalPair>& pairs() const { return pairs_; }
  const EnvSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }

 protected:
  std::vector<int> compute_state(int t) const override;

 private:
  EnvSpec spec_;
  std::vector<SignalPair> pairs_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
};

// Replays a stored T x n_bands label grid as an environment.
class ScriptedEnvironment final : public Environment {
 public:
  ScriptedEnvironment(std::vector<std::vector<int>> grid, int n_bands, int n_classes);

  int n_bands() const override { return n_bands_; }
  int n_classes() const override { return n_classes_; }
  int length() const { return static_cast<int>(grid_.size()); }
  Observation observe(int t, int band) const override;

 protected:
  std::vector<int> compute_state(int t) const override;

 private:
  std::vector<std::vector<int>> grid_;
  int n_bands_;
  int n_classes_;
};

EnvironmentInstance sample_environment(const EnvSpec& spec, std::uint64_t seed);

// Draws one pair from the spec ranges.
SignalPair sample_pair(const EnvSpec& spec, std::mt19937_64& rng);

// Full T x n_bands truth grid (class labels).
std::vector<std::vector<int>> truth_grid(Environment& env, int steps);

// Per-band activity vector in one of three modes.
enum class BandMode { kBinary, kProbability, kClassDistribution };

struct BandVector {
  BandMode mode = BandMode::kProbability;
  int n_bands = 0;
  int n_classes = 1;  // kClassDistribution rows hold n_classes + 1 entries
  std::vector<float> values;

  static BandVector binary(std::span<const int> labels);
  static BandVector probability(std::vector<float> p);
  static BandVector class_distribution(std::vector<float> rows, int n_bands, int n_classes);

  // Probability that any signal is present.
  float activity(int band) const;
  std::vector<float> activity_vector() const;
  // Most likely class (0 = none) using a 0.5 objectness threshold.
  int label(int band, float threshold = 0.5F) const;
  bool is_valid() const;
};

}  // namespace specmon
