#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "specmon/env_sim.hpp"

namespace specmon {

// Per-band output of the elimination engine.
struct HypothesisPrediction {
  std::vector<float> probability;
  std::vector<float> uncertainty;
};

// Candidate parameter tuples for every signal pair discovered so far, plus
// the prior tuples that could still belong to a pair not yet seen.
//
// Elimination is sound: a tuple is dropped only if it contradicts a silent
// observation, or if it is inactive at a detection that no other tracked or
// undiscovered pair can explain. When the generating environment lies inside
// the prior, the true tuple of every pair therefore survives.
class HypothesisSet {
 public:
  static constexpr std::size_t kDefaultCap = 10'000'000;

  // Enumerates every (freq_lo, width, period, duty_cycle, start) the prior
  // allows for one pair. Throws ConfigError above `cap` tuples.
  static std::vector<SignalPair> enumerate(const EnvSpec& prior, std::size_t cap = kDefaultCap);

  explicit HypothesisSet(const EnvSpec& prior, std::size_t cap = kDefaultCap);
  // Shares an already enumerated prior.
  HypothesisSet(const EnvSpec& prior, std::shared_ptr<const std::vector<SignalPair>> tuples);

  struct Tracked {
    std::vector<SignalPair> candidates;
    int last_band = -1;  // band of the most recent detection this pair can explain
    int last_t = -1;
  };

  // Incorporates detection `detection` at (t, band). Once inconsistent the
  // set stops changing.
  void eliminate(int t, int band, int detection);

  HypothesisPrediction predict(int t) const;

  // True once some observation cannot be explained by any prior tuple.
  bool inconsistent() const { return inconsistent_; }

  const std::vector<Tracked>& tracked() const { return tracked_; }
  const std::vector<SignalPair>& undiscovered() const { return undiscovered_; }
  std::size_t tuples_per_pair() const { return prior_tuples_->size(); }
  int capacity() const { return prior_.number.hi - static_cast<int>(tracked_.size()); }
  // Expected number of pairs not yet tracked, assuming a uniform count prior.
  double expected_undiscovered() const;
  std::size_t total_candidates() const;
  const EnvSpec& prior() const { return prior_; }

  // All surviving tuples agree on activity at `band` for t..t+horizon-1.
  bool band_resolved(const Tracked& pair, int band, int t, int horizon) const;

 private:
  struct Positive {
    int t;
    int band;
  };

  void resolve_positives();

  EnvSpec prior_;
  std::shared_ptr<const std::vector<SignalPair>> prior_tuples_;
  std::vector<Tracked> tracked_;
  std::vector<SignalPair> undiscovered_;
  std::vector<Positive> positives_;
  bool inconsistent_ = false;
};

}  // namespace specmon
