#pragma once

#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "specmon/harness.hpp"
#include "specmon/hypothesis.hpp"

namespace specmon {

// Holds each band at its last observed value; unsampled bands are inactive.
class PersistentState {
 public:
  explicit PersistentState(int n_bands = 0) : last_obs_(n_bands, 0), last_t_(n_bands, -1) {}

  void update(int t, int band, const Observation& obs) {
    last_obs_[band] = obs.detection;
    last_t_[band] = t;
  }
  BandVector predict() const;
  const std::vector<int>& last_obs() const { return last_obs_; }
  const std::vector<int>& last_t() const { return last_t_; }

 private:
  std::vector<int> last_obs_;
  std::vector<int> last_t_;
};

enum class SelectKind { kRandom, kScan };

// Random draws uniformly; scan returns (previous + 1) mod n_bands starting at 0.
int baseline_select_band(SelectKind kind, int previous, int n_bands, std::mt19937_64* rng = nullptr);

class RandomController final : public Controller {
 public:
  std::string id() const override { return "random"; }
  void reset(const EpisodeContext& ctx) override;
  int select_band(const History& history) override;
  BandVector predict(const History& history) override;
  std::unique_ptr<Controller> clone() const override { return std::make_unique<RandomController>(*this); }

 private:
  int n_bands_ = 0;
  std::mt19937_64 rng_;
  PersistentState state_;
};

class ScanController final : public Controller {
 public:
  std::string id() const override { return "scan"; }
  void reset(const EpisodeContext& ctx) override;
  int select_band(const History& history) override;
  BandVector predict(const History& history) override;
  std::unique_ptr<Controller> clone() const override { return std::make_unique<ScanController>(*this); }

 private:
  int n_bands_ = 0;
  int previous_ = -1;
  PersistentState state_;
};

// Shared machinery for the two controllers that estimate pair parameters by
// elimination. Predictions come from the surviving hypotheses; once the prior
// proves inconsistent with the observations the controller falls back to
// persistent-state prediction and plain scanning.
class HypothesisController : public Controller {
 public:
  explicit HypothesisController(EnvSpec prior);

  void reset(const EpisodeContext& ctx) override;
  BandVector predict(const History& history) override;

  const HypothesisSet& hypotheses() const { return *hyps_; }
  bool fell_back() const { return hyps_ && hyps_->inconsistent(); }

 protected:
  int next_scan_band();

  EnvSpec prior_;
  std::shared_ptr<const std::vector<SignalPair>> tuples_;
  std::optional<HypothesisSet> hyps_;
  PersistentState state_;
  int n_bands_ = 0;
  int scan_previous_ = -1;
};

class ScanDwellController final : public HypothesisController {
 public:
  using HypothesisController::HypothesisController;
  std::string id() const override { return "scan_dwell"; }
  int select_band(const History& history) override;
  std::unique_ptr<Controller> clone() const override { return std::make_unique<ScanDwellController>(*this); }
};

class ExpertController final : public HypothesisController {
 public:
  using HypothesisController::HypothesisController;
  std::string id() const override { return "expert"; }
  int select_band(const History& history) override;
  std::vector<float> action_values() const override { return last_uncertainty_; }
  std::unique_ptr<Controller> clone() const override { return std::make_unique<ExpertController>(*this); }

 private:
  std::vector<float> last_uncertainty_;
};

// Band a scan-and-dwell controller samples next given the current hypotheses;
// `scan_previous` is advanced when the scan resumes.
int scan_and_dwell_select(const HypothesisSet& hyps, int t, int& scan_previous);

// Argmax of per-band uncertainty at t, lowest band on ties.
int expert_select(const HypothesisSet& hyps, int t);

// Factory for the hand-coded controllers by name: random, scan, scan_dwell, expert.
std::unique_ptr<Controller> make_baseline(const std::string& kind, const EnvSpec& prior);

}  // namespace specmon
