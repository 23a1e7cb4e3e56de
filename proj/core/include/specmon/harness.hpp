#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "specmon/env_sim.hpp"
#include "specmon/metrics.hpp"

namespace specmon {

struct HistoryStep {
  int action = -1;
  Observation obs;
  friend bool operator==(const HistoryStep&, const HistoryStep&) = default;
};

// Actions taken and observations received so far in one episode.
class History {
 public:
  History(int n_bands, int n_classes) : n_bands_(n_bands), n_classes_(n_classes) {}

  void append(int action, Observation obs) { steps_.push_back({action, obs}); }
  void clear() { steps_.clear(); }

  std::span<const HistoryStep> steps() const { return steps_; }
  const HistoryStep& back() const { return steps_.back(); }
  int size() const { return static_cast<int>(steps_.size()); }
  bool empty() const { return steps_.empty(); }
  int n_bands() const { return n_bands_; }
  int n_classes() const { return n_classes_; }

  friend bool operator==(const History&, const History&) = default;

 private:
  int n_bands_;
  int n_classes_;
  std::vector<HistoryStep> steps_;
};

// Channels per band in the encoded grid: sampled one-hot, detection, and a
// one-hot class block in multi-class mode.
inline int encoded_channels(int n_classes) { return 2 + (n_classes > 1 ? n_classes : 0); }

// Writes one step as an n_bands x channels row (band-major). A step with no
// action (action < 0) encodes to zeros.
void encode_step(const HistoryStep& step, int n_bands, int n_classes, std::span<float> row);

// steps x n_bands x channels, flattened.
std::vector<float> encode_history(const History& history);
History decode_history(std::span<const float> grid, int n_bands, int n_classes);

struct EpisodeContext {
  int n_bands = 20;
  int n_classes = 1;
  int horizon = 100;
  std::uint64_t seed = 0;
};

// A partially observing controller. Implementations only ever see the
// History, never the environment.
class Controller {
 public:
  virtual ~Controller() = default;

  virtual std::string id() const = 0;
  virtual void reset(const EpisodeContext& ctx) = 0;
  // Band to sample at step history.size().
  virtual int select_band(const History& history) = 0;
  // Estimate of the current spectrum after the latest observation.
  virtual BandVector predict(const History& history) = 0;
  // Per-band action values behind the latest selection, if the controller has any.
  virtual std::vector<float> action_values() const { return {}; }
  virtual std::unique_ptr<Controller> clone() const = 0;
};

enum class RewardKind { kInstantIoU, kDiffBlockIoU };

RewardKind parse_reward_kind(const std::string& s);
std::string to_string(RewardKind k);

// Reward for step t given the per-step overlap counts of steps 0..t.
double step_reward(RewardKind kind, std::span<const OverlapCounts> counts, int block_n);

struct EpisodeRow {
  int t = 0;
  int action = 0;
  Observation obs;
  BandVector prediction;
  std::vector<int> truth;
  double reward = 0.0;
  std::vector<float> action_values;
};

struct EpisodeLog {
  std::string spec_id;
  std::string controller_id;
  std::uint64_t seed = 0;
  int n_bands = 0;
  int n_classes = 1;
  std::vector<EpisodeRow> rows;

  std::vector<OverlapCounts> counts(float threshold = 0.5F) const;
  double cumulative_iou(float threshold = 0.5F) const;
  // Cumulative IoU of steps 0..t.
  std::vector<double> cumulative_curve(float threshold = 0.5F) const;
  std::vector<double> block_curve(int n, float threshold = 0.5F) const;
  std::vector<double> instant_curve(float threshold = 0.5F) const;
};

struct RunOptions {
  int steps = 100;
  RewardKind reward = RewardKind::kInstantIoU;
  IoUConfig iou;
};

// Act, observe, predict, score for t = 0..steps-1. Throws EpisodeError when
// the controller selects a band outside the spectrum.
EpisodeLog run_episode(Controller& controller, Environment& env, const RunOptions& options,
                       std::uint64_t seed = 0, const std::string& spec_id = {});

// Same loop without any access to ground truth: returns only what the
// controller sampled and saw.
History run_blind_episode(Controller& controller, Environment& env, int steps, std::uint64_t seed = 0);

// CSV: t,action,obs,reward,pred_0..pred_{n-1},truth_0..truth_{n-1}
void write_episode_csv(std::ostream& os, const EpisodeLog& log);

// Shortest round-trip text for a float/double; used by every CSV writer.
std::string format_number(double v);

}  // namespace specmon
