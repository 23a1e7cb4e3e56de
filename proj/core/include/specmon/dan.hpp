#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "specmon/env_sim.hpp"
#include "specmon/harness.hpp"
#include "specmon/neural/adam.hpp"
#include "specmon/neural/network.hpp"

namespace specmon {

enum class AgentKind { kConvLstmDan, kPredictiveDan, kInfoMaxDan };

// Reward paid to the Q head each step.
enum class DanReward { kInstantIoU, kDiffBlockIoU, kPredictive };

AgentKind parse_agent_kind(const std::string& s);
std::string to_string(AgentKind k);
DanReward parse_dan_reward(const std::string& s);
std::string to_string(DanReward r);

struct TrainConfig {
  int episodes = 2000;
  int steps = 100;
  int batch_episodes = 8;
  int updates_per_episode = 4;
  double gamma = 0.9;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_decay_fraction = 0.5;  // linear decay over this share of episodes
  int target_sync = 100;                // optimizer updates between target refreshes
  double infogain_weight = 10.0;
  RewardKind predictive_base = RewardKind::kInstantIoU;  // IoU term of the predictive reward
  int block_n = 5;
  double w_neg = 0.1;
  int replay_capacity = 1000;
  int eval_every = 50;  // 0 disables the evaluation curve
  int eval_episodes = 20;
  std::uint64_t eval_seed_base = 900'000;
  bool select_best = false;  // end with the weights of the best evaluation point
  std::uint64_t seed = 1;
  nn::AdamConfig adam{1e-3, 0.9, 0.999, 1e-8, 10.0};
};

// Q/M(/P) network pair sharing one body, with its target snapshot.
class DanAgent {
 public:
  DanAgent(AgentKind kind, const nn::NetworkConfig& net, DanReward reward = DanReward::kInstantIoU);
  DanAgent(const DanAgent& other);
  DanAgent& operator=(const DanAgent& other);
  DanAgent(DanAgent&&) noexcept = default;
  DanAgent& operator=(DanAgent&&) noexcept = default;

  AgentKind kind() const { return kind_; }
  DanReward reward() const { return reward_; }
  void set_reward(DanReward r) { reward_ = r; }
  nn::DanNet<float>& net() { return *net_; }
  const nn::DanNet<float>& net() const { return *net_; }
  const nn::DanNet<float>& target() const { return *target_; }
  nn::Adam<float>& optimizer() { return optimizer_; }
  long updates() const { return updates_; }
  void count_update(int target_sync);
  void sync_target();
  void reset_optimizer(const nn::AdamConfig& cfg) { optimizer_ = nn::Adam<float>(cfg); }
  // Immutable copy of the current weights for evaluation.
  std::shared_ptr<const nn::DanNet<float>> snapshot() const;
  void replace_network(const nn::DanNet<float>& net);

 private:
  AgentKind kind_;
  DanReward reward_;
  std::unique_ptr<nn::DanNet<float>> net_;
  std::unique_ptr<nn::DanNet<float>> target_;
  nn::Adam<float> optimizer_;
  long updates_ = 0;
};

// Default network for each agent kind: Predictive and InfoMax add the P head.
nn::NetworkConfig default_network(AgentKind kind, int n_bands, int n_classes);

// Runs a frozen network as a controller: Q picks actions (epsilon-greedy),
// M reports the state.
class DanController final : public Controller {
 public:
  explicit DanController(std::shared_ptr<const nn::DanNet<float>> net, double epsilon = 0.0, std::string id = "dan");

  std::string id() const override { return id_; }
  void reset(const EpisodeContext& ctx) override;
  int select_band(const History& history) override;
  BandVector predict(const History& history) override;
  std::vector<float> action_values() const override { return {heads_.q.begin(), heads_.q.end()}; }
  std::unique_ptr<Controller> clone() const override { return std::make_unique<DanController>(*this); }

  void set_epsilon(double e) { epsilon_ = e; }
  const nn::DanNet<float>::Heads& heads() const { return heads_; }
  const nn::DanNet<float>::State& state() const { return state_; }

 private:
  std::shared_ptr<const nn::DanNet<float>> net_;
  double epsilon_;
  std::string id_;
  std::mt19937_64 rng_;
  nn::DanNet<float>::State state_;
  nn::DanNet<float>::Heads heads_;
  nn::Buffer<float> x_;
  int fed_ = 0;

  void catch_up(const History& history);
};

// Epsilon-greedy over Q; ties go to the lowest band.
int q_select_action(std::span<const float> q, double epsilon, std::mt19937_64& rng);

// M-head output as a BandVector (probabilities or class distributions).
BandVector m_predict(const nn::DanNet<float>& net, std::span<const float> m);

// Mean absolute difference between the prediction made before acting and
// the one made after observing.
double compute_infogain(std::span<const float> p_before, std::span<const float> m_after);

struct RewardContext {
  std::span<const OverlapCounts> counts;  // steps 0..t
  std::span<const float> p_before;        // P head before acting (predictive only)
  std::span<const float> m_after;
};
double compute_reward(DanReward kind, const TrainConfig& cfg, const RewardContext& ctx);

// One stored training episode.
struct EpisodeRecord {
  int n_bands = 0;
  int n_classes = 1;
  History history{0, 1};
  std::vector<float> inputs;                 // steps x input_size
  std::vector<std::vector<int>> truth;       // empty rows for partial episodes
  std::vector<float> rewards;                // per step
  std::vector<std::vector<float>> predictions;  // M activity per step at rollout time
  std::vector<std::vector<float>> infomax_labels;
  bool partial = false;                      // supervision restricted to the sampled band

  int steps() const { return history.size(); }
};

// Per-band InfoMax labels: infogain of sampling each band at t given the
// network state `state` (history up to t-1) and P prediction `p_before`.
std::vector<float> infomax_targets(const nn::DanNet<float>& net, const nn::DanNet<float>::State& state,
                                   std::span<const float> p_before, Environment& env, int t);

// Rolls out one epsilon-greedy episode, recording rewards and labels.
EpisodeRecord rollout(const DanAgent& agent, Environment& env, const TrainConfig& cfg, double epsilon,
                      std::mt19937_64& rng);

// Builds a record from a partially observed episode (no truth).
EpisodeRecord partial_record(const History& history);

struct UpdateLosses {
  double td = 0.0;
  double m = 0.0;
  double p = 0.0;
};

// Loss and output gradients of one episode; exposed for gradient checks.
// When `grads` is non-null it receives dL/d(outputs).
UpdateLosses episode_loss(const DanAgent& agent, const EpisodeRecord& record, const nn::DanNet<float>::Trace& trace,
                          const nn::DanNet<float>::Trace& target_trace, const TrainConfig& cfg,
                          nn::DanNet<float>::OutputGrads* grads, double scale);

// Same loss evaluated on a double network; used by gradient checks only.
double episode_loss_double(AgentKind kind, const nn::DanNet<double>& net, const EpisodeRecord& record,
                           const nn::DanNet<double>::Trace& trace, const nn::DanNet<double>::Trace& target_trace,
                           const TrainConfig& cfg, nn::DanNet<double>::OutputGrads* grads);

// One optimizer step over a batch of episodes.
UpdateLosses dqn_update(DanAgent& agent, std::span<const EpisodeRecord* const> batch, const TrainConfig& cfg);

// Supplies training environments.
class EpisodeSource {
 public:
  virtual ~EpisodeSource() = default;
  virtual std::unique_ptr<Environment> make(int episode, std::mt19937_64& rng) = 0;
  // Environments used for the evaluation curve.
  virtual const EnvSpec& eval_spec() const = 0;
};

class SpecSource final : public EpisodeSource {
 public:
  explicit SpecSource(EnvSpec spec) : spec_(std::move(spec)) {}
  std::unique_ptr<Environment> make(int episode, std::mt19937_64& rng) override;
  const EnvSpec& eval_spec() const override { return spec_; }

 private:
  EnvSpec spec_;
};

struct CurvePoint {
  int episode = 0;
  double eval_cum_iou = 0.0;
  double td_loss = 0.0;
  double m_loss = 0.0;
  double p_loss = 0.0;
};

struct TrainResult {
  std::vector<CurvePoint> curve;
  int episodes = 0;
  int selected_episode = 0;  // episode whose weights the agent ends with
};

using EpisodeHook = std::function<void(int episode, const EpisodeRecord&)>;

TrainResult train(DanAgent& agent, EpisodeSource& source, const TrainConfig& cfg, const EpisodeHook& hook = {});

// Trains on a fixed set of stored records (e.g. partially observed field
// episodes) for `epochs` passes.
TrainResult train_on_records(DanAgent& agent, std::span<const EpisodeRecord> records, const TrainConfig& cfg, int epochs);

// Mean cumulative IoU of the greedy agent on `episodes` environments drawn
// with seeds seed_base + i.
double evaluate_agent(const DanAgent& agent, const EnvSpec& spec, int episodes, std::uint64_t seed_base, int steps);

void write_curve_csv(std::ostream& os, std::span<const CurvePoint> curve);

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace specmon
