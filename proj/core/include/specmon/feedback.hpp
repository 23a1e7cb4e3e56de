#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "specmon/dan.hpp"
#include "specmon/env_sim.hpp"
#include "specmon/harness.hpp"
#include "specmon/neural/adam.hpp"
#include "specmon/neural/seqnet.hpp"

namespace specmon {

struct FieldBudget {
  int episodes = 100;
  int steps = 100;
};

// What a deployed controller brings back: actions and observations only.
struct FieldExperience {
  std::string field_id;
  FieldBudget budget;
  int n_bands = 0;
  int n_classes = 1;
  std::vector<History> episodes;
};

using EnvironmentFactory = std::function<std::unique_ptr<Environment>(int episode)>;

// Runs `controller` on budget.episodes environments from `make_env`, keeping
// only the (action, observation) pairs.
FieldExperience collect_field_experience(Controller& controller, const EnvironmentFactory& make_env,
                                         const FieldBudget& budget, const std::string& field_id = {});
// Field environments drawn from `field` with seeds seed_base + i.
FieldExperience collect_field_experience(Controller& controller, const EnvSpec& field, const FieldBudget& budget,
                                         std::uint64_t seed_base);

struct SpecEstimate {
  EnvSpec spec;
  int episodes_used = 0;
  int episodes_inconsistent = 0;  // samples contradicting the estimation prior
  int episodes_silent = 0;        // no detection at all
};

// Eliminates hypotheses per episode under `prior` and aggregates the
// surviving tuples into per-parameter ranges. Throws ConfigError
// ("insufficient field evidence") when no episode contains a detection.
SpecEstimate estimate_field_spec(const FieldExperience& exp, const EnvSpec& prior, std::size_t tuple_cap = 10'000'000);

class SpecPool {
 public:
  struct Entry {
    EnvSpec spec;
    double weight = 0.0;
  };

  SpecPool() = default;
  explicit SpecPool(std::vector<Entry> entries);

  void add(EnvSpec spec, double weight);
  const std::vector<Entry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  // Index drawn in proportion to the normalized weights.
  std::size_t sample_index(std::mt19937_64& rng) const;
  const EnvSpec& sample(std::mt19937_64& rng) const { return entries_[sample_index(rng)].spec; }

 private:
  void normalize();
  std::vector<Entry> entries_;
};

// Estimated spec at `field_weight`, lab at the rest.
SpecPool make_feedback_pool(const EnvSpec& lab, std::span<const EnvSpec> estimates, double field_weight = 0.7);

class PoolSource final : public EpisodeSource {
 public:
  PoolSource(SpecPool pool, EnvSpec eval) : pool_(std::move(pool)), eval_(std::move(eval)) {}
  std::unique_ptr<Environment> make(int episode, std::mt19937_64& rng) override;
  const EnvSpec& eval_spec() const override { return eval_; }

 private:
  SpecPool pool_;
  EnvSpec eval_;
};

TrainResult retrain_pooled(DanAgent& agent, const SpecPool& pool, const TrainConfig& cfg, const EnvSpec& eval_spec);

struct BootstrapOptions {
  FieldBudget budget;
  EnvSpec estimation_prior;
  double field_weight = 0.7;
  bool newest_only = false;  // pool keeps only the latest estimate (plus lab)
  int eval_episodes = 100;
  std::uint64_t eval_seed_base = 700'000;
  std::uint64_t deploy_seed_base = 600'000;
};

struct BootstrapIteration {
  int iteration = 0;
  std::string field;
  std::optional<EnvSpec> estimate;
  std::string warning;
  std::vector<std::pair<std::string, double>> evaluations;  // spec name, mean cumulative IoU
};

std::vector<BootstrapIteration> bootstrap(DanAgent& agent, const EnvSpec& lab, std::span<const EnvSpec> fields,
                                          const BootstrapOptions& options, const TrainConfig& cfg);

// --- field state estimation ---

enum class Provenance { kReconstructed, kGenerated, kLabSimulated };
std::string to_string(Provenance p);
Provenance parse_provenance(const std::string& s);

using Grid = std::vector<std::vector<int>>;

class StateDatabase {
 public:
  struct Entry {
    Grid grid;
    Provenance provenance = Provenance::kReconstructed;
    std::string source;
  };

  StateDatabase() = default;
  explicit StateDatabase(int n_bands) : n_bands_(n_bands) {}

  // Grids must be binary and n_bands wide.
  void add(Grid grid, Provenance provenance, std::string source = {});
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Grid> grids(std::optional<Provenance> only = std::nullopt) const;
  int n_bands() const { return n_bands_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  // One CSV per episode plus manifest.csv (file,provenance,source,steps,n_bands).
  void save(const std::filesystem::path& dir) const;
  static StateDatabase load(const std::filesystem::path& dir);

 private:
  int n_bands_ = 0;
  std::vector<Entry> entries_;
};

struct SeqTrainConfig {
  int epochs = 30;
  int batch = 8;
  nn::AdamConfig adam{3e-3, 0.9, 0.999, 1e-8, 5.0};
  double w_neg = 1.0;  // weight of inactive cells in the loss
  std::uint64_t seed = 1;
};

// Full state from partial observations.
class Reconstructor {
 public:
  explicit Reconstructor(int n_bands, int features = 8, int hidden = 16, std::uint64_t init_seed = 1);

  // Trains on (partial history, full truth) pairs; returns final mean BCE.
  double train(std::span<const History> partial, std::span<const Grid> truth, const SeqTrainConfig& cfg);
  bool trained() const { return trained_; }
  std::vector<std::vector<float>> probabilities(const History& partial) const;
  // Thresholded at 0.5, observed cells overridden by the observation.
  Grid reconstruct(const History& partial) const;
  nn::SeqNet<float>& net() { return net_; }

 private:
  nn::SeqNet<float> net_;
  bool trained_ = false;
};

// Lab pairs for the reconstructor: the deployed policy on lab environments.
struct LabPairs {
  std::vector<History> partial;
  std::vector<Grid> truth;
};
LabPairs simulate_lab_pairs(Controller& controller, const EnvSpec& lab, int episodes, int steps,
                            std::uint64_t seed_base);

Grid reconstruct_states(const Reconstructor& model, const History& partial);

// Next-row model over binary grids, free-run for new episodes.
class Generator {
 public:
  explicit Generator(int n_bands, int features = 8, int hidden = 16, std::uint64_t init_seed = 1);

  double train(std::span<const Grid> grids, const SeqTrainConfig& cfg);
  bool trained() const { return trained_; }
  // Conditions on the first `prefix` rows of `seed_episode`, then samples
  // each cell from its predicted probability until t_out rows exist.
  Grid generate(const Grid& seed_episode, int t_out, int prefix, std::mt19937_64& rng) const;
  nn::SeqNet<float>& net() { return net_; }

 private:
  nn::SeqNet<float> net_;
  bool trained_ = false;
};

// `count` episodes, each seeded by a uniformly drawn database entry.
std::vector<Grid> generate_episodes(const Generator& gen, const StateDatabase& db, int count, int t_out,
                                    std::uint64_t seed, int prefix = 10);

// Interleaves stored grids (replayed as scripted environments, in order) with
// fresh lab environments; `lab_share` of the episodes come from the lab.
class MixedStateSource final : public EpisodeSource {
 public:
  MixedStateSource(std::vector<Grid> grids, EnvSpec lab, EnvSpec eval, double lab_share = 0.0);
  std::unique_ptr<Environment> make(int episode, std::mt19937_64& rng) override;
  const EnvSpec& eval_spec() const override { return eval_; }

 private:
  std::vector<Grid> grids_;
  EnvSpec lab_;
  EnvSpec eval_;
  double lab_share_;
  std::size_t next_ = 0;
};

TrainResult retrain_on_states(DanAgent& agent, std::span<const Grid> grids, const EnvSpec& lab, const TrainConfig& cfg,
                              const EnvSpec& eval_spec, double lab_share = 0.0);

// Replays partial field episodes with band-restricted supervision and reward.
TrainResult finetune_partial(DanAgent& agent, const FieldExperience& exp, const TrainConfig& cfg, int epochs);

}  // namespace specmon
