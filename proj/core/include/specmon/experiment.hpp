#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "specmon/baselines.hpp"
#include "specmon/dan.hpp"
#include "specmon/env_sim.hpp"
#include "specmon/feedback.hpp"
#include "specmon/harness.hpp"

namespace specmon {

inline constexpr const char* kVersion = "0.1.0";

struct EvalOptions {
  int steps = 100;
  int block_n = 5;
  int final_block_n = 33;  // window of the end-of-episode block IoU
  int threads = 1;
  bool keep_logs = false;
};

struct EvalSummary {
  std::string controller;
  std::string spec;
  std::vector<std::uint64_t> seeds;
  std::vector<double> cum_iou;          // per episode, at T
  std::vector<double> final_block_iou;  // per episode, last final_block_n steps
  double mean_cum_iou = 0.0;
  double std_cum_iou = 0.0;
  double mean_final_block_iou = 0.0;
  std::vector<double> cum_curve_mean, cum_curve_std;
  std::vector<double> block_curve_mean, block_curve_std;
  std::vector<EpisodeLog> logs;  // only with keep_logs
};

std::vector<std::uint64_t> seed_list(std::uint64_t base, int n);

// Runs one episode per seed on a clone of `proto`. Episodes are partitioned
// over threads by index, so results do not depend on the thread count.
EvalSummary evaluate_controller(const Controller& proto, const EnvSpec& spec, std::span<const std::uint64_t> seeds,
                                const EvalOptions& options);
EvalSummary evaluate_agent_summary(const DanAgent& agent, const EnvSpec& spec, std::span<const std::uint64_t> seeds,
                                   const EvalOptions& options);

void write_eval_episodes_csv(std::ostream& os, std::span<const EvalSummary> summaries);
void write_eval_curve_csv(std::ostream& os, std::span<const EvalSummary> summaries);

// Fig. 4 style blocks: truth, prediction, q and reward rows per step.
void export_episode_render(std::ostream& os, const EpisodeLog& log);

// A named arm of a feedback experiment evaluated on one spec.
struct ArmResult {
  std::string arm;
  std::string spec;
  double mean_cum_iou = 0.0;
  double mean_final_block_iou = 0.0;
};

struct SpecFeedbackConfig {
  EnvSpec lab;
  EnvSpec field;
  EnvSpec estimation_prior;
  FieldBudget budget;
  std::string deploy = "expert";  // expert (lab prior) or agent
  double field_weight = 0.7;
  TrainConfig retrain;
  int eval_episodes = 100;
  std::uint64_t eval_seed_base = 800'000;
  std::uint64_t deploy_seed_base = 600'000;
  EvalOptions eval;
};

struct SpecFeedbackResult {
  SpecEstimate estimate;
  std::vector<ArmResult> arms;
};

// Lab-only, pooled (field_weight estimate / rest lab) and estimate-only arms.
SpecFeedbackResult run_spec_feedback(const DanAgent& lab_agent, const SpecFeedbackConfig& cfg);

struct StateFeedbackConfig {
  EnvSpec lab;
  EnvSpec field;
  FieldBudget budget;
  std::vector<int> estimated_counts{100};
  int generated = 0;  // extra generated episodes added to the largest arm
  std::optional<EnvSpec> reconstruction_prior;  // source of reconstructor training pairs; lab when unset
  int lab_pair_episodes = 200;
  SeqTrainConfig reconstructor;
  SeqTrainConfig generator;
  int seq_features = 8;
  int seq_hidden = 16;
  TrainConfig retrain;
  double lab_share = 0.0;  // share of retraining episodes drawn from the lab spec
  int finetune_epochs = 5;
  int eval_episodes = 100;
  std::uint64_t eval_seed_base = 810'000;
  std::uint64_t deploy_seed_base = 610'000;
  std::uint64_t lab_pair_seed_base = 620'000;
  EvalOptions eval;
};

struct StateFeedbackResult {
  std::vector<ArmResult> arms;
  double reconstruction_accuracy = 0.0;  // per cell, held-out lab pairs
  double persistent_accuracy = 0.0;
  StateDatabase database;
};

// Lab-only, retrain-with-n-estimated-states for each n, optional generated
// arm, and partial fine-tuning; all scored on held-out field episodes.
StateFeedbackResult run_state_feedback(const DanAgent& lab_agent, const StateFeedbackConfig& cfg);

// Cell accuracy of persistent-state filling against truth.
double persistent_cell_accuracy(const History& partial, const Grid& truth);
double cell_accuracy(const Grid& estimate, const Grid& truth);

// --- config-driven runs ---

enum class ExperimentKind {
  kTrain,
  kEvaluate,
  kCompareBaselines,
  kFeedbackSpec,
  kFeedbackBootstrap,
  kFeedbackState,
  kFinetunePartial
};
ExperimentKind parse_experiment_kind(const std::string& s);
std::string to_string(ExperimentKind k);

struct RunOverrides {
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed;
  bool log_episodes = false;
  int threads = 1;
};

// Resolves a spec reference: "builtin:NAME" or a path relative to `base`.
EnvSpec resolve_spec(const std::string& ref, const std::filesystem::path& base);

// Validates the config and writes every artifact under overrides.out_dir.
// Throws ConfigError for invalid configs and DivergenceError when training
// diverges.
void run_experiment(const std::filesystem::path& config_path, const RunOverrides& overrides);
void run_experiment_text(const std::string& config_json, const std::filesystem::path& base_dir,
                         const RunOverrides& overrides);

}  // namespace specmon
