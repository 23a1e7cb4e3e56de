#include "specmon/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "specmon/errors.hpp"
#include "specmon/metrics.hpp"
#include "specmon/neural/checkpoint.hpp"
#include "specmon/spec_io.hpp"

namespace specmon {

using nlohmann::json;

std::vector<std::uint64_t> seed_list(std::uint64_t base, int n) {
  std::vector<std::uint64_t> s(std::max(0, n));
  std::iota(s.begin(), s.end(), base);
  return s;
}

namespace {

void mean_std(const std::vector<std::vector<double>>& rows, std::vector<double>& mean, std::vector<double>& sd) {
  mean.clear();
  sd.clear();
  if (rows.empty()) return;
  const std::size_t len = rows.front().size();
  mean.assign(len, 0.0);
  sd.assign(len, 0.0);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < len; ++i) mean[i] += r[i];
  }
  for (auto& m : mean) m /= static_cast<double>(rows.size());
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < len; ++i) sd[i] += (r[i] - mean[i]) * (r[i] - mean[i]);
  }
  for (auto& s : sd) s = std::sqrt(s / static_cast<double>(rows.size()));
}

}  // namespace

EvalSummary evaluate_controller(const Controller& proto, const EnvSpec& spec, std::span<const std::uint64_t> seeds,
                                const EvalOptions& options) {
  const std::size_t n = seeds.size();
  std::vector<EpisodeLog> logs(n);
  RunOptions run;
  run.steps = options.steps;
  run.iou.block_n = options.block_n;
  const int threads = std::clamp<int>(options.threads, 1, std::max<int>(1, static_cast<int>(n)));
  auto worker = [&](int w) {
    auto ctrl = proto.clone();
    for (std::size_t i = w; i < n; i += threads) {
      auto env = sample_environment(spec, seeds[i]);
      logs[i] = run_episode(*ctrl, env, run, seeds[i], spec.name);
    }
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          worker(w);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  EvalSummary s;
  s.controller = proto.id();
  s.spec = spec.name;
  s.seeds.assign(seeds.begin(), seeds.end());
  std::vector<std::vector<double>> cum, block;
  for (const auto& log : logs) {
    const auto counts = log.counts();
    s.cum_iou.push_back(iou_cumulative(counts));
    s.final_block_iou.push_back(counts.empty() ? 1.0 : iou_block(counts, options.final_block_n));
    cum.push_back(log.cumulative_curve());
    block.push_back(log.block_curve(options.block_n));
  }
  if (n > 0) {
    s.mean_cum_iou = std::accumulate(s.cum_iou.begin(), s.cum_iou.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double v : s.cum_iou) var += (v - s.mean_cum_iou) * (v - s.mean_cum_iou);
    s.std_cum_iou = std::sqrt(var / static_cast<double>(n));
    s.mean_final_block_iou =
        std::accumulate(s.final_block_iou.begin(), s.final_block_iou.end(), 0.0) / static_cast<double>(n);
  }
  mean_std(cum, s.cum_curve_mean, s.cum_curve_std);
  mean_std(block, s.block_curve_mean, s.block_curve_std);
  if (options.keep_logs) s.logs = std::move(logs);
  return s;
}

EvalSummary evaluate_agent_summary(const DanAgent& agent, const EnvSpec& spec, std::span<const std::uint64_t> seeds,
                                   const EvalOptions& options) {
  DanController ctrl(agent.snapshot(), 0.0, to_string(agent.kind()));
  return evaluate_controller(ctrl, spec, seeds, options);
}

void write_eval_episodes_csv(std::ostream& os, std::span<const EvalSummary> summaries) {
  os << "controller,spec,seed,cum_iou,final_block_iou\n";
  for (const auto& s : summaries) {
    for (std::size_t i = 0; i < s.seeds.size(); ++i) {
      os << s.controller << ',' << s.spec << ',' << s.seeds[i] << ',' << format_number(s.cum_iou[i]) << ','
         << format_number(s.final_block_iou[i]) << '\n';
    }
  }
}

void write_eval_curve_csv(std::ostream& os, std::span<const EvalSummary> summaries) {
  os << "t";
  for (const auto& s : summaries) {
    const std::string p = s.controller + "_" + s.spec;
    os << ',' << p << "_cum_mean," << p << "_cum_std," << p << "_block_mean," << p << "_block_std";
  }
  os << '\n';
  std::size_t len = 0;
  for (const auto& s : summaries) len = std::max(len, s.cum_curve_mean.size());
  for (std::size_t t = 0; t < len; ++t) {
    os << t;
    for (const auto& s : summaries) {
      auto at = [&](const std::vector<double>& v) { return t < v.size() ? format_number(v[t]) : std::string(); };
      os << ',' << at(s.cum_curve_mean) << ',' << at(s.cum_curve_std) << ',' << at(s.block_curve_mean) << ','
         << at(s.block_curve_std);
    }
    os << '\n';
  }
}

void export_episode_render(std::ostream& os, const EpisodeLog& log) {
  const int n = log.n_bands;
  os << "block,t";
  for (int b = 0; b < n; ++b) os << ",band_" << b;
  os << '\n';
  auto row = [&](const char* block, std::size_t t, auto&& value) {
    os << block << ',' << t;
    for (int b = 0; b < n; ++b) os << ',' << value(b);
    os << '\n';
  };
  for (std::size_t t = 0; t < log.rows.size(); ++t) {
    row("truth", t, [&](int b) { return std::to_string(log.rows[t].truth[b]); });
  }
  for (std::size_t t = 0; t < log.rows.size(); ++t) {
    row("prediction", t, [&](int b) { return format_number(log.rows[t].prediction.activity(b)); });
  }
  for (std::size_t t = 0; t < log.rows.size(); ++t) {
    const auto& q = log.rows[t].action_values;
    row("q", t, [&](int b) { return b < static_cast<int>(q.size()) ? format_number(q[b]) : std::string(); });
  }
  for (std::size_t t = 0; t < log.rows.size(); ++t) {
    os << "reward," << t << ',' << format_number(log.rows[t].reward);
    for (int b = 1; b < n; ++b) os << ',';
    os << '\n';
  }
}

// --- feedback protocols ---

double cell_accuracy(const Grid& estimate, const Grid& truth) {
  std::size_t hit = 0, total = 0;
  for (std::size_t t = 0; t < truth.size(); ++t) {
    for (std::size_t b = 0; b < truth[t].size(); ++b) {
      hit += (estimate[t][b] > 0) == (truth[t][b] > 0);
      ++total;
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(total);
}

double persistent_cell_accuracy(const History& partial, const Grid& truth) {
  const int n = partial.n_bands();
  Grid est(partial.size(), std::vector<int>(n, 0));
  std::vector<int> last(n, 0);
  for (int t = 0; t < partial.size(); ++t) {
    const auto& s = partial.steps()[t];
    if (s.action >= 0) last[s.action] = s.obs.detection ? 1 : 0;
    est[t] = last;
  }
  return cell_accuracy(est, truth);
}

namespace {

ArmResult score_arm(const std::string& arm, const DanAgent& agent, const EnvSpec& spec,
                    std::span<const std::uint64_t> seeds, const EvalOptions& eval) {
  const auto s = evaluate_agent_summary(agent, spec, seeds, eval);
  return {arm, spec.name, s.mean_cum_iou, s.mean_final_block_iou};
}

}  // namespace

SpecFeedbackResult run_spec_feedback(const DanAgent& lab_agent, const SpecFeedbackConfig& cfg) {
  std::unique_ptr<Controller> deploy;
  if (cfg.deploy == "expert") {
    deploy = make_baseline("expert", cfg.lab);
  } else if (cfg.deploy == "agent") {
    deploy = std::make_unique<DanController>(lab_agent.snapshot(), 0.0, "deployed");
  } else {
    throw ConfigError("feedback.deploy must be 'expert' or 'agent'");
  }
  const auto exp = collect_field_experience(*deploy, cfg.field, cfg.budget, cfg.deploy_seed_base);
  SpecFeedbackResult result;
  result.estimate = estimate_field_spec(exp, cfg.estimation_prior);
  const auto seeds = seed_list(cfg.eval_seed_base, cfg.eval_episodes);

  DanAgent pooled(lab_agent);
  const std::vector<EnvSpec> est{result.estimate.spec};
  retrain_pooled(pooled, make_feedback_pool(cfg.lab, est, cfg.field_weight), cfg.retrain, cfg.field);
  DanAgent est_only(lab_agent);
  retrain_pooled(est_only, SpecPool({{result.estimate.spec, 1.0}}), cfg.retrain, cfg.field);

  for (const auto* spec : {&cfg.field, &cfg.lab}) {
    result.arms.push_back(score_arm("lab_only", lab_agent, *spec, seeds, cfg.eval));
    result.arms.push_back(score_arm("pooled", pooled, *spec, seeds, cfg.eval));
    result.arms.push_back(score_arm("estimate_only", est_only, *spec, seeds, cfg.eval));
  }
  return result;
}

StateFeedbackResult run_state_feedback(const DanAgent& lab_agent, const StateFeedbackConfig& cfg) {
  StateFeedbackResult result;
  DanController deployed(lab_agent.snapshot(), 0.0, "deployed");
  const int max_n = cfg.estimated_counts.empty()
                        ? 0
                        : *std::max_element(cfg.estimated_counts.begin(), cfg.estimated_counts.end());
  FieldBudget budget = cfg.budget;
  budget.episodes = std::max(budget.episodes, max_n);
  const auto exp = collect_field_experience(deployed, cfg.field, budget, cfg.deploy_seed_base);

  // reconstructor from lab simulation with the deployed policy
  auto pairs = simulate_lab_pairs(deployed, cfg.reconstruction_prior.value_or(cfg.lab), cfg.lab_pair_episodes,
                                  budget.steps, cfg.lab_pair_seed_base);
  const std::size_t n_train = pairs.partial.size() - pairs.partial.size() / 5;
  Reconstructor recon(cfg.lab.n_bands, cfg.seq_features, cfg.seq_hidden, mix_seed(cfg.retrain.seed, 0xEC));
  recon.train(std::span(pairs.partial).first(n_train), std::span(pairs.truth).first(n_train), cfg.reconstructor);
  double acc = 0.0, pacc = 0.0;
  const std::size_t n_held = pairs.partial.size() - n_train;
  for (std::size_t i = n_train; i < pairs.partial.size(); ++i) {
    acc += cell_accuracy(recon.reconstruct(pairs.partial[i]), pairs.truth[i]);
    pacc += persistent_cell_accuracy(pairs.partial[i], pairs.truth[i]);
  }
  if (n_held > 0) {
    result.reconstruction_accuracy = acc / static_cast<double>(n_held);
    result.persistent_accuracy = pacc / static_cast<double>(n_held);
  }

  result.database = StateDatabase(cfg.lab.n_bands);
  for (std::size_t i = 0; i < exp.episodes.size(); ++i) {
    result.database.add(recon.reconstruct(exp.episodes[i]), Provenance::kReconstructed,
                        cfg.field.name + ":" + std::to_string(i));
  }
  const auto reconstructed = result.database.grids(Provenance::kReconstructed);
  if (cfg.generated > 0) {
    Generator gen(cfg.lab.n_bands, cfg.seq_features, cfg.seq_hidden, mix_seed(cfg.retrain.seed, 0x6E));
    gen.train(reconstructed, cfg.generator);
    for (auto& g : generate_episodes(gen, result.database, cfg.generated, budget.steps, cfg.retrain.seed)) {
      result.database.add(std::move(g), Provenance::kGenerated, "generator");
    }
  }

  const auto seeds = seed_list(cfg.eval_seed_base, cfg.eval_episodes);
  result.arms.push_back(score_arm("lab_only", lab_agent, cfg.field, seeds, cfg.eval));
  for (int n : cfg.estimated_counts) {
    DanAgent agent(lab_agent);
    std::vector<Grid> grids(reconstructed.begin(), reconstructed.begin() + n);
    retrain_on_states(agent, grids, cfg.lab, cfg.retrain, cfg.field, cfg.lab_share);
    result.arms.push_back(score_arm("retrain_" + std::to_string(n), agent, cfg.field, seeds, cfg.eval));
  }
  if (cfg.generated > 0) {
    DanAgent agent(lab_agent);
    const auto grids = result.database.grids();
    retrain_on_states(agent, grids, cfg.lab, cfg.retrain, cfg.field, cfg.lab_share);
    result.arms.push_back(score_arm("retrain_" + std::to_string(max_n) + "_plus_" + std::to_string(cfg.generated) +
                                        "_generated",
                                    agent, cfg.field, seeds, cfg.eval));
  }
  {
    DanAgent agent(lab_agent);
    FieldExperience sub = exp;
    if (sub.episodes.size() > static_cast<std::size_t>(cfg.budget.episodes)) {
      sub.episodes.erase(sub.episodes.begin() + cfg.budget.episodes, sub.episodes.end());
    }
    finetune_partial(agent, sub, cfg.retrain, cfg.finetune_epochs);
    result.arms.push_back(score_arm("finetune_partial", agent, cfg.field, seeds, cfg.eval));
  }
  return result;
}

// --- config parsing ---

ExperimentKind parse_experiment_kind(const std::string& s) {
  if (s == "train") return ExperimentKind::kTrain;
  if (s == "evaluate") return ExperimentKind::kEvaluate;
  if (s == "compare_baselines") return ExperimentKind::kCompareBaselines;
  if (s == "feedback_spec") return ExperimentKind::kFeedbackSpec;
  if (s == "feedback_bootstrap") return ExperimentKind::kFeedbackBootstrap;
  if (s == "feedback_state") return ExperimentKind::kFeedbackState;
  if (s == "finetune_partial") return ExperimentKind::kFinetunePartial;
  throw ConfigError("unknown experiment kind '" + s + "'");
}

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::kTrain: return "train";
    case ExperimentKind::kEvaluate: return "evaluate";
    case ExperimentKind::kCompareBaselines: return "compare_baselines";
    case ExperimentKind::kFeedbackSpec: return "feedback_spec";
    case ExperimentKind::kFeedbackBootstrap: return "feedback_bootstrap";
    case ExperimentKind::kFeedbackState: return "feedback_state";
    case ExperimentKind::kFinetunePartial: return "finetune_partial";
  }
  return "?";
}

EnvSpec resolve_spec(const std::string& ref, const std::filesystem::path& base) {
  constexpr std::string_view kBuiltin = "builtin:";
  if (ref.rfind(kBuiltin, 0) == 0) return builtin_spec(ref.substr(kBuiltin.size()));
  std::filesystem::path p(ref);
  if (p.is_relative()) p = base / p;
  if (!std::filesystem::exists(p)) throw ConfigError("spec file '" + p.string() + "' does not exist");
  auto spec = load_spec(p.string());
  require_valid(spec);
  return spec;
}

namespace {

// Reads one JSON object, records what was used, rejects unknown keys.
class Section {
 public:
  Section(const json& j, std::string where) : where_(std::move(where)) {
    if (!j.is_null() && !j.is_object()) throw ConfigError(where_ + ": expected an object");
    if (j.is_object()) j_ = j;
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  T get(const std::string& key, T fallback) {
    used_.insert(key);
    T v = fallback;
    if (j_.contains(key)) {
      try {
        v = j_.at(key).get<T>();
      } catch (const json::exception&) {
        throw ConfigError(where_ + "." + key + ": wrong type");
      }
    }
    resolved_[key] = v;
    return v;
  }

  template <typename T>
  T require(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError(where_ + ": missing required key '" + key + "'");
    return get<T>(key, T{});
  }

  Section sub(const std::string& key) {
    used_.insert(key);
    return Section(j_.contains(key) ? j_.at(key) : json(), where_ + "." + key);
  }

  void adopt(const std::string& key, const Section& s) { resolved_[key] = s.resolved(); }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!used_.count(k)) throw ConfigError(where_ + ": unknown key '" + k + "'");
    }
  }

  const json& resolved() const { return resolved_; }

 private:
  json j_ = json::object();
  std::string where_;
  std::set<std::string> used_;
  json resolved_ = json::object();
};

template <typename T>
void require_positive(T v, const std::string& what) {
  if (!(v > 0)) throw ConfigError(what + " must be positive");
}

nn::NetworkConfig read_network(Section& s, AgentKind kind, const EnvSpec& spec) {
  auto c = default_network(kind, spec.n_bands, spec.n_classes);
  c.topology = nn::parse_topology(s.get<std::string>("topology", nn::to_string(c.topology)));
  c.conv_channels = s.get("conv_channels", c.conv_channels);
  c.conv_kernel = s.get("conv_kernel", c.conv_kernel);
  c.hidden = s.get("hidden", c.hidden);
  c.lstm_kernel = s.get("lstm_kernel", c.lstm_kernel);
  c.dense_units = s.get("dense_units", c.dense_units);
  c.dense_hidden = s.get("dense_hidden", c.dense_hidden);
  c.p_head = s.get("p_head", c.p_head);
  c.init_seed = s.get<std::uint64_t>("init_seed", c.init_seed);
  s.finish();
  c.validate();
  return c;
}

TrainConfig read_train(Section& s, std::uint64_t seed, TrainConfig c = {}) {
  c.seed = seed;
  c.episodes = s.get("episodes", c.episodes);
  c.steps = s.get("steps", c.steps);
  c.batch_episodes = s.get("batch_episodes", c.batch_episodes);
  c.updates_per_episode = s.get("updates_per_episode", c.updates_per_episode);
  c.gamma = s.get("gamma", c.gamma);
  c.epsilon_start = s.get("epsilon_start", c.epsilon_start);
  c.epsilon_end = s.get("epsilon_end", c.epsilon_end);
  c.epsilon_decay_fraction = s.get("epsilon_decay_fraction", c.epsilon_decay_fraction);
  c.target_sync = s.get("target_sync", c.target_sync);
  c.predictive_base = parse_reward_kind(s.get<std::string>("predictive_base", to_string(c.predictive_base)));
  c.infogain_weight = s.get("infogain_weight", c.infogain_weight);
  c.w_neg = s.get("w_neg", c.w_neg);
  c.block_n = s.get("block_n", c.block_n);
  c.replay_capacity = s.get("replay_capacity", c.replay_capacity);
  c.eval_every = s.get("eval_every", c.eval_every);
  c.eval_episodes = s.get("eval_episodes", c.eval_episodes);
  c.eval_seed_base = s.get<std::uint64_t>("eval_seed_base", c.eval_seed_base);
  c.select_best = s.get("select_best", c.select_best);
  c.adam.learning_rate = s.get("learning_rate", c.adam.learning_rate);
  c.adam.clip_norm = s.get("clip_norm", c.adam.clip_norm);
  s.finish();
  require_positive(c.steps, "train.steps");
  require_positive(c.batch_episodes, "train.batch_episodes");
  require_positive(c.target_sync, "train.target_sync");
  if (c.episodes < 0 || c.updates_per_episode < 0) throw ConfigError("train: counts must be non-negative");
  if (!(c.gamma >= 0.0 && c.gamma < 1.0)) throw ConfigError("train.gamma must be in [0, 1)");
  return c;
}

struct EvalSection {
  int episodes = 100;
  std::uint64_t seed_base = 100'000;
  EvalOptions options;
};

EvalSection read_eval(Section& s, int threads) {
  EvalSection e;
  e.episodes = s.get("episodes", e.episodes);
  e.seed_base = s.get<std::uint64_t>("seed_base", e.seed_base);
  e.options.steps = s.get("steps", e.options.steps);
  e.options.block_n = s.get("block_n", e.options.block_n);
  e.options.final_block_n = s.get("final_block_n", e.options.final_block_n);
  s.finish();
  require_positive(e.episodes, "eval.episodes");
  require_positive(e.options.steps, "eval.steps");
  require_positive(e.options.block_n, "eval.block_n");
  require_positive(e.options.final_block_n, "eval.final_block_n");
  e.options.threads = threads;
  return e;
}

// Retraining starts from the lab settings but never selects on the field.
TrainConfig read_retrain(Section& s, std::uint64_t seed, TrainConfig base) {
  base.select_best = false;
  auto c = read_train(s, seed, base);
  if (c.select_best) throw ConfigError("retrain.select_best would select on field truth");
  return c;
}

SeqTrainConfig read_seq(Section& s, std::uint64_t seed) {
  SeqTrainConfig c;
  c.seed = seed;
  c.epochs = s.get("epochs", c.epochs);
  c.batch = s.get("batch", c.batch);
  c.adam.learning_rate = s.get("learning_rate", c.adam.learning_rate);
  c.w_neg = s.get("w_neg", c.w_neg);
  s.finish();
  require_positive(c.batch, "batch");
  return c;
}

FieldBudget read_budget(Section& s) {
  FieldBudget b;
  b.episodes = s.get("episodes", b.episodes);
  b.steps = s.get("steps", b.steps);
  s.finish();
  require_positive(b.episodes, "budget.episodes");
  require_positive(b.steps, "budget.steps");
  return b;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + p.string() + "'");
  f << text;
}

template <typename Fn>
void write_file(const std::filesystem::path& p, Fn&& fn) {
  std::ostringstream os;
  fn(os);
  write_text(p, os.str());
}

void write_arms(const std::filesystem::path& p, std::span<const ArmResult> arms) {
  write_file(p, [&](std::ostream& os) {
    os << "arm,spec,mean_cum_iou,mean_final_block_iou\n";
    for (const auto& a : arms) {
      os << a.arm << ',' << a.spec << ',' << format_number(a.mean_cum_iou) << ',' << format_number(a.mean_final_block_iou)
         << '\n';
    }
  });
}

void log_episodes(const std::filesystem::path& dir, const EvalSummary& s) {
  std::filesystem::create_directories(dir);
  for (const auto& log : s.logs) {
    const std::string stem = s.controller + "_" + s.spec + "_" + std::to_string(log.seed);
    write_file(dir / (stem + ".csv"), [&](std::ostream& os) { write_episode_csv(os, log); });
    write_file(dir / (stem + "_render.csv"), [&](std::ostream& os) { export_episode_render(os, log); });
  }
}

}  // namespace

void run_experiment_text(const std::string& text, const std::filesystem::path& base, const RunOverrides& ov) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  Section cfg(root, "config");
  const auto kind = parse_experiment_kind(cfg.require<std::string>("kind"));
  std::uint64_t seed = cfg.require<std::uint64_t>("seed");
  if (ov.seed) {
    seed = *ov.seed;
  }
  if (ov.out_dir.empty()) throw ConfigError("no output directory given");
  const int threads = std::max(1, ov.threads);

  auto spec_or = [&](const std::string& key) -> std::optional<EnvSpec> {
    if (!cfg.has(key)) return std::nullopt;
    return resolve_spec(cfg.get<std::string>(key, ""), base);
  };
  auto spec_list = [&](const std::string& key) {
    std::vector<EnvSpec> out;
    for (const auto& r : cfg.get<std::vector<std::string>>(key, {})) out.push_back(resolve_spec(r, base));
    return out;
  };

  const auto agent_name = cfg.get<std::string>("agent", "convlstm_dan");
  const bool agent_is_dan = agent_name.find("dan") != std::string::npos;
  const auto reward_name = cfg.get<std::string>(
      "reward", agent_name == "predictive_dan" ? std::string("predictive") : std::string("in_iou"));
  auto eval_section = cfg.sub("eval");
  const auto eval = read_eval(eval_section, threads);
  cfg.adopt("eval", eval_section);
  EvalOptions eval_opts = eval.options;
  eval_opts.keep_logs = ov.log_episodes;
  const auto eval_seeds = seed_list(eval.seed_base, eval.episodes);

  const auto spec = spec_or("spec");
  const auto prior = spec_or("prior");
  auto eval_specs = spec_list("eval_specs");
  const auto checkpoint = cfg.get<std::string>("checkpoint", "");
  auto controllers = cfg.get<std::vector<std::string>>("controllers", {});
  auto net_section = cfg.sub("network");
  auto train_section = cfg.sub("train");
  auto fb = cfg.sub("feedback");

  const auto out = ov.out_dir;
  std::filesystem::create_directories(out);

  // Lab agent: from checkpoint, or trained on `spec_ref` with the train section.
  auto make_agent = [&](const EnvSpec& train_spec, const std::string& prefix) {
    const auto akind = parse_agent_kind(agent_name);
    const auto reward = parse_dan_reward(reward_name);
    const auto tcfg = read_train(train_section, seed);
    cfg.adopt("train", train_section);
    if (!checkpoint.empty()) {
      std::filesystem::path p(checkpoint);
      if (p.is_relative()) p = base / p;
      auto net = nn::load_checkpoint(p.string());
      net_section.finish();
      DanAgent agent(akind, net.config(), reward);
      agent.replace_network(net);
      return std::pair{agent, tcfg};
    }
    const auto ncfg = read_network(net_section, akind, train_spec);
    cfg.adopt("network", net_section);
    DanAgent agent(akind, ncfg, reward);
    SpecSource source(train_spec);
    const auto result = train(agent, source, tcfg);
    write_file(out / (prefix + "curve.csv"), [&](std::ostream& os) { write_curve_csv(os, result.curve); });
    nn::save_checkpoint((out / (prefix + "checkpoint.bin")).string(), agent.net());
    return std::pair{agent, tcfg};
  };

  std::vector<EvalSummary> summaries;
  auto finish_eval = [&] {
    write_file(out / "eval_episodes.csv", [&](std::ostream& os) { write_eval_episodes_csv(os, summaries); });
    write_file(out / "eval_curves.csv", [&](std::ostream& os) { write_eval_curve_csv(os, summaries); });
    std::vector<std::string> specs;
    for (const auto& s : summaries) {
      if (std::find(specs.begin(), specs.end(), s.spec) == specs.end()) specs.push_back(s.spec);
    }
    for (const auto& name : specs) {
      std::vector<EvalSummary> subset;
      for (const auto& s : summaries) {
        if (s.spec == name) subset.push_back(s);
      }
      write_file(out / ("curve_" + name + ".csv"), [&](std::ostream& os) { write_eval_curve_csv(os, subset); });
    }
    write_file(out / "eval_summary.csv", [&](std::ostream& os) {
      os << "controller,spec,mean_cum_iou,std_cum_iou,mean_final_block_iou\n";
      for (const auto& s : summaries) {
        os << s.controller << ',' << s.spec << ',' << format_number(s.mean_cum_iou) << ','
           << format_number(s.std_cum_iou) << ',' << format_number(s.mean_final_block_iou) << '\n';
      }
    });
    if (ov.log_episodes) {
      for (const auto& s : summaries) log_episodes(out / "episodes", s);
    }
  };

  json fb_resolved;
  switch (kind) {
    case ExperimentKind::kTrain: {
      if (!spec) throw ConfigError("train: 'spec' is required");
      if (!agent_is_dan) throw ConfigError("train: agent must be a DAN kind");
      auto [agent, tcfg] = make_agent(*spec, "");
      if (eval_specs.empty()) eval_specs.push_back(*spec);
      for (const auto& s : eval_specs) summaries.push_back(evaluate_agent_summary(agent, s, eval_seeds, eval_opts));
      finish_eval();
      break;
    }
    case ExperimentKind::kEvaluate:
    case ExperimentKind::kCompareBaselines: {
      if (eval_specs.empty()) {
        if (!spec) throw ConfigError(to_string(kind) + ": 'spec' or 'eval_specs' is required");
        eval_specs.push_back(*spec);
      }
      if (controllers.empty()) {
        controllers = kind == ExperimentKind::kCompareBaselines
                          ? std::vector<std::string>{"random", "scan", "scan_dwell", "expert"}
                          : std::vector<std::string>{agent_name};
      }
      for (const auto& name : controllers) {
        std::unique_ptr<Controller> ctrl;
        if (name.find("dan") != std::string::npos) {
          if (checkpoint.empty()) throw ConfigError("evaluating '" + name + "' needs a checkpoint");
          std::filesystem::path p(checkpoint);
          if (p.is_relative()) p = base / p;
          ctrl = std::make_unique<DanController>(
              std::make_shared<const nn::DanNet<float>>(nn::load_checkpoint(p.string())), 0.0, name);
        } else {
          const EnvSpec& pr = prior ? *prior : (spec ? *spec : eval_specs.front());
          ctrl = make_baseline(name, pr);
        }
        for (const auto& s : eval_specs) summaries.push_back(evaluate_controller(*ctrl, s, eval_seeds, eval_opts));
      }
      finish_eval();
      break;
    }
    case ExperimentKind::kFeedbackSpec: {
      SpecFeedbackConfig c;
      c.lab = resolve_spec(fb.require<std::string>("lab"), base);
      c.field = resolve_spec(fb.require<std::string>("field"), base);
      c.estimation_prior = resolve_spec(fb.require<std::string>("estimation_prior"), base);
      auto bs = fb.sub("budget");
      c.budget = read_budget(bs);
      fb.adopt("budget", bs);
      c.deploy = fb.get<std::string>("deploy", c.deploy);
      c.field_weight = fb.get("field_weight", c.field_weight);
      auto rs = fb.sub("retrain");
      auto [agent, tcfg] = make_agent(c.lab, "lab_");
      c.retrain = read_retrain(rs, mix_seed(seed, 1), tcfg);
      fb.adopt("retrain", rs);
      fb.finish();
      c.eval_episodes = eval.episodes;
      c.eval_seed_base = eval.seed_base;
      c.eval = eval.options;
      const auto r = run_spec_feedback(agent, c);
      write_text(out / "estimated.spec", format_spec(r.estimate.spec));
      write_arms(out / "arms.csv", r.arms);
      break;
    }
    case ExperimentKind::kFeedbackBootstrap: {
      const auto lab = resolve_spec(fb.require<std::string>("lab"), base);
      std::vector<EnvSpec> fields;
      for (const auto& r : fb.require<std::vector<std::string>>("fields")) fields.push_back(resolve_spec(r, base));
      BootstrapOptions bo;
      bo.estimation_prior = resolve_spec(fb.require<std::string>("estimation_prior"), base);
      auto bs = fb.sub("budget");
      bo.budget = read_budget(bs);
      fb.adopt("budget", bs);
      bo.field_weight = fb.get("field_weight", bo.field_weight);
      bo.eval_episodes = eval.episodes;
      bo.eval_seed_base = eval.seed_base;
      auto rs = fb.sub("retrain");
      auto [agent, tcfg] = make_agent(lab, "lab_");
      const auto retrain = read_retrain(rs, mix_seed(seed, 2), tcfg);
      fb.adopt("retrain", rs);
      fb.finish();
      std::ostringstream table;
      table << "arm,iteration,field,estimated,spec,mean_cum_iou\n";
      for (bool newest : {false, true}) {
        DanAgent a(agent);
        bo.newest_only = newest;
        const auto iters = bootstrap(a, lab, fields, bo, retrain);
        const std::string arm = newest ? "newest_only" : "all_estimates";
        for (const auto& it : iters) {
          for (const auto& [sname, v] : it.evaluations) {
            table << arm << ',' << it.iteration << ',' << it.field << ',' << (it.estimate ? 1 : 0) << ',' << sname << ','
                  << format_number(v) << '\n';
          }
          if (it.estimate && !newest) {
            write_text(out / ("estimate_" + std::to_string(it.iteration) + ".spec"), format_spec(*it.estimate));
          }
        }
      }
      write_text(out / "bootstrap.csv", table.str());
      break;
    }
    case ExperimentKind::kFeedbackState:
    case ExperimentKind::kFinetunePartial: {
      StateFeedbackConfig c;
      c.lab = resolve_spec(fb.require<std::string>("lab"), base);
      c.field = resolve_spec(fb.require<std::string>("field"), base);
      auto bs = fb.sub("budget");
      c.budget = read_budget(bs);
      fb.adopt("budget", bs);
      c.estimated_counts = fb.get<std::vector<int>>("estimated_counts", c.estimated_counts);
      if (kind == ExperimentKind::kFinetunePartial) c.estimated_counts.clear();
      c.generated = fb.get("generated", c.generated);
      c.lab_pair_episodes = fb.get("lab_pair_episodes", c.lab_pair_episodes);
      if (const auto prior = fb.get<std::string>("reconstruction_prior", ""); !prior.empty()) {
        c.reconstruction_prior = resolve_spec(prior, base);
      }
      c.finetune_epochs = fb.get("finetune_epochs", c.finetune_epochs);
      c.seq_features = fb.get("seq_features", c.seq_features);
      c.seq_hidden = fb.get("seq_hidden", c.seq_hidden);
      auto recs = fb.sub("reconstructor");
      c.reconstructor = read_seq(recs, mix_seed(seed, 3));
      fb.adopt("reconstructor", recs);
      auto gens = fb.sub("generator");
      c.generator = read_seq(gens, mix_seed(seed, 4));
      fb.adopt("generator", gens);
      auto rs = fb.sub("retrain");
      auto [agent, tcfg] = make_agent(c.lab, "lab_");
      c.retrain = read_retrain(rs, mix_seed(seed, 5), tcfg);
      fb.adopt("retrain", rs);
      c.lab_share = fb.get("lab_share", c.lab_share);
      fb.finish();
      for (int n : c.estimated_counts) {
        if (n <= 0 || n > c.budget.episodes) throw ConfigError("feedback.estimated_counts must lie in [1, budget.episodes]");
      }
      c.eval_episodes = eval.episodes;
      c.eval_seed_base = eval.seed_base;
      c.eval = eval.options;
      const auto r = run_state_feedback(agent, c);
      write_arms(out / "arms.csv", r.arms);
      write_file(out / "reconstruction.csv", [&](std::ostream& os) {
        os << "reconstruction_accuracy,persistent_accuracy\n"
           << format_number(r.reconstruction_accuracy) << ',' << format_number(r.persistent_accuracy) << '\n';
      });
      r.database.save(out / "state_db");
      break;
    }
  }
  cfg.adopt("feedback", fb);
  cfg.finish();

  json resolved = cfg.resolved();
  resolved["seed"] = seed;
  json manifest = {{"version", kVersion}, {"kind", to_string(kind)}, {"config", resolved}};
  write_text(out / "manifest.json", manifest.dump(2) + "\n");
}

void run_experiment(const std::filesystem::path& config_path, const RunOverrides& overrides) {
  std::ifstream f(config_path);
  if (!f) throw ConfigError("cannot open config '" + config_path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  run_experiment_text(ss.str(), config_path.parent_path(), overrides);
}

}  // namespace specmon
