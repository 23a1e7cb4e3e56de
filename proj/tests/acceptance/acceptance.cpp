#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "gradcases.hpp"
#include "oracles.hpp"
#include "specmon/baselines.hpp"
#include "specmon/experiment.hpp"
#include "specmon/feedback.hpp"
#include "specmon/hypothesis.hpp"
#include "specmon/spec_io.hpp"

using namespace specmon;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kHeldOut = 5000;  // evaluation seeds never used for training

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

DanAgent train_agent(AgentKind kind, DanReward reward, const nn::NetworkConfig& net, const EnvSpec& spec,
                     const TrainConfig& cfg, int* selected_episode = nullptr) {
  DanAgent agent(kind, net, reward);
  SpecSource src(spec);
  const auto r = train(agent, src, cfg);
  if (selected_episode) *selected_episode = r.selected_episode;
  return agent;
}

double held_out(const DanAgent& agent, const EnvSpec& spec, int n = 100) {
  EvalOptions opt;
  return evaluate_agent_summary(agent, spec, seed_list(kHeldOut, n), opt).mean_cum_iou;
}

double baseline_score(const std::string& kind, const EnvSpec& prior, const EnvSpec& spec, int at_step = -1) {
  EvalOptions opt;
  const auto s = evaluate_controller(*make_baseline(kind, prior), spec, seed_list(kHeldOut, 100), opt);
  return at_step < 0 ? s.mean_cum_iou : s.cum_curve_mean.at(at_step);
}

Outcome simulator() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1);
  oracle::SimViolations sum;
  for (int i = 0; i < 10'000; ++i) {
    const auto spec = oracle::random_spec(rng, i % 5 != 0);
    const auto v = oracle::simulator_violations(spec, rng());
    sum.exclusivity += v.exclusivity;
    sum.periodicity += v.periodicity;
    sum.pre_start += v.pre_start;
    sum.determinism += v.determinism;
  }
  const double dt = seconds_since(t0);
  return {sum.total() == 0 && dt < 60.0,
          "draws=10000 exclusivity=" + std::to_string(sum.exclusivity) + " periodicity=" +
              std::to_string(sum.periodicity) + " pre_start=" + std::to_string(sum.pre_start) +
              " determinism=" + std::to_string(sum.determinism) + " runtime_s=" + fmt(dt) + " (limit 60)"};
}

Outcome metrics() {
  long bad = 0;
  for (unsigned g = 0; g < (1U << 16); ++g) {
    const unsigned h = (g * 40503U + 12345U) & 0xFFFFU;
    const auto a = oracle::grid_from_bits(g, 4, 4);
    const auto b = oracle::grid_from_bits(h, 4, 4);
    bad += oracle::iou_mismatches(a, b);
    bad += oracle::iou_mismatches(b, a);
  }
  const double ln2 = std::log(2.0);
  double werr = 0.0;
  werr = std::max(werr, std::abs(wbce_loss(std::vector<float>{0.5F}, std::vector<int>{1}) - ln2));
  werr = std::max(werr, std::abs(wbce_loss(std::vector<float>{0.5F}, std::vector<int>{0}) - 0.1 * ln2));
  werr = std::max(werr, std::abs(wbce_loss(std::vector<float>{0.5F, 0.5F}, std::vector<int>{1, 0}) - 0.55 * ln2));
  werr = std::max(werr, std::abs(wbce_loss(std::vector<float>{0.5F}, std::vector<int>{0}, 1.0) - ln2));
  return {bad == 0 && werr <= 1e-9,
          "grids=65536 oracle_mismatches=" + std::to_string(bad) + " wbce_max_err=" + sci(werr) +
              " (tol 1e-9)"};
}

Outcome gradients() {
  double worst = 0.0;
  std::string worst_name;
  for (const auto& c : gradcase::all_cases()) {
    if (c.result.max_relative_error >= worst) {
      worst = c.result.max_relative_error;
      worst_name = c.name;
    }
  }
  const double corrupt = gradcase::dannet_case(nn::Topology::kConv, 1, true).max_relative_error;
  return {worst < 1e-3 && corrupt > 1e-3, "max_rel_err=" + std::to_string(worst) + " (" + worst_name +
                                              ", tol 1e-3) corrupted_control=" + fmt(corrupt)};
}

bool holds(const std::vector<SignalPair>& set, const SignalPair& p) {
  return std::any_of(set.begin(), set.end(), [&](const SignalPair& c) { return c.same_dynamics(p); });
}

Outcome hypotheses() {
  const std::vector<EnvSpec> specs{builtin_spec("A"), builtin_spec("B1"), builtin_spec("C2"), builtin_spec("F3")};
  long lost = 0, wrong = 0, resolved = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto& spec = specs[i % specs.size()];
    auto env = sample_environment(spec, 10'000 + i);
    ExpertController expert(spec);
    expert.reset({spec.n_bands, 1, 100, static_cast<std::uint64_t>(i)});
    History h(spec.n_bands, 1);
    bool checked = false;
    for (int t = 0; t < 100; ++t) {
      const int a = expert.select_band(h);
      h.append(a, env.observe(t, a));
      expert.predict(h);
      const auto& hs = expert.hypotheses();
      for (const auto& p : env.pairs()) {
        bool kept = holds(hs.undiscovered(), p);
        for (const auto& tr : hs.tracked()) kept = kept || holds(tr.candidates, p);
        lost += !kept;
      }
      bool singleton = !hs.tracked().empty() && (hs.capacity() == 0 || hs.undiscovered().empty());
      for (const auto& tr : hs.tracked()) singleton = singleton && tr.candidates.size() == 1;
      if (singleton && !checked) {
        checked = true;
        ++resolved;
        for (int u = t + 1; u < t + 60; ++u) {
          const auto p = hs.predict(u).probability;
          const auto truth = env.state_at(u);
          for (int b = 0; b < spec.n_bands; ++b) wrong += (p[b] >= 0.5F) != (truth[b] != 0);
        }
      }
    }
  }
  return {lost == 0 && wrong == 0, "envs=1000 true_tuple_eliminated=" + std::to_string(lost) +
                                       " singleton_episodes=" + std::to_string(resolved) +
                                       " future_mispredictions=" + std::to_string(wrong)};
}

Outcome convergence() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto a = builtin_spec("A");
  const double expert = baseline_score("expert", a, a, 49);
  const double dwell = baseline_score("scan_dwell", a, a, 49);
  const double dt = seconds_since(t0);
  return {expert >= 0.9 && dwell >= 0.9 && dt < 60.0,
          "cum_iou@t50 expert=" + fmt(expert) + " scan_dwell=" + fmt(dwell) + " (need >= 0.9) runtime_s=" + fmt(dt)};
}

Outcome misinformed() {
  const auto a = builtin_spec("A");
  const auto b1 = builtin_spec("B1");
  const double on_a = baseline_score("expert", a, a);
  const double on_b1 = baseline_score("expert", a, b1);
  const auto t0 = std::chrono::steady_clock::now();
  TrainConfig cfg;
  cfg.seed = 7;
  cfg.eval_episodes = 50;
  cfg.select_best = true;
  int selected = 0;
  const auto agent = train_agent(AgentKind::kConvLstmDan, DanReward::kInstantIoU,
                                 default_network(AgentKind::kConvLstmDan, 20, 1), b1, cfg, &selected);
  const double dan = held_out(agent, b1);
  const double dt = seconds_since(t0);
  const bool drop = on_a - on_b1 >= 0.3;
  return {drop && dan > on_b1, "expert_A=" + fmt(on_a) + " expert_B1=" + fmt(on_b1) + " drop=" + fmt(on_a - on_b1) +
                                   " (need >= 0.3) dan_B1=" + fmt(dan) + " episodes=" + std::to_string(cfg.episodes) +
                                   " selected_episode=" + std::to_string(selected) + " train_s=" + fmt(dt)};
}

Outcome topology() {
  auto conv = default_network(AgentKind::kConvLstmDan, 20, 1);
  auto dense = conv;
  dense.topology = nn::Topology::kDense;
  const auto c20 = nn::DanNet<float>(conv).parameter_count();
  const auto d20 = nn::DanNet<float>(dense).parameter_count();
  auto conv40 = conv;
  conv40.n_bands = 40;
  const auto c40 = nn::DanNet<float>(conv40).parameter_count();
  const auto a = builtin_spec("A");
  TrainConfig cfg;
  cfg.episodes = 500;
  cfg.seed = 3;
  cfg.eval_every = 0;
  const double conv_iou = held_out(train_agent(AgentKind::kConvLstmDan, DanReward::kInstantIoU, conv, a, cfg), a);
  const double dense_iou = held_out(train_agent(AgentKind::kConvLstmDan, DanReward::kInstantIoU, dense, a, cfg), a);
  const bool counts = c20 < d20 && c20 == c40;
  return {counts && conv_iou >= dense_iou,
          "params conv20=" + std::to_string(c20) + " dense20=" + std::to_string(d20) + " conv40=" +
              std::to_string(c40) + " iou conv=" + fmt(conv_iou) + " dense=" + fmt(dense_iou) + " episodes=500"};
}

Outcome variants() {
  TrainConfig cfg;
  cfg.updates_per_episode = 2;
  cfg.eval_episodes = 30;
  cfg.select_best = true;
  auto net = [](AgentKind k) {
    auto c = default_network(k, 20, 1);
    c.conv_channels = 8;
    c.hidden = 16;
    return c;
  };
  std::string detail;
  auto vote = [&](const EnvSpec& spec, AgentKind challenger, DanReward reward, const std::string& label) {
    int wins = 0;
    for (std::uint64_t seed : {1, 2, 3}) {
      cfg.seed = seed;
      const double base = held_out(train_agent(AgentKind::kConvLstmDan, DanReward::kInstantIoU,
                                               net(AgentKind::kConvLstmDan), spec, cfg),
                                   spec);
      const double other = held_out(train_agent(challenger, reward, net(challenger), spec, cfg), spec);
      wins += other >= base;
      detail += " " + label + "[" + std::to_string(seed) + "]=" + fmt(other) + "/convlstm=" + fmt(base);
    }
    return wins >= 2;
  };
  const bool st = vote(builtin_spec("stationary"), AgentKind::kInfoMaxDan, DanReward::kInstantIoU, "infomax");
  const bool ns = vote(builtin_spec("nonstationary"), AgentKind::kPredictiveDan, DanReward::kPredictive, "predictive");
  return {st && ns, "stationary_vote=" + std::string(st ? "yes" : "no") +
                        " nonstationary_vote=" + std::string(ns ? "yes" : "no") + detail};
}

Outcome state_feedback() {
  const auto c1 = builtin_spec("C1");
  TrainConfig lab_cfg;
  lab_cfg.episodes = 1500;
  lab_cfg.seed = 9;
  lab_cfg.eval_episodes = 30;
  lab_cfg.select_best = true;
  const auto lab = train_agent(AgentKind::kPredictiveDan, DanReward::kPredictive,
                               default_network(AgentKind::kPredictiveDan, 20, 1), c1, lab_cfg);
  StateFeedbackConfig cfg;
  cfg.lab = c1;
  cfg.field = builtin_spec("C2");
  cfg.budget = {100, 100};
  cfg.estimated_counts = {100};
  cfg.reconstruction_prior = load_spec(std::string(SPECMON_SPEC_DIR) + "/wide_prior.spec");
  cfg.lab_pair_episodes = 400;
  cfg.reconstructor.epochs = 60;
  cfg.reconstructor.seed = 29;
  cfg.retrain = lab_cfg;
  cfg.retrain.select_best = false;
  cfg.retrain.eval_every = 0;
  cfg.retrain.episodes = 600;
  cfg.retrain.epsilon_start = 0.3;
  cfg.retrain.seed = 19;
  cfg.eval.final_block_n = 33;
  const auto r = run_state_feedback(lab, cfg);
  double lab_only = 0, retrain = 0, finetune = 0;
  for (const auto& a : r.arms) {
    if (a.arm == "lab_only") lab_only = a.mean_final_block_iou;
    if (a.arm == "retrain_100") retrain = a.mean_final_block_iou;
    if (a.arm == "finetune_partial") finetune = a.mean_final_block_iou;
  }
  auto band = [](double v, double ref) { return std::abs(v - ref) <= 0.15 ? "in" : "out"; };
  return {retrain > lab_only && finetune < retrain,
          "block_iou33 lab_only=" + fmt(lab_only) + " (ref 0.58, " + band(lab_only, 0.58) + ") retrain_100=" +
              fmt(retrain) + " (ref 0.72, " + band(retrain, 0.72) + ") finetune_partial=" + fmt(finetune) +
              " (ref 0.43, " + band(finetune, 0.43) + ") recon_acc=" + fmt(r.reconstruction_accuracy) +
              " persistent_acc=" + fmt(r.persistent_accuracy)};
}

long g_field_reads = 0;

class WatchedEnvironment final : public Environment {
 public:
  explicit WatchedEnvironment(EnvironmentInstance inner) : inner_(std::move(inner)) {}
  int n_bands() const override { return inner_.n_bands(); }
  int n_classes() const override { return inner_.n_classes(); }
  void advance(int t) override { inner_.advance(t); }
  Observation observe(int t, int band) const override { return inner_.observe(t, band); }

 protected:
  std::vector<int> compute_state(int t) const override {
    ++g_field_reads;
    return inner_.state_at(t);
  }

 private:
  EnvironmentInstance inner_;
};

Outcome plumbing() {
  const auto wide = load_spec(std::string(SPECMON_SPEC_DIR) + "/wide_prior.spec");
  const auto lab = builtin_spec("A");
  // no-leak: deploy, estimate, reconstruct without touching field truth
  g_field_reads = 0;
  auto expert = make_baseline("expert", lab);
  const auto field = builtin_spec("B1");
  const auto exp = collect_field_experience(
      *expert,
      [&](int i) { return std::make_unique<WatchedEnvironment>(sample_environment(field, 40'000 + i)); }, {20, 100},
      "B1");
  const auto est = estimate_field_spec(exp, wide);
  ScanController scan;
  const auto pairs = simulate_lab_pairs(scan, lab, 8, 100, 1);
  Reconstructor rec(20, 4, 8, 1);
  SeqTrainConfig sc;
  sc.epochs = 1;
  rec.train(pairs.partial, pairs.truth, sc);
  for (const auto& h : exp.episodes) rec.reconstruct(h);
  const long reads = g_field_reads;
  WatchedEnvironment control(sample_environment(field, 1));
  (void)control.state_at(0);
  const bool watch_works = g_field_reads == reads + 1;

  const std::vector<EnvSpec> one{est.spec};
  const auto pool = make_feedback_pool(lab, one, 0.7);
  std::mt19937_64 rng(5);
  int field_draws = 0;
  for (int i = 0; i < 1000; ++i) field_draws += pool.sample_index(rng) == 1;
  const double freq = field_draws / 1000.0;

  TrainConfig cfg;
  cfg.episodes = 300;
  cfg.seed = 11;
  cfg.eval_every = 0;
  auto net = default_network(AgentKind::kConvLstmDan, 20, 1);
  net.hidden = 16;
  net.conv_channels = 8;
  auto agent = train_agent(AgentKind::kConvLstmDan, DanReward::kInstantIoU, net, lab, cfg);
  BootstrapOptions bo;
  bo.estimation_prior = wide;
  bo.eval_episodes = 20;
  TrainConfig rc = cfg;
  rc.episodes = 100;
  rc.epsilon_start = 0.3;
  const std::vector<EnvSpec> fields{builtin_spec("F1"), builtin_spec("F2"), builtin_spec("F3")};
  const auto its = bootstrap(agent, lab, fields, bo, rc);
  bool complete = its.size() == 3;
  int estimated = 0;
  std::string evals;
  for (const auto& it : its) {
    complete = complete && it.evaluations.size() == 4;
    estimated += it.estimate.has_value();
    evals += " it" + std::to_string(it.iteration) + "[";
    for (const auto& [name, v] : it.evaluations) evals += name + "=" + fmt(v) + " ";
    evals.back() = ']';
  }
  return {reads == 0 && watch_works && std::abs(freq - 0.7) <= 0.05 && complete,
          "field_truth_reads=" + std::to_string(reads) + " watch_control=" + (watch_works ? "ok" : "broken") + " pool_field_freq=" + fmt(freq) +
              " (0.7 +/- 0.05) iterations=" + std::to_string(its.size()) + " estimated=" + std::to_string(estimated) +
              evals};
}

std::map<std::string, std::string> run_files(const std::string& json, const fs::path& dir) {
  fs::remove_all(dir);
  RunOverrides ov;
  ov.out_dir = dir;
  ov.threads = 2;
  ov.log_episodes = true;
  run_experiment_text(json, SPECMON_SPEC_DIR, ov);
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream f(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    files[fs::relative(e.path(), dir).string()] = ss.str();
  }
  fs::remove_all(dir);
  return files;
}

Outcome reproducibility() {
  const std::vector<std::string> configs{
      R"({"kind": "compare_baselines", "seed": 1, "eval_specs": ["A.spec", "B1.spec"], "prior": "A.spec",
          "eval": {"episodes": 20, "seed_base": 100}})",
      R"({"kind": "train", "seed": 2, "agent": "predictive_dan", "spec": "nonstationary.spec",
          "network": {"hidden": 8, "conv_channels": 4},
          "train": {"episodes": 20, "steps": 50, "batch_episodes": 4, "eval_every": 10, "eval_episodes": 3},
          "eval": {"episodes": 5, "steps": 50}})",
      R"({"kind": "feedback_spec", "seed": 3, "network": {"hidden": 8, "conv_channels": 4},
          "train": {"episodes": 8, "steps": 50, "batch_episodes": 4, "eval_every": 0},
          "feedback": {"lab": "A.spec", "field": "B1.spec", "estimation_prior": "wide_prior.spec",
                       "budget": {"episodes": 10, "steps": 50}, "retrain": {"episodes": 8}},
          "eval": {"episodes": 4, "steps": 50}})"};
  int files = 0, differing = 0;
  std::string names;
  const auto base = fs::temp_directory_path() / "specmon_repro";
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const auto a = run_files(configs[i], base / ("a" + std::to_string(i)));
    const auto b = run_files(configs[i], base / ("b" + std::to_string(i)));
    for (const auto& [name, text] : a) {
      const auto ext = fs::path(name).extension();
      if (ext != ".csv" && ext != ".json") continue;
      ++files;
      const auto it = b.find(name);
      if (it == b.end() || it->second != text) {
        if (differing++ < 3) names += " " + name;
      }
    }
  }
  return {files > 0 && differing == 0,
          "experiments=3 csv_json_files=" + std::to_string(files) + " differing=" + std::to_string(differing) + names};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"specmon acceptance criteria"};
  std::vector<int> only;
  app.add_option("--criterion", only, "Run only these criteria (1-11)")->check(CLI::Range(1, 11));
  CLI11_PARSE(app, argc, argv);
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, simulator},   {2, metrics},          {3, gradients}, {4, hypotheses},
      {5, convergence}, {6, misinformed},      {7, topology},  {8, variants},
      {9, state_feedback}, {10, plumbing}, {11, reproducibility}};
  const std::set<int> selected(only.begin(), only.end());
  int failed = 0;
  for (const auto& [id, fn] : criteria) {
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::printf("criterion %d: %s %s [%.1fs]\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
