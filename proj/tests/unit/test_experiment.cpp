#include <doctest.h>

#include <filesystem>
#include <map>
#include <fstream>
#include <sstream>

#include "specmon/errors.hpp"
#include "specmon/experiment.hpp"
#include "specmon/spec_io.hpp"

using namespace specmon;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  return d;
}

void run_in(const std::string& json, const fs::path& out) {
  RunOverrides ov;
  ov.out_dir = out;
  run_experiment_text(json, SPECMON_CONFIG_DIR, ov);
}

const char* kCompare = R"({
  "kind": "compare_baselines", "seed": 3,
  "eval_specs": ["../specs/A.spec", "builtin:B1"],
  "prior": "builtin:A",
  "controllers": ["random", "scan", "expert"],
  "eval": {"episodes": 4, "seed_base": 50, "steps": 40}
})";

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("seed lists") {
  CHECK(seed_list(10, 3) == std::vector<std::uint64_t>{10, 11, 12});
  CHECK(seed_list(10, 0).empty());
}

TEST_CASE("evaluation is deterministic and thread-count independent") {
  const auto spec = builtin_spec("B1");
  auto ctrl = make_baseline("scan_dwell", builtin_spec("A"));
  const auto seeds = seed_list(300, 9);
  EvalOptions one;
  EvalOptions many = one;
  many.threads = 4;
  const auto a = evaluate_controller(*ctrl, spec, seeds, one);
  const auto b = evaluate_controller(*ctrl, spec, seeds, many);
  const auto c = evaluate_controller(*ctrl, spec, seeds, one);
  CHECK(a.cum_iou == b.cum_iou);
  CHECK(a.cum_iou == c.cum_iou);
  CHECK(a.cum_curve_mean == b.cum_curve_mean);
  CHECK(a.cum_curve_mean.size() == 100U);
  CHECK(a.cum_curve_mean.back() == doctest::Approx(a.mean_cum_iou));
  for (double s : a.cum_curve_std) CHECK(s >= 0.0);
}

TEST_CASE("scan beats random on SpecA") {
  const auto spec = builtin_spec("A");
  const auto seeds = seed_list(0, 100);
  EvalOptions opt;
  const auto r = evaluate_controller(*make_baseline("random", spec), spec, seeds, opt);
  const auto s = evaluate_controller(*make_baseline("scan", spec), spec, seeds, opt);
  CHECK(r.mean_cum_iou < s.mean_cum_iou);
}

TEST_CASE("episode render blocks") {
  const auto spec = builtin_spec("A");
  auto env = sample_environment(spec, 4);
  ExpertController expert(spec);
  RunOptions opt;
  opt.steps = 12;
  const auto log = run_episode(expert, env, opt, 4, "A");
  std::ostringstream os;
  export_episode_render(os, log);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("block,t,band_0", 0) == 0);
  std::map<std::string, int> rows;
  std::vector<std::vector<double>> truth, pred;
  std::vector<double> reward;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string block, cell;
    std::getline(ss, block, ',');
    std::getline(ss, cell, ',');
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(cell.empty() ? 0.0 : std::stod(cell));
    if (block != "reward") CHECK(vals.size() == 20U);
    ++rows[block];
    if (block == "truth") truth.push_back(vals);
    if (block == "prediction") pred.push_back(vals);
    if (block == "reward") reward.push_back(vals.at(0));
  }
  for (const auto* b : {"truth", "prediction", "q", "reward"}) CHECK(rows[b] == 12);
  for (int t = 0; t < 12; ++t) {
    std::vector<float> p(pred[t].begin(), pred[t].end());
    std::vector<int> q(truth[t].begin(), truth[t].end());
    CHECK(reward[t] == doctest::Approx(iou_instant(p, q)));
  }
  EpisodeLog empty;
  empty.n_bands = 3;
  std::ostringstream e;
  export_episode_render(e, empty);
  CHECK(e.str() == "block,t,band_0,band_1,band_2\n");
}

TEST_CASE("config errors") {
  const auto out = fresh_dir("specmon_cfg_err");
  CHECK_THROWS_AS(run_in("{", out), ConfigError);
  CHECK_THROWS_AS(run_in(R"({"kind": "train", "spec": "builtin:A"})", out), ConfigError);
  CHECK_THROWS_AS(run_in(R"({"kind": "dance", "seed": 1})", out), ConfigError);
  CHECK_THROWS_AS(run_in(R"({"kind": "evaluate", "seed": 1, "spec": "nope.spec"})", out), ConfigError);
  CHECK_THROWS_AS(run_in(R"({"kind": "compare_baselines", "seed": 1, "spec": "builtin:A", "colour": 2})", out),
                  ConfigError);
  CHECK_THROWS_AS(
      run_in(R"({"kind": "compare_baselines", "seed": 1, "spec": "builtin:A", "eval": {"episodes": 0}})", out),
      ConfigError);
  CHECK_THROWS_AS(run_in(R"({"kind": "train", "seed": 1, "spec": "builtin:A", "train": {"gama": 0.5}})", out),
                  ConfigError);
  CHECK_THROWS_AS(run_in(R"({"kind": "compare_baselines", "seed": "x", "spec": "builtin:A"})", out), ConfigError);
  fs::remove_all(out);
}

TEST_CASE("compare_baselines writes per-spec curves and reruns byte-identically") {
  const auto a = fresh_dir("specmon_cmp_a");
  const auto b = fresh_dir("specmon_cmp_b");
  run_in(kCompare, a);
  run_in(kCompare, b);
  for (const auto* f : {"eval_episodes.csv", "eval_curves.csv", "eval_summary.csv", "curve_A.csv", "curve_B1.csv",
                        "manifest.json"}) {
    INFO(f);
    REQUIRE(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  const auto header = slurp(a / "curve_A.csv").substr(0, 40);
  CHECK(header.rfind("t,random_A_cum_mean", 0) == 0);
  const auto manifest = slurp(a / "manifest.json");
  CHECK(manifest.find("\"version\": \"0.1.0\"") != std::string::npos);
  CHECK(manifest.find("\"seed_base\": 50") != std::string::npos);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("train run writes curve, checkpoint and evaluation; evaluate reloads it") {
  const auto out = fresh_dir("specmon_train");
  run_in(R"({
    "kind": "train", "seed": 4, "spec": "builtin:A",
    "network": {"hidden": 4, "conv_channels": 3},
    "train": {"episodes": 4, "steps": 20, "batch_episodes": 2, "updates_per_episode": 1, "eval_every": 2, "eval_episodes": 1},
    "eval": {"episodes": 2, "steps": 20}
  })",
         out);
  for (const auto* f : {"curve.csv", "checkpoint.bin", "eval_summary.csv", "manifest.json"}) CHECK(fs::exists(out / f));
  const auto eval_out = fresh_dir("specmon_eval");
  run_in(R"({"kind": "evaluate", "seed": 4, "spec": "builtin:A", "checkpoint": ")" +
             (out / "checkpoint.bin").string() + R"(", "eval": {"episodes": 2, "steps": 20}})",
         eval_out);
  const auto a = slurp(out / "eval_summary.csv");
  const auto b = slurp(eval_out / "eval_summary.csv");
  CHECK(a == b);
  fs::remove_all(out);
  fs::remove_all(eval_out);
}

TEST_CASE("seed override changes the manifest seed") {
  const auto out = fresh_dir("specmon_override");
  RunOverrides ov;
  ov.out_dir = out;
  ov.seed = 77;
  run_experiment_text(kCompare, SPECMON_CONFIG_DIR, ov);
  CHECK(slurp(out / "manifest.json").find("\"seed\": 77") != std::string::npos);
  fs::remove_all(out);
}

}
