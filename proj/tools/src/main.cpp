#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "specmon/errors.hpp"
#include "specmon/experiment.hpp"
#include "specmon/spec_io.hpp"

namespace {

int validate_spec_cmd(const std::string& ref) {
  const auto spec = specmon::resolve_spec(ref, std::filesystem::current_path());
  std::cout << spec.name << ": ok\n";
  return 0;
}

int export_truth_cmd(const std::string& ref, std::uint64_t seed, int steps, const std::string& out) {
  const auto spec = specmon::resolve_spec(ref, std::filesystem::current_path());
  auto env = specmon::sample_environment(spec, seed);
  const auto grid = specmon::truth_grid(env, steps);
  if (out.empty() || out == "-") {
    specmon::write_truth_csv(std::cout, grid, spec.n_bands);
    return 0;
  }
  std::ofstream f(out);
  if (!f) throw specmon::ConfigError("cannot write '" + out + "'");
  specmon::write_truth_csv(f, grid, spec.n_bands);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"specmon: spectrum monitoring experiments"};
  app.set_version_flag("--version", specmon::kVersion);

  std::string config;
  std::string out;
  std::uint64_t seed_override = 0;
  bool log_episodes = false;
  int threads = 1;
  auto* seed_opt = app.add_option("--seed-override", seed_override, "Replace the config seed");
  app.add_option("--config", config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--out", out, "Artifact directory (SPECMON_OUT takes precedence)");
  app.add_flag("--log-episodes", log_episodes, "Write per-episode logs and render grids");
  app.add_option("--threads", threads, "Evaluation threads")->check(CLI::PositiveNumber);

  auto* validate = app.add_subcommand("validate-spec", "Parse and validate a spec");
  std::string spec_ref;
  validate->add_option("spec", spec_ref, "Spec file or builtin:NAME")->required();

  auto* truth = app.add_subcommand("export-truth", "Write the ground-truth grid of one environment");
  std::string truth_spec, truth_out;
  std::uint64_t truth_seed = 0;
  int truth_steps = 100;
  truth->add_option("spec", truth_spec, "Spec file or builtin:NAME")->required();
  truth->add_option("--seed", truth_seed, "Environment seed")->required();
  truth->add_option("--steps", truth_steps, "Steps")->check(CLI::PositiveNumber);
  truth->add_option("-o,--output", truth_out, "CSV path (default stdout)");
  app.require_subcommand(0, 1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*validate) return validate_spec_cmd(spec_ref);
    if (*truth) return export_truth_cmd(truth_spec, truth_seed, truth_steps, truth_out);
    if (config.empty()) throw specmon::ConfigError("--config is required");
    specmon::RunOverrides ov;
    if (const char* env = std::getenv("SPECMON_OUT"); env && *env) out = env;
    if (out.empty()) throw specmon::ConfigError("--out or SPECMON_OUT is required");
    ov.out_dir = out;
    if (*seed_opt) ov.seed = seed_override;
    ov.log_episodes = log_episodes;
    ov.threads = threads;
    specmon::run_experiment(config, ov);
    std::cout << "wrote " << out << '\n';
    return 0;
  } catch (const specmon::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const specmon::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
