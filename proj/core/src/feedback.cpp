#include "specmon/feedback.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "specmon/errors.hpp"
#include "specmon/hypothesis.hpp"
#include "specmon/metrics.hpp"
#include "specmon/spec_io.hpp"

namespace specmon {

FieldExperience collect_field_experience(Controller& controller, const EnvironmentFactory& make_env,
                                         const FieldBudget& budget, const std::string& field_id) {
  if (budget.episodes < 0 || budget.steps <= 0) throw ConfigError("field budget must be finite and positive");
  FieldExperience exp;
  exp.field_id = field_id;
  exp.budget = budget;
  for (int i = 0; i < budget.episodes; ++i) {
    auto env = make_env(i);
    if (i == 0) {
      exp.n_bands = env->n_bands();
      exp.n_classes = env->n_classes();
    }
    exp.episodes.push_back(run_blind_episode(controller, *env, budget.steps, static_cast<std::uint64_t>(i)));
  }
  return exp;
}

FieldExperience collect_field_experience(Controller& controller, const EnvSpec& field, const FieldBudget& budget,
                                         std::uint64_t seed_base) {
  auto exp = collect_field_experience(
      controller,
      [&](int i) {
        return std::make_unique<EnvironmentInstance>(sample_environment(field, seed_base + static_cast<std::uint64_t>(i)));
      },
      budget, field.name);
  exp.n_bands = field.n_bands;
  exp.n_classes = field.n_classes;
  return exp;
}

SpecEstimate estimate_field_spec(const FieldExperience& exp, const EnvSpec& prior, std::size_t tuple_cap) {
  require_valid(prior);
  auto tuples = std::make_shared<const std::vector<SignalPair>>(HypothesisSet::enumerate(prior, tuple_cap));
  constexpr int kBig = std::numeric_limits<int>::max();
  constexpr int kSmall = std::numeric_limits<int>::min();
  IntRange number{kBig, kSmall}, width{kBig, kSmall}, period{kBig, kSmall}, duty{kBig, kSmall}, start{kBig, kSmall},
      freq{kBig, kSmall};
  auto widen = [](IntRange& r, int v) {
    r.lo = std::min(r.lo, v);
    r.hi = std::max(r.hi, v);
  };
  SpecEstimate est;
  for (const auto& h : exp.episodes) {
    bool any_detection = false;
    HypothesisSet hs(prior, tuples);
    for (int t = 0; t < h.size(); ++t) {
      const auto& step = h.steps()[t];
      any_detection = any_detection || step.obs.detection;
      hs.eliminate(t, step.action, step.obs.detection);
    }
    if (!any_detection) {
      ++est.episodes_silent;
      continue;
    }
    if (hs.inconsistent()) {
      ++est.episodes_inconsistent;
      continue;
    }
    ++est.episodes_used;
    widen(number, static_cast<int>(hs.tracked().size()));
    for (const auto& pair : hs.tracked()) {
      for (const auto& c : pair.candidates) {
        widen(width, c.width);
        widen(period, c.period);
        widen(duty, c.duty_cycle);
        widen(start, c.start);
        widen(freq, c.freq_lo);
      }
    }
  }
  if (est.episodes_used == 0) {
    throw ConfigError("insufficient field evidence: no usable detections in " + std::to_string(exp.episodes.size()) +
                      " episodes (" + std::to_string(est.episodes_inconsistent) + " inconsistent with the prior)");
  }
  EnvSpec& s = est.spec;
  s = prior;
  s.name = "est_" + (exp.field_id.empty() ? std::string("field") : exp.field_id);
  s.number = {std::max(1, number.lo), std::max(1, number.hi)};
  s.width = width;
  s.period = period;
  s.duty_cycle = duty;
  s.start = start;
  if (prior.freq) s.freq = freq;
  s.change_prob = 0.0;
  s.class_period.clear();
  return est;
}

// --- spec pool ---

SpecPool::SpecPool(std::vector<Entry> entries) : entries_(std::move(entries)) { normalize(); }

void SpecPool::add(EnvSpec spec, double weight) {
  entries_.push_back({std::move(spec), weight});
  normalize();
}

void SpecPool::normalize() {
  double sum = 0.0;
  for (const auto& e : entries_) {
    if (!(e.weight >= 0.0) || !std::isfinite(e.weight)) throw ConfigError("spec pool weights must be finite and >= 0");
    sum += e.weight;
  }
  if (entries_.empty()) return;
  if (sum <= 0.0) throw ConfigError("spec pool weights sum to zero");
  for (auto& e : entries_) e.weight /= sum;
}

std::size_t SpecPool::sample_index(std::mt19937_64& rng) const {
  if (entries_.empty()) throw UsageError("sampling from an empty spec pool");
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    acc += entries_[i].weight;
    if (u < acc) return i;
  }
  for (std::size_t i = entries_.size(); i-- > 0;) {
    if (entries_[i].weight > 0.0) return i;
  }
  return 0;
}

SpecPool make_feedback_pool(const EnvSpec& lab, std::span<const EnvSpec> estimates, double field_weight) {
  if (estimates.empty()) return SpecPool({{lab, 1.0}});
  std::vector<SpecPool::Entry> entries;
  entries.push_back({lab, 1.0 - field_weight});
  for (const auto& e : estimates) entries.push_back({e, field_weight / static_cast<double>(estimates.size())});
  return SpecPool(std::move(entries));
}

std::unique_ptr<Environment> PoolSource::make(int /*episode*/, std::mt19937_64& rng) {
  const auto& spec = pool_.sample(rng);
  return std::make_unique<EnvironmentInstance>(sample_environment(spec, rng()));
}

TrainResult retrain_pooled(DanAgent& agent, const SpecPool& pool, const TrainConfig& cfg, const EnvSpec& eval_spec) {
  if (cfg.select_best) throw ConfigError("select_best during feedback retraining would select on field truth");
  PoolSource source(pool, eval_spec);
  return train(agent, source, cfg);
}

std::vector<BootstrapIteration> bootstrap(DanAgent& agent, const EnvSpec& lab, std::span<const EnvSpec> fields,
                                          const BootstrapOptions& options, const TrainConfig& cfg) {
  if (fields.empty()) throw ConfigError("bootstrap needs at least one field spec");
  std::vector<EnvSpec> estimates;
  std::vector<BootstrapIteration> out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    BootstrapIteration it;
    it.iteration = static_cast<int>(i) + 1;
    it.field = fields[i].name;
    DanController deployed(agent.snapshot(), 0.0, "deployed");
    const auto exp = collect_field_experience(deployed, fields[i], options.budget,
                                              options.deploy_seed_base + 10'000 * static_cast<std::uint64_t>(i));
    try {
      auto est = estimate_field_spec(exp, options.estimation_prior);
      it.estimate = est.spec;
      if (options.newest_only) estimates.clear();
      estimates.push_back(est.spec);
      TrainConfig c = cfg;
      c.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(i) + 1);
      retrain_pooled(agent, make_feedback_pool(lab, estimates, options.field_weight), c, lab);
    } catch (const ConfigError& e) {
      it.warning = e.what();
    }
    it.evaluations.emplace_back(lab.name,
                                evaluate_agent(agent, lab, options.eval_episodes, options.eval_seed_base, cfg.steps));
    for (const auto& f : fields) {
      it.evaluations.emplace_back(f.name,
                                  evaluate_agent(agent, f, options.eval_episodes, options.eval_seed_base, cfg.steps));
    }
    out.push_back(std::move(it));
  }
  return out;
}

// --- state database ---

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::kReconstructed: return "reconstructed";
    case Provenance::kGenerated: return "generated";
    case Provenance::kLabSimulated: return "lab-simulated";
  }
  return "?";
}

Provenance parse_provenance(const std::string& s) {
  if (s == "reconstructed") return Provenance::kReconstructed;
  if (s == "generated") return Provenance::kGenerated;
  if (s == "lab-simulated") return Provenance::kLabSimulated;
  throw ConfigError("unknown provenance '" + s + "'");
}

void StateDatabase::add(Grid grid, Provenance provenance, std::string source) {
  for (const auto& row : grid) {
    if (static_cast<int>(row.size()) != n_bands_) throw ConfigError("state database: grid width mismatch");
    for (int v : row) {
      if (v != 0 && v != 1) throw ConfigError("state database: grids must be binary");
    }
  }
  entries_.push_back({std::move(grid), provenance, std::move(source)});
}

std::vector<Grid> StateDatabase::grids(std::optional<Provenance> only) const {
  std::vector<Grid> out;
  for (const auto& e : entries_) {
    if (!only || e.provenance == *only) out.push_back(e.grid);
  }
  return out;
}

void StateDatabase::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.csv");
  if (!manifest) throw ConfigError("cannot write state database in '" + dir.string() + "'");
  manifest << "file,provenance,source,steps,n_bands\n";
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "episode_%04zu.csv", i);
    std::ofstream f(dir / name);
    write_truth_csv(f, entries_[i].grid, n_bands_);
    manifest << name << ',' << to_string(entries_[i].provenance) << ',' << entries_[i].source << ','
             << entries_[i].grid.size() << ',' << n_bands_ << '\n';
  }
}

StateDatabase StateDatabase::load(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.csv");
  if (!manifest) throw ConfigError("no state database manifest in '" + dir.string() + "'");
  std::string line;
  std::getline(manifest, line);
  StateDatabase db;
  bool first = true;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string file, prov, source;
    std::getline(ss, file, ',');
    std::getline(ss, prov, ',');
    std::getline(ss, source, ',');
    std::ifstream f(dir / file);
    if (!f) throw ConfigError("state database: missing '" + file + "'");
    int n_bands = 0;
    auto grid = read_truth_csv(f, &n_bands);
    if (first) {
      db.n_bands_ = n_bands;
      first = false;
    }
    db.add(std::move(grid), parse_provenance(prov), source);
  }
  return db;
}

// --- sequence models ---

namespace {

// Partial observation as per-cell inputs: sampled flag and detection.
std::vector<float> partial_inputs(const History& h) {
  const int n = h.n_bands();
  std::vector<float> x(static_cast<std::size_t>(h.size()) * n * 2, 0.0F);
  for (int t = 0; t < h.size(); ++t) {
    const auto& s = h.steps()[t];
    if (s.action < 0) continue;
    float* row = x.data() + (static_cast<std::size_t>(t) * n + s.action) * 2;
    row[0] = 1.0F;
    row[1] = s.obs.detection ? 1.0F : 0.0F;
  }
  return x;
}

std::vector<float> grid_inputs(const Grid& g, int n_bands) {
  std::vector<float> x;
  x.reserve(g.size() * n_bands);
  for (const auto& row : g) {
    for (int v : row) x.push_back(v > 0 ? 1.0F : 0.0F);
  }
  return x;
}

// Mean BCE over cells; writes dL/dlogit into grad.
// Weighted BCE on sigmoid outputs; grad is w.r.t. the logits.
double bce(std::span<const float> prob, std::span<const float> target, std::span<float> grad, double scale,
           double w_neg) {
  double loss = 0.0;
  const double n = static_cast<double>(prob.size());
  for (std::size_t i = 0; i < prob.size(); ++i) {
    const double p = std::clamp(static_cast<double>(prob[i]), 1e-7, 1.0 - 1e-7);
    const double y = target[i];
    loss -= y * std::log(p) + w_neg * (1.0 - y) * std::log(1.0 - p);
    grad[i] = static_cast<float>(scale * (y * (prob[i] - 1.0) + w_neg * (1.0 - y) * prob[i]) / n);
  }
  return loss / n;
}

template <typename Sample>
double fit(nn::SeqNet<float>& net, std::span<const Sample> samples, const SeqTrainConfig& cfg) {
  if (samples.empty()) throw ConfigError("no training sequences");
  nn::Adam<float> opt(cfg.adam);
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x5E9));
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  nn::SeqNet<float>::Trace tr;
  std::vector<float> grad;
  double last = 0.0;
  for (int e = 0; e < cfg.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    for (std::size_t i = 0; i < order.size(); i += cfg.batch) {
      const std::size_t end = std::min(order.size(), i + cfg.batch);
      const double scale = 1.0 / static_cast<double>(end - i);
      net.params().zero_grad();
      for (std::size_t j = i; j < end; ++j) {
        const auto& s = samples[order[j]];
        net.forward(s.input, s.steps, tr);
        grad.resize(tr.prob.size());
        sum += bce(tr.prob, s.target, grad, scale, cfg.w_neg);
        net.backward(tr, grad);
      }
      opt.step(net.params());
    }
    last = sum / static_cast<double>(samples.size());
  }
  return last;
}

struct SeqSample {
  std::vector<float> input;
  std::vector<float> target;
  int steps = 0;
};

}  // namespace

Reconstructor::Reconstructor(int n_bands, int features, int hidden, std::uint64_t init_seed)
    : net_([&] {
        nn::SeqNetConfig c;
        c.n_bands = n_bands;
        c.in_channels = 2;
        c.out_channels = 1;
        c.features = features;
        c.hidden = hidden;
        c.bidirectional = true;
        c.init_seed = init_seed;
        return c;
      }()) {}

double Reconstructor::train(std::span<const History> partial, std::span<const Grid> truth, const SeqTrainConfig& cfg) {
  if (partial.size() != truth.size()) throw UsageError("reconstructor: pair count mismatch");
  const int n = net_.config().n_bands;
  std::vector<SeqSample> samples;
  for (std::size_t i = 0; i < partial.size(); ++i) {
    if (partial[i].n_bands() != n || static_cast<int>(truth[i].size()) != partial[i].size()) {
      throw UsageError("reconstructor: pair shape mismatch");
    }
    samples.push_back({partial_inputs(partial[i]), grid_inputs(truth[i], n), partial[i].size()});
  }
  const double loss = fit<SeqSample>(net_, samples, cfg);
  trained_ = true;
  return loss;
}

std::vector<std::vector<float>> Reconstructor::probabilities(const History& partial) const {
  if (!trained_) throw UsageError("reconstructor has not been trained");
  const int n = net_.config().n_bands;
  if (partial.n_bands() != n) throw UsageError("reconstructor: band count mismatch");
  nn::SeqNet<float>::Trace tr;
  net_.forward(partial_inputs(partial), partial.size(), tr);
  std::vector<std::vector<float>> out(partial.size());
  for (int t = 0; t < partial.size(); ++t) out[t].assign(tr.prob.begin() + t * n, tr.prob.begin() + (t + 1) * n);
  return out;
}

Grid Reconstructor::reconstruct(const History& partial) const {
  const auto probs = probabilities(partial);
  Grid g(probs.size());
  for (std::size_t t = 0; t < probs.size(); ++t) {
    g[t].resize(probs[t].size());
    for (std::size_t b = 0; b < probs[t].size(); ++b) g[t][b] = probs[t][b] >= 0.5F ? 1 : 0;
    const auto& s = partial.steps()[t];
    if (s.action >= 0) g[t][s.action] = s.obs.detection ? 1 : 0;
  }
  return g;
}

Grid reconstruct_states(const Reconstructor& model, const History& partial) { return model.reconstruct(partial); }

LabPairs simulate_lab_pairs(Controller& controller, const EnvSpec& lab, int episodes, int steps,
                            std::uint64_t seed_base) {
  LabPairs pairs;
  for (int i = 0; i < episodes; ++i) {
    auto env = sample_environment(lab, seed_base + static_cast<std::uint64_t>(i));
    pairs.partial.push_back(run_blind_episode(controller, env, steps, seed_base + static_cast<std::uint64_t>(i)));
    auto grid = truth_grid(env, steps);
    for (auto& row : grid) {
      for (auto& v : row) v = v > 0 ? 1 : 0;
    }
    pairs.truth.push_back(std::move(grid));
  }
  return pairs;
}

Generator::Generator(int n_bands, int features, int hidden, std::uint64_t init_seed)
    : net_([&] {
        nn::SeqNetConfig c;
        c.n_bands = n_bands;
        c.in_channels = 1;
        c.out_channels = 1;
        c.features = features;
        c.hidden = hidden;
        c.bidirectional = false;
        c.init_seed = init_seed;
        return c;
      }()) {}

double Generator::train(std::span<const Grid> grids, const SeqTrainConfig& cfg) {
  const int n = net_.config().n_bands;
  std::vector<SeqSample> samples;
  for (const auto& g : grids) {
    if (g.size() < 2) continue;
    auto x = grid_inputs(g, n);
    const int steps = static_cast<int>(g.size()) - 1;
    samples.push_back({std::vector<float>(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(steps) * n),
                       std::vector<float>(x.begin() + n, x.end()), steps});
  }
  const double loss = fit<SeqSample>(net_, samples, cfg);
  trained_ = true;
  return loss;
}

Grid Generator::generate(const Grid& seed_episode, int t_out, int prefix, std::mt19937_64& rng) const {
  if (!trained_) throw UsageError("generator has not been trained");
  const int n = net_.config().n_bands;
  if (t_out <= 0) return {};
  prefix = std::clamp(prefix, 1, std::min<int>(t_out, static_cast<int>(seed_episode.size())));
  Grid out(seed_episode.begin(), seed_episode.begin() + prefix);
  for (auto& row : out) {
    for (auto& v : row) v = v > 0 ? 1 : 0;
  }
  auto state = net_.initial_state();
  std::vector<float> x(n), prob(n);
  std::uniform_real_distribution<float> u(0.0F, 1.0F);
  for (int t = 0; t + 1 < t_out; ++t) {
    for (int b = 0; b < n; ++b) x[b] = static_cast<float>(out[t][b]);
    net_.step(x, state, prob);
    if (t + 1 < static_cast<int>(out.size())) continue;
    std::vector<int> row(n);
    for (int b = 0; b < n; ++b) row[b] = u(rng) < prob[b] ? 1 : 0;
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<Grid> generate_episodes(const Generator& gen, const StateDatabase& db, int count, int t_out,
                                    std::uint64_t seed, int prefix) {
  if (count <= 0) return {};
  if (db.empty()) throw ConfigError("cannot generate from an empty state database");
  std::mt19937_64 rng(mix_seed(seed, 0x6E4));
  std::uniform_int_distribution<std::size_t> pick(0, db.size() - 1);
  std::vector<Grid> out;
  for (int i = 0; i < count; ++i) out.push_back(gen.generate(db.entries()[pick(rng)].grid, t_out, prefix, rng));
  return out;
}

// --- retraining ---

MixedStateSource::MixedStateSource(std::vector<Grid> grids, EnvSpec lab, EnvSpec eval, double lab_share)
    : grids_(std::move(grids)), lab_(std::move(lab)), eval_(std::move(eval)), lab_share_(lab_share) {
  if (grids_.empty()) throw ConfigError("no stored state episodes to retrain on");
  if (!(lab_share >= 0.0 && lab_share < 1.0)) throw ConfigError("lab_share must be in [0, 1)");
}

std::unique_ptr<Environment> MixedStateSource::make(int episode, std::mt19937_64& rng) {
  const bool lab = std::floor((episode + 1) * lab_share_) > std::floor(episode * lab_share_);
  if (!lab) {
    const auto& g = grids_[next_++ % grids_.size()];
    return std::make_unique<ScriptedEnvironment>(g, lab_.n_bands, 1);
  }
  return std::make_unique<EnvironmentInstance>(sample_environment(lab_, rng()));
}

TrainResult retrain_on_states(DanAgent& agent, std::span<const Grid> grids, const EnvSpec& lab, const TrainConfig& cfg,
                              const EnvSpec& eval_spec, double lab_share) {
  if (cfg.select_best) throw ConfigError("select_best during feedback retraining would select on field truth");
  for (const auto& g : grids) {
    if (static_cast<int>(g.size()) < cfg.steps) throw ConfigError("stored episode shorter than training horizon");
  }
  MixedStateSource source(std::vector<Grid>(grids.begin(), grids.end()), lab, eval_spec, lab_share);
  return train(agent, source, cfg);
}

TrainResult finetune_partial(DanAgent& agent, const FieldExperience& exp, const TrainConfig& cfg, int epochs) {
  std::vector<EpisodeRecord> records;
  records.reserve(exp.episodes.size());
  for (const auto& h : exp.episodes) records.push_back(partial_record(h));
  return train_on_records(agent, records, cfg, epochs);
}

}  // namespace specmon
