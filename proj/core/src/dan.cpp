#include "specmon/dan.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <ostream>

#include "specmon/errors.hpp"
#include "specmon/metrics.hpp"

namespace specmon {

namespace {

constexpr double kClip = 1e-7;

template <typename Real>
std::vector<float> activity_of(std::span<const Real> probs, int n_bands, int k) {
  std::vector<float> out(n_bands);
  for (int b = 0; b < n_bands; ++b) {
    out[b] = k == 1 ? static_cast<float>(probs[b]) : static_cast<float>(1.0 - probs[static_cast<std::size_t>(b) * k]);
  }
  return out;
}

double clipped_log(double p) { return std::log(std::clamp(p, kClip, 1.0 - kClip)); }

// Weighted cross-entropy of one band's output against label `y` (class id,
// 0 = none). Adds dL/dlogit * scale into `g` when non-null.
template <typename Real>
double band_wbce(const Real* prob, int k, int y, double w_neg, Real* g, double scale) {
  if (k == 1) {
    const double p = prob[0];
    const double t = y > 0 ? 1.0 : 0.0;
    const double loss = -(t * clipped_log(p) + w_neg * (1.0 - t) * clipped_log(1.0 - p));
    if (g) g[0] += static_cast<Real>(scale * (w_neg * (1.0 - t) * p - t * (1.0 - p)));
    return loss;
  }
  const double w = y == 0 ? w_neg : 1.0;
  const double loss = -w * clipped_log(prob[y]);
  if (g) {
    for (int j = 0; j < k; ++j) g[j] += static_cast<Real>(scale * w * (prob[j] - (j == y ? 1.0 : 0.0)));
  }
  return loss;
}

template <typename Real>
void size_grads(const typename nn::DanNet<Real>::Trace& tr, typename nn::DanNet<Real>::OutputGrads& g) {
  g.m_logit.assign(tr.m_logit.size(), Real(0));
  g.p_logit.assign(tr.p_logit.size(), Real(0));
  g.q.assign(tr.q.size(), Real(0));
}

// Loss of episode `eb` of a (possibly batched) trace. `grads`, when given,
// must already be sized like the trace; gradients are accumulated.
template <typename Real>
UpdateLosses loss_impl(AgentKind kind, const nn::DanNet<Real>& net, const EpisodeRecord& rec,
                       const typename nn::DanNet<Real>::Trace& tr, const typename nn::DanNet<Real>::Trace& target,
                       int eb, const TrainConfig& cfg, typename nn::DanNet<Real>::OutputGrads* grads, double scale) {
  const auto& nc = net.config();
  const int T = rec.steps();
  const int n = nc.n_bands;
  const int k = nc.classes_per_band();
  const std::size_t so = static_cast<std::size_t>(nc.state_outputs());
  const auto steps = rec.history.steps();
  UpdateLosses out;

  // state heads
  const double m_norm = rec.partial ? 1.0 / T : 1.0 / (static_cast<double>(T) * n);
  for (int t = 0; t < T; ++t) {
    const int a = steps[t].action;
    const int z = steps[t].obs.detection ? std::max(1, steps[t].obs.class_id) : 0;
    for (int head = 0; head < 2; ++head) {
      if (head == 1 && !nc.p_head) continue;
      const auto& probs = head == 0 ? tr.m : tr.p;
      const std::size_t base = tr.row(head == 0 ? t + 1 : t, eb) * so;
      Real* g = nullptr;
      if (grads) g = (head == 0 ? grads->m_logit.data() : grads->p_logit.data()) + base;
      double sum = 0.0;
      if (rec.partial) {
        sum += band_wbce(probs.data() + base + static_cast<std::size_t>(a) * k, k, z, cfg.w_neg,
                         g ? g + static_cast<std::size_t>(a) * k : nullptr, scale * m_norm);
      } else {
        const auto& truth = rec.truth[t];
        for (int b = 0; b < n; ++b) {
          sum += band_wbce(probs.data() + base + static_cast<std::size_t>(b) * k, k, truth[b], cfg.w_neg,
                           g ? g + static_cast<std::size_t>(b) * k : nullptr, scale * m_norm);
        }
      }
      (head == 0 ? out.m : out.p) += sum * m_norm;
    }
  }

  if (!nc.q_head) return out;

  if (kind == AgentKind::kInfoMaxDan) {
    if (rec.infomax_labels.empty()) return out;
    const double norm = 1.0 / (static_cast<double>(T) * n);
    for (int t = 0; t < T; ++t) {
      for (int b = 0; b < n; ++b) {
        const std::size_t i = tr.row(t, eb) * n + b;
        const double d = static_cast<double>(tr.q[i]) - rec.infomax_labels[t][b];
        out.td += 0.5 * d * d * norm;
        if (grads) grads->q[i] += static_cast<Real>(scale * d * norm);
      }
    }
    return out;
  }

  const double norm = 1.0 / T;
  for (int t = 0; t < T; ++t) {
    const int a = steps[t].action;
    double r;
    if (rec.partial) {
      // agreement of the target net's M estimate with what was actually seen
      const auto act =
          activity_of<Real>(std::span<const Real>(target.m).subspan(target.row(t + 1, eb) * so, so), n, k);
      r = 1.0 - std::abs(static_cast<double>(act[a]) - (steps[t].obs.detection ? 1.0 : 0.0));
    } else {
      r = rec.rewards[t];
    }
    double y = r;
    if (t + 1 < T) {
      const auto* qn = target.q.data() + target.row(t + 1, eb) * n;
      y += cfg.gamma * static_cast<double>(*std::max_element(qn, qn + n));
    }
    const std::size_t i = tr.row(t, eb) * n + a;
    const double d = static_cast<double>(tr.q[i]) - y;
    out.td += 0.5 * d * d * norm;
    if (grads) grads->q[i] += static_cast<Real>(scale * d * norm);
  }
  return out;
}

void check_agent_config(AgentKind kind, const nn::NetworkConfig& net, DanReward reward) {
  net.validate();
  if (!net.q_head) throw ConfigError("DAN agents need a Q head");
  if ((kind != AgentKind::kConvLstmDan || reward == DanReward::kPredictive) && !net.p_head) {
    throw ConfigError("agent '" + to_string(kind) + "' with reward '" + to_string(reward) + "' needs a P head");
  }
}

}  // namespace

AgentKind parse_agent_kind(const std::string& s) {
  if (s == "convlstm_dan" || s == "dan") return AgentKind::kConvLstmDan;
  if (s == "predictive_dan") return AgentKind::kPredictiveDan;
  if (s == "infomax_dan") return AgentKind::kInfoMaxDan;
  throw ConfigError("unknown agent kind '" + s + "'");
}

std::string to_string(AgentKind k) {
  switch (k) {
    case AgentKind::kConvLstmDan: return "convlstm_dan";
    case AgentKind::kPredictiveDan: return "predictive_dan";
    case AgentKind::kInfoMaxDan: return "infomax_dan";
  }
  return "?";
}

DanReward parse_dan_reward(const std::string& s) {
  if (s == "in_iou") return DanReward::kInstantIoU;
  if (s == "db_iou") return DanReward::kDiffBlockIoU;
  if (s == "predictive") return DanReward::kPredictive;
  throw ConfigError("unknown reward '" + s + "' (expected in_iou, db_iou or predictive)");
}

std::string to_string(DanReward r) {
  switch (r) {
    case DanReward::kInstantIoU: return "in_iou";
    case DanReward::kDiffBlockIoU: return "db_iou";
    case DanReward::kPredictive: return "predictive";
  }
  return "?";
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

nn::NetworkConfig default_network(AgentKind kind, int n_bands, int n_classes) {
  nn::NetworkConfig c;
  c.n_bands = n_bands;
  c.n_classes = n_classes;
  c.p_head = kind != AgentKind::kConvLstmDan;
  return c;
}

DanAgent::DanAgent(AgentKind kind, const nn::NetworkConfig& net, DanReward reward)
    : kind_(kind), reward_(reward) {
  check_agent_config(kind, net, reward);
  net_ = std::make_unique<nn::DanNet<float>>(net);
  target_ = std::make_unique<nn::DanNet<float>>(*net_);
}

DanAgent::DanAgent(const DanAgent& o)
    : kind_(o.kind_),
      reward_(o.reward_),
      net_(std::make_unique<nn::DanNet<float>>(*o.net_)),
      target_(std::make_unique<nn::DanNet<float>>(*o.target_)),
      optimizer_(o.optimizer_),
      updates_(o.updates_) {}

DanAgent& DanAgent::operator=(const DanAgent& o) {
  if (this != &o) *this = DanAgent(o);
  return *this;
}

void DanAgent::count_update(int target_sync) {
  ++updates_;
  if (target_sync > 0 && updates_ % target_sync == 0) sync_target();
}

void DanAgent::sync_target() { *target_ = *net_; }

std::shared_ptr<const nn::DanNet<float>> DanAgent::snapshot() const {
  return std::make_shared<const nn::DanNet<float>>(*net_);
}

void DanAgent::replace_network(const nn::DanNet<float>& net) {
  check_agent_config(kind_, net.config(), reward_);
  *net_ = net;
  sync_target();
}

// --- controller ---

DanController::DanController(std::shared_ptr<const nn::DanNet<float>> net, double epsilon, std::string id)
    : net_(std::move(net)), epsilon_(epsilon), id_(std::move(id)) {
  if (!net_) throw UsageError("DanController needs a network");
  x_.resize(net_->config().input_size());
}

void DanController::reset(const EpisodeContext& ctx) {
  if (ctx.n_bands != net_->config().n_bands || ctx.n_classes != net_->config().n_classes) {
    throw ConfigError("network was built for " + std::to_string(net_->config().n_bands) + " bands / " +
                      std::to_string(net_->config().n_classes) + " classes");
  }
  rng_.seed(mix_seed(ctx.seed, 0xDA));
  state_ = net_->initial_state();
  net_->heads(state_, heads_);
  fed_ = 0;
}

void DanController::catch_up(const History& history) {
  const auto steps = history.steps();
  const auto& c = net_->config();
  while (fed_ < history.size()) {
    encode_step(steps[fed_], c.n_bands, c.n_classes, x_);
    net_->step(x_, state_);
    ++fed_;
  }
  net_->heads(state_, heads_);
}

int DanController::select_band(const History& history) {
  if (fed_ != history.size()) catch_up(history);
  return q_select_action(heads_.q, epsilon_, rng_);
}

BandVector DanController::predict(const History& history) {
  if (fed_ != history.size()) catch_up(history);
  return m_predict(*net_, heads_.m);
}

int q_select_action(std::span<const float> q, double epsilon, std::mt19937_64& rng) {
  if (q.empty()) throw UsageError("empty action-value vector");
  if (epsilon > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < epsilon) {
    return std::uniform_int_distribution<int>(0, static_cast<int>(q.size()) - 1)(rng);
  }
  return static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
}

BandVector m_predict(const nn::DanNet<float>& net, std::span<const float> m) {
  const auto& c = net.config();
  if (c.classes_per_band() == 1) return BandVector::probability(std::vector<float>(m.begin(), m.end()));
  return BandVector::class_distribution(std::vector<float>(m.begin(), m.end()), c.n_bands, c.n_classes);
}

double compute_infogain(std::span<const float> p_before, std::span<const float> m_after) {
  if (p_before.empty()) throw UsageError("infogain needs a P head prediction");
  if (p_before.size() != m_after.size()) throw UsageError("infogain: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p_before.size(); ++i) s += std::abs(static_cast<double>(p_before[i]) - m_after[i]);
  return s / static_cast<double>(p_before.size());
}

double compute_reward(DanReward kind, const TrainConfig& cfg, const RewardContext& ctx) {
  switch (kind) {
    case DanReward::kInstantIoU: return step_reward(RewardKind::kInstantIoU, ctx.counts, cfg.block_n);
    case DanReward::kDiffBlockIoU: return step_reward(RewardKind::kDiffBlockIoU, ctx.counts, cfg.block_n);
    case DanReward::kPredictive:
      return step_reward(cfg.predictive_base, ctx.counts, cfg.block_n) +
             cfg.infogain_weight * compute_infogain(ctx.p_before, ctx.m_after);
  }
  return 0.0;
}

std::vector<float> infomax_targets(const nn::DanNet<float>& net, const nn::DanNet<float>::State& state,
                                   std::span<const float> p_before, Environment& env, int t) {
  const auto& c = net.config();
  if (!c.p_head) throw UsageError("InfoMax labels need a P head");
  const int k = c.classes_per_band();
  const auto p_act = activity_of<float>(p_before, c.n_bands, k);
  std::vector<float> labels(c.n_bands);
  std::vector<float> x(c.input_size());
  nn::DanNet<float>::Heads h;
  for (int b = 0; b < c.n_bands; ++b) {
    auto s = state;
    encode_step({b, env.observe(t, b)}, c.n_bands, c.n_classes, x);
    net.step(x, s);
    net.heads(s, h);
    labels[b] = static_cast<float>(compute_infogain(p_act, activity_of<float>(h.m, c.n_bands, k)));
  }
  return labels;
}

EpisodeRecord rollout(const DanAgent& agent, Environment& env, const TrainConfig& cfg, double epsilon,
                      std::mt19937_64& rng) {
  const auto& net = agent.net();
  const auto& c = net.config();
  if (env.n_bands() != c.n_bands || env.n_classes() != c.n_classes) {
    throw ConfigError("environment shape does not match the network");
  }
  const int k = c.classes_per_band();
  EpisodeRecord rec;
  rec.n_bands = c.n_bands;
  rec.n_classes = c.n_classes;
  rec.history = History(c.n_bands, c.n_classes);
  const std::size_t in = static_cast<std::size_t>(c.input_size());
  rec.inputs.assign(in * cfg.steps, 0.0F);

  auto state = net.initial_state();
  nn::DanNet<float>::Heads heads;
  net.heads(state, heads);
  std::vector<OverlapCounts> counts;
  for (int t = 0; t < cfg.steps; ++t) {
    env.advance(t);
    const auto p_before = activity_of<float>(heads.p, c.p_head ? c.n_bands : 0, k);
    const int a = q_select_action(heads.q, epsilon, rng);
    if (agent.kind() == AgentKind::kInfoMaxDan) {
      rec.infomax_labels.push_back(infomax_targets(net, state, heads.p, env, t));
    }
    const Observation obs = env.observe(t, a);
    rec.history.append(a, obs);
    std::span<float> x(rec.inputs.data() + in * t, in);
    encode_step(rec.history.back(), c.n_bands, c.n_classes, x);
    net.step(x, state);
    net.heads(state, heads);
    auto act = activity_of<float>(heads.m, c.n_bands, k);
    auto truth = env.state_at(t);
    counts.push_back(overlap(act, truth));
    RewardContext ctx{counts, p_before, act};
    const DanReward kind = agent.kind() == AgentKind::kInfoMaxDan ? DanReward::kInstantIoU : agent.reward();
    rec.rewards.push_back(static_cast<float>(compute_reward(kind, cfg, ctx)));
    rec.predictions.push_back(std::move(act));
    rec.truth.push_back(std::move(truth));
  }
  return rec;
}

EpisodeRecord partial_record(const History& history) {
  EpisodeRecord rec;
  rec.n_bands = history.n_bands();
  rec.n_classes = history.n_classes();
  rec.history = history;
  rec.inputs = encode_history(history);
  rec.partial = true;
  return rec;
}

UpdateLosses episode_loss(const DanAgent& agent, const EpisodeRecord& record, const nn::DanNet<float>::Trace& trace,
                          const nn::DanNet<float>::Trace& target_trace, const TrainConfig& cfg,
                          nn::DanNet<float>::OutputGrads* grads, double scale) {
  if (grads) size_grads<float>(trace, *grads);
  return loss_impl<float>(agent.kind(), agent.net(), record, trace, target_trace, 0, cfg, grads, scale);
}

double episode_loss_double(AgentKind kind, const nn::DanNet<double>& net, const EpisodeRecord& record,
                           const nn::DanNet<double>::Trace& trace, const nn::DanNet<double>::Trace& target_trace,
                           const TrainConfig& cfg, nn::DanNet<double>::OutputGrads* grads) {
  if (grads) size_grads<double>(trace, *grads);
  const auto l = loss_impl<double>(kind, net, record, trace, target_trace, 0, cfg, grads, 1.0);
  return l.td + l.m + l.p;
}

UpdateLosses dqn_update(DanAgent& agent, std::span<const EpisodeRecord* const> batch, const TrainConfig& cfg) {
  if (batch.empty()) throw UsageError("empty update batch");
  auto& net = agent.net();
  net.params().zero_grad();
  const double scale = 1.0 / static_cast<double>(batch.size());
  const bool need_target = agent.kind() != AgentKind::kInfoMaxDan;
  // episodes of equal length share one batched pass
  std::vector<const EpisodeRecord*> sorted(batch.begin(), batch.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const EpisodeRecord* a, const EpisodeRecord* b) { return a->steps() < b->steps(); });
  thread_local nn::DanNet<float>::Trace tr, target_tr;
  thread_local nn::DanNet<float>::OutputGrads grads;
  thread_local std::vector<float> inputs;
  UpdateLosses total;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j]->steps() == sorted[i]->steps()) ++j;
    const int steps = sorted[i]->steps();
    const int count = static_cast<int>(j - i);
    inputs.clear();
    for (std::size_t e = i; e < j; ++e) inputs.insert(inputs.end(), sorted[e]->inputs.begin(), sorted[e]->inputs.end());
    net.forward(inputs, steps, count, tr);
    if (need_target) agent.target().forward(inputs, steps, count, target_tr);
    size_grads<float>(tr, grads);
    for (int e = 0; e < count; ++e) {
      const auto l = loss_impl<float>(agent.kind(), net, *sorted[i + e], tr, need_target ? target_tr : tr, e, cfg,
                                      &grads, scale);
      total.td += l.td * scale;
      total.m += l.m * scale;
      total.p += l.p * scale;
    }
    net.backward(tr, grads);
    i = j;
  }
  agent.optimizer().step(net.params());
  agent.count_update(cfg.target_sync);
  return total;
}

std::unique_ptr<Environment> SpecSource::make(int /*episode*/, std::mt19937_64& rng) {
  return std::make_unique<EnvironmentInstance>(sample_environment(spec_, rng()));
}

double evaluate_agent(const DanAgent& agent, const EnvSpec& spec, int episodes, std::uint64_t seed_base, int steps) {
  if (episodes <= 0) return 0.0;
  DanController ctrl(agent.snapshot());
  RunOptions opts;
  opts.steps = steps;
  double sum = 0.0;
  for (int i = 0; i < episodes; ++i) {
    auto env = sample_environment(spec, seed_base + static_cast<std::uint64_t>(i));
    sum += run_episode(ctrl, env, opts, seed_base + static_cast<std::uint64_t>(i), spec.name).cumulative_iou();
  }
  return sum / episodes;
}

namespace {

struct LossAverager {
  UpdateLosses sum;
  int n = 0;
  void add(const UpdateLosses& l) {
    sum.td += l.td;
    sum.m += l.m;
    sum.p += l.p;
    ++n;
  }
  CurvePoint take(int episode) {
    CurvePoint p;
    p.episode = episode;
    if (n > 0) {
      p.td_loss = sum.td / n;
      p.m_loss = sum.m / n;
      p.p_loss = sum.p / n;
    }
    *this = {};
    return p;
  }
};

}  // namespace

TrainResult train(DanAgent& agent, EpisodeSource& source, const TrainConfig& cfg, const EpisodeHook& hook) {
  if (cfg.episodes < 0 || cfg.steps <= 0 || cfg.batch_episodes <= 0) throw ConfigError("invalid training config");
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x7EA1));
  std::mt19937_64 env_rng(mix_seed(cfg.seed, 0xE17));
  std::deque<EpisodeRecord> replay;
  const int capacity = std::max(1, cfg.replay_capacity);
  const double decay_eps = std::max(1.0, cfg.epsilon_decay_fraction * cfg.episodes);
  TrainResult result;
  LossAverager avg;
  std::vector<const EpisodeRecord*> batch;
  if (agent.optimizer().steps() == 0) agent.reset_optimizer(cfg.adam);
  std::shared_ptr<const nn::DanNet<float>> best;
  double best_iou = -1.0;

  for (int ep = 0; ep < cfg.episodes; ++ep) {
    const double frac = std::min(1.0, ep / decay_eps);
    const double epsilon = cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac;
    auto env = source.make(ep, env_rng);
    replay.push_back(rollout(agent, *env, cfg, epsilon, rng));
    if (static_cast<int>(replay.size()) > capacity) replay.pop_front();
    if (hook) hook(ep, replay.back());

    for (int u = 0; u < cfg.updates_per_episode; ++u) {
      batch.clear();
      std::uniform_int_distribution<std::size_t> pick(0, replay.size() - 1);
      for (int b = 0; b < cfg.batch_episodes; ++b) batch.push_back(&replay[pick(rng)]);
      avg.add(dqn_update(agent, batch, cfg));
    }

    if (cfg.eval_every > 0 && (ep + 1) % cfg.eval_every == 0) {
      auto point = avg.take(ep + 1);
      point.eval_cum_iou = evaluate_agent(agent, source.eval_spec(), cfg.eval_episodes, cfg.eval_seed_base, cfg.steps);
      result.curve.push_back(point);
      if (cfg.select_best && point.eval_cum_iou > best_iou) {
        best_iou = point.eval_cum_iou;
        best = agent.snapshot();
        result.selected_episode = ep + 1;
      }
    }
  }
  result.episodes = cfg.episodes;
  if (best) {
    agent.net().params().copy_values_from(best->params());
    agent.sync_target();
  } else {
    result.selected_episode = cfg.episodes;
  }
  return result;
}

TrainResult train_on_records(DanAgent& agent, std::span<const EpisodeRecord> records, const TrainConfig& cfg,
                             int epochs) {
  if (records.empty()) throw ConfigError("no episodes to train on");
  std::mt19937_64 rng(mix_seed(cfg.seed, 0xF1E1D));
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  TrainResult result;
  std::vector<const EpisodeRecord*> batch;
  if (agent.optimizer().steps() == 0) agent.reset_optimizer(cfg.adam);
  for (int e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    LossAverager avg;
    for (std::size_t i = 0; i < order.size(); i += cfg.batch_episodes) {
      batch.clear();
      for (std::size_t j = i; j < std::min(order.size(), i + cfg.batch_episodes); ++j) batch.push_back(&records[order[j]]);
      avg.add(dqn_update(agent, batch, cfg));
    }
    auto point = avg.take(e + 1);
    point.eval_cum_iou = std::numeric_limits<double>::quiet_NaN();
    result.curve.push_back(point);
  }
  result.episodes = epochs * static_cast<int>(records.size());
  return result;
}

void write_curve_csv(std::ostream& os, std::span<const CurvePoint> curve) {
  os << "episode,eval_cum_iou,td_loss,m_loss,p_loss\n";
  for (const auto& p : curve) {
    os << p.episode << ',' << format_number(p.eval_cum_iou) << ',' << format_number(p.td_loss) << ','
       << format_number(p.m_loss) << ',' << format_number(p.p_loss) << '\n';
  }
}

}  // namespace specmon
