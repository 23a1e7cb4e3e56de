#include "specmon/harness.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <ostream>

#include "specmon/errors.hpp"

namespace specmon {

void encode_step(const HistoryStep& step, int n_bands, int n_classes, std::span<float> row) {
  const int ch = encoded_channels(n_classes);
  if (static_cast<int>(row.size()) != n_bands * ch) throw UsageError("encode_step: row size mismatch");
  std::fill(row.begin(), row.end(), 0.0F);
  if (step.action < 0) return;
  if (step.action >= n_bands) throw UsageError("encode_step: action outside spectrum");
  float* cell = row.data() + static_cast<std::size_t>(step.action) * ch;
  cell[0] = 1.0F;
  cell[1] = static_cast<float>(step.obs.detection);
  if (n_classes > 1 && step.obs.detection && step.obs.class_id >= 1 && step.obs.class_id <= n_classes) {
    cell[1 + step.obs.class_id] = 1.0F;
  }
}

std::vector<float> encode_history(const History& history) {
  const int n = history.n_bands();
  const int ch = encoded_channels(history.n_classes());
  const std::size_t row = static_cast<std::size_t>(n) * ch;
  std::vector<float> grid(row * history.size());
  for (int t = 0; t < history.size(); ++t) {
    encode_step(history.steps()[t], n, history.n_classes(), std::span<float>(grid.data() + row * t, row));
  }
  return grid;
}

History decode_history(std::span<const float> grid, int n_bands, int n_classes) {
  const int ch = encoded_channels(n_classes);
  const std::size_t row = static_cast<std::size_t>(n_bands) * ch;
  if (row == 0 || grid.size() % row != 0) throw UsageError("decode_history: grid size mismatch");
  History h(n_bands, n_classes);
  for (std::size_t t = 0; t < grid.size() / row; ++t) {
    const float* r = grid.data() + t * row;
    HistoryStep step;
    for (int b = 0; b < n_bands; ++b) {
      const float* cell = r + static_cast<std::size_t>(b) * ch;
      if (cell[0] != 1.0F) continue;
      step.action = b;
      step.obs.detection = cell[1] != 0.0F ? 1 : 0;
      if (step.obs.detection) {
        step.obs.class_id = 1;
        for (int c = 1; n_classes > 1 && c <= n_classes; ++c) {
          if (cell[1 + c] != 0.0F) step.obs.class_id = c;
        }
      }
      break;
    }
    h.append(step.action, step.obs);
  }
  return h;
}

RewardKind parse_reward_kind(const std::string& s) {
  if (s == "in_iou") return RewardKind::kInstantIoU;
  if (s == "db_iou") return RewardKind::kDiffBlockIoU;
  throw ConfigError("unknown reward kind '" + s + "' (expected in_iou or db_iou)");
}

std::string to_string(RewardKind k) { return k == RewardKind::kInstantIoU ? "in_iou" : "db_iou"; }

double step_reward(RewardKind kind, std::span<const OverlapCounts> counts, int block_n) {
  if (counts.empty()) throw UsageError("step_reward: no steps");
  const int t = static_cast<int>(counts.size()) - 1;
  if (kind == RewardKind::kInstantIoU) return counts.back().ratio();
  if (t < block_n) return 0.0;
  return iou_diff_block(counts, t, block_n);
}

std::vector<OverlapCounts> EpisodeLog::counts(float threshold) const {
  std::vector<OverlapCounts> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(overlap(r.prediction.activity_vector(), r.truth, threshold));
  return out;
}

double EpisodeLog::cumulative_iou(float threshold) const {
  const auto c = counts(threshold);
  return c.empty() ? 1.0 : iou_cumulative(c);
}

std::vector<double> EpisodeLog::cumulative_curve(float threshold) const {
  std::vector<double> out;
  OverlapCounts total;
  for (const auto& c : counts(threshold)) {
    total += c;
    out.push_back(total.ratio());
  }
  return out;
}

std::vector<double> EpisodeLog::block_curve(int n, float threshold) const {
  const auto c = counts(threshold);
  std::vector<double> out;
  out.reserve(c.size());
  for (std::size_t t = 0; t < c.size(); ++t) out.push_back(iou_block(std::span(c).first(t + 1), n));
  return out;
}

std::vector<double> EpisodeLog::instant_curve(float threshold) const {
  std::vector<double> out;
  for (const auto& c : counts(threshold)) out.push_back(c.ratio());
  return out;
}

EpisodeLog run_episode(Controller& controller, Environment& env, const RunOptions& options,
                       std::uint64_t seed, const std::string& spec_id) {
  EpisodeLog log;
  log.spec_id = spec_id;
  log.controller_id = controller.id();
  log.seed = seed;
  log.n_bands = env.n_bands();
  log.n_classes = env.n_classes();
  log.rows.reserve(options.steps);

  controller.reset({env.n_bands(), env.n_classes(), options.steps, seed});
  History history(env.n_bands(), env.n_classes());
  std::vector<OverlapCounts> counts;
  for (int t = 0; t < options.steps; ++t) {
    env.advance(t);
    const int band = controller.select_band(history);
    if (band < 0 || band >= env.n_bands()) {
      throw EpisodeError("controller '" + controller.id() + "' selected band " + std::to_string(band) +
                         " at t=" + std::to_string(t) + " (spectrum has " + std::to_string(env.n_bands()) +
                         " bands)");
    }
    EpisodeRow row;
    row.action_values = controller.action_values();
    const Observation obs = env.observe(t, band);
    history.append(band, obs);
    row.t = t;
    row.action = band;
    row.obs = obs;
    row.prediction = controller.predict(history);
    row.truth = env.state_at(t);
    counts.push_back(overlap(row.prediction.activity_vector(), row.truth, options.iou.prob_threshold));
    row.reward = step_reward(options.reward, counts, options.iou.block_n);
    log.rows.push_back(std::move(row));
  }
  return log;
}

History run_blind_episode(Controller& controller, Environment& env, int steps, std::uint64_t seed) {
  controller.reset({env.n_bands(), env.n_classes(), steps, seed});
  History history(env.n_bands(), env.n_classes());
  for (int t = 0; t < steps; ++t) {
    env.advance(t);
    const int band = controller.select_band(history);
    if (band < 0 || band >= env.n_bands()) {
      throw EpisodeError("controller '" + controller.id() + "' selected band " + std::to_string(band));
    }
    history.append(band, env.observe(t, band));
    controller.predict(history);
  }
  return history;
}

std::string format_number(double v) {
  std::array<char, 64> buf{};
  auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) return "nan";
  return std::string(buf.data(), p);
}

void write_episode_csv(std::ostream& os, const EpisodeLog& log) {
  os << "t,action,obs,reward";
  for (int b = 0; b < log.n_bands; ++b) os << ",pred_" << b;
  for (int b = 0; b < log.n_bands; ++b) os << ",truth_" << b;
  os << "\n";
  for (const auto& r : log.rows) {
    os << r.t << "," << r.action << "," << (r.obs.detection ? r.obs.class_id : 0) << "," << format_number(r.reward);
    for (int b = 0; b < log.n_bands; ++b) os << "," << format_number(r.prediction.activity(b));
    for (int v : r.truth) os << "," << v;
    os << "\n";
  }
}

}  // namespace specmon
