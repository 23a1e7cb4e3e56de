#include "specmon/baselines.hpp"

#include <algorithm>

#include "specmon/errors.hpp"

namespace specmon {

BandVector PersistentState::predict() const {
  std::vector<float> p(last_obs_.size());
  for (std::size_t b = 0; b < p.size(); ++b) p[b] = last_obs_[b] ? 1.0F : 0.0F;
  return BandVector::probability(std::move(p));
}

int baseline_select_band(SelectKind kind, int previous, int n_bands, std::mt19937_64* rng) {
  if (kind == SelectKind::kRandom) {
    if (!rng) throw UsageError("random band selection needs a generator");
    return std::uniform_int_distribution<int>(0, n_bands - 1)(*rng);
  }
  return (previous + 1) % n_bands;
}

void RandomController::reset(const EpisodeContext& ctx) {
  n_bands_ = ctx.n_bands;
  rng_.seed(ctx.seed ^ 0x5DEECE66DULL);
  state_ = PersistentState(ctx.n_bands);
}

int RandomController::select_band(const History&) {
  return baseline_select_band(SelectKind::kRandom, -1, n_bands_, &rng_);
}

BandVector RandomController::predict(const History& history) {
  const auto& s = history.back();
  state_.update(history.size() - 1, s.action, s.obs);
  return state_.predict();
}

void ScanController::reset(const EpisodeContext& ctx) {
  n_bands_ = ctx.n_bands;
  previous_ = -1;
  state_ = PersistentState(ctx.n_bands);
}

int ScanController::select_band(const History&) {
  previous_ = baseline_select_band(SelectKind::kScan, previous_, n_bands_);
  return previous_;
}

BandVector ScanController::predict(const History& history) {
  const auto& s = history.back();
  state_.update(history.size() - 1, s.action, s.obs);
  return state_.predict();
}

HypothesisController::HypothesisController(EnvSpec prior)
    : prior_(std::move(prior)),
      tuples_(std::make_shared<const std::vector<SignalPair>>(HypothesisSet::enumerate(prior_))) {}

void HypothesisController::reset(const EpisodeContext& ctx) {
  if (ctx.n_bands != prior_.n_bands) {
    throw UsageError("controller prior covers " + std::to_string(prior_.n_bands) + " bands, environment has " +
                     std::to_string(ctx.n_bands));
  }
  n_bands_ = ctx.n_bands;
  hyps_.emplace(prior_, tuples_);
  state_ = PersistentState(ctx.n_bands);
  scan_previous_ = -1;
}

int HypothesisController::next_scan_band() {
  scan_previous_ = (scan_previous_ + 1) % n_bands_;
  return scan_previous_;
}

BandVector HypothesisController::predict(const History& history) {
  const int t = history.size() - 1;
  const auto& s = history.back();
  state_.update(t, s.action, s.obs);
  hyps_->eliminate(t, s.action, s.obs.detection);
  if (hyps_->inconsistent()) return state_.predict();
  return BandVector::probability(hyps_->predict(t).probability);
}

int scan_and_dwell_select(const HypothesisSet& hyps, int t, int& scan_previous) {
  const int horizon = 2 * hyps.prior().period.hi;
  const HypothesisSet::Tracked* dwell = nullptr;
  for (const auto& pair : hyps.tracked()) {
    if (pair.last_band < 0 || hyps.band_resolved(pair, pair.last_band, t, horizon)) continue;
    if (!dwell || pair.last_t > dwell->last_t) dwell = &pair;
  }
  if (dwell) return dwell->last_band;
  scan_previous = (scan_previous + 1) % hyps.prior().n_bands;
  return scan_previous;
}

int ScanDwellController::select_band(const History& history) {
  if (hyps_->inconsistent()) return next_scan_band();
  return scan_and_dwell_select(*hyps_, history.size(), scan_previous_);
}

int expert_select(const HypothesisSet& hyps, int t) {
  const auto u = hyps.predict(t).uncertainty;
  return static_cast<int>(std::max_element(u.begin(), u.end()) - u.begin());
}

int ExpertController::select_band(const History& history) {
  if (hyps_->inconsistent()) {
    last_uncertainty_.clear();
    return next_scan_band();
  }
  last_uncertainty_ = hyps_->predict(history.size()).uncertainty;
  return static_cast<int>(std::max_element(last_uncertainty_.begin(), last_uncertainty_.end()) -
                          last_uncertainty_.begin());
}

std::unique_ptr<Controller> make_baseline(const std::string& kind, const EnvSpec& prior) {
  if (kind == "random") return std::make_unique<RandomController>();
  if (kind == "scan") return std::make_unique<ScanController>();
  if (kind == "scan_dwell") return std::make_unique<ScanDwellController>(prior);
  if (kind == "expert") return std::make_unique<ExpertController>(prior);
  throw ConfigError("unknown baseline controller '" + kind + "'");
}

}  // namespace specmon
