#include "specmon/hypothesis.hpp"

#include <algorithm>
#include <cmath>

#include "specmon/errors.hpp"

namespace specmon {

std::vector<SignalPair> HypothesisSet::enumerate(const EnvSpec& prior, std::size_t cap) {
  require_valid(prior);
  // Count first so oversized priors fail fast.
  std::size_t count = 0;
  for (int w = prior.width.lo; w <= prior.width.hi; ++w) {
    const std::size_t placements =
        prior.freq ? static_cast<std::size_t>(prior.freq->size()) : static_cast<std::size_t>(prior.n_bands - w + 1);
    for (int p = prior.period.lo; p <= prior.period.hi; ++p) {
      const int dmax = std::min(prior.duty_cycle.hi, p - 1);
      if (dmax < prior.duty_cycle.lo) continue;
      count += placements * static_cast<std::size_t>(dmax - prior.duty_cycle.lo + 1) *
               static_cast<std::size_t>(prior.start.size());
    }
  }
  if (count > cap) {
    throw ConfigError("hypothesis prior has " + std::to_string(count) + " tuples per pair (cap " +
                      std::to_string(cap) + "); use a coarser prior");
  }
  std::vector<SignalPair> out;
  out.reserve(count);
  for (int w = prior.width.lo; w <= prior.width.hi; ++w) {
    const IntRange freq = prior.freq ? *prior.freq : IntRange{0, prior.n_bands - w};
    for (int f = freq.lo; f <= freq.hi; ++f) {
      for (int p = prior.period.lo; p <= prior.period.hi; ++p) {
        for (int d = prior.duty_cycle.lo; d <= std::min(prior.duty_cycle.hi, p - 1); ++d) {
          for (int s = prior.start.lo; s <= prior.start.hi; ++s) out.push_back({f, w, p, d, s, 1});
        }
      }
    }
  }
  return out;
}

HypothesisSet::HypothesisSet(const EnvSpec& prior, std::size_t cap)
    : HypothesisSet(prior, std::make_shared<const std::vector<SignalPair>>(enumerate(prior, cap))) {}

HypothesisSet::HypothesisSet(const EnvSpec& prior, std::shared_ptr<const std::vector<SignalPair>> tuples)
    : prior_(prior), prior_tuples_(std::move(tuples)), undiscovered_(*prior_tuples_) {}

void HypothesisSet::eliminate(int t, int band, int detection) {
  if (inconsistent_) return;
  if (detection == 0) {
    auto contradicts = [&](const SignalPair& p) { return p.active(t, band); };
    for (auto& pair : tracked_) {
      std::erase_if(pair.candidates, contradicts);
      if (pair.candidates.empty()) {
        inconsistent_ = true;
        return;
      }
    }
    std::erase_if(undiscovered_, contradicts);
  } else {
    positives_.push_back({t, band});
    for (auto& pair : tracked_) {
      if (std::any_of(pair.candidates.begin(), pair.candidates.end(),
                      [&](const SignalPair& p) { return p.active(t, band); })) {
        pair.last_band = band;
        pair.last_t = t;
      }
    }
  }
  resolve_positives();
}

void HypothesisSet::resolve_positives() {
  bool changed = true;
  while (changed && !inconsistent_) {
    changed = false;
    for (std::size_t i = 0; i < positives_.size();) {
      const auto [t, band] = positives_[i];
      auto active = [&](const SignalPair& p) { return p.active(t, band); };

      int explainers = 0;
      Tracked* only = nullptr;
      bool settled = false;
      for (auto& pair : tracked_) {
        const auto n = std::count_if(pair.candidates.begin(), pair.candidates.end(), active);
        if (n == 0) continue;
        ++explainers;
        only = &pair;
        if (static_cast<std::size_t>(n) == pair.candidates.size()) settled = true;
      }
      // A pair whose every candidate is active here explains it for good.
      if (settled) {
        positives_.erase(positives_.begin() + static_cast<std::ptrdiff_t>(i));
        continue;
      }
      const bool open_ok =
          capacity() > 0 && std::any_of(undiscovered_.begin(), undiscovered_.end(), active);

      if (explainers == 0 && !open_ok) {
        inconsistent_ = true;
        return;
      }
      if (explainers == 0) {
        Tracked fresh;
        std::copy_if(undiscovered_.begin(), undiscovered_.end(), std::back_inserter(fresh.candidates), active);
        fresh.last_band = band;
        fresh.last_t = t;
        tracked_.push_back(std::move(fresh));
        changed = true;
        continue;  // re-examined next sweep; now settled
      }
      if (explainers == 1 && !open_ok) {
        std::erase_if(only->candidates, [&](const SignalPair& p) { return !p.active(t, band); });
        changed = true;
        continue;
      }
      ++i;
    }
  }
}

double HypothesisSet::expected_undiscovered() const {
  const int k = static_cast<int>(tracked_.size());
  const int lo = std::max(prior_.number.lo, k);
  const int hi = prior_.number.hi;
  if (hi <= k) return 0.0;
  double sum = 0.0;
  for (int n = lo; n <= hi; ++n) sum += n - k;
  return sum / static_cast<double>(hi - lo + 1);
}

std::size_t HypothesisSet::total_candidates() const {
  std::size_t n = 0;
  for (const auto& p : tracked_) n += p.candidates.size();
  return n;
}

HypothesisPrediction HypothesisSet::predict(int t) const {
  const int n = prior_.n_bands;
  std::vector<double> silent(n, 1.0);  // probability every source is inactive
  std::vector<int> hits(n);
  for (const auto& pair : tracked_) {
    std::fill(hits.begin(), hits.end(), 0);
    for (const auto& c : pair.candidates) {
      const int b = c.active_band(t);
      if (b >= 0) ++hits[b];
    }
    const double size = static_cast<double>(pair.candidates.size());
    for (int b = 0; b < n; ++b) silent[b] *= 1.0 - hits[b] / size;
  }
  const double expected = expected_undiscovered();
  if (expected > 0.0 && !undiscovered_.empty()) {
    std::fill(hits.begin(), hits.end(), 0);
    for (const auto& c : undiscovered_) {
      const int b = c.active_band(t);
      if (b >= 0) ++hits[b];
    }
    const double size = static_cast<double>(undiscovered_.size());
    for (int b = 0; b < n; ++b) silent[b] *= 1.0 - std::min(1.0, expected * hits[b] / size);
  }
  HypothesisPrediction out;
  out.probability.resize(n);
  out.uncertainty.resize(n);
  for (int b = 0; b < n; ++b) {
    const double p = 1.0 - silent[b];
    out.probability[b] = static_cast<float>(p);
    out.uncertainty[b] = static_cast<float>(1.0 - std::abs(2.0 * p - 1.0));
  }
  return out;
}

bool HypothesisSet::band_resolved(const Tracked& pair, int band, int t, int horizon) const {
  if (pair.candidates.size() <= 1) return true;
  const auto& first = pair.candidates.front();
  for (int dt = 0; dt < horizon; ++dt) {
    const bool a = first.active(t + dt, band);
    for (const auto& c : pair.candidates) {
      if (c.active(t + dt, band) != a) return false;
    }
  }
  return true;
}

}  // namespace specmon
