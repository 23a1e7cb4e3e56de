#include "specmon/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "specmon/errors.hpp"

namespace specmon {

OverlapCounts overlap(std::span<const float> pred, std::span<const int> truth, float threshold) {
  if (pred.size() != truth.size()) {
    throw UsageError("iou: prediction has " + std::to_string(pred.size()) + " bands, truth has " +
                     std::to_string(truth.size()));
  }
  OverlapCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] >= threshold;
    const bool t = truth[i] != 0;
    c.intersection += (p && t) ? 1 : 0;
    c.union_size += (p || t) ? 1 : 0;
  }
  return c;
}

OverlapCounts overlap(const BandVector& pred, const BandVector& truth, float threshold) {
  const auto p = pred.activity_vector();
  std::vector<int> t(truth.n_bands);
  for (int b = 0; b < truth.n_bands; ++b) t[b] = truth.activity(b) >= threshold ? 1 : 0;
  return overlap(p, t, threshold);
}

double iou_instant(std::span<const float> pred, std::span<const int> truth, float threshold) {
  return overlap(pred, truth, threshold).ratio();
}

double iou_instant(const BandVector& pred, const BandVector& truth, float threshold) {
  return overlap(pred, truth, threshold).ratio();
}

double iou_block(std::span<const OverlapCounts> steps, int n) {
  if (steps.empty()) throw UsageError("iou_block: empty window");
  if (n < 1) throw UsageError("iou_block: block length must be >= 1");
  const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(n), steps.size());
  OverlapCounts total;
  for (std::size_t i = steps.size() - len; i < steps.size(); ++i) total += steps[i];
  return total.ratio();
}

double iou_cumulative(std::span<const OverlapCounts> steps) {
  return iou_block(steps, static_cast<int>(steps.size()));
}

double iou_diff_block(std::span<const OverlapCounts> steps, int t, int n) {
  if (n < 1) throw UsageError("iou_diff_block: block length must be >= 1");
  if (t < n) throw UsageError("iou_diff_block: t must be >= N");
  if (static_cast<std::size_t>(t) >= steps.size()) throw UsageError("iou_diff_block: t beyond history");
  const auto upto = steps.first(static_cast<std::size_t>(t) + 1);
  return iou_block(upto, n + 1) - iou_block(upto, n);
}

double wbce_loss(std::span<const float> probs, std::span<const int> truth, double w_neg) {
  if (probs.size() != truth.size()) throw UsageError("wbce: length mismatch");
  if (probs.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(static_cast<double>(probs[i]), kProbClip, 1.0 - kProbClip);
    sum += truth[i] != 0 ? std::log(p) : w_neg * std::log(1.0 - p);
  }
  return -sum / static_cast<double>(probs.size());
}

double wbce_loss_multiclass(std::span<const float> rows, std::span<const int> truth, int n_classes,
                            double w_neg) {
  const std::size_t k = static_cast<std::size_t>(n_classes) + 1;
  if (rows.size() != truth.size() * k) throw UsageError("wbce: class row size mismatch");
  if (truth.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t b = 0; b < truth.size(); ++b) {
    const int c = truth[b];
    const double q = std::clamp(static_cast<double>(rows[b * k + static_cast<std::size_t>(c)]), kProbClip,
                                1.0 - kProbClip);
    sum += c != 0 ? std::log(q) : w_neg * std::log(q);
  }
  return -sum / static_cast<double>(truth.size());
}

}  // namespace specmon
