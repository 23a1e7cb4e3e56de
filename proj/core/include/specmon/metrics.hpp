#pragma once

#include <span>
#include <vector>

#include "specmon/env_sim.hpp"

namespace specmon {

struct IoUConfig {
  int block_n = 5;
  float prob_threshold = 0.5F;
};

// Intersection and union sizes of one (time, band) slice or a pooled block.
struct OverlapCounts {
  long intersection = 0;
  long union_size = 0;

  OverlapCounts& operator+=(const OverlapCounts& o) {
    intersection += o.intersection;
    union_size += o.union_size;
    return *this;
  }
  // Empty/empty agreement scores 1.
  double ratio() const {
    return union_size == 0 ? 1.0 : static_cast<double>(intersection) / static_cast<double>(union_size);
  }
};

// Counts positions where the binarized prediction and the truth are active.
// `pred` holds activity probabilities, `truth` any nonzero-is-active labels.
OverlapCounts overlap(std::span<const float> pred, std::span<const int> truth, float threshold = 0.5F);
OverlapCounts overlap(const BandVector& pred, const BandVector& truth, float threshold = 0.5F);

double iou_instant(std::span<const float> pred, std::span<const int> truth, float threshold = 0.5F);
double iou_instant(const BandVector& pred, const BandVector& truth, float threshold = 0.5F);

// Pooled IoU over the last min(n, steps.size()) entries. Cumulative IoU is
// iou_block with n >= steps.size().
double iou_block(std::span<const OverlapCounts> steps, int n);
double iou_cumulative(std::span<const OverlapCounts> steps);

// BIoU over the N+1 steps ending at t minus BIoU over the N steps ending at t.
double iou_diff_block(std::span<const OverlapCounts> steps, int t, int n);

// Weighted binary cross-entropy, mean over bands. Probabilities are clipped
// to [1e-7, 1 - 1e-7].
double wbce_loss(std::span<const float> probs, std::span<const int> truth, double w_neg = 0.1);

// Multi-class variant: `rows` holds n_bands rows of (n_classes + 1) class
// probabilities with column 0 = none; true classes are labels in `truth`.
double wbce_loss_multiclass(std::span<const float> rows, std::span<const int> truth, int n_classes,
                            double w_neg = 0.1);

inline constexpr double kProbClip = 1e-7;

}  // namespace specmon
