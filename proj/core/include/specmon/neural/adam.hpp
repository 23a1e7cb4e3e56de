#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "specmon/errors.hpp"
#include "specmon/neural/params.hpp"

namespace specmon::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 0.0;  // global gradient-norm clip; 0 disables
};

// Bias-corrected adaptive-moment optimizer.
template <typename Real>
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  const AdamConfig& config() const { return config_; }
  long steps() const { return t_; }

  // Applies one update from params.grads(). Throws DivergenceError naming the
  // offending block if any gradient is not finite.
  void step(Params<Real>& params) {
    auto values = params.values();
    auto grads = params.grads();
    if (m_.size() != values.size()) {
      m_.assign(values.size(), 0.0);
      v_.assign(values.size(), 0.0);
    }
    double norm2 = 0.0;
    for (std::size_t i = 0; i < grads.size(); ++i) {
      const double g = static_cast<double>(grads[i]);
      if (!std::isfinite(g)) {
        throw DivergenceError("non-finite gradient in layer '" + params.block_of(i).name + "'");
      }
      norm2 += g * g;
    }
    double scale = 1.0;
    if (config_.clip_norm > 0.0) {
      const double norm = std::sqrt(norm2);
      if (norm > config_.clip_norm) scale = config_.clip_norm / norm;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = static_cast<double>(grads[i]) * scale;
      m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
      v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g * g;
      const double mhat = m_[i] / bc1;
      const double vhat = v_[i] / bc2;
      values[i] = static_cast<Real>(static_cast<double>(values[i]) -
                                    config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon));
    }
  }

 private:
  AdamConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  long t_ = 0;
};

}  // namespace specmon::nn
