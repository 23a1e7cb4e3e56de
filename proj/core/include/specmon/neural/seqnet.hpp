#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "specmon/neural/layers.hpp"
#include "specmon/neural/params.hpp"

namespace specmon::nn {

struct SeqNetConfig {
  int n_bands = 20;
  int in_channels = 2;
  int out_channels = 1;
  int features = 8;
  int hidden = 16;
  int conv_kernel = 5;
  int lstm_kernel = 3;
  bool bidirectional = false;
  std::uint64_t init_seed = 1;

  void validate() const;
};

// Per-cell sequence model over a T x n_bands grid: conv features along the
// band axis, a ConvLSTM over time (optionally a second one running backwards),
// and a 1x1 conv read-out producing one logit per band and output channel.
template <typename Real>
class SeqNet {
 public:
  explicit SeqNet(const SeqNetConfig& config);

  const SeqNetConfig& config() const { return config_; }
  Params<Real>& params() { return params_; }
  const Params<Real>& params() const { return params_; }

  struct Trace {
    int steps = 0;
    Buffer<Real> x;
    Buffer<Real> a1;
    std::vector<LstmCache<Real>> fwd, bwd;
    Buffer<Real> hcat;   // steps x n_bands x (H or 2H)
    Buffer<Real> logit;  // steps x n_bands x out
    Buffer<Real> prob;
  };

  // inputs: steps x n_bands x in_channels. Output at t sees inputs 0..t (and
  // t..steps-1 when bidirectional).
  void forward(std::span<const Real> inputs, int steps, Trace& trace) const;
  void backward(const Trace& trace, std::span<const Real> grad_logit);

  // Streaming use of the forward direction (generator free-run).
  struct State {
    Buffer<Real> h;
    Buffer<Real> c;
  };
  State initial_state() const;
  void step(std::span<const Real> x, State& state, std::span<Real> prob) const;

 private:
  int readout_channels() const { return config_.bidirectional ? 2 * config_.hidden : config_.hidden; }

  SeqNetConfig config_;
  Params<Real> params_;
  Conv1d<Real> input_;
  ConvLstm<Real> fwd_;
  ConvLstm<Real> bwd_;
  Conv1d<Real> head_;
};

extern template class SeqNet<float>;
extern template class SeqNet<double>;

}  // namespace specmon::nn
