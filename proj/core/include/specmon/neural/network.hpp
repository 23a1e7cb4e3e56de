#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "specmon/neural/layers.hpp"
#include "specmon/neural/params.hpp"

namespace specmon::nn {

enum class Topology { kConv, kDense };

// Shared DAN network layout. The conv topology convolves along bands and is
// recurrent in time; the dense topology flattens the band axis and uses a
// plain LSTM. Both produce an M (state) head, optional P (next state) and Q
// (action value) heads.
struct NetworkConfig {
  Topology topology = Topology::kConv;
  int n_bands = 20;
  int n_classes = 1;
  int conv_channels = 16;
  int conv_kernel = 5;
  int hidden = 32;
  int lstm_kernel = 3;
  int dense_units = 128;
  int dense_hidden = 64;
  bool q_head = true;
  bool p_head = false;
  bool dueling = true;
  std::uint64_t init_seed = 1;

  int input_channels() const;          // encoded channels per band
  int classes_per_band() const { return n_classes > 1 ? n_classes + 1 : 1; }
  int width() const { return topology == Topology::kConv ? n_bands : 1; }
  int input_size() const { return n_bands * input_channels(); }
  int state_outputs() const { return n_bands * classes_per_band(); }
  void validate() const;
  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

std::string to_string(Topology t);
Topology parse_topology(const std::string& s);

template <typename Real>
class DanNet {
 public:
  explicit DanNet(const NetworkConfig& config);

  const NetworkConfig& config() const { return config_; }
  Params<Real>& params() { return params_; }
  const Params<Real>& params() const { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  struct State {
    Buffer<Real> h;
    Buffer<Real> c;
  };
  // Probabilities for M and P (n_bands * classes_per_band), Q per band.
  struct Heads {
    Buffer<Real> m;
    Buffer<Real> p;
    Buffer<Real> q;
  };

  State initial_state() const;
  void step(std::span<const Real> x, State& state) const;
  void heads(const State& state, Heads& out) const;

  // Everything a sequence forward pass keeps for backpropagation. Index s of
  // the head outputs corresponds to the hidden state after s input steps, so
  // a sequence of `steps` inputs has steps + 1 head evaluations. A batch of
  // episodes is stored step-major: row(s, b) = s * batch + b.
  struct Trace {
    int steps = 0;
    int batch = 1;
    std::size_t row(int s, int b) const { return static_cast<std::size_t>(s) * batch + b; }
    Buffer<Real> x;
    Buffer<Real> a1;
    std::vector<LstmCache<Real>> lstm;
    Buffer<Real> h;
    Buffer<Real> m_logit;
    Buffer<Real> m;
    Buffer<Real> p_logit;
    Buffer<Real> p;
    Buffer<Real> adv;
    Buffer<Real> hmean;
    Buffer<Real> value;
    Buffer<Real> q;
  };
  // Gradients of the loss w.r.t. M logits, P logits and Q values, laid out
  // like the corresponding Trace vectors. Empty vectors mean zero.
  struct OutputGrads {
    Buffer<Real> m_logit;
    Buffer<Real> p_logit;
    Buffer<Real> q;
  };

  void forward(std::span<const Real> inputs, int steps, Trace& trace) const { forward(inputs, steps, 1, trace); }
  // `inputs` holds `batch` equal-length episodes back to back (episode-major).
  void forward(std::span<const Real> inputs, int steps, int batch, Trace& trace) const;
  // Accumulates parameter gradients into params().grads().
  void backward(const Trace& trace, const OutputGrads& grads);

 private:
  void head_forward(const Real* h, int count, Real* m_logit, Real* m, Real* p_logit, Real* p, Real* adv, Real* hmean,
                    Real* value, Real* q) const;
  void activate_state(const Real* logit, Real* prob, int count) const;

  NetworkConfig config_;
  Params<Real> params_;
  int width_;
  int features_;
  int hidden_;
  Conv1d<Real> input_;
  ConvLstm<Real> lstm_;
  Conv1d<Real> m_head_;
  Conv1d<Real> p_head_;
  Conv1d<Real> adv_head_;
  Dense<Real> value_head_;
};

extern template class DanNet<float>;
extern template class DanNet<double>;

}  // namespace specmon::nn
