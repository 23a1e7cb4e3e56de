#include "specmon/neural/network.hpp"

#include <algorithm>
#include <cmath>

#include "specmon/errors.hpp"
#include "specmon/harness.hpp"

namespace specmon::nn {

int NetworkConfig::input_channels() const { return encoded_channels(n_classes); }

void NetworkConfig::validate() const {
  if (n_bands < 1) throw ConfigError("network: n_bands must be >= 1");
  if (n_classes < 1) throw ConfigError("network: n_classes must be >= 1");
  if (conv_kernel % 2 == 0 || lstm_kernel % 2 == 0) throw ConfigError("network: kernel widths must be odd");
  if (conv_channels < 1 || hidden < 1 || dense_units < 1 || dense_hidden < 1) {
    throw ConfigError("network: layer sizes must be positive");
  }
}

std::string to_string(Topology t) { return t == Topology::kConv ? "conv" : "dense"; }

Topology parse_topology(const std::string& s) {
  if (s == "conv") return Topology::kConv;
  if (s == "dense") return Topology::kDense;
  throw ConfigError("unknown topology '" + s + "'");
}

template <typename Real>
DanNet<Real>::DanNet(const NetworkConfig& config) : config_(config) {
  config_.validate();
  const bool conv = config_.topology == Topology::kConv;
  width_ = config_.width();
  features_ = conv ? config_.conv_channels : config_.dense_units;
  hidden_ = conv ? config_.hidden : config_.dense_hidden;
  const int in_ch = conv ? config_.input_channels() : config_.input_size();
  const int k_in = conv ? config_.conv_kernel : 1;
  const int k_lstm = conv ? config_.lstm_kernel : 1;
  const int state_ch = conv ? config_.classes_per_band() : config_.state_outputs();
  const int adv_ch = conv ? 1 : config_.n_bands;

  input_ = Conv1d<Real>(params_, "input", in_ch, features_, k_in, true);
  lstm_ = ConvLstm<Real>(params_, "lstm", features_, hidden_, k_lstm);
  m_head_ = Conv1d<Real>(params_, "m_head", hidden_, state_ch, 1, false);
  if (config_.p_head) p_head_ = Conv1d<Real>(params_, "p_head", hidden_, state_ch, 1, false);
  if (config_.q_head) {
    adv_head_ = Conv1d<Real>(params_, config_.dueling ? "q_advantage" : "q_head", hidden_, adv_ch, 1, false);
    if (config_.dueling) value_head_ = Dense<Real>(params_, "q_value", hidden_, 1, false);
  }

  std::mt19937_64 rng(config_.init_seed);
  input_.init(params_, rng);
  lstm_.init(params_, rng);
  m_head_.init(params_, rng);
  if (config_.p_head) p_head_.init(params_, rng);
  if (config_.q_head) {
    adv_head_.init(params_, rng);
    if (config_.dueling) value_head_.init(params_, rng);
  }
}

template <typename Real>
typename DanNet<Real>::State DanNet<Real>::initial_state() const {
  const std::size_t n = static_cast<std::size_t>(width_) * hidden_;
  return {Buffer<Real>(n, Real{0}), Buffer<Real>(n, Real{0})};
}

template <typename Real>
void DanNet<Real>::step(std::span<const Real> x, State& state) const {
  if (static_cast<int>(x.size()) != config_.input_size()) throw UsageError("network: input size mismatch");
  thread_local Buffer<Real> a1;
  a1.resize(static_cast<std::size_t>(width_) * features_);
  input_.forward(params_, x.data(), width_, a1.data());
  lstm_.step(params_, a1.data(), width_, state.h.data(), state.c.data(), nullptr);
}

template <typename Real>
void DanNet<Real>::activate_state(const Real* logit, Real* prob, int count) const {
  const int k = config_.classes_per_band();
  const int n = config_.n_bands * count;
  if (k == 1) {
    for (int b = 0; b < n; ++b) prob[b] = sigmoid(logit[b]);
    return;
  }
  for (int b = 0; b < n; ++b) {
    const Real* l = logit + static_cast<std::size_t>(b) * k;
    Real* p = prob + static_cast<std::size_t>(b) * k;
    const Real mx = *std::max_element(l, l + k);
    Real sum = Real{0};
    for (int j = 0; j < k; ++j) sum += (p[j] = std::exp(l[j] - mx));
    for (int j = 0; j < k; ++j) p[j] /= sum;
  }
}

// Heads for `count` hidden states stored back to back.
template <typename Real>
void DanNet<Real>::head_forward(const Real* h, int count, Real* m_logit, Real* m, Real* p_logit, Real* p, Real* adv,
                                Real* hmean, Real* value, Real* q) const {
  m_head_.forward(params_, h, width_, m_logit, count);
  activate_state(m_logit, m, count);
  if (config_.p_head) {
    p_head_.forward(params_, h, width_, p_logit, count);
    activate_state(p_logit, p, count);
  }
  if (!config_.q_head) return;
  const int n = config_.n_bands;
  adv_head_.forward(params_, h, width_, adv, count);
  if (!config_.dueling) {
    std::copy_n(adv, static_cast<std::size_t>(n) * count, q);
    return;
  }
  const std::size_t nh = static_cast<std::size_t>(width_) * hidden_;
  for (int r = 0; r < count; ++r) {
    const Real* hr = h + nh * r;
    Real* hm = hmean + static_cast<std::size_t>(hidden_) * r;
    std::fill_n(hm, hidden_, Real{0});
    for (int pos = 0; pos < width_; ++pos) {
      for (int k = 0; k < hidden_; ++k) hm[k] += hr[static_cast<std::size_t>(pos) * hidden_ + k];
    }
    for (int k = 0; k < hidden_; ++k) hm[k] /= static_cast<Real>(width_);
    value_head_.forward(params_, std::span<const Real>(hm, hidden_), std::span<Real>(value + r, 1));
    dueling_combine<Real>(value[r], std::span<const Real>(adv + static_cast<std::size_t>(n) * r, n),
                          std::span<Real>(q + static_cast<std::size_t>(n) * r, n));
  }
}

template <typename Real>
void DanNet<Real>::heads(const State& state, Heads& out) const {
  const std::size_t ns = static_cast<std::size_t>(config_.state_outputs());
  const std::size_t n = static_cast<std::size_t>(config_.n_bands);
  thread_local Buffer<Real> m_logit, p_logit, adv, hmean, value, p_scratch;
  m_logit.resize(ns);
  p_logit.resize(ns);
  adv.resize(n);
  hmean.resize(hidden_);
  value.resize(1);
  p_scratch.resize(ns);
  out.m.resize(ns);
  out.p.resize(config_.p_head ? ns : 0);
  out.q.resize(config_.q_head ? n : 0);
  head_forward(state.h.data(), 1, m_logit.data(), out.m.data(), p_logit.data(),
               config_.p_head ? out.p.data() : p_scratch.data(), adv.data(), hmean.data(), value.data(),
               config_.q_head ? out.q.data() : adv.data());
}

template <typename Real>
void DanNet<Real>::forward(std::span<const Real> inputs, int steps, int batch, Trace& tr) const {
  const std::size_t in = static_cast<std::size_t>(config_.input_size());
  if (batch < 1 || inputs.size() != in * static_cast<std::size_t>(steps) * batch) {
    throw UsageError("network: sequence size mismatch");
  }
  const std::size_t na = static_cast<std::size_t>(width_) * features_;
  const std::size_t nh = static_cast<std::size_t>(width_) * hidden_;
  const std::size_t ns = static_cast<std::size_t>(config_.state_outputs());
  const std::size_t n = static_cast<std::size_t>(config_.n_bands);
  const std::size_t rows = (static_cast<std::size_t>(steps) + 1) * batch;
  const std::size_t srows = static_cast<std::size_t>(steps) * batch;

  tr.steps = steps;
  tr.batch = batch;
  tr.x.resize(in * srows);
  for (int b = 0; b < batch; ++b) {
    for (int s = 0; s < steps; ++s) {
      std::copy_n(inputs.data() + in * (static_cast<std::size_t>(b) * steps + s), in, tr.x.data() + in * tr.row(s, b));
    }
  }
  tr.a1.resize(na * srows);
  tr.lstm.resize(steps);
  tr.h.assign(nh * rows, Real{0});
  tr.m_logit.resize(ns * rows);
  tr.m.resize(ns * rows);
  tr.p_logit.resize(ns * rows);
  tr.p.resize(ns * rows);
  tr.adv.resize(n * rows);
  tr.hmean.resize(static_cast<std::size_t>(hidden_) * rows);
  tr.value.resize(rows);
  tr.q.resize(n * rows);

  if (steps > 0) input_.forward(params_, tr.x.data(), width_, tr.a1.data(), static_cast<int>(srows));
  Buffer<Real> c(nh * batch, Real{0});
  const std::size_t block = nh * batch;
  for (int s = 0; s < steps; ++s) {
    Real* h = tr.h.data() + block * (s + 1);
    std::copy_n(tr.h.data() + block * s, block, h);
    lstm_.step(params_, tr.a1.data() + na * batch * s, width_, h, c.data(), &tr.lstm[s], batch);
  }
  head_forward(tr.h.data(), static_cast<int>(rows), tr.m_logit.data(), tr.m.data(), tr.p_logit.data(), tr.p.data(),
               tr.adv.data(), tr.hmean.data(), tr.value.data(), tr.q.data());
}

template <typename Real>
void DanNet<Real>::backward(const Trace& tr, const OutputGrads& g) {
  const int steps = tr.steps;
  const int batch = tr.batch;
  const std::size_t na = static_cast<std::size_t>(width_) * features_;
  const std::size_t nh = static_cast<std::size_t>(width_) * hidden_;
  const std::size_t n = static_cast<std::size_t>(config_.n_bands);
  const int rows = (steps + 1) * batch;
  const int srows = steps * batch;

  // dL/dh for every row, from the heads first.
  Buffer<Real> gh(nh * rows, Real{0});
  if (!g.m_logit.empty()) m_head_.backward(params_, tr.h.data(), tr.m_logit.data(), g.m_logit.data(), width_, gh.data(), rows);
  if (config_.p_head && !g.p_logit.empty()) {
    p_head_.backward(params_, tr.h.data(), tr.p_logit.data(), g.p_logit.data(), width_, gh.data(), rows);
  }
  if (config_.q_head && !g.q.empty()) {
    if (!config_.dueling) {
      adv_head_.backward(params_, tr.h.data(), tr.adv.data(), g.q.data(), width_, gh.data(), rows);
    } else {
      Buffer<Real> gadv(n * rows), ghmean(static_cast<std::size_t>(hidden_));
      const Real scale = Real{1} / static_cast<Real>(width_);
      for (int r = 0; r < rows; ++r) {
        const Real gv = dueling_backward<Real>(std::span<const Real>(g.q.data() + n * r, n),
                                               std::span<Real>(gadv.data() + n * r, n));
        if (gv == Real{0}) continue;
        std::fill(ghmean.begin(), ghmean.end(), Real{0});
        const Real gvv[1] = {gv};
        value_head_.backward(params_, std::span<const Real>(tr.hmean.data() + static_cast<std::size_t>(hidden_) * r, hidden_),
                             std::span<const Real>(tr.value.data() + r, 1), std::span<const Real>(gvv, 1), ghmean);
        Real* ghs = gh.data() + nh * r;
        for (int pos = 0; pos < width_; ++pos) {
          for (int k = 0; k < hidden_; ++k) ghs[static_cast<std::size_t>(pos) * hidden_ + k] += ghmean[k] * scale;
        }
      }
      adv_head_.backward(params_, tr.h.data(), tr.adv.data(), gadv.data(), width_, gh.data(), rows);
    }
  }

  // Backpropagation through time. h_0 is a constant.
  const std::size_t block = nh * batch;
  Buffer<Real> gc(block, Real{0}), gh_prev(block), ga1(na * srows, Real{0});
  for (int s = steps - 1; s >= 0; --s) {
    lstm_.backward_step(params_, tr.lstm[s], gh.data() + block * (s + 1), gc.data(), width_,
                        ga1.data() + na * batch * s, gh_prev.data(), batch);
    Real* gprev = gh.data() + block * s;
    for (std::size_t i = 0; i < block; ++i) gprev[i] += gh_prev[i];
  }
  if (steps > 0) input_.backward(params_, tr.x.data(), tr.a1.data(), ga1.data(), width_, nullptr, srows);
}

template class DanNet<float>;
template class DanNet<double>;

}  // namespace specmon::nn
