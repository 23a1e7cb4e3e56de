#include "specmon/neural/seqnet.hpp"

#include <algorithm>

#include "specmon/errors.hpp"

namespace specmon::nn {

void SeqNetConfig::validate() const {
  if (n_bands < 1 || in_channels < 1 || out_channels < 1 || features < 1 || hidden < 1) {
    throw ConfigError("sequence net: sizes must be positive");
  }
  if (conv_kernel % 2 == 0 || lstm_kernel % 2 == 0) throw ConfigError("sequence net: kernel widths must be odd");
}

template <typename Real>
SeqNet<Real>::SeqNet(const SeqNetConfig& config) : config_(config) {
  config_.validate();
  input_ = Conv1d<Real>(params_, "input", config_.in_channels, config_.features, config_.conv_kernel, true);
  fwd_ = ConvLstm<Real>(params_, "lstm_fwd", config_.features, config_.hidden, config_.lstm_kernel);
  if (config_.bidirectional) {
    bwd_ = ConvLstm<Real>(params_, "lstm_bwd", config_.features, config_.hidden, config_.lstm_kernel);
  }
  head_ = Conv1d<Real>(params_, "head", readout_channels(), config_.out_channels, 1, false);
  std::mt19937_64 rng(config_.init_seed);
  input_.init(params_, rng);
  fwd_.init(params_, rng);
  if (config_.bidirectional) bwd_.init(params_, rng);
  head_.init(params_, rng);
}

template <typename Real>
void SeqNet<Real>::forward(std::span<const Real> inputs, int steps, Trace& tr) const {
  const int W = config_.n_bands;
  const int H = config_.hidden;
  const int R = readout_channels();
  const std::size_t in = static_cast<std::size_t>(W) * config_.in_channels;
  if (inputs.size() != in * static_cast<std::size_t>(steps)) throw UsageError("sequence net: input size mismatch");
  const std::size_t na = static_cast<std::size_t>(W) * config_.features;
  const std::size_t nh = static_cast<std::size_t>(W) * H;
  const std::size_t no = static_cast<std::size_t>(W) * config_.out_channels;

  tr.steps = steps;
  tr.x.assign(inputs.begin(), inputs.end());
  tr.a1.resize(na * steps);
  tr.fwd.resize(steps);
  tr.bwd.resize(config_.bidirectional ? steps : 0);
  tr.hcat.assign(static_cast<std::size_t>(W) * R * steps, Real{0});
  tr.logit.resize(no * steps);
  tr.prob.resize(no * steps);
  if (steps == 0) return;

  input_.forward(params_, tr.x.data(), W, tr.a1.data(), steps);
  Buffer<Real> h(nh, Real{0}), c(nh, Real{0});
  for (int s = 0; s < steps; ++s) {
    fwd_.step(params_, tr.a1.data() + na * s, W, h.data(), c.data(), &tr.fwd[s]);
    for (int pos = 0; pos < W; ++pos) {
      std::copy_n(h.data() + static_cast<std::size_t>(pos) * H, H,
                  tr.hcat.data() + (static_cast<std::size_t>(s) * W + pos) * R);
    }
  }
  if (config_.bidirectional) {
    std::fill(h.begin(), h.end(), Real{0});
    std::fill(c.begin(), c.end(), Real{0});
    for (int s = steps - 1; s >= 0; --s) {
      bwd_.step(params_, tr.a1.data() + na * s, W, h.data(), c.data(), &tr.bwd[s]);
      for (int pos = 0; pos < W; ++pos) {
        std::copy_n(h.data() + static_cast<std::size_t>(pos) * H, H,
                    tr.hcat.data() + (static_cast<std::size_t>(s) * W + pos) * R + H);
      }
    }
  }
  head_.forward(params_, tr.hcat.data(), W, tr.logit.data(), steps);
  for (std::size_t i = 0; i < tr.logit.size(); ++i) tr.prob[i] = sigmoid(tr.logit[i]);
}

template <typename Real>
void SeqNet<Real>::backward(const Trace& tr, std::span<const Real> grad_logit) {
  const int steps = tr.steps;
  if (steps == 0) return;
  const int W = config_.n_bands;
  const int H = config_.hidden;
  const int R = readout_channels();
  const std::size_t na = static_cast<std::size_t>(W) * config_.features;
  const std::size_t nh = static_cast<std::size_t>(W) * H;
  if (grad_logit.size() != tr.logit.size()) throw UsageError("sequence net: gradient size mismatch");

  Buffer<Real> ghcat(tr.hcat.size(), Real{0});
  head_.backward(params_, tr.hcat.data(), tr.logit.data(), grad_logit.data(), W, ghcat.data(), steps);

  Buffer<Real> ga1(na * steps, Real{0});
  Buffer<Real> gh(nh), gc(nh, Real{0}), gh_prev(nh, Real{0});
  auto gather = [&](int s, int offset) {
    for (int pos = 0; pos < W; ++pos) {
      const Real* src = ghcat.data() + (static_cast<std::size_t>(s) * W + pos) * R + offset;
      Real* dst = gh.data() + static_cast<std::size_t>(pos) * H;
      for (int k = 0; k < H; ++k) dst[k] = src[k] + gh_prev[static_cast<std::size_t>(pos) * H + k];
    }
  };
  for (int s = steps - 1; s >= 0; --s) {
    gather(s, 0);
    fwd_.backward_step(params_, tr.fwd[s], gh.data(), gc.data(), W, ga1.data() + na * s, gh_prev.data());
  }
  if (config_.bidirectional) {
    std::fill(gc.begin(), gc.end(), Real{0});
    std::fill(gh_prev.begin(), gh_prev.end(), Real{0});
    for (int s = 0; s < steps; ++s) {
      gather(s, H);
      bwd_.backward_step(params_, tr.bwd[s], gh.data(), gc.data(), W, ga1.data() + na * s, gh_prev.data());
    }
  }
  input_.backward(params_, tr.x.data(), tr.a1.data(), ga1.data(), W, nullptr, steps);
}

template <typename Real>
typename SeqNet<Real>::State SeqNet<Real>::initial_state() const {
  const std::size_t nh = static_cast<std::size_t>(config_.n_bands) * config_.hidden;
  return {Buffer<Real>(nh, Real{0}), Buffer<Real>(nh, Real{0})};
}

template <typename Real>
void SeqNet<Real>::step(std::span<const Real> x, State& state, std::span<Real> prob) const {
  if (config_.bidirectional) throw UsageError("sequence net: streaming needs a unidirectional net");
  const int W = config_.n_bands;
  if (x.size() != static_cast<std::size_t>(W) * config_.in_channels ||
      prob.size() != static_cast<std::size_t>(W) * config_.out_channels) {
    throw UsageError("sequence net: step size mismatch");
  }
  thread_local Buffer<Real> a1;
  a1.resize(static_cast<std::size_t>(W) * config_.features);
  input_.forward(params_, x.data(), W, a1.data());
  fwd_.step(params_, a1.data(), W, state.h.data(), state.c.data(), nullptr);
  head_.forward(params_, state.h.data(), W, prob.data());
  for (auto& p : prob) p = sigmoid(p);
}

template class SeqNet<float>;
template class SeqNet<double>;

}  // namespace specmon::nn
