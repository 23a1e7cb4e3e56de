#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "specmon/dan.hpp"
#include "specmon/env_sim.hpp"
#include "specmon/neural/grad_check.hpp"
#include "specmon/neural/layers.hpp"
#include "specmon/neural/network.hpp"
#include "specmon/neural/seqnet.hpp"

namespace gradcase {

using specmon::nn::GradCheckResult;
using specmon::nn::Params;

struct Case {
  std::string name;
  GradCheckResult result;
};

inline std::vector<double> uniform(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline GradCheckResult dense_case() {
  Params<double> p;
  specmon::nn::Dense<double> d(p, "dense", 5, 3, true);
  std::mt19937_64 rng(1);
  d.init(p, rng);
  const auto x = uniform(5, 2), w = uniform(3, 3);
  return specmon::nn::grad_check(p, [&](Params<double>& ps, bool grad) {
    std::vector<double> y(3), gx(5, 0.0);
    d.forward(ps, x, y);
    double loss = 0.0;
    std::vector<double> gy(3);
    for (int i = 0; i < 3; ++i) {
      loss += w[i] * y[i] * y[i];
      gy[i] = 2.0 * w[i] * y[i];
    }
    if (grad) d.backward(ps, x, y, gy, gx);
    return loss;
  });
}

inline GradCheckResult conv_case(bool relu, int kernel) {
  Params<double> p;
  const int width = 4, in = 3, out = 2, count = 2;
  specmon::nn::Conv1d<double> c(p, "conv", in, out, kernel, relu);
  std::mt19937_64 rng(4);
  c.init(p, rng);
  const auto x = uniform(static_cast<std::size_t>(width) * in * count, 5);
  const auto w = uniform(static_cast<std::size_t>(width) * out * count, 6);
  return specmon::nn::grad_check(p, [&](Params<double>& ps, bool grad) {
    std::vector<double> y(w.size()), gx(x.size(), 0.0);
    c.forward(ps, x.data(), width, y.data(), count);
    double loss = 0.0;
    std::vector<double> gy(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      loss += w[i] * y[i] * y[i];
      gy[i] = 2.0 * w[i] * y[i];
    }
    if (grad) c.backward(ps, x.data(), y.data(), gy.data(), width, gx.data(), count);
    return loss;
  });
}

inline GradCheckResult lstm_case() {
  Params<double> p;
  const int width = 4, in = 2, hidden = 3, steps = 4;
  specmon::nn::ConvLstm<double> cell(p, "lstm", in, hidden, 3);
  std::mt19937_64 rng(7);
  cell.init(p, rng);
  const std::size_t nx = static_cast<std::size_t>(width) * in;
  const std::size_t nh = static_cast<std::size_t>(width) * hidden;
  const auto x = uniform(nx * steps, 8);
  const auto w = uniform(nh * steps, 9);
  return specmon::nn::grad_check(p, [&](Params<double>& ps, bool grad) {
    std::vector<double> h(nh, 0.0), c(nh, 0.0);
    std::vector<specmon::nn::LstmCache<double>> caches(steps);
    std::vector<std::vector<double>> hs;
    double loss = 0.0;
    for (int s = 0; s < steps; ++s) {
      cell.step(ps, x.data() + nx * s, width, h.data(), c.data(), &caches[s]);
      hs.push_back(h);
      for (std::size_t i = 0; i < nh; ++i) loss += w[nh * s + i] * h[i] * h[i];
    }
    if (grad) {
      std::vector<double> gh(nh), gc(nh, 0.0), gh_prev(nh, 0.0), gx(nx);
      for (int s = steps - 1; s >= 0; --s) {
        for (std::size_t i = 0; i < nh; ++i) gh[i] = 2.0 * w[nh * s + i] * hs[s][i] + gh_prev[i];
        std::fill(gx.begin(), gx.end(), 0.0);
        cell.backward_step(ps, caches[s], gh.data(), gc.data(), width, gx.data(), gh_prev.data());
      }
    }
    return loss;
  });
}

// Linear functional of every DanNet output; `corrupt` scales the analytic
// gradient of the first parameter block to emulate a broken backward pass.
inline GradCheckResult dannet_case(specmon::nn::Topology topology, int n_classes, bool corrupt = false) {
  specmon::nn::NetworkConfig c;
  c.topology = topology;
  c.n_bands = 4;
  c.n_classes = n_classes;
  c.conv_channels = 3;
  c.hidden = 3;
  c.dense_units = 5;
  c.dense_hidden = 3;
  c.p_head = true;
  c.init_seed = 11;
  specmon::nn::DanNet<double> net(c);
  const int steps = 3, batch = 2;
  const auto x = uniform(static_cast<std::size_t>(steps) * batch * c.input_size(), 12);
  const std::size_t rows = static_cast<std::size_t>(steps + 1) * batch;
  const auto wm = uniform(rows * c.state_outputs(), 13);
  const auto wp = uniform(rows * c.state_outputs(), 14);
  const auto wq = uniform(rows * c.n_bands, 15);
  return specmon::nn::grad_check(net.params(), [&](Params<double>& ps, bool grad) {
    specmon::nn::DanNet<double>::Trace tr;
    net.forward(x, steps, batch, tr);
    specmon::nn::DanNet<double>::OutputGrads g;
    g.m_logit.resize(wm.size());
    g.p_logit.resize(wp.size());
    g.q.resize(wq.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < wm.size(); ++i) {
      loss += wm[i] * tr.m[i];
      g.m_logit[i] = 0.0;
    }
    for (std::size_t i = 0; i < wp.size(); ++i) {
      loss += wp[i] * tr.p_logit[i];
      g.p_logit[i] = wp[i];
    }
    for (std::size_t i = 0; i < wq.size(); ++i) {
      loss += 0.5 * wq[i] * tr.q[i] * tr.q[i];
      g.q[i] = wq[i] * tr.q[i];
    }
    // dL/dlogit for sum(w * prob), per-band softmax or sigmoid
    const int k = c.classes_per_band();
    for (std::size_t r = 0; r < wm.size() / k; ++r) {
      if (k == 1) {
        g.m_logit[r] = wm[r] * tr.m[r] * (1.0 - tr.m[r]);
      } else {
        double dot = 0.0;
        for (int j = 0; j < k; ++j) dot += wm[r * k + j] * tr.m[r * k + j];
        for (int j = 0; j < k; ++j) g.m_logit[r * k + j] = tr.m[r * k + j] * (wm[r * k + j] - dot);
      }
    }
    if (grad) {
      net.backward(tr, g);
      if (corrupt) {
        const auto& b = ps.blocks().front();
        for (std::size_t i = 0; i < b.size; ++i) ps.grads()[b.offset + i] *= 1.5;
      }
    }
    return loss;
  });
}

inline specmon::EnvSpec toy_spec(double change_prob = 0.0) {
  specmon::EnvSpec s;
  s.name = "toy";
  s.n_bands = 4;
  s.number = {1, 1};
  s.width = {2, 2};
  s.period = {3, 4};
  s.duty_cycle = {1, 2};
  s.change_prob = change_prob;
  return s;
}

// Full DAN loss (TD + M WBCE + P WBCE, or InfoMax regression) of one rolled
// out episode, differentiated through the double network.
inline GradCheckResult dan_loss_case(specmon::AgentKind kind, specmon::nn::Topology topology, bool partial = false) {
  const auto spec = toy_spec();
  auto nc = specmon::default_network(kind, spec.n_bands, spec.n_classes);
  nc.topology = topology;
  nc.conv_channels = 3;
  nc.hidden = 3;
  nc.dense_units = 5;
  nc.dense_hidden = 3;
  nc.p_head = true;
  nc.init_seed = 21;
  const auto reward = kind == specmon::AgentKind::kPredictiveDan ? specmon::DanReward::kPredictive
                                                                  : specmon::DanReward::kInstantIoU;
  specmon::DanAgent agent(kind, nc, reward);
  specmon::TrainConfig cfg;
  cfg.steps = 6;
  std::mt19937_64 rng(3);
  auto env = specmon::sample_environment(spec, 5);
  auto rec = specmon::rollout(agent, env, cfg, 0.5, rng);
  if (partial) rec = specmon::partial_record(rec.history);

  specmon::nn::DanNet<double> net(nc), target(nc);
  net.params().copy_values_from(agent.net().params());
  auto tv = uniform(target.params().size(), 22);
  std::copy(tv.begin(), tv.end(), target.params().values().begin());
  std::vector<double> x(rec.inputs.begin(), rec.inputs.end());
  specmon::nn::DanNet<double>::Trace target_trace;
  target.forward(x, rec.steps(), target_trace);
  return specmon::nn::grad_check(net.params(), [&](Params<double>& ps, bool grad) {
    specmon::nn::DanNet<double>::Trace tr;
    net.forward(x, rec.steps(), tr);
    specmon::nn::DanNet<double>::OutputGrads g;
    const double loss = specmon::episode_loss_double(kind, net, rec, tr, target_trace, cfg, grad ? &g : nullptr);
    if (grad) net.backward(tr, g);
    (void)ps;
    return loss;
  });
}

inline GradCheckResult seqnet_case(bool bidirectional) {
  specmon::nn::SeqNetConfig c;
  c.n_bands = 4;
  c.in_channels = 2;
  c.features = 3;
  c.hidden = 3;
  c.bidirectional = bidirectional;
  c.init_seed = 31;
  specmon::nn::SeqNet<double> net(c);
  const int steps = 4;
  const auto x = uniform(static_cast<std::size_t>(steps) * c.n_bands * c.in_channels, 32);
  const auto w = uniform(static_cast<std::size_t>(steps) * c.n_bands, 33);
  return specmon::nn::grad_check(net.params(), [&](Params<double>&, bool grad) {
    specmon::nn::SeqNet<double>::Trace tr;
    net.forward(x, steps, tr);
    std::vector<double> g(tr.prob.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      loss += w[i] * tr.prob[i];
      g[i] = w[i] * tr.prob[i] * (1.0 - tr.prob[i]);
    }
    if (grad) net.backward(tr, g);
    return loss;
  });
}

inline std::vector<Case> all_cases() {
  using specmon::AgentKind;
  using specmon::nn::Topology;
  std::vector<Case> out;
  out.push_back({"dense", dense_case()});
  out.push_back({"conv1d_relu_k3", conv_case(true, 3)});
  out.push_back({"conv1d_linear_k5", conv_case(false, 5)});
  out.push_back({"conv1d_1x1", conv_case(false, 1)});
  out.push_back({"conv_lstm", lstm_case()});
  out.push_back({"dannet_conv", dannet_case(Topology::kConv, 1)});
  out.push_back({"dannet_dense", dannet_case(Topology::kDense, 1)});
  out.push_back({"dannet_conv_multiclass", dannet_case(Topology::kConv, 3)});
  out.push_back({"seqnet_forward", seqnet_case(false)});
  out.push_back({"seqnet_bidirectional", seqnet_case(true)});
  out.push_back({"dan_loss_convlstm", dan_loss_case(AgentKind::kConvLstmDan, Topology::kConv)});
  out.push_back({"dan_loss_convlstm_dense", dan_loss_case(AgentKind::kConvLstmDan, Topology::kDense)});
  out.push_back({"dan_loss_predictive", dan_loss_case(AgentKind::kPredictiveDan, Topology::kConv)});
  out.push_back({"dan_loss_infomax", dan_loss_case(AgentKind::kInfoMaxDan, Topology::kConv)});
  out.push_back({"dan_loss_partial", dan_loss_case(AgentKind::kConvLstmDan, Topology::kConv, true)});
  return out;
}

}  // namespace gradcase
