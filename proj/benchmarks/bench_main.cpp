#include <benchmark/benchmark.h>

#include <random>

#include "specmon/baselines.hpp"
#include "specmon/dan.hpp"
#include "specmon/hypothesis.hpp"
#include "specmon/spec_io.hpp"

using namespace specmon;

namespace {

nn::NetworkConfig net_config(nn::Topology topology) {
  auto c = default_network(AgentKind::kConvLstmDan, 20, 1);
  c.topology = topology;
  return c;
}

void BM_NetworkStep(benchmark::State& state) {
  const nn::DanNet<float> net(net_config(static_cast<nn::Topology>(state.range(0))));
  auto s = net.initial_state();
  std::vector<float> x(net.config().input_size(), 0.0F);
  x[3] = 1.0F;
  nn::DanNet<float>::Heads heads;
  for (auto _ : state) {
    net.step(x, s);
    net.heads(s, heads);
    benchmark::DoNotOptimize(heads.q.data());
  }
}
BENCHMARK(BM_NetworkStep)->Arg(static_cast<int>(nn::Topology::kConv))->Arg(static_cast<int>(nn::Topology::kDense));

void BM_ForwardBackward(benchmark::State& state) {
  nn::DanNet<float> net(net_config(nn::Topology::kConv));
  const int steps = 100;
  const int batch = static_cast<int>(state.range(0));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0.0F, 1.0F);
  std::vector<float> x(static_cast<std::size_t>(net.config().input_size()) * steps * batch);
  for (auto& v : x) v = u(rng) < 0.1F ? 1.0F : 0.0F;
  nn::DanNet<float>::Trace tr;
  nn::DanNet<float>::OutputGrads g;
  for (auto _ : state) {
    net.forward(x, steps, batch, tr);
    g.m_logit.assign(tr.m_logit.size(), 0.01F);
    g.p_logit.assign(tr.p_logit.size(), 0.0F);
    g.q.assign(tr.q.size(), 0.01F);
    net.params().zero_grad();
    net.backward(tr, g);
    benchmark::DoNotOptimize(net.params().grads().data());
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_ForwardBackward)->Arg(1)->Arg(8);

void BM_HypothesisEpisode(benchmark::State& state) {
  const auto spec = builtin_spec(state.range(0) == 0 ? "A" : "C2");
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto env = sample_environment(spec, ++seed);
    HypothesisSet hs(spec);
    for (int t = 0; t < 100; ++t) {
      const int band = (t * 7) % spec.n_bands;
      hs.eliminate(t, band, env.observe(t, band).detection);
    }
    benchmark::DoNotOptimize(hs.total_candidates());
  }
}
BENCHMARK(BM_HypothesisEpisode)->Arg(0)->Arg(1);

void BM_ExpertEpisode(benchmark::State& state) {
  const auto spec = builtin_spec("A");
  ExpertController expert(spec);
  RunOptions opts;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto env = sample_environment(spec, ++seed);
    benchmark::DoNotOptimize(run_episode(expert, env, opts, seed, spec.name).cumulative_iou());
  }
}
BENCHMARK(BM_ExpertEpisode);

void BM_DanRollout(benchmark::State& state) {
  const auto spec = builtin_spec("A");
  DanAgent agent(AgentKind::kConvLstmDan, default_network(AgentKind::kConvLstmDan, 20, 1), DanReward::kInstantIoU);
  TrainConfig cfg;
  std::mt19937_64 rng(1);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto env = sample_environment(spec, ++seed);
    benchmark::DoNotOptimize(rollout(agent, env, cfg, 0.1, rng).steps());
  }
}
BENCHMARK(BM_DanRollout);

}  // namespace

BENCHMARK_MAIN();
