#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "gograd/distribution.hpp"
#include "gograd/estimators.hpp"
#include "gograd/graph.hpp"
#include "gograd/special_functions.hpp"

using namespace gograd;

namespace {

void BM_RegGammaP_Series(benchmark::State& state) {
  double x = 0.1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sf::reg_gamma_p(2.5, x));
    x = x < 3.0 ? x + 0.01 : 0.1;  // stay in the series region
  }
}
BENCHMARK(BM_RegGammaP_Series);

void BM_RegGammaP_ContinuedFraction(benchmark::State& state) {
  double x = 4.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sf::reg_gamma_p(2.5, x));
    x = x < 20.0 ? x + 0.01 : 4.0;
  }
}
BENCHMARK(BM_RegGammaP_ContinuedFraction);

void BM_GradRegGammaP_SeriesBackend(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(sf::grad_reg_gamma_p_wrt_a_series(2.5, 1.5));
  }
}
BENCHMARK(BM_GradRegGammaP_SeriesBackend);

void BM_GradRegGammaP_FdBackend(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(sf::grad_reg_gamma_p_wrt_a_fd(2.5, 6.0));
  }
}
BENCHMARK(BM_GradRegGammaP_FdBackend);

void BM_GradRegBeta(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        sf::grad_reg_beta_wrt_shape(0.8, 10.0, 11.0, sf::BetaShape::kA));
  }
}
BENCHMARK(BM_GradRegBeta);

IntegrandSpec square_integrand() {
  return scalar_integrand([](double y) { return y * y; },
                          [](double y) { return 2.0 * y; });
}

void BM_GoGradient_Normal(benchmark::State& state) {
  const auto d = Distribution::normal(0.5, 1.2);
  const auto f = square_integrand();
  RngStream rng(1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(go_gradient({d}, f, 1, rng));
  }
}
BENCHMARK(BM_GoGradient_Normal);

void BM_GoGradient_Gamma(benchmark::State& state) {
  const auto d = Distribution::gamma(2.0, 3.0);
  const auto f = square_integrand();
  RngStream rng(1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(go_gradient({d}, f, 1, rng));
  }
}
BENCHMARK(BM_GoGradient_Gamma);

void BM_GoGradient_NegativeBinomial(benchmark::State& state) {
  const auto d = Distribution::negative_binomial(10.0, 0.2);
  const auto f = square_integrand();
  RngStream rng(1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(go_gradient({d}, f, 1, rng));
  }
}
BENCHMARK(BM_GoGradient_NegativeBinomial);

void BM_Reinforce_Normal(benchmark::State& state) {
  const auto d = Distribution::normal(0.5, 1.2);
  const auto f = square_integrand();
  RngStream rng(1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(reinforce_gradient({d}, f, 1, rng));
  }
}
BENCHMARK(BM_Reinforce_Normal);

// Batched single-coordinate flips against the naive coordinate loop for an
// affine-sigmoid readout; the gap grows with the number of bits.
struct FlipSetup {
  std::vector<Distribution> bits;
  IntegrandSpec naive;
  IntegrandSpec batched;
  std::vector<double> w;
  int V;
};

FlipSetup make_flip_setup(int V) {
  FlipSetup s;
  s.V = V;
  RngStream init(9);
  s.w.resize(static_cast<size_t>(V));
  for (auto& x : s.w) x = init.normal();
  const auto& w = s.w;
  auto eval = [&w, V](std::span<const double> y) {
    double acc = 0.3;
    for (int v = 0; v < V; ++v) acc += w[static_cast<size_t>(v)] * y[static_cast<size_t>(v)];
    return 1.0 / (1.0 + std::exp(-acc));
  };
  s.naive.eval = eval;
  s.batched.eval = eval;
  // One pass over the pre-activation, as in the batched-flip derivation.
  s.batched.flip_eval = [&w, V, eval](std::span<const double> y) {
    double acc = 0.3;
    for (int v = 0; v < V; ++v) acc += w[static_cast<size_t>(v)] * y[static_cast<size_t>(v)];
    std::vector<double> out(static_cast<size_t>(V));
    for (int v = 0; v < V; ++v) {
      const double a = y[static_cast<size_t>(v)] == 0.0 ? 1.0 : -1.0;
      const double flipped = acc + a * w[static_cast<size_t>(v)];
      out[static_cast<size_t>(v)] = 1.0 / (1.0 + std::exp(-flipped));
    }
    return out;
  };
  for (int v = 0; v < V; ++v) {
    s.bits.push_back(Distribution::bernoulli(0.3 + 0.4 * (v % 2)));
  }
  return s;
}

void BM_FiniteSupport_NaiveFlips(benchmark::State& state) {
  auto s = make_flip_setup(static_cast<int>(state.range(0)));
  RngStream rng(2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        go_gradient_finite_support(s.bits, s.naive, 1, rng));
  }
}
BENCHMARK(BM_FiniteSupport_NaiveFlips)->Arg(8)->Arg(64)->Arg(256);

void BM_FiniteSupport_BatchedFlips(benchmark::State& state) {
  auto s = make_flip_setup(static_cast<int>(state.range(0)));
  RngStream rng(2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        go_gradient_finite_support(s.bits, s.batched, 1, rng));
  }
}
BENCHMARK(BM_FiniteSupport_BatchedFlips)->Arg(8)->Arg(64)->Arg(256);

void BM_DeepChain_SampleAndBackprop(benchmark::State& state) {
  std::vector<NodeSpec> nodes;
  auto bias1 = [] { return ParamTransform(0, {{StageOp::kAffine, 1}}); };
  nodes.push_back({"lambda", Family::kNormal, {}, {bias1(), bias1()},
                   NodeRole::kInternal, 1});
  nodes.push_back({"y", Family::kNormal, {"lambda"},
                   {ParamTransform(1, {{StageOp::kAffine, 1}}),
                    ParamTransform(1, {{StageOp::kAffine, 1}})},
                   NodeRole::kLeaf, 1});
  StochasticGraph g(std::move(nodes));
  std::vector<double> w(static_cast<size_t>(g.weight_count()), 0.0);
  w[static_cast<size_t>(g.slice("lambda", 1).offset)] = 1.0;
  w[static_cast<size_t>(g.slice("y", 0).offset)] = 1.0;
  w[static_cast<size_t>(g.slice("y", 1).offset) + 1] = 1.0;
  const auto f = square_integrand();
  RngStream rng(3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(deep_go_gradient(g, f, 1, w, rng));
  }
}
BENCHMARK(BM_DeepChain_SampleAndBackprop);

}  // namespace

BENCHMARK_MAIN();
