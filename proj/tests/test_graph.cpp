#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include <doctest.h>

#include "gograd/graph.hpp"
#include "test_oracles.hpp"

using namespace gograd;
using testing_oracles::Accumulator;
using testing_oracles::Dual;

namespace {

// Independent forward pass over a transform description with dual numbers;
// differentiates wrt one scalar (an input coordinate or a weight), giving
// exact chain-rule derivatives to machine precision.
std::vector<Dual> dual_forward(const ParamTransform& t,
                               std::vector<Dual> x,
                               const std::vector<Dual>& w) {
  size_t woff = 0;
  for (const auto& s : t.stages()) {
    switch (s.op) {
      case StageOp::kAffine: {
        const size_t din = x.size();
        const size_t dout = static_cast<size_t>(s.out_dim);
        std::vector<Dual> y(dout);
        for (size_t i = 0; i < dout; ++i) {
          Dual acc = w[woff + dout * din + i];  // bias
          for (size_t j = 0; j < din; ++j) {
            acc = acc + w[woff + i * din + j] * x[j];
          }
          y[i] = acc;
        }
        woff += dout * din + dout;
        x = std::move(y);
        break;
      }
      case StageOp::kExp:
        for (auto& v : x) v = testing_oracles::dual_exp(v);
        break;
      case StageOp::kSoftplus:
        for (auto& v : x) v = testing_oracles::dual_softplus(v);
        break;
      case StageOp::kSigmoid:
        for (auto& v : x) v = testing_oracles::dual_sigmoid(v);
        break;
      case StageOp::kTanh:
        for (auto& v : x) v = testing_oracles::dual_tanh(v);
        break;
      case StageOp::kIdentity:
        break;
      case StageOp::kScalePositive:
        for (size_t i = 0; i < x.size(); ++i) {
          x[i] = testing_oracles::dual_softplus(w[woff + i]) * x[i];
        }
        woff += x.size();
        break;
    }
  }
  return x;
}

ParamTransform bias_only(double) { return ParamTransform(0, {{StageOp::kAffine, 1}}); }

}  // namespace

TEST_CASE("transform jacobians match finite differences (1e3 draws)") {
  const std::vector<std::vector<Stage>> shapes = {
      {{StageOp::kAffine, 3}, {StageOp::kTanh}, {StageOp::kAffine, 2}},
      {{StageOp::kAffine, 4}, {StageOp::kSigmoid}},
      {{StageOp::kAffine, 2}, {StageOp::kSoftplus}, {StageOp::kScalePositive}},
      {{StageOp::kIdentity}, {StageOp::kAffine, 1}, {StageOp::kExp}},
  };
  RngStream rng(21);
  int draws = 0;
  for (int rep = 0; rep < 130 && draws < 1000; ++rep) {
    for (const auto& shape : shapes) {
      const int in_dim = 3;
      ParamTransform t(in_dim, shape);
      std::vector<double> x(in_dim), w(static_cast<size_t>(t.weight_count()));
      for (auto& v : x) v = rng.normal();
      for (auto& v : w) v = 0.7 * rng.normal();

      ParamTransform::Trace trace;
      (void)t.forward(x, w, &trace);

      // Assemble J^T e_i rows via vjp and compare against central FD.
      for (int i = 0; i < t.out_dim(); ++i) {
        std::vector<double> cot(static_cast<size_t>(t.out_dim()), 0.0);
        cot[static_cast<size_t>(i)] = 1.0;
        std::vector<double> gx(static_cast<size_t>(in_dim), 0.0);
        std::vector<double> gw(static_cast<size_t>(t.weight_count()), 0.0);
        t.vjp(trace, w, cot, gx, gw);

        for (int j = 0; j < in_dim; ++j) {
          auto f = [&](double d) {
            auto xx = x;
            xx[static_cast<size_t>(j)] += d;
            return t.forward(xx, w)[static_cast<size_t>(i)];
          };
          const double h = 1e-5 * std::max(1.0, std::fabs(x[static_cast<size_t>(j)]));
          CHECK(gx[static_cast<size_t>(j)] ==
                doctest::Approx(testing_oracles::fd_central(f, 0.0, h))
                    .epsilon(1e-6).scale(1.0));
        }
        for (int j = 0; j < t.weight_count(); j += 3) {
          auto f = [&](double d) {
            auto ww = w;
            ww[static_cast<size_t>(j)] += d;
            return t.forward(x, ww)[static_cast<size_t>(i)];
          };
          const double h = 1e-5 * std::max(1.0, std::fabs(w[static_cast<size_t>(j)]));
          CHECK(gw[static_cast<size_t>(j)] ==
                doctest::Approx(testing_oracles::fd_central(f, 0.0, h))
                    .epsilon(1e-6).scale(1.0));
        }
        ++draws;
      }
    }
  }
  CHECK(draws >= 1000);
}

TEST_CASE("all-delta two-layer chain recovers the analytic chain rule") {
  // x = 2 (bias node), y = a x, z = b y, f = z
  std::vector<NodeSpec> nodes;
  nodes.push_back({"x", Family::kDelta, {}, {bias_only(0)}, NodeRole::kInternal, 1});
  nodes.push_back({"y", Family::kDelta, {"x"},
                   {ParamTransform(1, {{StageOp::kAffine, 1}})},
                   NodeRole::kInternal, 1});
  nodes.push_back({"z", Family::kDelta, {"y"},
                   {ParamTransform(1, {{StageOp::kAffine, 1}})},
                   NodeRole::kLeaf, 1});
  StochasticGraph g(std::move(nodes));
  REQUIRE(g.weight_count() == 5);  // bias_x, a, b_y, b, b_z

  std::vector<double> w(5, 0.0);
  w[static_cast<size_t>(g.slice("x", 0).offset)] = 2.0;       // x
  w[static_cast<size_t>(g.slice("y", 0).offset)] = 3.0;       // a
  w[static_cast<size_t>(g.slice("z", 0).offset)] = 4.0;       // b

  RngStream rng(5);
  const auto a = g.forward_sample(w, rng);
  CHECK(a.at("y")[0] == 6.0);
  CHECK(a.at("z")[0] == 24.0);

  const auto grad = g.statistical_backprop(w, a, {{"z", {1.0}}});
  CHECK(grad[static_cast<size_t>(g.slice("y", 0).offset)] ==
        doctest::Approx(8.0).epsilon(1e-12));  // d z / d a = b x
  CHECK(grad[static_cast<size_t>(g.slice("z", 0).offset)] ==
        doctest::Approx(6.0).epsilon(1e-12));  // d z / d b = a x
}

TEST_CASE("corollary: random all-delta graphs equal dual-number gradients") {
  RngStream master(31);
  for (int trial = 0; trial < 100; ++trial) {
    RngStream rng = master.substream(static_cast<std::uint64_t>(trial));
    const int depth = 2 + static_cast<int>(rng.uniform() * 4);  // <= 5
    std::vector<NodeSpec> nodes;
    std::vector<int> dims;
    for (int l = 0; l < depth; ++l) {
      const int dim = 1 + static_cast<int>(rng.uniform() * 3);
      dims.push_back(dim);
      std::vector<Stage> stages;
      const int in_dim = l == 0 ? 0 : dims[static_cast<size_t>(l - 1)];
      stages.push_back({StageOp::kAffine, dim});
      const double pick = rng.uniform();
      if (pick < 0.25) stages.push_back({StageOp::kTanh});
      else if (pick < 0.5) stages.push_back({StageOp::kSigmoid});
      else if (pick < 0.7) stages.push_back({StageOp::kSoftplus});
      else if (pick < 0.85) stages.push_back({StageOp::kScalePositive});
      NodeSpec n;
      n.id = "n" + std::to_string(l);
      n.family = Family::kDelta;
      if (l > 0) n.parents = {"n" + std::to_string(l - 1)};
      n.param_transforms.push_back(ParamTransform(in_dim, std::move(stages)));
      n.role = l == depth - 1 ? NodeRole::kLeaf : NodeRole::kInternal;
      n.dim = dim;
      nodes.push_back(std::move(n));
    }
    StochasticGraph g(std::move(nodes));
    std::vector<double> w(static_cast<size_t>(g.weight_count()));
    for (auto& v : w) v = 0.8 * rng.normal();

    RngStream srng(1);
    const auto a = g.forward_sample(w, srng);
    const auto& leaf = g.nodes().back();
    // f = sum of leaf coordinates
    std::map<std::string, std::vector<double>> leaf_d;
    leaf_d[leaf.id] = std::vector<double>(static_cast<size_t>(leaf.dim), 1.0);
    const auto grad = g.statistical_backprop(w, a, leaf_d);

    // Dual-number oracle: perturb each weight, run the full deterministic
    // composition forward, and sum the leaf outputs.
    for (int k = 0; k < g.weight_count(); k += 2) {
      std::vector<Dual> dw(w.size());
      for (size_t i = 0; i < w.size(); ++i) dw[i] = {w[i], 0.0};
      dw[static_cast<size_t>(k)].d = 1.0;
      std::vector<Dual> cur;  // empty input for the root
      size_t woff = 0;
      for (const auto& n : g.nodes()) {
        const auto& t = n.param_transforms[0];
        std::vector<Dual> wslice(
            dw.begin() + static_cast<long>(woff),
            dw.begin() + static_cast<long>(woff) + t.weight_count());
        cur = dual_forward(t, cur, wslice);
        woff += static_cast<size_t>(t.weight_count());
      }
      Dual f{0.0, 0.0};
      for (const auto& v : cur) f = f + v;
      CHECK(std::fabs(grad[static_cast<size_t>(k)] - f.d) <= 1e-12);
    }
  }
}

namespace {

StochasticGraph gaussian_chain() {
  // lambda ~ N(m, 1), y | lambda ~ N(lambda, 1)
  std::vector<NodeSpec> nodes;
  nodes.push_back({"lambda", Family::kNormal, {},
                   {bias_only(0), bias_only(0)}, NodeRole::kInternal, 1});
  nodes.push_back({"y", Family::kNormal, {"lambda"},
                   {ParamTransform(1, {{StageOp::kAffine, 1}}),
                    ParamTransform(1, {{StageOp::kAffine, 1}})},
                   NodeRole::kLeaf, 1});
  return StochasticGraph(std::move(nodes));
}

std::vector<double> gaussian_chain_weights(const StochasticGraph& g, double m) {
  std::vector<double> w(static_cast<size_t>(g.weight_count()), 0.0);
  w[static_cast<size_t>(g.slice("lambda", 0).offset)] = m;
  w[static_cast<size_t>(g.slice("lambda", 1).offset)] = 1.0;  // sigma
  // y's mean transform: W = 1, b = 0; y's sigma transform: W = 0, b = 1
  w[static_cast<size_t>(g.slice("y", 0).offset)] = 1.0;
  w[static_cast<size_t>(g.slice("y", 1).offset) + 1] = 1.0;
  return w;
}

}  // namespace

TEST_CASE("two-layer gaussian chain: m-gradient is exactly 1 per sample") {
  const auto g = gaussian_chain();
  const auto w = gaussian_chain_weights(g, 0.6);
  IntegrandSpec f;
  f.eval = [](std::span<const double> y) { return y[0]; };
  f.grad = [](std::span<const double> y) {
    return std::vector<double>(y.size(), 1.0);
  };
  const int m_index = g.slice("lambda", 0).offset;
  RngStream rng(8);
  for (int i = 0; i < 200; ++i) {
    RngStream sub = rng.substream(static_cast<std::uint64_t>(i));
    const auto est = deep_go_gradient(g, f, 1, w, sub);
    CHECK(est.per_param[static_cast<size_t>(m_index)] == 1.0);
  }
}

TEST_CASE("two-layer gaussian chain forward marginal is N(m, 2)") {
  const auto g = gaussian_chain();
  const double m = 0.6;
  const auto w = gaussian_chain_weights(g, m);
  RngStream rng(9);
  const long n = 100000;
  std::vector<double> ys(static_cast<size_t>(n));
  for (auto& y : ys) {
    const auto a = g.forward_sample(w, rng);
    y = a.at("y")[0];
  }
  const double ks = testing_oracles::ks_statistic(ys, [m](double y) {
    return 0.5 * std::erfc(-(y - m) / std::sqrt(2.0 * 2.0));
  });
  CHECK(ks < testing_oracles::ks_critical(static_cast<double>(n), 1e-3));
}

TEST_CASE("gamma-poisson chain: alpha-gradient of E[y] is 1") {
  // lambda ~ Gamma(alpha, 1), y | lambda ~ Poisson(lambda); E[y] = alpha.
  std::vector<NodeSpec> nodes;
  nodes.push_back({"lambda", Family::kGamma, {},
                   {bias_only(0), bias_only(0)}, NodeRole::kInternal, 1});
  nodes.push_back({"y", Family::kPoisson, {"lambda"},
                   {ParamTransform(1, {{StageOp::kAffine, 1}})},
                   NodeRole::kLeaf, 1});
  StochasticGraph g(std::move(nodes));
  std::vector<double> w(static_cast<size_t>(g.weight_count()), 0.0);
  const int alpha_index = g.slice("lambda", 0).offset;
  w[static_cast<size_t>(alpha_index)] = 2.0;
  w[static_cast<size_t>(g.slice("lambda", 1).offset)] = 1.0;
  w[static_cast<size_t>(g.slice("y", 0).offset)] = 1.0;

  IntegrandSpec f;
  f.eval = [](std::span<const double> y) { return y[0]; };
  RngStream rng(10);
  Accumulator acc;
  for (int i = 0; i < 200000; ++i) {
    RngStream sub = rng.substream(static_cast<std::uint64_t>(i));
    const auto est = deep_go_gradient(g, f, 1, w, sub);
    acc.add(std::vector<double>{est.per_param[static_cast<size_t>(alpha_index)]});
  }
  const auto stats = acc.finish();
  CHECK(std::fabs(stats.mean[0] - 1.0) <= 5.0 * stats.se[0]);
}

TEST_CASE("discrete internal nodes are rejected at construction") {
  std::vector<NodeSpec> nodes;
  nodes.push_back({"z", Family::kBernoulli, {}, {bias_only(0)},
                   NodeRole::kInternal, 1});
  nodes.push_back({"y", Family::kNormal, {"z"},
                   {ParamTransform(1, {{StageOp::kAffine, 1}}),
                    ParamTransform(1, {{StageOp::kAffine, 1}, {StageOp::kSoftplus}})},
                   NodeRole::kLeaf, 1});
  CHECK_THROWS_AS(StochasticGraph(std::move(nodes)), std::invalid_argument);
}

TEST_CASE("graph construction rejects cycles and bad references") {
  {
    std::vector<NodeSpec> nodes;
    nodes.push_back({"a", Family::kDelta, {"b"},
                     {ParamTransform(1, {{StageOp::kAffine, 1}})},
                     NodeRole::kInternal, 1});
    nodes.push_back({"b", Family::kDelta, {"a"},
                     {ParamTransform(1, {{StageOp::kAffine, 1}})},
                     NodeRole::kLeaf, 1});
    CHECK_THROWS_AS(StochasticGraph(std::move(nodes)), std::invalid_argument);
  }
  {
    std::vector<NodeSpec> nodes;
    nodes.push_back({"a", Family::kDelta, {"ghost"},
                     {ParamTransform(1, {{StageOp::kAffine, 1}})},
                     NodeRole::kLeaf, 1});
    CHECK_THROWS_AS(StochasticGraph(std::move(nodes)), std::invalid_argument);
  }
  {
    // internal node with no children
    std::vector<NodeSpec> nodes;
    nodes.push_back({"a", Family::kDelta, {}, {bias_only(0)},
                     NodeRole::kInternal, 1});
    nodes.push_back({"b", Family::kDelta, {}, {bias_only(0)},
                     NodeRole::kLeaf, 1});
    CHECK_THROWS_AS(StochasticGraph(std::move(nodes)), std::invalid_argument);
  }
}

TEST_CASE("parameter-domain violations in transforms are flagged") {
  // sigma transform produces a negative value
  std::vector<NodeSpec> nodes;
  nodes.push_back({"y", Family::kNormal, {}, {bias_only(0), bias_only(0)},
                   NodeRole::kLeaf, 1});
  StochasticGraph g(std::move(nodes));
  std::vector<double> w(static_cast<size_t>(g.weight_count()), 0.0);
  w[static_cast<size_t>(g.slice("y", 1).offset)] = -2.0;
  RngStream rng(3);
  CHECK_THROWS_AS((void)g.forward_sample(w, rng), std::domain_error);
}

TEST_CASE("depth-1 chain reduces bit-exactly to the flat estimator") {
  std::vector<NodeSpec> nodes;
  nodes.push_back({"y", Family::kNormal, {}, {bias_only(0), bias_only(0)},
                   NodeRole::kLeaf, 1});
  StochasticGraph g(std::move(nodes));
  std::vector<double> w(2);
  w[static_cast<size_t>(g.slice("y", 0).offset)] = 0.4;
  w[static_cast<size_t>(g.slice("y", 1).offset)] = 1.3;

  IntegrandSpec f;
  f.eval = [](std::span<const double> y) { return y[0] * y[0]; };
  f.grad = [](std::span<const double> y) {
    return std::vector<double>{2.0 * y[0]};
  };
  const auto d = Distribution::normal(0.4, 1.3);
  for (int i = 0; i < 100; ++i) {
    RngStream a = RngStream(55).substream(static_cast<std::uint64_t>(i));
    RngStream b = RngStream(55).substream(static_cast<std::uint64_t>(i));
    const auto deep = deep_go_gradient(g, f, 3, w, a);
    const auto flat = go_gradient({d}, f, 3, b);
    CHECK(deep.per_param[0] == flat.per_param[0]);
    CHECK(deep.per_param[1] == flat.per_param[1]);
  }
}

TEST_CASE("deep estimator rejects non-chain graphs") {
  std::vector<NodeSpec> nodes;
  nodes.push_back({"a", Family::kNormal, {}, {bias_only(0), bias_only(0)},
                   NodeRole::kInternal, 1});
  nodes.push_back({"b", Family::kNormal, {"a"},
                   {ParamTransform(1, {{StageOp::kAffine, 1}}),
                    ParamTransform(1, {{StageOp::kAffine, 1}, {StageOp::kSoftplus}})},
                   NodeRole::kLeaf, 1});
  nodes.push_back({"c", Family::kNormal, {"a"},
                   {ParamTransform(1, {{StageOp::kAffine, 1}}),
                    ParamTransform(1, {{StageOp::kAffine, 1}, {StageOp::kSoftplus}})},
                   NodeRole::kLeaf, 1});
  std::vector<double> w;
  StochasticGraph g(std::move(nodes));
  w.assign(static_cast<size_t>(g.weight_count()), 0.1);
  IntegrandSpec f;
  f.eval = [](std::span<const double> y) { return y[0]; };
  RngStream rng(1);
  CHECK_THROWS_AS((void)deep_go_gradient(g, f, 1, w, rng),
                  std::invalid_argument);
}

TEST_CASE("BP accumulation is linear in the leaf contribution") {
  const auto g = gaussian_chain();
  const auto w = gaussian_chain_weights(g, -0.2);
  RngStream rng(12);
  const auto a = g.forward_sample(w, rng);
  const auto g1 = g.statistical_backprop(w, a, {{"y", {0.7}}});
  const auto g2 = g.statistical_backprop(w, a, {{"y", {1.4}}});
  for (size_t k = 0; k < g1.size(); ++k) {
    CHECK(g2[k] == doctest::Approx(2.0 * g1[k]).epsilon(1e-13));
  }
}

TEST_CASE("direct integrand dependence on an internal node adds its D term") {
  // f(lambda, y) = y + lambda: BP[lambda] gains a direct unit entry.
  const auto g = gaussian_chain();
  const auto w = gaussian_chain_weights(g, 0.0);
  RngStream rng(13);
  const auto a = g.forward_sample(w, rng);
  const int m_index = g.slice("lambda", 0).offset;
  const auto base = g.statistical_backprop(w, a, {{"y", {1.0}}});
  const auto with_direct =
      g.statistical_backprop(w, a, {{"y", {1.0}}, {"lambda", {1.0}}});
  CHECK(base[static_cast<size_t>(m_index)] == doctest::Approx(1.0));
  CHECK(with_direct[static_cast<size_t>(m_index)] == doctest::Approx(2.0));
}

TEST_CASE("delta leaf over a normal internal equals the pathwise gradient") {
  // eps ~ N(0,1) internal, z = w_z eps + c_z deterministic leaf:
  // gradients wrt (w_z, c_z) must equal E[(eps, 1) f'(z)] per sample.
  std::vector<NodeSpec> nodes;
  nodes.push_back({"eps", Family::kNormal, {}, {bias_only(0), bias_only(0)},
                   NodeRole::kInternal, 1});
  nodes.push_back({"z", Family::kDelta, {"eps"},
                   {ParamTransform(1, {{StageOp::kAffine, 1}})},
                   NodeRole::kLeaf, 1});
  StochasticGraph g(std::move(nodes));
  std::vector<double> w(static_cast<size_t>(g.weight_count()), 0.0);
  w[static_cast<size_t>(g.slice("eps", 1).offset)] = 1.0;
  const int wz = g.slice("z", 0).offset;
  w[static_cast<size_t>(wz)] = 1.9;      // scale
  w[static_cast<size_t>(wz) + 1] = 0.3;  // shift

  IntegrandSpec f;
  f.eval = [](std::span<const double> y) { return y[0] * y[0]; };
  f.grad = [](std::span<const double> y) {
    return std::vector<double>{2.0 * y[0]};
  };
  for (int i = 0; i < 100; ++i) {
    RngStream a = RngStream(91).substream(static_cast<std::uint64_t>(i));
    RngStream b = RngStream(91).substream(static_cast<std::uint64_t>(i));
    const auto est = deep_go_gradient(g, f, 1, w, a);
    const double eps = Distribution::normal(0.0, 1.0).sample(b);
    const double z = 1.9 * eps + 0.3;
    CHECK(std::fabs(est.per_param[static_cast<size_t>(wz)] -
                    eps * 2.0 * z) <= 1e-12);
    CHECK(std::fabs(est.per_param[static_cast<size_t>(wz) + 1] -
                    2.0 * z) <= 1e-12);
  }
}

TEST_CASE("graph json parsing and weight checkpoint round trip") {
  const std::string doc = R"({
    "nodes": [
      {"id": "lambda", "family": "gamma", "parents": [], "dim": 1,
       "role": "internal",
       "transform": [
         [{"op": "affine", "out": 1}, {"op": "softplus"}],
         [{"op": "affine", "out": 1}, {"op": "softplus"}]
       ]},
      {"id": "y", "family": "poisson", "parents": ["lambda"], "dim": 1,
       "role": "leaf",
       "transform": [{"op": "affine", "out": 1}, {"op": "softplus"}]}
    ]
  })";
  const auto g = StochasticGraph::from_json(doc);
  CHECK(g.nodes().size() == 2);
  CHECK(g.is_chain());
  CHECK(g.weight_count() == 1 + 1 + 2);  // two root biases, then W and b

  RngStream rng(14);
  const auto w = g.init_weights(rng);
  REQUIRE(static_cast<int>(w.size()) == g.weight_count());
  write_weights(g, w, "graph_test_weights.bin", "graph_test_weights.json");
  const auto back =
      read_weights(g, "graph_test_weights.bin", "graph_test_weights.json");
  REQUIRE(back.size() == w.size());
  for (size_t i = 0; i < w.size(); ++i) CHECK(back[i] == w[i]);

  RngStream srng(15);
  const auto a = g.forward_sample(w, srng);
  CHECK(a.count("lambda") == 1);
  CHECK(a.count("y") == 1);
  CHECK(a.at("y")[0] >= 0.0);

  CHECK_THROWS_AS(StochasticGraph::from_json("{\"nodes\": 3}"),
                  std::invalid_argument);
}
