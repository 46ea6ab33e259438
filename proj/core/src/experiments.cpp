#include "gograd/experiments.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <thread>
#include <stdexcept>

#include <json.hpp>

#include "gograd/oracle.hpp"
#include "gograd/special_functions.hpp"

namespace gograd {

namespace {

[[noreturn]] void config_fail(const std::string& key, const std::string& why) {
  throw ConfigError(key + ": " + why);
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double softplus_inv(double y) { return y + std::log(-std::expm1(-y)); }

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

std::uint64_t tag_hash(const std::string& tag) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (unsigned char c : tag) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void check_finite(long iteration, std::span<const double> v,
                  const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericalError(iteration, std::string(what) + " is not finite");
    }
  }
}

// First-order ascent on an unconstrained vector.
class Ascent {
 public:
  Ascent(const OptimizerConfig& cfg, size_t dim)
      : cfg_(cfg), m_(dim, 0.0), v_(dim, 0.0) {}

  void step(std::vector<double>& u, std::span<const double> grad) {
    ++t_;
    if (cfg_.kind == "sgd") {
      for (size_t i = 0; i < u.size(); ++i) {
        u[i] += cfg_.learning_rate * grad[i];
      }
      return;
    }
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (size_t i = 0; i < u.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      u[i] += cfg_.learning_rate * (m_[i] / bc1) /
              (std::sqrt(v_[i] / bc2) + cfg_.eps);
    }
  }

 private:
  OptimizerConfig cfg_;
  std::vector<double> m_, v_;
  int t_ = 0;
};

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

struct ProbeStats {
  std::vector<double> variance;  // unbiased, per parameter
  std::vector<double> last;      // final probe, used for the update
  std::vector<double> mean;
};

// Runs `probes` one-sample estimates off substreams of rng and returns
// their variance plus the last estimate. Each probe owns substream j, so
// the fan-out across threads changes nothing: estimates land in per-probe
// slots and are reduced in fixed probe order.
ProbeStats run_probes(
    const std::function<GradientEstimate(RngStream&)>& estimator, int probes,
    RngStream& rng, long iteration, int threads) {
  std::vector<std::vector<double>> slots(static_cast<size_t>(probes));
  auto worker = [&](int begin, int step) {
    for (int j = begin; j < probes; j += step) {
      RngStream sub = rng.substream(static_cast<std::uint64_t>(j));
      slots[static_cast<size_t>(j)] = estimator(sub).per_param;
    }
  };
  if (threads <= 1) {
    worker(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker, t, threads);
    for (auto& th : pool) th.join();
  }

  ProbeStats st;
  st.mean.assign(slots.front().size(), 0.0);
  st.variance.assign(slots.front().size(), 0.0);
  for (int j = 0; j < probes; ++j) {
    const auto& est = slots[static_cast<size_t>(j)];
    check_finite(iteration, est, "gradient estimate");
    for (size_t k = 0; k < est.size(); ++k) {
      const double delta = est[k] - st.mean[k];
      st.mean[k] += delta / static_cast<double>(j + 1);
      st.variance[k] += delta * (est[k] - st.mean[k]);
    }
  }
  st.last = slots.back();
  for (double& v : st.variance) v /= static_cast<double>(probes - 1);
  return st;
}

void validate_common(const ExperimentConfig& c) {
  if (c.optimizer.learning_rate <= 0.0) {
    config_fail("learning_rate", "must be > 0");
  }
  if (c.optimizer.kind != "adam" && c.optimizer.kind != "sgd") {
    config_fail("optimizer", "must be 'adam' or 'sgd'");
  }
  if (c.iterations < 1) config_fail("iterations", "must be >= 1");
  if (c.variance_probes < 2) config_fail("variance_probes", "must be >= 2");
  if (c.threads < 1) config_fail("threads", "must be >= 1");
  if (c.estimators.empty()) config_fail("estimators", "must be nonempty");
}

}  // namespace

void ExperimentConfig::validate() const {
  if (experiment != "gamma_toy" && experiment != "nb_toy" &&
      experiment != "bernoulli_vae" && experiment != "unbiasedness_suite") {
    config_fail("experiment",
                "must be one of gamma_toy, nb_toy, bernoulli_vae, "
                "unbiasedness_suite");
  }
  if (experiment == "unbiasedness_suite") {
    if (suite_samples < 100) config_fail("suite_samples", "must be >= 100");
    return;
  }
  validate_common(*this);
  if (experiment == "gamma_toy" || experiment == "nb_toy") {
    if (target_params.size() != 2) {
      config_fail("target_params", "expects exactly 2 entries");
    }
    if (init_params.size() != 2) {
      config_fail("init_params", "expects exactly 2 entries");
    }
    const bool nb = experiment == "nb_toy";
    for (int i = 0; i < 2; ++i) {
      const bool prob = nb && i == 1;
      auto check = [&](double v, const char* key) {
        if (prob ? !(v > 0.0 && v < 1.0) : !(v > 0.0)) {
          config_fail(key, prob ? "entry 2 must lie in (0,1)"
                                : "entries must be positive");
        }
      };
      check(target_params[static_cast<size_t>(i)], "target_params");
      check(init_params[static_cast<size_t>(i)], "init_params");
    }
    for (const auto& tag : estimators) {
      const bool ok = tag == "go" || tag == "reinforce" ||
                      (nb && tag == "reinforce2");
      if (!ok) config_fail("estimators", "unknown estimator tag '" + tag + "'");
    }
  }
  if (experiment == "bernoulli_vae") {
    if (latent_bits < 1 || latent_bits > 16) {
      config_fail("latent_bits",
                  "must lie in [1, 16] (enumeration oracle is 2^K)");
    }
    if (data_dim < 1) config_fail("data_dim", "must be >= 1");
    if (n_data < 1) config_fail("n_data", "must be >= 1");
    if (checkpoint_every < 1) config_fail("checkpoint_every", "must be >= 1");
    if (checkpoint_probes < 2) config_fail("checkpoint_probes", "must be >= 2");
  }
}

void write_trace_csv(const std::string& path,
                     const std::vector<TraceRecord>& trace,
                     bool include_timing) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open trace file '" + path + "'");
  const size_t k = trace.empty() ? 0 : trace.front().param_values.size();
  out << "iteration";
  for (size_t i = 0; i < k; ++i) out << ",param_" << i;
  out << ",elbo";
  for (size_t i = 0; i < k; ++i) out << ",gradvar_" << i;
  out << ",wall_ms\n";
  char buf[40];
  auto put = [&](double v) {
    // shortest representation that round-trips exactly
    for (int prec = 15; prec <= 17; ++prec) {
      std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
      if (std::strtod(buf, nullptr) == v) break;
    }
    out << ',' << buf;
  };
  for (const auto& r : trace) {
    out << r.iteration;
    for (double v : r.param_values) put(v);
    put(r.elbo_estimate);
    for (double v : r.grad_variance) put(v);
    put(include_timing ? r.wall_clock_ms : 0.0);
    out << '\n';
  }
}

double gamma_kl(double a, double b, double a0, double b0) {
  return (a - a0) * sf::digamma(a) - sf::log_gamma(a) + sf::log_gamma(a0) +
         a0 * (std::log(b) - std::log(b0)) + a * (b0 - b) / b;
}

std::vector<double> gamma_kl_grad(double a, double b, double a0, double b0) {
  return {(a - a0) * sf::trigamma(a) + (b0 - b) / b,
          a0 / b - a * b0 / (b * b)};
}

double nb_kl(double r, double p, double r0, double p0) {
  const auto q = Distribution::negative_binomial(r, p);
  const auto t = Distribution::negative_binomial(r0, p0);
  double acc = 0.0;
  double mass = 0.0;
  for (long k = 0; k < 20000000; ++k) {
    const double y = static_cast<double>(k);
    const double lq = q.log_density(y);
    const double qk = std::exp(lq);
    acc += qk * (lq - t.log_density(y));
    mass += qk;
    if (1.0 - mass < 1e-12 && k > 10) break;
  }
  return acc;
}

namespace {

struct ToySetup {
  // Links from unconstrained u to the distribution parameters and the
  // diagonal Jacobian dparam/du.
  std::function<std::vector<double>(std::span<const double>)> to_params;
  std::function<std::vector<double>(std::span<const double>)> to_unconstrained;
  std::function<std::vector<double>(std::span<const double>)> link_jacobian;
  std::function<Distribution(std::span<const double>)> make_q;
  Distribution target;
  std::function<double(std::span<const double>)> kl;  // params -> KL(q||p)
};

std::vector<ToyResult> run_toy(const ExperimentConfig& config,
                               const ToySetup& setup) {
  config.validate();

  IntegrandSpec log_p;
  log_p.eval = [&setup](std::span<const double> z) {
    return setup.target.log_density(z[0]);
  };
  if (!setup.target.discrete()) {
    log_p.grad = [&setup](std::span<const double> z) {
      return std::vector<double>{setup.target.log_density_dy(z[0])};
    };
  }

  std::vector<ToyResult> results;
  for (const auto& tag : config.estimators) {
    RngStream est_rng = RngStream(config.seed).substream(tag_hash(tag));
    std::vector<double> u =
        setup.to_unconstrained(std::span<const double>(config.init_params));
    Ascent opt(config.optimizer, u.size());

    ToyResult res;
    res.estimator = tag;
    for (long it = 1; it <= config.iterations; ++it) {
      const double t0 = now_ms();
      const auto params = setup.to_params(u);
      check_finite(it, params, "parameters");
      const auto q = [&] {
        try {
          return setup.make_q(params);
        } catch (const std::invalid_argument& e) {
          // A link output collapsing out of the parameter domain mid-run is
          // a diverged optimization, not a configuration problem.
          throw NumericalError(it, e.what());
        }
      }();

      auto one_sample = [&](RngStream& sub) {
        if (tag == "go") {
          return elbo_gradient_sticking({q}, log_p, 1, sub);
        }
        const auto f = sticking_integrand({q}, log_p);
        const long n = tag == "reinforce2" ? 2 : 1;
        return reinforce_gradient({q}, f, n, sub);
      };
      RngStream iter_rng = est_rng.substream(static_cast<std::uint64_t>(it));
      const auto probes =
          run_probes(one_sample, config.variance_probes, iter_rng, it,
                     config.threads);

      TraceRecord rec;
      rec.iteration = it;
      rec.param_values = params;
      rec.elbo_estimate = -setup.kl(params);
      rec.grad_variance = probes.variance;
      if (!std::isfinite(rec.elbo_estimate)) {
        throw NumericalError(it, "objective is not finite");
      }

      // Chain the last probe through the link Jacobian and ascend.
      const auto jac = setup.link_jacobian(u);
      std::vector<double> gu(u.size());
      for (size_t i = 0; i < u.size(); ++i) gu[i] = probes.last[i] * jac[i];
      opt.step(u, gu);
      check_finite(it, u, "unconstrained parameters");

      rec.wall_clock_ms = now_ms() - t0;
      res.trace.push_back(std::move(rec));
    }
    res.final_kl = setup.kl(setup.to_params(u));
    results.push_back(std::move(res));
  }
  return results;
}

}  // namespace

std::vector<ToyResult> run_gamma_toy(const ExperimentConfig& config) {
  if (config.experiment != "gamma_toy") {
    config_fail("experiment", "run_gamma_toy expects experiment=gamma_toy");
  }
  const double a0 = config.target_params[0];
  const double b0 = config.target_params[1];
  ToySetup setup{
      .to_params =
          [](std::span<const double> u) {
            return std::vector<double>{softplus(u[0]), softplus(u[1])};
          },
      .to_unconstrained =
          [](std::span<const double> p) {
            return std::vector<double>{softplus_inv(p[0]), softplus_inv(p[1])};
          },
      .link_jacobian =
          [](std::span<const double> u) {
            return std::vector<double>{sigmoid(u[0]), sigmoid(u[1])};
          },
      .make_q =
          [](std::span<const double> p) {
            return Distribution::gamma(p[0], p[1]);
          },
      .target = Distribution::gamma(a0, b0),
      .kl =
          [a0, b0](std::span<const double> p) {
            return gamma_kl(p[0], p[1], a0, b0);
          },
  };
  return run_toy(config, setup);
}

std::vector<ToyResult> run_nb_toy(const ExperimentConfig& config) {
  if (config.experiment != "nb_toy") {
    config_fail("experiment", "run_nb_toy expects experiment=nb_toy");
  }
  const double r0 = config.target_params[0];
  const double p0 = config.target_params[1];
  ToySetup setup{
      .to_params =
          [](std::span<const double> u) {
            return std::vector<double>{softplus(u[0]), sigmoid(u[1])};
          },
      .to_unconstrained =
          [](std::span<const double> p) {
            return std::vector<double>{softplus_inv(p[0]), logit(p[1])};
          },
      .link_jacobian =
          [](std::span<const double> u) {
            const double s = sigmoid(u[1]);
            return std::vector<double>{sigmoid(u[0]), s * (1.0 - s)};
          },
      .make_q =
          [](std::span<const double> p) {
            return Distribution::negative_binomial(p[0], p[1]);
          },
      .target = Distribution::negative_binomial(r0, p0),
      .kl =
          [r0, p0](std::span<const double> p) {
            return nb_kl(p[0], p[1], r0, p0);
          },
  };
  return run_toy(config, setup);
}

}  // namespace gograd
