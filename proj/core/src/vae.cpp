#include <chrono>
#include <cmath>
#include <span>
#include <vector>

#include "gograd/experiments.hpp"

// Bernoulli-latent VAE on synthetic binary data, linear sigmoid heads:
//   p(x, z) = Bern(x; sigmoid(Wp^T z + bp)) Bern(z; sigmoid(rho))
//   q(z | x) = Bern(z; sigmoid(Wq^T x + bq))
// The encoder gradient goes through the finite-support estimator; decoder
// and prior gradients are exact pathwise terms at the sampled code.

namespace gograd {

namespace {

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}

// log Bern(bit; sigmoid(t)) evaluated stably from the logit t.
double log_bern_logit(double bit, double t) {
  // log sigmoid(t) = -softplus(-t); log(1-sigmoid(t)) = -softplus(t)
  const double sp = t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
  return bit > 0.5 ? t - sp : -sp;
}

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

struct VaeModel {
  int K = 0;  // latent bits
  int D = 0;  // observed bits
  // phi = [Wq (D x K), bq (K)], theta = [Wp (K x D), bp (D), rho (K)]
  std::vector<double> wq, bq, wp, bp, rho;

  int phi_count() const { return D * K + K; }
  int theta_count() const { return K * D + D + K; }

  std::vector<double> encoder_logits(std::span<const double> x) const {
    std::vector<double> t(static_cast<size_t>(K), 0.0);
    for (int v = 0; v < K; ++v) {
      double acc = bq[static_cast<size_t>(v)];
      for (int d = 0; d < D; ++d) {
        acc += wq[static_cast<size_t>(d * K + v)] * x[static_cast<size_t>(d)];
      }
      t[static_cast<size_t>(v)] = acc;
    }
    return t;
  }

  std::vector<double> decoder_logits(std::span<const double> z) const {
    std::vector<double> s(static_cast<size_t>(D), 0.0);
    for (int d = 0; d < D; ++d) {
      double acc = bp[static_cast<size_t>(d)];
      for (int v = 0; v < K; ++v) {
        acc += wp[static_cast<size_t>(v * D + d)] * z[static_cast<size_t>(v)];
      }
      s[static_cast<size_t>(d)] = acc;
    }
    return s;
  }

  double log_lik(std::span<const double> x, std::span<const double> s) const {
    double acc = 0.0;
    for (int d = 0; d < D; ++d) {
      acc += log_bern_logit(x[static_cast<size_t>(d)],
                            s[static_cast<size_t>(d)]);
    }
    return acc;
  }

  // f(z; x) = log p(x|z) + log p(z) - log q(z|x), all from logits.
  double integrand(std::span<const double> x, std::span<const double> z,
                   std::span<const double> enc_logits) const {
    const auto s = decoder_logits(z);
    double acc = log_lik(x, s);
    for (int v = 0; v < K; ++v) {
      acc += log_bern_logit(z[static_cast<size_t>(v)],
                            rho[static_cast<size_t>(v)]);
      acc -= log_bern_logit(z[static_cast<size_t>(v)],
                            enc_logits[static_cast<size_t>(v)]);
    }
    return acc;
  }

  // Batched single-coordinate flips: one pass over the decoder
  // pre-activations instead of K full re-evaluations.
  std::vector<double> integrand_flips(std::span<const double> x,
                                      std::span<const double> z,
                                      std::span<const double> enc_logits,
                                      double base_f) const {
    const auto s = decoder_logits(z);
    const double base_lik = log_lik(x, s);
    std::vector<double> out(static_cast<size_t>(K), 0.0);
    for (int v = 0; v < K; ++v) {
      const double a = z[static_cast<size_t>(v)] == 0.0 ? 1.0 : -1.0;
      double lik = 0.0;
      for (int d = 0; d < D; ++d) {
        lik += log_bern_logit(
            x[static_cast<size_t>(d)],
            s[static_cast<size_t>(d)] + a * wp[static_cast<size_t>(v * D + d)]);
      }
      // Prior and entropy terms are coordinate-separable.
      const double dz = a;
      const double prior =
          dz * (log_bern_logit(1.0, rho[static_cast<size_t>(v)]) -
                log_bern_logit(0.0, rho[static_cast<size_t>(v)]));
      const double ent =
          dz * (log_bern_logit(1.0, enc_logits[static_cast<size_t>(v)]) -
                log_bern_logit(0.0, enc_logits[static_cast<size_t>(v)]));
      out[static_cast<size_t>(v)] = base_f + (lik - base_lik) + prior - ent;
    }
    return out;
  }
};

// Exact ELBO gradient wrt phi by enumerating all 2^K codes:
// sum_z q(z|x) (dlog q/dphi) (log p(x,z) - log q(z|x)), averaged over data.
std::vector<double> enumeration_phi_gradient(
    const VaeModel& m, const std::vector<std::vector<double>>& data) {
  std::vector<double> grad(static_cast<size_t>(m.phi_count()), 0.0);
  std::vector<double> z(static_cast<size_t>(m.K), 0.0);
  const long total = 1L << m.K;
  for (const auto& x : data) {
    const auto t = m.encoder_logits(x);
    std::vector<double> pv(static_cast<size_t>(m.K));
    for (int v = 0; v < m.K; ++v) pv[static_cast<size_t>(v)] = sigmoid(t[static_cast<size_t>(v)]);
    for (long code = 0; code < total; ++code) {
      double qz = 1.0;
      for (int v = 0; v < m.K; ++v) {
        const bool on = (code >> v) & 1;
        z[static_cast<size_t>(v)] = on ? 1.0 : 0.0;
        qz *= on ? pv[static_cast<size_t>(v)] : 1.0 - pv[static_cast<size_t>(v)];
      }
      const double fval = m.integrand(x, z, t);
      for (int v = 0; v < m.K; ++v) {
        // dlog q/dt_v = z_v - sigmoid(t_v); chain onto Wq and bq.
        const double g = qz * (z[static_cast<size_t>(v)] - pv[static_cast<size_t>(v)]) * fval;
        for (int d = 0; d < m.D; ++d) {
          grad[static_cast<size_t>(d * m.K + v)] += g * x[static_cast<size_t>(d)];
        }
        grad[static_cast<size_t>(m.D * m.K + v)] += g;
      }
    }
  }
  for (double& g : grad) g /= static_cast<double>(data.size());
  return grad;
}

// One-sample phi gradient for one datum, through the finite-support
// estimator with the batched flip path.
std::vector<double> one_sample_phi_gradient(const VaeModel& m,
                                            std::span<const double> x,
                                            RngStream& rng) {
  const auto t = m.encoder_logits(x);
  std::vector<Distribution> bits;
  bits.reserve(static_cast<size_t>(m.K));
  for (int v = 0; v < m.K; ++v) {
    bits.push_back(Distribution::bernoulli(sigmoid(t[static_cast<size_t>(v)])));
  }
  IntegrandSpec f;
  f.eval = [&m, x, &t](std::span<const double> z) {
    return m.integrand(x, z, t);
  };
  f.flip_eval = [&m, x, &t](std::span<const double> z) {
    return m.integrand_flips(x, z, t, m.integrand(x, z, t));
  };
  const auto est = go_gradient_finite_support(bits, f, 1, rng);

  // est.per_param[v] = dE/dP_v; chain through P = sigmoid(t) onto (Wq, bq).
  std::vector<double> grad(static_cast<size_t>(m.phi_count()), 0.0);
  for (int v = 0; v < m.K; ++v) {
    const double pv = sigmoid(t[static_cast<size_t>(v)]);
    const double g = est.per_param[static_cast<size_t>(v)] * pv * (1.0 - pv);
    for (int d = 0; d < m.D; ++d) {
      grad[static_cast<size_t>(d * m.K + v)] += g * x[static_cast<size_t>(d)];
    }
    grad[static_cast<size_t>(m.D * m.K + v)] += g;
  }
  return grad;
}

}  // namespace

VaeResult run_bernoulli_vae(const ExperimentConfig& config) {
  if (config.experiment != "bernoulli_vae") {
    throw ConfigError("experiment: run_bernoulli_vae expects bernoulli_vae");
  }
  config.validate();
  const int K = config.latent_bits;
  const int D = config.data_dim;
  const int N = config.n_data;
  RngStream rng(config.seed);

  // Ground-truth model and synthetic dataset.
  RngStream data_rng = rng.substream(1);
  VaeModel truth;
  truth.K = K;
  truth.D = D;
  truth.wq.assign(static_cast<size_t>(D * K), 0.0);  // unused in generation
  truth.bq.assign(static_cast<size_t>(K), 0.0);
  truth.wp.resize(static_cast<size_t>(K * D));
  truth.bp.resize(static_cast<size_t>(D));
  truth.rho.resize(static_cast<size_t>(K));
  for (auto& w : truth.wp) w = 1.5 * data_rng.normal();
  for (auto& b : truth.bp) b = 0.3 * data_rng.normal();
  for (auto& r : truth.rho) r = 0.5 * data_rng.normal();
  std::vector<std::vector<double>> data;
  for (int i = 0; i < N; ++i) {
    std::vector<double> z(static_cast<size_t>(K));
    for (int v = 0; v < K; ++v) {
      z[static_cast<size_t>(v)] =
          data_rng.uniform() < sigmoid(truth.rho[static_cast<size_t>(v)]) ? 1.0 : 0.0;
    }
    const auto s = truth.decoder_logits(z);
    std::vector<double> x(static_cast<size_t>(D));
    for (int d = 0; d < D; ++d) {
      x[static_cast<size_t>(d)] =
          data_rng.uniform() < sigmoid(s[static_cast<size_t>(d)]) ? 1.0 : 0.0;
    }
    data.push_back(std::move(x));
  }

  // Trainable model, small random init.
  RngStream init_rng = rng.substream(2);
  VaeModel m;
  m.K = K;
  m.D = D;
  m.wq.resize(static_cast<size_t>(D * K));
  m.bq.assign(static_cast<size_t>(K), 0.0);
  m.wp.resize(static_cast<size_t>(K * D));
  m.bp.assign(static_cast<size_t>(D), 0.0);
  m.rho.assign(static_cast<size_t>(K), 0.0);
  for (auto& w : m.wq) w = 0.1 * init_rng.normal();
  for (auto& w : m.wp) w = 0.1 * init_rng.normal();

  const int phi_n = m.phi_count();
  const int theta_n = m.theta_count();
  const int total_n = phi_n + theta_n;
  auto pack = [&](std::vector<double>& flat) {
    flat.clear();
    flat.insert(flat.end(), m.wq.begin(), m.wq.end());
    flat.insert(flat.end(), m.bq.begin(), m.bq.end());
    flat.insert(flat.end(), m.wp.begin(), m.wp.end());
    flat.insert(flat.end(), m.bp.begin(), m.bp.end());
    flat.insert(flat.end(), m.rho.begin(), m.rho.end());
  };
  auto unpack = [&](const std::vector<double>& flat) {
    auto it = flat.begin();
    std::copy(it, it + m.wq.size(), m.wq.begin());
    it += static_cast<long>(m.wq.size());
    std::copy(it, it + m.bq.size(), m.bq.begin());
    it += static_cast<long>(m.bq.size());
    std::copy(it, it + m.wp.size(), m.wp.begin());
    it += static_cast<long>(m.wp.size());
    std::copy(it, it + m.bp.size(), m.bp.begin());
    it += static_cast<long>(m.bp.size());
    std::copy(it, it + m.rho.size(), m.rho.begin());
  };

  std::vector<double> flat;
  pack(flat);
  OptimizerConfig opt_cfg = config.optimizer;
  std::vector<double> adam_m(static_cast<size_t>(total_n), 0.0);
  std::vector<double> adam_v(static_cast<size_t>(total_n), 0.0);
  int adam_t = 0;

  VaeResult result;
  result.encoder_param_count = phi_n;
  RngStream train_rng = rng.substream(3);
  RngStream probe_rng = rng.substream(4);

  for (long it = 1; it <= config.iterations; ++it) {
    const double t0 = now_ms();
    std::vector<double> grad(static_cast<size_t>(total_n), 0.0);
    double elbo = 0.0;
    RngStream iter_rng = train_rng.substream(static_cast<std::uint64_t>(it));
    for (int i = 0; i < N; ++i) {
      RngStream sub = iter_rng.substream(static_cast<std::uint64_t>(i));
      const auto& x = data[static_cast<size_t>(i)];
      const auto t = m.encoder_logits(x);
      std::vector<double> z(static_cast<size_t>(K));
      for (int v = 0; v < K; ++v) {
        z[static_cast<size_t>(v)] =
            sub.uniform() < sigmoid(t[static_cast<size_t>(v)]) ? 1.0 : 0.0;
      }
      elbo += m.integrand(x, z, t);

      // phi: finite-support gradient at a fresh sample.
      RngStream phi_rng = sub.substream(1);
      const auto gphi = one_sample_phi_gradient(m, x, phi_rng);
      for (int k = 0; k < phi_n; ++k) grad[static_cast<size_t>(k)] += gphi[static_cast<size_t>(k)];

      // theta: exact pathwise terms at the sampled z.
      const auto s = m.decoder_logits(z);
      for (int d = 0; d < D; ++d) {
        const double resid =
            x[static_cast<size_t>(d)] - sigmoid(s[static_cast<size_t>(d)]);
        for (int v = 0; v < K; ++v) {
          grad[static_cast<size_t>(phi_n + v * D + d)] +=
              resid * z[static_cast<size_t>(v)];
        }
        grad[static_cast<size_t>(phi_n + K * D + d)] += resid;
      }
      for (int v = 0; v < K; ++v) {
        grad[static_cast<size_t>(phi_n + K * D + D + v)] +=
            z[static_cast<size_t>(v)] - sigmoid(m.rho[static_cast<size_t>(v)]);
      }
    }
    elbo /= N;
    for (double& g : grad) g /= N;
    for (double g : grad) {
      if (!std::isfinite(g)) throw NumericalError(it, "gradient is not finite");
    }
    if (!std::isfinite(elbo)) throw NumericalError(it, "objective is not finite");

    // Adam ascent over the packed vector.
    ++adam_t;
    const double bc1 = 1.0 - std::pow(opt_cfg.beta1, adam_t);
    const double bc2 = 1.0 - std::pow(opt_cfg.beta2, adam_t);
    for (int k = 0; k < total_n; ++k) {
      const size_t i = static_cast<size_t>(k);
      if (opt_cfg.kind == "sgd") {
        flat[i] += opt_cfg.learning_rate * grad[i];
        continue;
      }
      adam_m[i] = opt_cfg.beta1 * adam_m[i] + (1.0 - opt_cfg.beta1) * grad[i];
      adam_v[i] =
          opt_cfg.beta2 * adam_v[i] + (1.0 - opt_cfg.beta2) * grad[i] * grad[i];
      flat[i] += opt_cfg.learning_rate * (adam_m[i] / bc1) /
                 (std::sqrt(adam_v[i] / bc2) + opt_cfg.eps);
    }
    unpack(flat);

    TraceRecord rec;
    rec.iteration = it;
    rec.param_values = flat;
    rec.elbo_estimate = elbo;
    rec.grad_variance.assign(static_cast<size_t>(total_n), 0.0);

    // Oracle checkpoint: probe-mean of the one-sample phi gradient against
    // the exact enumeration gradient over all 2^K codes.
    if (it % config.checkpoint_every == 0) {
      VaeCheckpoint cp;
      cp.iteration = it;
      const long probes = config.checkpoint_probes;
      std::vector<double> mean(static_cast<size_t>(phi_n), 0.0);
      std::vector<double> m2(static_cast<size_t>(phi_n), 0.0);
      RngStream cp_rng = probe_rng.substream(static_cast<std::uint64_t>(it));
      for (long j = 0; j < probes; ++j) {
        RngStream sub = cp_rng.substream(static_cast<std::uint64_t>(j));
        std::vector<double> probe(static_cast<size_t>(phi_n), 0.0);
        for (int i = 0; i < N; ++i) {
          RngStream drng = sub.substream(static_cast<std::uint64_t>(i));
          const auto g = one_sample_phi_gradient(m, data[static_cast<size_t>(i)], drng);
          for (int k = 0; k < phi_n; ++k) probe[static_cast<size_t>(k)] += g[static_cast<size_t>(k)];
        }
        for (int k = 0; k < phi_n; ++k) {
          const size_t ki = static_cast<size_t>(k);
          probe[ki] /= N;
          const double delta = probe[ki] - mean[ki];
          mean[ki] += delta / static_cast<double>(j + 1);
          m2[ki] += delta * (probe[ki] - mean[ki]);
        }
      }
      cp.probe_mean = mean;
      cp.probe_se.resize(static_cast<size_t>(phi_n));
      for (int k = 0; k < phi_n; ++k) {
        const size_t ki = static_cast<size_t>(k);
        cp.probe_se[ki] = std::sqrt(m2[ki] / static_cast<double>(probes - 1) /
                                    static_cast<double>(probes));
      }
      cp.enumeration = enumeration_phi_gradient(m, data);
      cp.within_5se = true;
      for (int k = 0; k < phi_n; ++k) {
        const size_t ki = static_cast<size_t>(k);
        if (std::fabs(cp.probe_mean[ki] - cp.enumeration[ki]) >
            5.0 * cp.probe_se[ki] + 1e-9) {
          cp.within_5se = false;
        }
      }
      for (int k = 0; k < phi_n; ++k) {
        rec.grad_variance[static_cast<size_t>(k)] =
            m2[static_cast<size_t>(k)] / static_cast<double>(probes - 1);
      }
      result.checkpoints.push_back(std::move(cp));
    }

    rec.wall_clock_ms = now_ms() - t0;
    result.trace.push_back(std::move(rec));
  }
  return result;
}

}  // namespace gograd
