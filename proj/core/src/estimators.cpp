#include "gograd/estimators.hpp"

#include <cmath>
#include <stdexcept>

namespace gograd {

namespace {

[[noreturn]] void fail(const std::string& what) {
  throw std::invalid_argument("estimators: " + what);
}

long require_samples(long n) {
  if (n < 1) fail("sample count must be >= 1");
  return n;
}

int total_params(const std::vector<Distribution>& dists) {
  int k = 0;
  for (const auto& d : dists) k += d.param_count();
  return k;
}

void sample_joint(const std::vector<Distribution>& dists, RngStream& rng,
                  std::vector<double>& y) {
  y.resize(dists.size());
  for (size_t v = 0; v < dists.size(); ++v) y[v] = dists[v].sample(rng);
}

bool any_continuous(const std::vector<Distribution>& dists) {
  for (const auto& d : dists) {
    if (!d.discrete()) return true;
  }
  return false;
}

}  // namespace

double d_y_operator(const Support& support, const IntegrandSpec& f,
                    std::span<const double> y, int coord) {
  if (coord < 0 || static_cast<size_t>(coord) >= y.size()) {
    fail("d_y_operator: coordinate out of range");
  }
  if (!support.discrete()) {
    if (!f.grad) fail("d_y_operator: continuous coordinate needs f.grad");
    return f.grad(y)[static_cast<size_t>(coord)];
  }
  if (!f.eval) fail("d_y_operator: missing f.eval");
  std::vector<double> shifted(y.begin(), y.end());
  shifted[static_cast<size_t>(coord)] += 1.0;
  return f.eval(shifted) - f.eval(y);
}

IntegrandSpec scalar_integrand(std::function<double(double)> f,
                               std::function<double(double)> df) {
  IntegrandSpec spec;
  spec.eval = [f](std::span<const double> y) { return f(y[0]); };
  if (df) {
    spec.grad = [df](std::span<const double> y) {
      return std::vector<double>{df(y[0])};
    };
  }
  return spec;
}

GradientEstimate go_gradient(const std::vector<Distribution>& dists,
                             const IntegrandSpec& f, long n, RngStream& rng) {
  require_samples(n);
  if (dists.empty()) fail("go_gradient: empty factor list");
  if (!f.eval) fail("go_gradient: missing f.eval");
  if (any_continuous(dists) && !f.grad) {
    fail("go_gradient: continuous coordinates require f.grad");
  }

  GradientEstimate est;
  est.estimator = "go";
  est.n_samples = n;
  est.per_param.assign(total_params(dists), 0.0);

  std::vector<double> y;
  std::vector<double> flat_params;
  if (f.explicit_param_grad) {
    for (const auto& d : dists) {
      flat_params.insert(flat_params.end(), d.params().begin(),
                         d.params().end());
    }
  }

  std::vector<double> shifted;
  for (long i = 0; i < n; ++i) {
    sample_joint(dists, rng, y);
    std::vector<double> grad_y;
    if (f.grad && any_continuous(dists)) grad_y = f.grad(y);

    double base = 0.0;
    bool have_base = false;
    int offset = 0;
    for (size_t v = 0; v < dists.size(); ++v) {
      const auto& d = dists[v];
      const auto nabla = d.variable_nabla(y[v]);
      bool all_zero = true;
      for (double g : nabla) {
        if (g != 0.0) { all_zero = false; break; }
      }
      // A zero nabla (e.g. a finite-alphabet coordinate sampled at the top
      // of its support) contributes nothing; skip the D evaluation so f is
      // never probed outside the support.
      if (!all_zero) {
        double dval;
        if (!d.discrete()) {
          dval = grad_y[v];
        } else {
          if (!have_base) {
            base = f.eval(y);
            have_base = true;
          }
          shifted.assign(y.begin(), y.end());
          shifted[v] += 1.0;
          dval = f.eval(shifted) - base;
        }
        for (size_t k = 0; k < nabla.size(); ++k) {
          est.per_param[offset + static_cast<int>(k)] += nabla[k] * dval;
        }
      }
      offset += d.param_count();
    }
    if (f.explicit_param_grad) {
      const auto extra = f.explicit_param_grad(y, flat_params);
      if (extra.size() != est.per_param.size()) {
        fail("go_gradient: explicit_param_grad size mismatch");
      }
      for (size_t k = 0; k < extra.size(); ++k) est.per_param[k] += extra[k];
    }
  }
  for (double& g : est.per_param) g /= static_cast<double>(n);
  return est;
}

GradientEstimate reinforce_gradient(const std::vector<Distribution>& dists,
                                    const IntegrandSpec& f, long n,
                                    RngStream& rng,
                                    std::optional<double> baseline) {
  require_samples(n);
  if (dists.empty()) fail("reinforce_gradient: empty factor list");
  if (!f.eval) fail("reinforce_gradient: missing f.eval");
  const double b = baseline.value_or(0.0);

  GradientEstimate est;
  est.estimator = "reinforce";
  est.n_samples = n;
  est.per_param.assign(total_params(dists), 0.0);

  std::vector<double> y;
  for (long i = 0; i < n; ++i) {
    sample_joint(dists, rng, y);
    const double w = f.eval(y) - b;
    int offset = 0;
    for (size_t v = 0; v < dists.size(); ++v) {
      const auto sc = dists[v].score(y[v]);
      for (size_t k = 0; k < sc.size(); ++k) {
        est.per_param[offset + static_cast<int>(k)] += w * sc[k];
      }
      offset += dists[v].param_count();
    }
  }
  for (double& g : est.per_param) g /= static_cast<double>(n);
  return est;
}

GradientEstimate rep_gradient(const std::vector<Distribution>& dists,
                              const IntegrandSpec& f, long n, RngStream& rng) {
  require_samples(n);
  if (dists.empty()) fail("rep_gradient: empty factor list");
  for (const auto& d : dists) {
    if (!d.reparameterizable()) {
      fail("rep_gradient: " + family_name(d.family()) +
           " is not reparameterizable");
    }
  }
  if (!f.grad) fail("rep_gradient: requires f.grad");

  GradientEstimate est;
  est.estimator = "rep";
  est.n_samples = n;
  est.per_param.assign(total_params(dists), 0.0);

  std::vector<double> y;
  for (long i = 0; i < n; ++i) {
    sample_joint(dists, rng, y);
    const auto grad_y = f.grad(y);
    int offset = 0;
    for (size_t v = 0; v < dists.size(); ++v) {
      const auto path = dists[v].rep_path_grad(y[v]);
      for (size_t k = 0; k < path.size(); ++k) {
        est.per_param[offset + static_cast<int>(k)] += path[k] * grad_y[v];
      }
      offset += dists[v].param_count();
    }
  }
  for (double& g : est.per_param) g /= static_cast<double>(n);
  return est;
}

GradientEstimate go_gradient_finite_support(
    const std::vector<Distribution>& dists, const IntegrandSpec& f, long n,
    RngStream& rng) {
  require_samples(n);
  if (dists.empty()) fail("go_gradient_finite_support: empty factor list");
  if (!f.eval) fail("go_gradient_finite_support: missing f.eval");
  bool all_bernoulli = true;
  for (const auto& d : dists) {
    if (d.family() == Family::kBernoulli) continue;
    all_bernoulli = false;
    if (d.family() != Family::kCategorical) {
      fail("go_gradient_finite_support: requires bernoulli or categorical "
           "factors, got " + family_name(d.family()));
    }
  }

  GradientEstimate est;
  est.estimator = "go_finite_support";
  est.n_samples = n;
  est.per_param.assign(total_params(dists), 0.0);

  const size_t V = dists.size();
  std::vector<double> y;
  std::vector<double> work;
  for (long i = 0; i < n; ++i) {
    sample_joint(dists, rng, y);
    if (all_bernoulli && f.flip_eval) {
      // Batched pass: flips[v] = f(y with coordinate v flipped).
      const double base = f.eval(y);
      const auto flips = f.flip_eval(y);
      if (flips.size() != V) {
        fail("go_gradient_finite_support: flip_eval size mismatch");
      }
      for (size_t v = 0; v < V; ++v) {
        const double a = (y[v] == 0.0) ? 1.0 : -1.0;
        est.per_param[v] += a * (flips[v] - base);
      }
      continue;
    }
    int offset = 0;
    for (size_t v = 0; v < V; ++v) {
      const auto& d = dists[v];
      work.assign(y.begin(), y.end());
      if (d.family() == Family::kBernoulli) {
        work[v] = 1.0;
        const double f1 = f.eval(work);
        work[v] = 0.0;
        const double f0 = f.eval(work);
        est.per_param[offset] += f1 - f0;
        offset += 1;
      } else {
        const int states = d.support().alphabet_size;
        work[v] = static_cast<double>(states - 1);
        const double ftop = f.eval(work);
        for (int k = 0; k + 1 < states; ++k) {
          work[v] = static_cast<double>(k);
          est.per_param[offset + k] += f.eval(work) - ftop;
        }
        // dE/dp at the top state stays 0 under the simplex convention.
        offset += states;
      }
    }
  }
  for (double& g : est.per_param) g /= static_cast<double>(n);
  return est;
}

IntegrandSpec sticking_integrand(std::vector<Distribution> var_dists,
                                 IntegrandSpec log_p) {
  if (!log_p.eval) fail("sticking_integrand: missing log_p.eval");
  IntegrandSpec f;
  f.eval = [dists = var_dists,
            eval = log_p.eval](std::span<const double> z) {
    double acc = eval(z);
    for (size_t v = 0; v < dists.size(); ++v) {
      acc -= dists[v].log_density(z[v]);
    }
    return acc;
  };
  if (log_p.grad) {
    f.grad = [dists = std::move(var_dists),
              grad = log_p.grad](std::span<const double> z) {
      auto g = grad(z);
      for (size_t v = 0; v < dists.size(); ++v) {
        if (!dists[v].discrete()) g[v] -= dists[v].log_density_dy(z[v]);
      }
      return g;
    };
  }
  return f;
}

GradientEstimate elbo_gradient_sticking(const std::vector<Distribution>& var_dists,
                                        const IntegrandSpec& log_p, long n,
                                        RngStream& rng) {
  if (any_continuous(var_dists) && !log_p.grad) {
    fail("elbo_gradient_sticking: continuous coordinates require log_p.grad");
  }
  auto est =
      go_gradient(var_dists, sticking_integrand(var_dists, log_p), n, rng);
  est.estimator = "go_sticking";
  return est;
}

std::vector<double> gradient_variance(
    const std::function<GradientEstimate(RngStream&)>& estimator, long m,
    RngStream& rng) {
  if (m < 2) fail("gradient_variance: needs m >= 2 probes");
  std::vector<double> mean;
  std::vector<double> m2;
  for (long j = 0; j < m; ++j) {
    RngStream sub = rng.substream(static_cast<std::uint64_t>(j));
    const auto est = estimator(sub);
    if (mean.empty()) {
      mean.assign(est.per_param.size(), 0.0);
      m2.assign(est.per_param.size(), 0.0);
    }
    // Welford, reduced in fixed probe order.
    for (size_t k = 0; k < mean.size(); ++k) {
      const double delta = est.per_param[k] - mean[k];
      mean[k] += delta / static_cast<double>(j + 1);
      m2[k] += delta * (est.per_param[k] - mean[k]);
    }
  }
  for (double& v : m2) v /= static_cast<double>(m - 1);
  return m2;
}

}  // namespace gograd
