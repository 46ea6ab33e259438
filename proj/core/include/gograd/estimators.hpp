#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gograd/distribution.hpp"
#include "gograd/integrand.hpp"
#include "gograd/rng.hpp"

namespace gograd {

// Per-parameter gradient estimate for grad E_{q(y)}[f(y)], averaged over
// n_samples Monte Carlo draws. The parameter layout concatenates the factor
// parameter vectors in factor order.
struct GradientEstimate {
  std::vector<double> per_param;
  long n_samples = 0;
  std::string estimator;
};

// Variable-nabla estimator over a factorized q(y) = prod_v q(y_v): averages
// G * D_y[f] over n joint samples. Continuous coordinates require f.grad;
// discrete coordinates use the forward difference. If f carries an explicit
// parameter dependence it is added per sample.
GradientEstimate go_gradient(const std::vector<Distribution>& dists,
                             const IntegrandSpec& f, long n, RngStream& rng);

// Score-function estimator: averages (f(y) - baseline) * dlog q(y)/dparams.
GradientEstimate reinforce_gradient(const std::vector<Distribution>& dists,
                                    const IntegrandSpec& f, long n,
                                    RngStream& rng,
                                    std::optional<double> baseline = {});

// Pathwise estimator for the reparameterizable subset
// {normal, log_normal, exponential, weibull, laplace}.
GradientEstimate rep_gradient(const std::vector<Distribution>& dists,
                              const IntegrandSpec& f, long n, RngStream& rng);

// Finite-support variant: every coordinate must be Bernoulli or Categorical.
// The inner expectation over each coordinate is evaluated analytically: for
// Bernoulli coordinate v the per-sample contribution to dE/dP_v is
// f(y_-v, 1) - f(y_-v, 0); for a Categorical coordinate the per-state
// contribution to dE/dp_k is f(y_-v, k) - f(y_-v, N). Uses f.flip_eval for
// the batched all-flips pass when available (binary coordinates only).
GradientEstimate go_gradient_finite_support(
    const std::vector<Distribution>& dists, const IntegrandSpec& f, long n,
    RngStream& rng);

// Builds f(z) = log_p(z) - sum_v log q_v(z_v) with the parameters of q held
// fixed inside f (the distributions are copied into the closures). The
// score-term expectation that sticking drops is identically zero.
IntegrandSpec sticking_integrand(std::vector<Distribution> var_dists,
                                 IntegrandSpec log_p);

// ELBO gradient with the score-term expectation dropped ("sticking"):
// applies go_gradient to the sticking integrand.
GradientEstimate elbo_gradient_sticking(const std::vector<Distribution>& var_dists,
                                        const IntegrandSpec& log_p, long n,
                                        RngStream& rng);

// Unbiased per-parameter sample variance across m independent one-sample
// estimates, each drawn from its own substream of rng.
std::vector<double> gradient_variance(
    const std::function<GradientEstimate(RngStream&)>& estimator, long m,
    RngStream& rng);

}  // namespace gograd
