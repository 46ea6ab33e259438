#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gograd/estimators.hpp"

namespace gograd {

// Raised when a run produces a non-finite parameter, gradient, or objective;
// carries the iteration that failed.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(long iteration, const std::string& what)
      : std::runtime_error("numerical failure at iteration " +
                           std::to_string(iteration) + ": " + what),
        iteration_(iteration) {}
  long iteration() const { return iteration_; }

 private:
  long iteration_;
};

// Raised on invalid configuration; the message names the offending key.
class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OptimizerConfig {
  std::string kind = "adam";  // "adam" or "sgd"
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct ExperimentConfig {
  std::string experiment;  // gamma_toy | nb_toy | bernoulli_vae | unbiasedness_suite
  std::vector<double> target_params;
  std::vector<double> init_params;
  OptimizerConfig optimizer;
  long iterations = 1;
  int variance_probes = 20;
  std::uint64_t seed = 0;
  std::vector<std::string> estimators = {"go"};
  int threads = 1;

  // bernoulli_vae settings
  int latent_bits = 8;
  int data_dim = 16;
  int n_data = 64;
  long checkpoint_every = 100;
  long checkpoint_probes = 10000;

  // unbiasedness_suite settings
  long suite_samples = 200000;

  void validate() const;  // throws ConfigError naming the key
};

struct TraceRecord {
  long iteration = 0;
  std::vector<double> param_values;
  double elbo_estimate = 0.0;
  std::vector<double> grad_variance;
  double wall_clock_ms = 0.0;
};

// Writes the trace as CSV with header
// iteration,param_0..param_k,elbo,gradvar_0..gradvar_k,wall_ms.
// Timing is nondeterministic, so wall_ms is written as 0 unless
// include_timing is set; everything else is bit-stable for a fixed seed.
void write_trace_csv(const std::string& path,
                     const std::vector<TraceRecord>& trace,
                     bool include_timing = false);

struct ToyResult {
  std::string estimator;
  std::vector<TraceRecord> trace;
  double final_kl = 0.0;
};

// Gamma posterior-matching toy: q = Gamma(alpha, beta) optimized toward
// p = Gamma(alpha0, beta0) by stochastic gradient ascent on the sticking
// ELBO. Per iteration, `variance_probes` one-sample estimates are drawn,
// their unbiased variance recorded, and the last probe applied as the
// update. Positivity is maintained by optimizing softplus-linked values.
std::vector<ToyResult> run_gamma_toy(const ExperimentConfig& config);

// Negative-binomial counterpart: q = NB(r, p) toward p = NB(r0, p0);
// softplus link on r, sigmoid link on p. Estimator tags: "go",
// "reinforce", and "reinforce2" (two-sample REINFORCE).
std::vector<ToyResult> run_nb_toy(const ExperimentConfig& config);

struct VaeCheckpoint {
  long iteration = 0;
  std::vector<double> probe_mean;
  std::vector<double> probe_se;
  std::vector<double> enumeration;
  bool within_5se = false;
};

struct VaeResult {
  std::vector<TraceRecord> trace;
  std::vector<VaeCheckpoint> checkpoints;
  int encoder_param_count = 0;
};

// Bernoulli-latent VAE on synthetic binary data: linear sigmoid decoder and
// encoder, finite-support gradients for the encoder, exact pathwise
// gradients for the decoder and prior. Every checkpoint_every iterations
// the one-sample encoder gradient (checkpoint_probes probes) is compared
// against the exact 2^K enumeration gradient. K > 16 is rejected.
VaeResult run_bernoulli_vae(const ExperimentConfig& config);

struct SuiteRow {
  std::string family;
  std::vector<double> params;
  std::string integrand;
  std::string estimator;
  std::vector<double> oracle;
  std::vector<double> estimate;
  std::vector<double> se;
  bool pass = false;
};

// Unbiasedness grid: every catalog family x parameter grid x
// f in {y, y^2, (y-c)^2, exp(-y^2/10)} x applicable estimators, each
// compared to an independent oracle gradient within 5 standard errors.
std::vector<SuiteRow> run_unbiasedness_suite(const ExperimentConfig& config);
std::string suite_report_json(const std::vector<SuiteRow>& rows);

// Closed-form KL divergences used by the toys and their oracles.
double gamma_kl(double a, double b, double a0, double b0);
std::vector<double> gamma_kl_grad(double a, double b, double a0, double b0);
double nb_kl(double r, double p, double r0, double p0);  // tail < 1e-12

}  // namespace gograd
