#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "gograd/rng.hpp"

namespace gograd {

enum class Family {
  kDelta,
  kBernoulli,
  kNormal,
  kLogNormal,
  kGamma,
  kBeta,
  kExponential,
  kWeibull,
  kLaplace,
  kPoisson,
  kGeometric,
  kNegativeBinomial,
  kCategorical,
};

std::string family_name(Family f);
Family family_from_name(std::string_view name);

struct Support {
  enum class Kind { kContinuousInterval, kNonnegIntegers, kFiniteAlphabet };

  Kind kind = Kind::kContinuousInterval;
  double lower = 0.0;       // continuous intervals only
  double upper = 0.0;       // continuous intervals only (may be +inf)
  int alphabet_size = 0;    // finite alphabets only (states 0 .. size-1)

  bool discrete() const { return kind != Kind::kContinuousInterval; }
  bool contains(double y) const;

  static Support continuous(double lower, double upper);
  static Support nonneg_integers();
  static Support finite_alphabet(int size);
};

// One entry per distribution parameter (categorical: one per probability);
// finite wherever q(y) > 0.
using VariableNabla = std::vector<double>;

// One-dimensional distribution: immutable family tag + parameter vector +
// support. Owns density/mass, CDF, sampling, the variable-nabla
// g_k = -(dQ/dk) / q(y) per parameter, the score dlog q/dk, and (for the
// reparameterizable subset) the pathwise gradient of the sampling transform.
class Distribution {
 public:
  static Distribution delta(double mu);
  static Distribution bernoulli(double p);
  static Distribution normal(double mu, double sigma);
  static Distribution log_normal(double mu, double sigma);
  static Distribution gamma(double shape, double rate);
  static Distribution beta(double a, double b);
  static Distribution exponential(double lambda);
  static Distribution weibull(double scale, double shape);
  static Distribution laplace(double mu, double b);
  static Distribution poisson(double lambda);
  static Distribution geometric(double p);
  static Distribution negative_binomial(double r, double p);
  static Distribution categorical(std::vector<double> probs);

  // Generic constructor used by deserialization and the graph module.
  static Distribution make(Family family, std::vector<double> params);

  Family family() const { return family_; }
  const std::vector<double>& params() const { return params_; }
  const Support& support() const { return support_; }
  int param_count() const { return static_cast<int>(params_.size()); }
  bool discrete() const { return support_.discrete(); }
  bool reparameterizable() const;

  double density(double y) const;      // pdf, or pmf for discrete families
  double log_density(double y) const;
  double cdf(double y) const;
  double sample(RngStream& rng) const;

  // Per-parameter variable-nabla at y; requires q(y) > 0.
  VariableNabla variable_nabla(double y) const;

  // Per-parameter score d log q(y) / d param (closed forms).
  std::vector<double> score(double y) const;

  // d tau/d param of the sampling transform, evaluated at the sample y.
  // Throws for families outside the reparameterizable set.
  std::vector<double> rep_path_grad(double y) const;

  // d log q(y) / dy for continuous families.
  double log_density_dy(double y) const;

  std::string to_json() const;
  static Distribution from_json(std::string_view text);

 private:
  Distribution(Family family, std::vector<double> params, Support support)
      : family_(family), params_(std::move(params)), support_(support) {}

  Family family_;
  std::vector<double> params_;
  Support support_;
};

}  // namespace gograd
