#include "gograd/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "gograd/special_functions.hpp"

namespace gograd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kProbClamp = 1e-12;      // Bernoulli/Categorical boundary clamp
constexpr double kZeroMassFloor = 1e-300; // pmf below this counts as zero mass
constexpr double kLogSqrtTwoPi = 0.91893853320467274178032973640562;

[[noreturn]] void invalid(const std::string& what) {
  throw std::invalid_argument("distribution: " + what);
}

[[noreturn]] void domain(const std::string& what) {
  throw std::domain_error("distribution: " + what);
}

double require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    invalid(std::string(name) + " must be positive and finite");
  }
  return v;
}

// Probabilities are clamped into [1e-12, 1 - 1e-12] at construction so the
// 1/(1-p) and 1/p_y nabla factors stay finite.
double clamp_prob(double p) {
  if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
    invalid("probability must lie in [0, 1]");
  }
  return std::min(1.0 - kProbClamp, std::max(kProbClamp, p));
}

long require_integer(double y, const char* fn) {
  double r = std::nearbyint(y);
  if (std::fabs(y - r) > 1e-9) {
    domain(std::string(fn) + ": discrete support requires integer y");
  }
  return static_cast<long>(r);
}

double log_factorial(double n) { return sf::log_gamma(n + 1.0); }

}  // namespace

std::string family_name(Family f) {
  switch (f) {
    case Family::kDelta: return "delta";
    case Family::kBernoulli: return "bernoulli";
    case Family::kNormal: return "normal";
    case Family::kLogNormal: return "log_normal";
    case Family::kGamma: return "gamma";
    case Family::kBeta: return "beta";
    case Family::kExponential: return "exponential";
    case Family::kWeibull: return "weibull";
    case Family::kLaplace: return "laplace";
    case Family::kPoisson: return "poisson";
    case Family::kGeometric: return "geometric";
    case Family::kNegativeBinomial: return "negative_binomial";
    case Family::kCategorical: return "categorical";
  }
  invalid("unknown family tag");
}

Family family_from_name(std::string_view name) {
  static const std::pair<std::string_view, Family> table[] = {
      {"delta", Family::kDelta},
      {"bernoulli", Family::kBernoulli},
      {"normal", Family::kNormal},
      {"log_normal", Family::kLogNormal},
      {"gamma", Family::kGamma},
      {"beta", Family::kBeta},
      {"exponential", Family::kExponential},
      {"weibull", Family::kWeibull},
      {"laplace", Family::kLaplace},
      {"poisson", Family::kPoisson},
      {"geometric", Family::kGeometric},
      {"negative_binomial", Family::kNegativeBinomial},
      {"categorical", Family::kCategorical},
  };
  for (const auto& [n, f] : table) {
    if (n == name) return f;
  }
  invalid("unknown family name '" + std::string(name) + "'");
}

bool Support::contains(double y) const {
  if (!std::isfinite(y)) return false;
  switch (kind) {
    case Kind::kContinuousInterval:
      return y >= lower && y <= upper;
    case Kind::kNonnegIntegers: {
      double r = std::nearbyint(y);
      return y >= 0.0 && std::fabs(y - r) <= 1e-9;
    }
    case Kind::kFiniteAlphabet: {
      double r = std::nearbyint(y);
      return std::fabs(y - r) <= 1e-9 && r >= 0.0 && r < alphabet_size;
    }
  }
  return false;
}

Support Support::continuous(double lower, double upper) {
  if (!(lower < upper)) invalid("continuous support requires lower < upper");
  Support s;
  s.kind = Kind::kContinuousInterval;
  s.lower = lower;
  s.upper = upper;
  return s;
}

Support Support::nonneg_integers() {
  Support s;
  s.kind = Kind::kNonnegIntegers;
  return s;
}

Support Support::finite_alphabet(int size) {
  if (size < 2) invalid("finite alphabet requires size >= 2");
  Support s;
  s.kind = Kind::kFiniteAlphabet;
  s.alphabet_size = size;
  return s;
}

Distribution Distribution::delta(double mu) {
  if (!std::isfinite(mu)) invalid("delta location must be finite");
  return Distribution(Family::kDelta, {mu}, Support::continuous(-kInf, kInf));
}

Distribution Distribution::bernoulli(double p) {
  return Distribution(Family::kBernoulli, {clamp_prob(p)},
                      Support::finite_alphabet(2));
}

Distribution Distribution::normal(double mu, double sigma) {
  if (!std::isfinite(mu)) invalid("normal mu must be finite");
  require_positive(sigma, "normal sigma");
  return Distribution(Family::kNormal, {mu, sigma},
                      Support::continuous(-kInf, kInf));
}

Distribution Distribution::log_normal(double mu, double sigma) {
  if (!std::isfinite(mu)) invalid("log_normal mu must be finite");
  require_positive(sigma, "log_normal sigma");
  return Distribution(Family::kLogNormal, {mu, sigma},
                      Support::continuous(0.0, kInf));
}

Distribution Distribution::gamma(double shape, double rate) {
  require_positive(shape, "gamma shape");
  require_positive(rate, "gamma rate");
  return Distribution(Family::kGamma, {shape, rate},
                      Support::continuous(0.0, kInf));
}

Distribution Distribution::beta(double a, double b) {
  require_positive(a, "beta shape a");
  require_positive(b, "beta shape b");
  return Distribution(Family::kBeta, {a, b}, Support::continuous(0.0, 1.0));
}

Distribution Distribution::exponential(double lambda) {
  require_positive(lambda, "exponential rate");
  return Distribution(Family::kExponential, {lambda},
                      Support::continuous(0.0, kInf));
}

Distribution Distribution::weibull(double scale, double shape) {
  require_positive(scale, "weibull scale");
  require_positive(shape, "weibull shape");
  return Distribution(Family::kWeibull, {scale, shape},
                      Support::continuous(0.0, kInf));
}

Distribution Distribution::laplace(double mu, double b) {
  if (!std::isfinite(mu)) invalid("laplace mu must be finite");
  require_positive(b, "laplace scale");
  return Distribution(Family::kLaplace, {mu, b},
                      Support::continuous(-kInf, kInf));
}

Distribution Distribution::poisson(double lambda) {
  require_positive(lambda, "poisson rate");
  return Distribution(Family::kPoisson, {lambda}, Support::nonneg_integers());
}

Distribution Distribution::geometric(double p) {
  return Distribution(Family::kGeometric, {clamp_prob(p)},
                      Support::nonneg_integers());
}

Distribution Distribution::negative_binomial(double r, double p) {
  require_positive(r, "negative_binomial r");
  return Distribution(Family::kNegativeBinomial, {r, clamp_prob(p)},
                      Support::nonneg_integers());
}

Distribution Distribution::categorical(std::vector<double> probs) {
  if (probs.size() < 2) invalid("categorical needs at least 2 states");
  double sum = 0.0;
  for (double& p : probs) {
    if (!(p > 0.0) || !std::isfinite(p)) {
      invalid("categorical probabilities must be positive");
    }
    sum += p;
  }
  if (std::fabs(sum - 1.0) > 1e-12 * probs.size() + 1e-12) {
    invalid("categorical probabilities must sum to 1");
  }
  for (double& p : probs) {
    p = std::min(1.0 - kProbClamp, std::max(kProbClamp, p));
  }
  const int n = static_cast<int>(probs.size());
  return Distribution(Family::kCategorical, std::move(probs),
                      Support::finite_alphabet(n));
}

Distribution Distribution::make(Family family, std::vector<double> params) {
  auto arity = [&](size_t n) {
    if (params.size() != n) {
      invalid(family_name(family) + " expects " + std::to_string(n) +
              " parameter(s), got " + std::to_string(params.size()));
    }
  };
  switch (family) {
    case Family::kDelta: arity(1); return delta(params[0]);
    case Family::kBernoulli: arity(1); return bernoulli(params[0]);
    case Family::kNormal: arity(2); return normal(params[0], params[1]);
    case Family::kLogNormal: arity(2); return log_normal(params[0], params[1]);
    case Family::kGamma: arity(2); return gamma(params[0], params[1]);
    case Family::kBeta: arity(2); return beta(params[0], params[1]);
    case Family::kExponential: arity(1); return exponential(params[0]);
    case Family::kWeibull: arity(2); return weibull(params[0], params[1]);
    case Family::kLaplace: arity(2); return laplace(params[0], params[1]);
    case Family::kPoisson: arity(1); return poisson(params[0]);
    case Family::kGeometric: arity(1); return geometric(params[0]);
    case Family::kNegativeBinomial:
      arity(2);
      return negative_binomial(params[0], params[1]);
    case Family::kCategorical: return categorical(std::move(params));
  }
  invalid("unknown family tag");
}

bool Distribution::reparameterizable() const {
  switch (family_) {
    case Family::kNormal:
    case Family::kLogNormal:
    case Family::kExponential:
    case Family::kWeibull:
    case Family::kLaplace:
      return true;
    default:
      return false;
  }
}

double Distribution::log_density(double y) const {
  if (!support_.contains(y)) domain("log_density: y outside support");
  const auto& p = params_;
  switch (family_) {
    case Family::kDelta:
      return (y == p[0]) ? kInf : -kInf;
    case Family::kBernoulli: {
      long k = require_integer(y, "log_density");
      return k == 1 ? std::log(p[0]) : std::log1p(-p[0]);
    }
    case Family::kNormal: {
      const double s = (y - p[0]) / p[1];
      return -0.5 * s * s - std::log(p[1]) - kLogSqrtTwoPi;
    }
    case Family::kLogNormal: {
      if (y <= 0.0) return -kInf;
      const double s = (std::log(y) - p[0]) / p[1];
      return -0.5 * s * s - std::log(y * p[1]) - kLogSqrtTwoPi;
    }
    case Family::kGamma: {
      if (y < 0.0) return -kInf;
      if (y == 0.0) return p[0] < 1.0 ? kInf : (p[0] == 1.0 ? std::log(p[1]) : -kInf);
      return p[0] * std::log(p[1]) + (p[0] - 1.0) * std::log(y) - p[1] * y -
             sf::log_gamma(p[0]);
    }
    case Family::kBeta: {
      const double lnorm = sf::log_gamma(p[0] + p[1]) - sf::log_gamma(p[0]) -
                           sf::log_gamma(p[1]);
      if (y <= 0.0 || y >= 1.0) {
        // endpoint density is 0, finite, or +inf depending on the shape
        const double s = (y <= 0.0) ? p[0] : p[1];
        if (s < 1.0) return kInf;
        if (s > 1.0) return -kInf;
        return lnorm;
      }
      return (p[0] - 1.0) * std::log(y) + (p[1] - 1.0) * std::log1p(-y) +
             lnorm;
    }
    case Family::kExponential:
      return std::log(p[0]) - p[0] * y;
    case Family::kWeibull: {
      if (y < 0.0) return -kInf;
      if (y == 0.0) return p[1] < 1.0 ? kInf : (p[1] == 1.0 ? -std::log(p[0]) : -kInf);
      const double t = std::pow(y / p[0], p[1]);
      return std::log(p[1] / p[0]) + (p[1] - 1.0) * std::log(y / p[0]) - t;
    }
    case Family::kLaplace:
      return -std::fabs(y - p[0]) / p[1] - std::log(2.0 * p[1]);
    case Family::kPoisson: {
      long k = require_integer(y, "log_density");
      return k * std::log(p[0]) - p[0] - log_factorial(k);
    }
    case Family::kGeometric: {
      long k = require_integer(y, "log_density");
      return std::log(p[0]) + k * std::log1p(-p[0]);
    }
    case Family::kNegativeBinomial: {
      long k = require_integer(y, "log_density");
      const double r = p[0], pr = p[1];
      return sf::log_gamma(k + r) - sf::log_gamma(r) - log_factorial(k) +
             r * std::log1p(-pr) + k * std::log(pr);
    }
    case Family::kCategorical: {
      long k = require_integer(y, "log_density");
      return std::log(p[static_cast<size_t>(k)]);
    }
  }
  domain("log_density: unreachable");
}

double Distribution::density(double y) const {
  if (!support_.contains(y)) domain("density: y outside support");
  if (family_ == Family::kDelta) return (y == params_[0]) ? kInf : 0.0;
  return std::exp(log_density(y));
}

double Distribution::cdf(double y) const {
  if (!support_.contains(y)) domain("cdf: y outside support");
  const auto& p = params_;
  switch (family_) {
    case Family::kDelta:
      return y >= p[0] ? 1.0 : 0.0;
    case Family::kBernoulli: {
      long k = require_integer(y, "cdf");
      return k >= 1 ? 1.0 : 1.0 - p[0];
    }
    case Family::kNormal:
      return 0.5 * std::erfc(-(y - p[0]) / (p[1] * std::sqrt(2.0)));
    case Family::kLogNormal:
      if (y <= 0.0) return 0.0;
      return 0.5 * std::erfc(-(std::log(y) - p[0]) / (p[1] * std::sqrt(2.0)));
    case Family::kGamma:
      return sf::reg_gamma_p(p[0], p[1] * y);
    case Family::kBeta:
      return sf::reg_beta_i(y, p[0], p[1]);
    case Family::kExponential:
      return -std::expm1(-p[0] * y);
    case Family::kWeibull:
      return y <= 0.0 ? 0.0 : -std::expm1(-std::pow(y / p[0], p[1]));
    case Family::kLaplace: {
      const double s = (y - p[0]) / p[1];
      return s < 0.0 ? 0.5 * std::exp(s) : 1.0 - 0.5 * std::exp(-s);
    }
    case Family::kPoisson: {
      long k = require_integer(y, "cdf");
      return 1.0 - sf::reg_gamma_p(static_cast<double>(k) + 1.0, p[0]);
    }
    case Family::kGeometric: {
      long k = require_integer(y, "cdf");
      return -std::expm1((k + 1.0) * std::log1p(-p[0]));
    }
    case Family::kNegativeBinomial: {
      long k = require_integer(y, "cdf");
      return sf::reg_beta_i(1.0 - p[1], p[0], static_cast<double>(k) + 1.0);
    }
    case Family::kCategorical: {
      long k = require_integer(y, "cdf");
      // Top of support is identically 1 regardless of the parameter values.
      if (k >= static_cast<long>(p.size()) - 1) return 1.0;
      double acc = 0.0;
      for (long i = 0; i <= k; ++i) acc += p[static_cast<size_t>(i)];
      return acc;
    }
  }
  domain("cdf: unreachable");
}

namespace {

// Marsaglia-Tsang for shape >= 1; shapes below 1 are boosted through
// Gamma(shape + 1) and scaled by u^{1/shape} computed in log space so that
// tiny shapes do not underflow to exact zero.
double sample_standard_gamma(double shape, RngStream& rng) {
  if (shape < 1.0) {
    const double z = sample_standard_gamma(shape + 1.0, rng);
    const double u = rng.uniform();
    const double boosted = std::log(z) + std::log(u) / shape;
    return std::max(std::exp(boosted), kZeroMassFloor);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double sample_poisson(double lambda, RngStream& rng) {
  // Split large rates into halves (sum of independent Poissons is Poisson),
  // then use Knuth's product-of-uniforms below the threshold.
  double total = 0.0;
  while (lambda > 25.0) {
    lambda *= 0.5;
    total += sample_poisson(lambda, rng);
  }
  const double limit = std::exp(-lambda);
  double prod = rng.uniform();
  long k = 0;
  while (prod > limit) {
    prod *= rng.uniform();
    ++k;
  }
  return total + static_cast<double>(k);
}

}  // namespace

double Distribution::sample(RngStream& rng) const {
  const auto& p = params_;
  switch (family_) {
    case Family::kDelta:
      return p[0];
    case Family::kBernoulli:
      return rng.uniform() < p[0] ? 1.0 : 0.0;
    case Family::kNormal:
      return p[0] + p[1] * rng.normal();
    case Family::kLogNormal:
      return std::exp(p[0] + p[1] * rng.normal());
    case Family::kGamma:
      return sample_standard_gamma(p[0], rng) / p[1];
    case Family::kBeta: {
      const double x = sample_standard_gamma(p[0], rng);
      const double y = sample_standard_gamma(p[1], rng);
      return x / (x + y);
    }
    case Family::kExponential:
      return -std::log(rng.uniform()) / p[0];
    case Family::kWeibull:
      return p[0] * std::pow(-std::log(rng.uniform()), 1.0 / p[1]);
    case Family::kLaplace: {
      const double u = rng.uniform() - 0.5;
      const double s = u < 0.0 ? -1.0 : 1.0;
      return p[0] - p[1] * s * std::log1p(-2.0 * std::fabs(u));
    }
    case Family::kPoisson:
      return sample_poisson(p[0], rng);
    case Family::kGeometric: {
      const double u = rng.uniform();
      return std::floor(std::log(u) / std::log1p(-p[0]));
    }
    case Family::kNegativeBinomial: {
      const double rate = (1.0 - p[1]) / p[1];
      const double lambda = sample_standard_gamma(p[0], rng) / rate;
      return sample_poisson(lambda, rng);
    }
    case Family::kCategorical: {
      const double u = rng.uniform();
      double acc = 0.0;
      for (size_t k = 0; k + 1 < p.size(); ++k) {
        acc += p[k];
        if (u < acc) return static_cast<double>(k);
      }
      return static_cast<double>(p.size() - 1);
    }
  }
  domain("sample: unreachable");
}

VariableNabla Distribution::variable_nabla(double y) const {
  if (!support_.contains(y)) domain("variable_nabla: y outside support");
  const auto& p = params_;
  switch (family_) {
    case Family::kDelta:
      return {1.0};
    case Family::kBernoulli: {
      long k = require_integer(y, "variable_nabla");
      return {k == 0 ? 1.0 / (1.0 - p[0]) : 0.0};
    }
    case Family::kNormal:
      return {1.0, (y - p[0]) / p[1]};
    case Family::kLogNormal:
      return {y, y * (std::log(y) - p[0]) / p[1]};
    case Family::kGamma: {
      const double q = density(y);
      if (!(q > 0.0) || !std::isfinite(q)) {
        domain("variable_nabla: gamma density not positive/finite at y");
      }
      const double ga = -sf::grad_reg_gamma_p_wrt_a(p[0], p[1] * y) / q;
      return {ga, -y / p[1]};
    }
    case Family::kBeta: {
      const double q = density(y);
      if (!(q > 0.0) || !std::isfinite(q)) {
        domain("variable_nabla: beta density not positive/finite at y");
      }
      return {-sf::grad_reg_beta_wrt_shape(y, p[0], p[1], sf::BetaShape::kA) / q,
              -sf::grad_reg_beta_wrt_shape(y, p[0], p[1], sf::BetaShape::kB) / q};
    }
    case Family::kExponential:
      return {-y / p[0]};
    case Family::kWeibull:
      return {y / p[0], (y / p[1]) * std::log(p[0] / y)};
    case Family::kLaplace:
      return {1.0, (y - p[0]) / p[1]};
    case Family::kPoisson:
      return {1.0};
    case Family::kGeometric:
      return {-(y + 1.0) / p[0]};
    case Family::kNegativeBinomial: {
      const double q = density(y);
      if (q < kZeroMassFloor) {
        domain("variable_nabla: zero-mass point for negative_binomial");
      }
      const double gr = -sf::grad_reg_beta_wrt_shape(
                            1.0 - p[1], p[0], y + 1.0, sf::BetaShape::kA) /
                        q;
      return {gr, (y + p[0]) / (1.0 - p[1])};
    }
    case Family::kCategorical: {
      long k = require_integer(y, "variable_nabla");
      const double py = p[static_cast<size_t>(k)];
      if (py < kZeroMassFloor) {
        domain("variable_nabla: zero-mass categorical state");
      }
      std::vector<double> g(p.size(), 0.0);
      // Q at the top of the support is identically one, so the nabla
      // vanishes there outright (the Abel sum stops at N-1); elsewhere the
      // last entry stays 0 with the final probability absorbing simplex
      // perturbations.
      if (k == static_cast<long>(p.size()) - 1) return g;
      for (size_t j = 0; j + 1 < p.size(); ++j) {
        g[j] = (static_cast<long>(j) <= k) ? -1.0 / py : 0.0;
      }
      return g;
    }
  }
  domain("variable_nabla: unreachable");
}

std::vector<double> Distribution::score(double y) const {
  if (!support_.contains(y)) domain("score: y outside support");
  const auto& p = params_;
  switch (family_) {
    case Family::kDelta:
      domain("score: undefined for delta distributions");
    case Family::kBernoulli: {
      long k = require_integer(y, "score");
      return {k == 1 ? 1.0 / p[0] : -1.0 / (1.0 - p[0])};
    }
    case Family::kNormal: {
      const double d = y - p[0];
      return {d / (p[1] * p[1]), (d * d - p[1] * p[1]) / (p[1] * p[1] * p[1])};
    }
    case Family::kLogNormal: {
      const double d = std::log(y) - p[0];
      return {d / (p[1] * p[1]), (d * d - p[1] * p[1]) / (p[1] * p[1] * p[1])};
    }
    case Family::kGamma:
      return {std::log(p[1]) - sf::digamma(p[0]) + std::log(y),
              p[0] / p[1] - y};
    case Family::kBeta: {
      const double c = sf::digamma(p[0] + p[1]);
      return {std::log(y) - sf::digamma(p[0]) + c,
              std::log1p(-y) - sf::digamma(p[1]) + c};
    }
    case Family::kExponential:
      return {1.0 / p[0] - y};
    case Family::kWeibull: {
      const double t = std::pow(y / p[0], p[1]);
      const double lr = std::log(y / p[0]);
      return {(p[1] / p[0]) * (t - 1.0), 1.0 / p[1] + lr - t * lr};
    }
    case Family::kLaplace: {
      const double d = y - p[0];
      const double s = d < 0.0 ? -1.0 : (d > 0.0 ? 1.0 : 0.0);
      return {s / p[1], -1.0 / p[1] + std::fabs(d) / (p[1] * p[1])};
    }
    case Family::kPoisson:
      return {y / p[0] - 1.0};
    case Family::kGeometric:
      return {1.0 / p[0] - y / (1.0 - p[0])};
    case Family::kNegativeBinomial:
      return {sf::digamma(y + p[0]) - sf::digamma(p[0]) + std::log1p(-p[1]),
              y / p[1] - p[0] / (1.0 - p[1])};
    case Family::kCategorical: {
      long k = require_integer(y, "score");
      // Simplex-constrained convention matching variable_nabla: the last
      // probability absorbs perturbations, so its own entry is 0.
      std::vector<double> s(p.size(), 0.0);
      const size_t last = p.size() - 1;
      if (static_cast<size_t>(k) == last) {
        for (size_t j = 0; j < last; ++j) s[j] = -1.0 / p[last];
      } else {
        s[static_cast<size_t>(k)] = 1.0 / p[static_cast<size_t>(k)];
      }
      return s;
    }
  }
  domain("score: unreachable");
}

std::vector<double> Distribution::rep_path_grad(double y) const {
  const auto& p = params_;
  switch (family_) {
    case Family::kNormal:
      return {1.0, (y - p[0]) / p[1]};
    case Family::kLogNormal:
      return {y, y * (std::log(y) - p[0]) / p[1]};
    case Family::kExponential:
      return {-y / p[0]};
    case Family::kWeibull:
      return {y / p[0], (y / p[1]) * std::log(p[0] / y)};
    case Family::kLaplace:
      return {1.0, (y - p[0]) / p[1]};
    default:
      throw std::domain_error(
          "distribution: " + family_name(family_) +
          " is not in the implemented reparameterizable set");
  }
}

double Distribution::log_density_dy(double y) const {
  if (discrete()) domain("log_density_dy: discrete family");
  if (!support_.contains(y)) domain("log_density_dy: y outside support");
  const auto& p = params_;
  switch (family_) {
    case Family::kNormal:
      return -(y - p[0]) / (p[1] * p[1]);
    case Family::kLogNormal:
      return -(1.0 + (std::log(y) - p[0]) / (p[1] * p[1])) / y;
    case Family::kGamma:
      return (p[0] - 1.0) / y - p[1];
    case Family::kBeta:
      return (p[0] - 1.0) / y - (p[1] - 1.0) / (1.0 - y);
    case Family::kExponential:
      return -p[0];
    case Family::kWeibull:
      return (p[1] - 1.0) / y -
             (p[1] / p[0]) * std::pow(y / p[0], p[1] - 1.0);
    case Family::kLaplace: {
      const double d = y - p[0];
      const double s = d < 0.0 ? -1.0 : (d > 0.0 ? 1.0 : 0.0);
      return -s / p[1];
    }
    case Family::kDelta:
      domain("log_density_dy: undefined for delta distributions");
    default:
      domain("log_density_dy: unreachable");
  }
}

std::string Distribution::to_json() const {
  nlohmann::json j;
  j["family"] = family_name(family_);
  j["params"] = params_;
  return j.dump();
}

Distribution Distribution::from_json(std::string_view text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (!j.is_object() || !j.contains("family") || !j.contains("params")) {
    invalid("json must be an object with 'family' and 'params'");
  }
  return make(family_from_name(j["family"].get<std::string>()),
              j["params"].get<std::vector<double>>());
}

}  // namespace gograd
