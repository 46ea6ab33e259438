#include "gograd/oracle.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace gograd::oracle {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

[[noreturn]] void fail(const std::string& what) {
  throw std::invalid_argument("oracle: " + what);
}

// Independent log-densities written against the C library primitives only.
double log_pdf(Family family, std::span<const double> p, double y) {
  switch (family) {
    case Family::kNormal: {
      const double s = (y - p[0]) / p[1];
      return -0.5 * s * s - std::log(p[1] * std::sqrt(2.0 * kPi));
    }
    case Family::kLogNormal: {
      const double s = (std::log(y) - p[0]) / p[1];
      return -0.5 * s * s - std::log(y * p[1] * std::sqrt(2.0 * kPi));
    }
    case Family::kGamma:
      return p[0] * std::log(p[1]) + (p[0] - 1.0) * std::log(y) - p[1] * y -
             std::lgamma(p[0]);
    case Family::kBeta:
      return (p[0] - 1.0) * std::log(y) + (p[1] - 1.0) * std::log1p(-y) +
             std::lgamma(p[0] + p[1]) - std::lgamma(p[0]) - std::lgamma(p[1]);
    case Family::kExponential:
      return std::log(p[0]) - p[0] * y;
    case Family::kWeibull:
      return std::log(p[1] / p[0]) + (p[1] - 1.0) * std::log(y / p[0]) -
             std::pow(y / p[0], p[1]);
    case Family::kLaplace:
      return -std::fabs(y - p[0]) / p[1] - std::log(2.0 * p[1]);
    default:
      fail("log_pdf: not a continuous family");
  }
}

double log_pmf(Family family, std::span<const double> p, long k) {
  switch (family) {
    case Family::kPoisson:
      return k * std::log(p[0]) - p[0] - std::lgamma(k + 1.0);
    case Family::kGeometric:
      return std::log(p[0]) + k * std::log1p(-p[0]);
    case Family::kNegativeBinomial:
      return std::lgamma(k + p[0]) - std::lgamma(p[0]) -
             std::lgamma(k + 1.0) + p[0] * std::log1p(-p[1]) +
             k * std::log(p[1]);
    default:
      fail("log_pmf: not an unbounded discrete family");
  }
}

}  // namespace

double tanh_sinh(const std::function<double(double)>& f, double a, double b,
                 double target_abs_err) {
  if (!(a < b)) fail("tanh_sinh: requires a < b");
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);

  auto node_sum = [&](double h, int stride_start, int stride) {
    // Sum over k = stride_start, stride_start +- stride, ... of the
    // transformed integrand; stops when the tails become negligible.
    double acc = 0.0;
    for (int sign : {+1, -1}) {
      // k = 0 (when present) belongs to the positive sweep only.
      int k = sign > 0 ? stride_start
                       : (stride_start == 0 ? -stride : -stride_start);
      int consecutive_small = 0;
      for (;; k += sign * stride) {
        const double t = h * k;
        const double u = 0.5 * kPi * std::sinh(t);
        const double x = std::tanh(u);
        const double w = 0.5 * kPi * std::cosh(t) / std::pow(std::cosh(u), 2);
        const double y = mid + half * x;
        if (y <= a || y >= b || w < 1e-310) break;
        const double v = f(y) * w;
        if (std::isfinite(v)) acc += v;
        if (std::fabs(v) < 1e-18 * (1.0 + std::fabs(acc))) {
          if (++consecutive_small > 3) break;
        } else {
          consecutive_small = 0;
        }
        if (std::fabs(k) > 100000) break;
      }
    }
    return acc;
  };

  double h = 1.0;
  double sum = node_sum(h, 0, 1);
  double result = half * h * sum;
  for (int level = 1; level <= 12; ++level) {
    h *= 0.5;
    // New nodes are the odd multiples of the refined step.
    sum += node_sum(h, 1, 2);
    const double refined = half * h * sum;
    const double err = std::fabs(refined - result);
    result = refined;
    if (level >= 3 && err < target_abs_err * (1.0 + std::fabs(result))) break;
  }
  return result;
}

double expectation(Family family, std::span<const double> params,
                   const std::function<double(double)>& f) {
  switch (family) {
    case Family::kDelta:
      return f(params[0]);
    case Family::kBernoulli:
      return (1.0 - params[0]) * f(0.0) + params[0] * f(1.0);
    case Family::kCategorical: {
      double acc = 0.0;
      for (size_t k = 0; k < params.size(); ++k) {
        acc += params[k] * f(static_cast<double>(k));
      }
      return acc;
    }
    case Family::kPoisson:
    case Family::kGeometric:
    case Family::kNegativeBinomial: {
      double acc = 0.0;
      double mass = 0.0;
      for (long k = 0; k < 20000000; ++k) {
        const double q = std::exp(log_pmf(family, params, k));
        acc += q * f(static_cast<double>(k));
        mass += q;
        if (1.0 - mass < 1e-13 && k > 10) break;
      }
      return acc;
    }
    case Family::kNormal: {
      // Map (-inf, inf) to (-1, 1) via y = t / (1 - t^2).
      auto g = [&](double t) {
        const double t2 = t * t;
        const double y = t / (1.0 - t2);
        const double jac = (1.0 + t2) / ((1.0 - t2) * (1.0 - t2));
        const double lp = log_pdf(family, params, y);
        return lp < -700.0 ? 0.0 : std::exp(lp) * f(y) * jac;
      };
      return tanh_sinh(g, -1.0, 1.0);
    }
    case Family::kLaplace: {
      // Split at the density kink; each half maps (0, inf) to (0, 1).
      const double mu = params[0];
      double acc = 0.0;
      for (double sign : {-1.0, 1.0}) {
        auto g = [&](double t) {
          const double y = mu + sign * t / (1.0 - t);
          const double jac = 1.0 / ((1.0 - t) * (1.0 - t));
          const double lp = log_pdf(family, params, y);
          return lp < -700.0 ? 0.0 : std::exp(lp) * f(y) * jac;
        };
        acc += tanh_sinh(g, 0.0, 1.0);
      }
      return acc;
    }
    case Family::kLogNormal:
    case Family::kGamma:
    case Family::kExponential:
    case Family::kWeibull: {
      // Map (0, inf) to (0, 1) via y = t / (1 - t).
      auto g = [&](double t) {
        const double y = t / (1.0 - t);
        const double jac = 1.0 / ((1.0 - t) * (1.0 - t));
        const double lp = log_pdf(family, params, y);
        return lp < -700.0 ? 0.0 : std::exp(lp) * f(y) * jac;
      };
      return tanh_sinh(g, 0.0, 1.0);
    }
    case Family::kBeta: {
      auto g = [&](double y) {
        const double lp = log_pdf(family, params, y);
        return lp < -700.0 ? 0.0 : std::exp(lp) * f(y);
      };
      return tanh_sinh(g, 0.0, 1.0);
    }
  }
  fail("expectation: unknown family");
}

namespace {

bool param_positive(Family family, size_t index) {
  switch (family) {
    case Family::kNormal:
    case Family::kLogNormal:
    case Family::kLaplace:
      return index == 1;  // location free, scale positive
    case Family::kGamma:
    case Family::kBeta:
    case Family::kExponential:
    case Family::kWeibull:
    case Family::kPoisson:
      return true;
    case Family::kNegativeBinomial:
      return index == 0;
    default:
      return false;
  }
}

bool param_unit_interval(Family family, size_t index) {
  switch (family) {
    case Family::kBernoulli:
    case Family::kGeometric:
      return true;
    case Family::kNegativeBinomial:
      return index == 1;
    default:
      return false;
  }
}

}  // namespace

std::vector<double> expectation_gradient(
    Family family, std::span<const double> params,
    const std::function<double(double)>& f,
    const std::function<double(double)>& df) {
  std::vector<double> grad(params.size(), 0.0);

  if (family == Family::kDelta) {
    if (!df) fail("expectation_gradient: delta requires df");
    grad[0] = df(params[0]);
    return grad;
  }
  if (family == Family::kBernoulli) {
    grad[0] = f(1.0) - f(0.0);
    return grad;
  }
  if (family == Family::kCategorical) {
    const double ftop = f(static_cast<double>(params.size() - 1));
    for (size_t k = 0; k + 1 < params.size(); ++k) {
      grad[k] = f(static_cast<double>(k)) - ftop;
    }
    return grad;
  }

  std::vector<double> work(params.begin(), params.end());
  for (size_t k = 0; k < params.size(); ++k) {
    double h = 1e-4 * std::max(std::fabs(params[k]), 1.0);
    if (param_positive(family, k)) h = std::min(h, 0.25 * params[k]);
    if (param_unit_interval(family, k)) {
      h = std::min({h, 0.25 * params[k], 0.25 * (1.0 - params[k])});
    }
    auto eval = [&](double delta) {
      work[k] = params[k] + delta;
      const double v = expectation(family, work, f);
      work[k] = params[k];
      return v;
    };
    const double d1 = (eval(h) - eval(-h)) / (2.0 * h);
    const double d2 = (eval(h / 2) - eval(-h / 2)) / h;
    grad[k] = (4.0 * d2 - d1) / 3.0;
  }
  return grad;
}

}  // namespace gograd::oracle
