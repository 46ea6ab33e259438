#pragma once

// Scalar special functions backing the distribution catalog: log-gamma,
// digamma, regularized incomplete gamma/beta, and the shape-parameter
// derivatives of the latter two. All functions are pure and total over
// their stated domains; out-of-domain arguments throw std::domain_error
// instead of returning NaN.

namespace gograd::sf {

// Value plus a (crude, conservative) estimate of the absolute error.
struct FnEvalResult {
  double value = 0.0;
  double est_abs_error = 0.0;
};

// ln Gamma(x) for x > 0. Stirling series above 10, recurrence below.
// Relative error <= 1e-12 on [1e-3, 1e6].
double log_gamma(double x);

// psi(x) = d/dx ln Gamma(x) for x > 0. Asymptotic series plus recurrence;
// absolute error <= 1e-10 on [1e-3, 1e6].
double digamma(double x);

// psi'(x) for x > 0. Same scheme as digamma. Not part of the distribution
// catalog itself; used by the closed-form gamma KL gradient.
double trigamma(double x);

// Regularized lower incomplete gamma P(a, x), a > 0, x >= 0.
// Power series for x < a + 1, continued fraction otherwise.
double reg_gamma_p(double a, double x);
FnEvalResult reg_gamma_p_e(double a, double x);

// dP(a, x)/da. Dispatches to the differentiated power series where the
// series converges fast (x < a + 1) and to Richardson-extrapolated central
// differences on reg_gamma_p elsewhere. Absolute error target 1e-8.
double grad_reg_gamma_p_wrt_a(double a, double x);

// Both backends exposed separately so they can be cross-validated.
double grad_reg_gamma_p_wrt_a_series(double a, double x);
double grad_reg_gamma_p_wrt_a_fd(double a, double x);

// Regularized incomplete beta I_x(a, b), x in [0,1], a > 0, b > 0.
// Continued fraction with the symmetry I_x(a,b) = 1 - I_{1-x}(b,a).
double reg_beta_i(double x, double a, double b);
FnEvalResult reg_beta_i_e(double x, double a, double b);

enum class BetaShape { kA, kB };

// dI_x(a,b)/da or /db by Richardson central differences with step
// h = max(1e-4 * shape, 1e-5), clamped so shape - h stays positive.
// Absolute error target 1e-7.
double grad_reg_beta_wrt_shape(double x, double a, double b, BetaShape which);

}  // namespace gograd::sf
