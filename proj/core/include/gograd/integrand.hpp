#pragma once

#include <functional>
#include <span>
#include <vector>

#include "gograd/distribution.hpp"

namespace gograd {

// The function f whose expectation is differentiated. `eval` is mandatory;
// `grad` supplies the full gradient wrt the y-vector and is required whenever
// a continuous coordinate meets a pathwise-style estimator;
// `explicit_param_grad` carries any direct dependence of f on the
// distribution parameters; `flip_eval` is an optional fast path for binary
// coordinates returning f with coordinate v flipped, for v = 0..V-1, in one
// batched pass.
struct IntegrandSpec {
  std::function<double(std::span<const double>)> eval;
  std::function<std::vector<double>(std::span<const double>)> grad;
  std::function<std::vector<double>(std::span<const double>,
                                    std::span<const double>)>
      explicit_param_grad;
  std::function<std::vector<double>(std::span<const double>)> flip_eval;
};

// D_y applied to coordinate `coord` of f at y: the partial derivative for
// continuous coordinates, the forward difference f(.., y_v + 1, ..) - f(y)
// for discrete ones.
double d_y_operator(const Support& support, const IntegrandSpec& f,
                    std::span<const double> y, int coord);

// Convenience builders for common scalar integrands used across tests and
// the experiment harness. Each acts on coordinate 0 of the sample vector.
IntegrandSpec scalar_integrand(std::function<double(double)> f,
                               std::function<double(double)> df);

}  // namespace gograd
