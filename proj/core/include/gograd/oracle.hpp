#pragma once

#include <functional>
#include <span>
#include <vector>

#include "gograd/distribution.hpp"

namespace gograd::oracle {

// Double-exponential (tanh-sinh) quadrature on a finite interval. Handles
// integrable endpoint singularities; target is the absolute error.
double tanh_sinh(const std::function<double(double)>& f, double a, double b,
                 double target_abs_err = 1e-12);

// E_{q(y)}[f(y)] for a scalar catalog family, computed independently of the
// Distribution implementation: densities are written out against
// std::lgamma/std::erfc, integrated with tanh-sinh on mapped intervals, and
// summed with a 1e-13 tail bound for unbounded discrete supports.
double expectation(Family family, std::span<const double> params,
                   const std::function<double(double)>& f);

// Gradient of the expectation wrt the parameters by Richardson central
// differences (relative step 1e-4, parameters clamped to stay in-domain).
// Bernoulli, categorical and delta use their exact analytic forms; the
// categorical convention lets the last probability absorb simplex
// perturbations, so its entry is 0.
std::vector<double> expectation_gradient(
    Family family, std::span<const double> params,
    const std::function<double(double)>& f,
    const std::function<double(double)>& df = nullptr);

}  // namespace gograd::oracle
