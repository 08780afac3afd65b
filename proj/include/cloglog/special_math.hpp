// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <limits>
#include <span>

#include "cloglog/rng.hpp"

namespace cloglog {

// Parameters of the log-gamma leaf prior, log Gam(a, b), with E = 0 and
// Var = sigma_mu^2, i.e. digamma(a) = log(b) and trigamma(a) = sigma_mu^2.
struct LogGammaPrior {
  double a = 1.0;
  double b = 1.0;
  double sigma_mu = 1.0;
};

// Exponential(rate) truncated to (lo, hi); hi may be +infinity.
struct TruncExpSpec {
  double rate = 1.0;
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
};

// psi(x) for order 0 and psi'(x) for order 1. Throws DomainError for x <= 0
// or for an unsupported order.
double polygamma(int order, double x);
double digamma(double x);
double trigamma(double x);
double tetragamma(double x);

// Solves digamma(a) = log(b), trigamma(a) = sigma_mu^2.
LogGammaPrior solve_leaf_prior(double sigma_mu);

double trunc_exp_cdf(const TruncExpSpec& spec, double x);
double trunc_exp_inverse_cdf(const TruncExpSpec& spec, double u);
double sample_trunc_exp(const TruncExpSpec& spec, Rng& rng);

// log of a Gamma(shape a, rate b) variate.
double sample_log_gamma(double a, double b, Rng& rng);

// Gumbel-minimum cdf G(t) = 1 - exp(-e^t), evaluated without cancellation.
double gumbel_cdf(double t);

double log_sum_exp(std::span<const double> values);

// Log density of log Gam(a, b) at mu: a*mu - b*e^mu + a*log b - lgamma(a).
double log_gamma_log_density(double mu, double a, double b);

inline constexpr double kEulerGamma = 0.57721566490153286061;

}  // namespace cloglog
