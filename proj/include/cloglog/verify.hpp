// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <span>
#include <string>
#include <vector>

#include "cloglog/rng.hpp"

namespace cloglog {

// log of b^a / Gamma(a) * int exp((a + A) mu - (b + B) e^mu) dmu over the
// real line by adaptive Gauss-Kronrod quadrature. Depends on nothing in the
// samplers. Throws ConvergenceError when the error estimate is too large.
double oracle_integrated_marginal(double a, double b, double A, double B);

// Max abs difference over k between the continuation (product) form and
// the cumulative-difference form of the pmf, and between either and the
// library's ordinal_pmf.
double check_link_equivalence(std::span<const double> gamma, double r);

struct KsReport {
  double statistic = 0.0;
  double p_value = 0.0;
  std::size_t n = 0;
};

// Asymptotic Kolmogorov tail probability with the Stephens correction.
double kolmogorov_pvalue(double d, std::size_t n);

// gamma ~ log Gam(1, 1): KS test of the remaining stick exp(-e^{gamma + r})
// = 1 - V against Beta(e^{-r}, 1), cdf u^{e^{-r}}.
KsReport check_dp_property(double r, std::size_t n_samples, Rng& rng);

// Z_k = -(gamma_k + r) + log E_k with E_k ~ Exp(1); Y = first k with
// Z_k < 0 (K if none). Returns max_k |empirical - ordinal_pmf| / MCSE.
double check_latent_representation(std::span<const double> gamma, double r, std::size_t n_samples,
                                   Rng& rng);

// max(|psi(a) - log b|, |psi'(a) - sigma^2|) for solve_leaf_prior(sigma),
// with the polygammas taken from an independent implementation.
double check_leaf_prior_solver(double sigma_mu);

// Upper tail of the chi-square distribution.
double chi_square_pvalue(double statistic, double df);

enum class SbcModel { kOrdinal, kSurvival, kDensity };

struct SbcConfig {
  SbcModel model = SbcModel::kOrdinal;
  bool proportional = true;
  std::size_t n = 100;
  std::size_t predictors = 2;
  int categories = 3;  // ordinal K, or K_max for density
  std::size_t trees = 10;
  int burn_in = 500;
  int kept = 500;
  int draws = 100;  // retained per fit after thinning
  int bins = 20;
  int replications = 200;
  // Multiplies every leaf exposure; 0.5 is the corrupted negative control.
  double exposure_scale = 1.0;
  int threads = 1;
};

struct SbcReport {
  std::string parameter;
  std::vector<int> histogram;
  double chi2 = 0.0;
  double p_value = 0.0;
  int replications = 0;  // successful ones, the histogram mass
  int failed = 0;
};

// One report per monitored quantity: gamma[1] (not for survival),
// r(x*) at x* = (0.5, ..., 0.5), lambda[1] (survival), w1(x*) (density).
std::vector<SbcReport> sbc_run(const SbcConfig& config, const Rng& rng);

}  // namespace cloglog
