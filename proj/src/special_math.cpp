// Apache License, Version 2.0, refer to LICENSE.txt

#include "cloglog/special_math.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cloglog/error.hpp"

namespace cloglog {

namespace {

constexpr double kShift = 10.0;

void require_positive(double x, const char* fn) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw DomainError(std::string(fn) + ": argument must be positive and finite");
  }
}

}  // namespace

double digamma(double x) {
  require_positive(x, "digamma");
  // Shift to x >= 10; subtract the recurrence terms smallest-first.
  int n = 0;
  while (x + n < kShift) ++n;
  double correction = 0.0;
  for (int i = n - 1; i >= 0; --i) correction += 1.0 / (x + i);
  const double z = x + n;
  const double iz2 = 1.0 / (z * z);
  const double series =
      iz2 * (1.0 / 12 -
             iz2 * (1.0 / 120 -
                    iz2 * (1.0 / 252 -
                           iz2 * (1.0 / 240 -
                                  iz2 * (1.0 / 132 -
                                         iz2 * (691.0 / 32760 - iz2 / 12.0))))));
  return std::log(z) - 0.5 / z - series - correction;
}

double trigamma(double x) {
  require_positive(x, "trigamma");
  int n = 0;
  while (x + n < kShift) ++n;
  double correction = 0.0;
  for (int i = n - 1; i >= 0; --i) correction += 1.0 / ((x + i) * (x + i));
  const double z = x + n;
  const double iz = 1.0 / z;
  const double iz2 = iz * iz;
  const double series =
      iz * (1.0 + iz * (0.5 +
                        iz * (1.0 / 6 -
                              iz2 * (1.0 / 30 -
                                     iz2 * (1.0 / 42 -
                                            iz2 * (1.0 / 30 -
                                                   iz2 * (5.0 / 66 -
                                                          iz2 * (691.0 / 2730 -
                                                                 iz2 * 7.0 / 6))))))));
  return series + correction;
}

double tetragamma(double x) {
  require_positive(x, "tetragamma");
  int n = 0;
  while (x + n < kShift) ++n;
  double correction = 0.0;
  for (int i = n - 1; i >= 0; --i) {
    const double y = x + i;
    correction += 2.0 / (y * y * y);
  }
  const double z = x + n;
  const double iz = 1.0 / z;
  const double iz2 = iz * iz;
  const double series =
      iz2 * (1.0 + iz * (1.0 +
                         iz * (0.5 -
                               iz2 * (1.0 / 6 -
                                      iz2 * (1.0 / 6 -
                                             iz2 * (3.0 / 10 -
                                                    iz2 * (5.0 / 6 -
                                                           iz2 * (691.0 / 210 -
                                                                  iz2 * 35.0 / 2))))))));
  return -series - correction;
}

double polygamma(int order, double x) {
  switch (order) {
    case 0:
      return digamma(x);
    case 1:
      return trigamma(x);
    default:
      throw DomainError("polygamma: only orders 0 and 1 are supported");
  }
}

LogGammaPrior solve_leaf_prior(double sigma_mu) {
  if (!(sigma_mu > 0.0) || !std::isfinite(sigma_mu)) {
    throw DomainError("solve_leaf_prior: sigma_mu must be positive");
  }
  if (sigma_mu < 1e-8 || sigma_mu > 1e4) {
    throw ConvergenceError("solve_leaf_prior: sigma_mu=" + std::to_string(sigma_mu) +
                           " is outside the solvable range [1e-8, 1e4]");
  }
  const double target = sigma_mu * sigma_mu;
  const double log_target = std::log(target);
  // g(u) = log trigamma(e^u) - log target is strictly decreasing in u.
  auto g = [&](double u) { return std::log(trigamma(std::exp(u))) - log_target; };
  double lo = std::log(1e-12);
  double hi = std::log(1e18);
  if (g(lo) < 0.0 || g(hi) > 0.0) {
    throw ConvergenceError("solve_leaf_prior: failed to bracket the root");
  }
  double u = std::clamp(-log_target, lo, hi);  // a0 = 1 / sigma^2
  bool converged = false;
  for (int iter = 0; iter < 200; ++iter) {
    const double a = std::exp(u);
    const double tg = trigamma(a);
    const double val = std::log(tg) - log_target;
    if (val > 0.0) {
      lo = u;
    } else {
      hi = u;
    }
    const double slope = a * tetragamma(a) / tg;
    double next = u - val / slope;
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    if (std::abs(next - u) <= 1e-15 * std::max(1.0, std::abs(u))) {
      u = next;
      converged = true;
      break;
    }
    u = next;
  }
  if (!converged) throw ConvergenceError("solve_leaf_prior: Newton iteration did not converge");
  LogGammaPrior out;
  out.a = std::exp(u);
  out.b = std::exp(digamma(out.a));
  out.sigma_mu = sigma_mu;
  return out;
}

double trunc_exp_cdf(const TruncExpSpec& spec, double x) {
  if (x <= spec.lo) return 0.0;
  if (x >= spec.hi) return 1.0;
  const double num = -std::expm1(-spec.rate * (x - spec.lo));
  if (std::isinf(spec.hi)) return num;
  const double den = -std::expm1(-spec.rate * (spec.hi - spec.lo));
  return std::min(1.0, num / den);
}

double trunc_exp_inverse_cdf(const TruncExpSpec& spec, double u) {
  if (!(u >= 0.0 && u <= 1.0)) {
    throw DomainError("trunc_exp_inverse_cdf: u must lie in [0, 1]");
  }
  if (!(spec.rate > 0.0) || !(spec.lo < spec.hi)) {
    throw DomainError("trunc_exp_inverse_cdf: need rate > 0 and lo < hi");
  }
  if (u == 0.0) return spec.lo;
  if (u == 1.0) return spec.hi;
  const double mass = std::expm1(-spec.rate * (spec.hi - spec.lo));  // in [-1, 0)
  const double x = spec.lo - std::log1p(u * mass) / spec.rate;
  return std::clamp(x, spec.lo, spec.hi);
}

double sample_trunc_exp(const TruncExpSpec& spec, Rng& rng) {
  return trunc_exp_inverse_cdf(spec, rng.uniform());
}

double sample_log_gamma(double a, double b, Rng& rng) { return rng.log_gamma(a, b); }

double gumbel_cdf(double t) { return -std::expm1(-std::exp(t)); }

double log_sum_exp(std::span<const double> values) {
  double m = -INFINITY;
  for (double v : values) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

double log_gamma_log_density(double mu, double a, double b) {
  return a * mu - b * std::exp(mu) + a * std::log(b) - std::lgamma(a);
}

}  // namespace cloglog
