// Apache License, Version 2.0, refer to LICENSE.txt

#include "cloglog/rng.hpp"

#include <cmath>
#include <numbers>

#include "cloglog/error.hpp"

namespace cloglog {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::uniform() {
  // 53 random bits, shifted half a step so 0 and 1 never occur.
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  cached_normal_ = v * f;
  has_cached_normal_ = true;
  return u * f;
}

double Rng::exponential() { return -std::log(uniform()); }

namespace {

// Marsaglia & Tsang for shape >= 1, unit rate; returns log of the draw.
double log_gamma_unit_large(Rng& rng, double shape) {
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2 ||
        std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) {
      return std::log(d) + std::log(v);
    }
  }
}

}  // namespace

double Rng::log_gamma(double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0)) {
    throw DomainError("log_gamma: shape and rate must be positive");
  }
  double out;
  if (shape >= 1.0) {
    out = log_gamma_unit_large(*this, shape);
  } else {
    // G(a) = G(a + 1) * U^(1/a), kept in log space.
    out = log_gamma_unit_large(*this, shape + 1.0) + std::log(uniform()) / shape;
  }
  return out - std::log(rate);
}

double Rng::gamma(double shape, double rate) {
  return std::exp(log_gamma(shape, rate));
}

double Rng::beta(double a, double b) {
  const double la = log_gamma(a, 1.0);
  const double lb = log_gamma(b, 1.0);
  const double m = std::max(la, lb);
  return std::exp(la - m) / (std::exp(la - m) + std::exp(lb - m));
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw DomainError("index: empty range");
  const std::size_t k = static_cast<std::size_t>(uniform() * static_cast<double>(n));
  return k < n ? k : n - 1;
}

std::size_t Rng::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw NumericalError("categorical: weights must have a positive finite sum");
  }
  const double target = uniform() * total;
  double acc = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    acc += weights[k];
    if (target < acc) return k;
  }
  for (std::size_t k = weights.size(); k-- > 0;) {
    if (weights[k] > 0.0) return k;
  }
  return weights.size() - 1;
}

std::vector<double> Rng::dirichlet(std::span<const double> alpha) {
  std::vector<double> out(alpha.size());
  double m = -INFINITY;
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    out[k] = log_gamma(alpha[k], 1.0);
    m = std::max(m, out[k]);
  }
  double total = 0.0;
  for (double& v : out) {
    v = std::exp(v - m);
    total += v;
  }
  for (double& v : out) v /= total;
  return out;
}

Rng Rng::split(std::uint64_t stream) const { return Rng(mix_seed(seed_, stream)); }

}  // namespace cloglog
