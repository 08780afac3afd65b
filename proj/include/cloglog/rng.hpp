// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace cloglog {

// splitmix64 finalizer; used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// Seeded random stream. Every variate is generated by code in this library
// on top of the std::mt19937_64 bit stream (whose output is fixed by the
// standard), so draws are reproducible across standard library vendors.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  // Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  double exponential();  // rate 1
  // Gamma(shape, rate).
  double gamma(double shape, double rate);
  // log of a Gamma(shape, rate) draw, accurate for tiny shapes.
  double log_gamma(double shape, double rate);
  double beta(double a, double b);
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  // Categorical draw from unnormalized nonnegative weights.
  std::size_t categorical(std::span<const double> weights);
  std::vector<double> dirichlet(std::span<const double> alpha);

  // Independent stream derived from the construction seed; does not advance
  // this stream.
  Rng split(std::uint64_t stream) const;

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace cloglog
