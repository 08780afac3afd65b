// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "cloglog/draws.hpp"
#include "cloglog/forest.hpp"
#include "cloglog/matrix.hpp"
#include "cloglog/ordinal.hpp"
#include "cloglog/rng.hpp"

namespace cloglog {

// Stick-breaking weights for components 1..K from gamma_1..gamma_{K-1} and
// r[k-1] = r(x, k); the last weight absorbs the remainder.
std::vector<double> stick_weights(std::span<const double> gamma, std::span<const double> r);

struct DensityConfig {
  int max_components = 25;
  bool proportional = false;  // true selects the PH stick-breaking process
  std::size_t stick_trees = 50;
  std::size_t mean_trees = 50;
  double stick_sigma = 0.0;  // <= 0 selects 1 / sqrt(stick_trees)
  double mean_sigma = 0.0;   // <= 0 selects 1 / sqrt(mean_trees)
  double a_gamma = 1.0;
  double b_gamma = 1.0;
  double category_weight = 0.5;
  double mu0 = 0.0;
  double a_sigma_step = 0.3;  // random-walk scale for log a_sigma
  DepthPrior depth;
  int max_cuts = 100;
  // Off only for calibration runs whose prior is stated on the raw scale.
  bool standardize = true;
  double exposure_scale = 1.0;  // stick forest; negative-control calibration only

  void validate() const;
};

// Mixture parameters in standardized outcome units.
struct MixtureComponents {
  std::vector<double> mu;
  std::vector<double> sigma;
};

class DensitySampler {
 public:
  DensitySampler(const DensityConfig& config, const Matrix& x, std::span<const double> y);

  void update_assignments(Rng& rng);
  void update_sticks(Rng& rng);
  void update_mean_forest(Rng& rng);
  void update_components(Rng& rng);
  void sweep(Rng& rng);

  // Log of sum_k w_k(x_i) N(y_i | mu_k + h_i, sigma_k^2), original units.
  double log_likelihood(std::size_t i) const;

  std::span<const int> assignments() const { return c_; }
  void set_assignments(std::vector<int> c);
  const MixtureComponents& components() const { return comp_; }
  void set_components(MixtureComponents comp);
  // Absent when K_max = 1.
  const std::optional<OrdinalSampler>& sticks() const { return sticks_; }
  std::vector<double> stick_gamma() const;
  Forest stick_forest() const;
  const Forest& mean_forest() const { return mean_.forest(); }
  std::span<const double> mean_fit() const { return mean_.fit(); }
  double sigma0() const { return 1.0 / std::sqrt(tau0_); }
  double a_sigma() const { return a_sigma_; }
  double b_sigma() const { return b_sigma_; }
  double center() const { return center_; }
  double scale() const { return scale_; }

 private:
  std::vector<double> log_weights(std::span<const double> x) const;

  DensityConfig config_;
  const Matrix* x_;
  double center_ = 0.0;  // declared before y_, which is built from them
  double scale_ = 1.0;
  std::vector<double> y_;  // standardized
  std::vector<int> c_;
  MixtureComponents comp_;
  double tau0_ = 1.0;  // sigma_0^{-2}
  double a_sigma_ = 2.0;
  double b_sigma_ = 2.0;
  std::optional<OrdinalSampler> sticks_;
  GaussianEnsemble mean_;
  NormalLeafPrior mean_prior_;
};

// One retained state, enough to evaluate the conditional density anywhere.
struct DensityState {
  std::vector<double> gamma;
  Forest sticks;
  Forest mean;
  MixtureComponents comp;
};

struct DensityFit {
  DensityConfig config;
  McmcConfig mcmc;
  double center = 0.0;
  double scale = 1.0;
  std::vector<DensityState> states;
  PosteriorDraws draws;
  Matrix query;
};

DensityFit fit_density(const DensityConfig& config, const McmcConfig& mcmc, const Matrix& x,
                       std::span<const double> y, const Matrix& query, Rng& rng);

// Mixture weights of one retained state at x.
std::vector<double> state_weights(const DensityFit& fit, std::size_t d, std::span<const double> x);
// out[d][g] = f(y_grid[g] | x) for retained draw d, original units.
std::vector<std::vector<double>> conditional_density(const DensityFit& fit, std::span<const double> x,
                                                     std::span<const double> y_grid);
// E(Y | x) per retained draw, original units.
std::vector<double> conditional_mean(const DensityFit& fit, std::span<const double> x);

}  // namespace cloglog
