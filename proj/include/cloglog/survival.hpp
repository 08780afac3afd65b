// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <memory>
#include <span>
#include <vector>

#include "cloglog/draws.hpp"
#include "cloglog/forest.hpp"
#include "cloglog/matrix.hpp"
#include "cloglog/rng.hpp"

namespace cloglog {

// Piecewise-constant baseline hazard on [0, t_1), [t_1, t_2), ..., [t_{B-1}, inf).
struct HazardGrid {
  std::vector<double> cuts;    // interior boundaries t_1 < ... < t_{B-1}
  std::vector<double> lambda;  // one rate per bin

  std::size_t num_bins() const { return cuts.size() + 1; }
  // 0-based bin of y under t_{b-1} <= y < t_b.
  std::size_t bin_of(double y) const;
  double lower(std::size_t b) const { return b == 0 ? 0.0 : cuts[b - 1]; }
  // Time spent in bin b by a subject observed until y (Z_ib).
  double exposure(double y, std::size_t b) const;
  // Throws DomainError unless cuts are positive and strictly increasing.
  void validate() const;
};

// Smallest B with B^3 >= n.
int default_num_bins(std::size_t n);

// Interior boundaries at the j/B empirical quantiles (linear interpolation)
// of the uncensored times, deduplicated. B <= 0 selects default_num_bins(n).
std::vector<double> make_bins(std::span<const double> uncensored, std::size_t n, int num_bins = 0);

// delta (log lambda_{B_i} + r_{B_i}) - sum_{b <= B_i} lambda_b e^{r_b} Z_ib.
// `r` holds one value per bin, or a single value for the PH model.
double survival_loglik(const HazardGrid& grid, std::span<const double> r, double y, int delta);

// exp(-sum_b lambda_b e^{r_b} Z_b(t)); same convention for `r`.
double survival_probability(const HazardGrid& grid, std::span<const double> r, double t);

struct SurvivalConfig {
  bool proportional = true;
  std::size_t num_trees = 50;
  double sigma_mu = 0.0;  // <= 0 selects 1.5 / sqrt(num_trees)
  double a_lambda = 1.0;
  double b_lambda = 1.0;
  int num_bins = 0;  // <= 0 selects ceil(n^{1/3})
  int max_nph_bins = 20;
  std::vector<double> cuts;  // explicit interior boundaries; overrides num_bins
  double category_weight = 0.5;
  DepthPrior depth;
  int max_cuts = 100;
  double exposure_scale = 1.0;  // negative-control calibration only

  double leaf_sigma() const;
  void validate() const;
};

struct GammaParams {
  double shape = 1.0;
  double rate = 1.0;
};

class SurvivalSampler {
 public:
  SurvivalSampler(const SurvivalConfig& config, const Matrix& x, std::span<const double> time,
                  std::span<const int> status, std::shared_ptr<const SplitGrid> grid = nullptr);

  // Full conditional of each lambda_b given the current forest.
  std::vector<GammaParams> lambda_conditionals() const;
  void update_lambda(Rng& rng);
  void update_forest(Rng& rng);
  void update_split_probs(Rng& rng);
  // lambda -> trees -> split probabilities (NPH)
  void sweep(Rng& rng);

  std::vector<LeafStats> suffstats(std::size_t t, const Tree& candidate) const;

  const SurvivalConfig& config() const { return config_; }
  const HazardGrid& hazard() const { return hazard_; }
  void set_lambda(std::vector<double> lambda);
  const Forest& forest() const { return ensemble_.forest(); }
  void set_forest(Forest forest);
  const LogGammaPrior& leaf_prior() const { return leaf_prior_; }
  std::size_t bin(std::size_t i) const { return bin_[i]; }

  // r(x, b) for every bin (constant for PH).
  std::vector<double> link_values(std::span<const double> x) const;
  double log_likelihood(std::size_t i) const;

 private:
  void refresh_bases();
  // r of the observation i in bin b from the ensemble fit.
  double unit_link(std::size_t i, std::size_t b) const;

  SurvivalConfig config_;
  const Matrix* x_;
  std::vector<double> time_;
  std::vector<int> status_;
  std::vector<std::size_t> bin_;
  HazardGrid hazard_;
  LogGammaPrior leaf_prior_;
  ExposureEnsemble ensemble_;
  std::vector<std::size_t> first_unit_;
};

struct SurvivalFit {
  SurvivalConfig config;
  McmcConfig mcmc;
  std::vector<double> cuts;
  std::vector<std::vector<double>> lambda;  // per retained draw
  std::vector<Forest> forests;              // per retained draw
  PosteriorDraws draws;
  Matrix query;
};

SurvivalFit fit_survival(const SurvivalConfig& config, const McmcConfig& mcmc, const Matrix& x,
                         std::span<const double> time, std::span<const int> status,
                         const Matrix& query, Rng& rng);

// out[d][g] = S(t_grid[g] | x) for retained draw d.
std::vector<std::vector<double>> survival_function(const SurvivalFit& fit, std::span<const double> x,
                                                   std::span<const double> t_grid);

}  // namespace cloglog
