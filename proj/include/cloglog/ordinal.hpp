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

struct OrdinalParams {
  std::vector<double> gamma;  // gamma_1 .. gamma_{K-1}
  double a_gamma = 1.0;
  double b_gamma = 1.0;

  int num_categories() const { return static_cast<int>(gamma.size()) + 1; }
};

// c_k = log sum_{j<=k} exp(gamma_j).
std::vector<double> cutpoints_from_gamma(std::span<const double> gamma);

// Cumulative form: exp(-e^{c_{k-1}+r}) - exp(-e^{c_k+r}), k in 1..K.
double ordinal_pmf(std::span<const double> gamma, double r, int k);
// Continuation form with r[j-1] = r(x, j), j = 1..K-1:
// G(gamma_k + r_k) prod_{j<k} exp(-e^{gamma_j + r_j}).
double ordinal_pmf(std::span<const double> gamma, std::span<const double> r, int k);
// log of the continuation form, without cancellation in the upper tail.
double ordinal_log_pmf(std::span<const double> gamma, std::span<const double> r, int k);
// All K probabilities (continuation form), the last one the complement of
// the others so the vector sums to one.
std::vector<double> ordinal_pmf_vector(std::span<const double> gamma, std::span<const double> r);

struct OrdinalConfig {
  int num_categories = 2;
  bool proportional = true;
  std::size_t num_trees = 50;
  double sigma_mu = 0.0;  // <= 0 selects 1.5 / sqrt(num_trees)
  double a_gamma = 1.0;
  double b_gamma = 1.0;
  double category_weight = 0.5;
  DepthPrior depth;
  int max_cuts = 100;
  // K = 2 only: also augment the top category with E ~ TExp(rate, 1, inf).
  bool augment_top = false;
  // Multiplies every leaf exposure. Only for negative-control calibration.
  double exposure_scale = 1.0;

  double leaf_sigma() const;
  void validate() const;
};

// Gibbs state for PH / NPH cloglog ordinal regression.
class OrdinalSampler {
 public:
  // `grid` defaults to the candidate grid of `x`.
  OrdinalSampler(const OrdinalConfig& config, const Matrix& x, std::span<const int> y,
                 std::shared_ptr<const SplitGrid> grid = nullptr);

  // Replaces the outcomes (used when the outcome is itself sampled).
  void set_outcomes(std::span<const int> y);

  void update_latents(Rng& rng);
  void update_forest(Rng& rng);
  void update_gamma(Rng& rng);
  void update_split_probs(Rng& rng);
  // latents -> trees -> gamma -> split probabilities
  void sweep(Rng& rng);

  // Leaf statistics of a candidate replacement for tree t.
  std::vector<LeafStats> suffstats(std::size_t t, const Tree& candidate) const;

  int num_categories() const { return config_.num_categories; }
  const OrdinalConfig& config() const { return config_; }
  std::span<const double> gamma() const { return gamma_; }
  void set_gamma(std::vector<double> gamma);
  std::span<const double> latents() const { return z_; }
  void set_latents(std::vector<double> z);
  const Forest& forest() const { return ensemble_.forest(); }
  void set_forest(Forest forest);
  const LogGammaPrior& leaf_prior() const { return leaf_prior_; }
  std::span<const int> outcomes() const { return y_; }

  // r(x, k) for k = 1..K-1 (constant in k for the PH model).
  std::vector<double> link_values(std::span<const double> x) const;
  std::vector<double> pmf(std::span<const double> x) const;
  double log_likelihood(std::size_t i) const;

 private:
  void build_units();
  void refresh_bases();
  // r for the (i, j) term of the augmented likelihood.
  double unit_link(std::size_t i, int j) const;
  // Z_ij: 1 when Y_i > j, the latent when Y_i == j.
  double z_term(std::size_t i, int j) const;
  int top_pair(std::size_t i) const;

  OrdinalConfig config_;
  const Matrix* x_;
  std::vector<int> y_;
  std::vector<double> gamma_;
  std::vector<double> z_;
  LogGammaPrior leaf_prior_;
  ExposureEnsemble ensemble_;
  std::vector<std::size_t> first_unit_;  // first unit index of observation i
};

struct OrdinalFit {
  OrdinalConfig config;
  McmcConfig mcmc;
  std::vector<std::vector<double>> gamma;  // per retained draw
  std::vector<Forest> forests;             // per retained draw
  PosteriorDraws draws;
  Matrix query;
};

// Query rows of `query` are evaluated at every retained draw.
OrdinalFit fit_ordinal(const OrdinalConfig& config, const McmcConfig& mcmc, const Matrix& x,
                       std::span<const int> y, const Matrix& query, Rng& rng);

// Per-draw pmf rows for one query point: out[d][k-1].
std::vector<std::vector<double>> predict_ordinal(const OrdinalFit& fit, std::span<const double> x);

enum class BinaryLink { kCloglog, kLoglog };

struct BinaryFit {
  OrdinalFit ordinal;
  BinaryLink link = BinaryLink::kCloglog;
};

// Y in {0, 1}. p(x) = 1 - exp(-e^{gamma + r(x)}) under cloglog; loglog
// recodes Y <- 1 - Y and reports 1 - p.
BinaryFit fit_binary(OrdinalConfig config, const McmcConfig& mcmc, const Matrix& x,
                     std::span<const int> y, BinaryLink link, bool augment_zeros,
                     const Matrix& query, Rng& rng);

// Per-draw success probability at x.
std::vector<double> predict_binary(const BinaryFit& fit, std::span<const double> x);

}  // namespace cloglog
