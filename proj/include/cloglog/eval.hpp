// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <functional>
#include <span>
#include <vector>

#include "cloglog/density.hpp"
#include "cloglog/matrix.hpp"
#include "cloglog/ordinal.hpp"
#include "cloglog/rng.hpp"
#include "cloglog/survival.hpp"

namespace cloglog {

// ---------------------------------------------------------------- PSIS-LOO

struct ParetoFit {
  double k = 0.0;
  double sigma = 0.0;
};

// Zhang-Stephens estimate for exceedances `x` (positive, sorted ascending),
// with the usual weakly informative shrinkage of k toward 0.5.
ParetoFit fit_generalized_pareto(std::span<const double> x);

struct PsisResult {
  std::vector<double> log_weights;  // normalized: logsumexp = log S
  double pareto_k = 0.0;            // NaN when the tail was too short to fit
};

// Pareto-smoothed importance weights from raw log ratios. The top 20% of the
// ratios are replaced by generalized Pareto quantiles and every weight is
// truncated at S^{3/4} times the mean weight.
PsisResult psis_smooth(std::span<const double> log_ratios);

struct LooResult {
  double elpd = 0.0;
  double se = 0.0;
  double p_loo = 0.0;
  std::vector<double> pointwise;  // elpd_i
  std::vector<double> pareto_k;   // per observation
};

// loglik is draws x observations.
LooResult elpd_loo(const Matrix& loglik);

// log (1/S sum_s exp(loglik[s, i])) per column.
std::vector<double> log_predictive(const Matrix& loglik);

// ---------------------------------------------------------------- k-fold

// Fits on `train` and returns the log predictive density of each `test` row.
using HeldoutFn = std::function<std::vector<double>(std::span<const std::size_t> train,
                                                    std::span<const std::size_t> test, Rng& rng)>;

// Balanced fold labels 0..folds-1 in seeded random order.
std::vector<int> fold_assignment(std::size_t n, int folds, Rng& rng);

// Warns for every fold whose training part misses a level of `labels`.
void check_fold_levels(std::span<const int> labels, std::span<const int> assignment, int folds);

// sum_i -2 log p(y_i | D_{-fold(i)}) for one assignment. Fold f uses
// rng.split(f).
double heldout_deviance(const HeldoutFn& fit, std::span<const int> assignment, int folds, const Rng& rng);

struct KfoldResult {
  std::vector<double> split_deviance;
  double mean = 0.0;
};

// Split s uses rng.split(s) for its assignment and fits.
KfoldResult kfold_deviance(const HeldoutFn& fit, std::size_t n, int folds, int splits, const Rng& rng);

struct DevianceComparison {
  KfoldResult reference;
  KfoldResult competitor;
  std::vector<double> difference;  // reference - competitor, per split
  double mean = 0.0;
  double se = 0.0;
  int competitor_better = 0;  // splits with difference > 0
};

// Both models see identical fold assignments.
DevianceComparison compare_kfold(const HeldoutFn& reference, const HeldoutFn& competitor, std::size_t n,
                                 int folds, int splits, const Rng& rng);

// Per-draw log likelihood of new rows: draws x rows.
Matrix heldout_loglik(const OrdinalFit& fit, const Matrix& x, std::span<const int> y);
Matrix heldout_loglik(const BinaryFit& fit, const Matrix& x, std::span<const int> y);
Matrix heldout_loglik(const SurvivalFit& fit, const Matrix& x, std::span<const double> time,
                      std::span<const int> status);
Matrix heldout_loglik(const DensityFit& fit, const Matrix& x, std::span<const double> y);

// ---------------------------------------------------------------- projection

struct AdditiveOptions {
  int interior_knots = 6;
  double ridge = 1e-8;
  // Per predictor; empty means auto (at most 8 distinct values is discrete).
  std::vector<bool> discrete;
  // Predictors left out of the basis.
  std::vector<int> exclude;
};

// Additive basis for the columns of `x`, one block per predictor.
struct AdditiveBasis {
  Matrix design;                      // intercept first
  std::vector<std::size_t> block_begin;  // per predictor, empty block when excluded
  std::vector<std::size_t> block_end;
};

AdditiveBasis additive_basis(const Matrix& x, const AdditiveOptions& options = {});

struct AdditiveProjection {
  Matrix fitted;               // draws x design points
  std::vector<double> r2;      // 1 - ratio (1 when r is constant)
  std::vector<double> ratio;   // sum (r - fitted)^2 / sum (r - mean r)^2
  std::vector<Matrix> partial; // per predictor: draws x design points, centered
  bool ridge_used = false;
};

// r_draws is draws x design points, x is design points x predictors.
AdditiveProjection project_additive(const Matrix& r_draws, const Matrix& x,
                                    const AdditiveOptions& options = {});

}  // namespace cloglog
