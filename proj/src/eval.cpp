// Apache License, Version 2.0, refer to LICENSE.txt

#include "cloglog/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <Eigen/Dense>

#include "cloglog/error.hpp"
#include "cloglog/logging.hpp"

namespace cloglog {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double sample_sd(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double gpd_quantile(double p, double k, double sigma) {
  if (std::abs(k) < 1e-12) return -sigma * std::log1p(-p);
  return sigma / k * std::expm1(-k * std::log1p(-p));
}

}  // namespace

// ---------------------------------------------------------------- PSIS

ParetoFit fit_generalized_pareto(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 2) throw DomainError("fit_generalized_pareto: need at least two exceedances");
  const double prior = 3.0;
  const std::size_t m = 30 + static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
  const double xstar = x[static_cast<std::size_t>(std::floor(static_cast<double>(n) / 4.0 + 0.5)) - 1];
  std::vector<double> theta(m), ll(m);
  for (std::size_t j = 0; j < m; ++j) {
    theta[j] = 1.0 / x[n - 1] +
               (1.0 - std::sqrt(static_cast<double>(m) / (static_cast<double>(j) + 0.5))) / (prior * xstar);
    double k = 0.0;
    for (double v : x) k += std::log1p(-theta[j] * v);
    k /= static_cast<double>(n);
    const double ratio = -theta[j] / k;
    ll[j] = ratio > 0.0 ? static_cast<double>(n) * (std::log(ratio) - k - 1.0) : -INFINITY;
  }
  const double top = log_sum_exp(ll);
  double theta_hat = 0.0;
  for (std::size_t j = 0; j < m; ++j) theta_hat += theta[j] * std::exp(ll[j] - top);
  double k = 0.0;
  for (double v : x) k += std::log1p(-theta_hat * v);
  k /= static_cast<double>(n);
  ParetoFit out;
  out.sigma = -k / theta_hat;
  const double nd = static_cast<double>(n);
  out.k = (nd * k + 10.0 * 0.5) / (nd + 10.0);
  return out;
}

PsisResult psis_smooth(std::span<const double> log_ratios) {
  const std::size_t S = log_ratios.size();
  if (S == 0) throw DomainError("psis_smooth: no draws");
  PsisResult out;
  out.log_weights.assign(log_ratios.begin(), log_ratios.end());
  auto& lw = out.log_weights;
  const double top = *std::max_element(lw.begin(), lw.end());
  if (!std::isfinite(top)) throw NumericalError("psis_smooth: non-finite log ratio");
  for (double& v : lw) v -= top;

  const auto tail = static_cast<std::size_t>(std::ceil(0.2 * static_cast<double>(S)));
  out.pareto_k = kNaN;
  if (tail >= 5 && tail < S) {
    std::vector<std::size_t> order(S);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lw[a] < lw[b]; });
    const double cutoff = lw[order[S - tail - 1]];
    const double exp_cut = std::exp(cutoff);
    std::vector<double> exceed(tail);
    for (std::size_t j = 0; j < tail; ++j) exceed[j] = std::exp(lw[order[S - tail + j]]) - exp_cut;
    if (exceed.back() > 0.0 && exceed.front() < exceed.back()) {
      // exceedances must be positive for the fit; ties at the cutoff are nudged
      for (double& e : exceed) e = std::max(e, std::numeric_limits<double>::min());
      const ParetoFit fit = fit_generalized_pareto(exceed);
      out.pareto_k = fit.k;
      if (std::isfinite(fit.k) && std::isfinite(fit.sigma) && fit.sigma > 0.0) {
        for (std::size_t j = 0; j < tail; ++j) {
          const double p = (static_cast<double>(j) + 0.5) / static_cast<double>(tail);
          const double v = std::log(exp_cut + gpd_quantile(p, fit.k, fit.sigma));
          lw[order[S - tail + j]] = std::min(v, 0.0);  // never above the largest raw ratio
        }
      }
    } else {
      out.pareto_k = 0.0;  // flat tail
    }
  }
  const double log_s = std::log(static_cast<double>(S));
  const double cap = log_sum_exp(lw) - log_s + 0.75 * log_s;
  for (double& v : lw) v = std::min(v, cap);
  const double norm = log_sum_exp(lw) - log_s;
  for (double& v : lw) v -= norm;
  return out;
}

std::vector<double> log_predictive(const Matrix& loglik) {
  const std::size_t S = loglik.rows(), n = loglik.cols();
  if (S == 0) throw DomainError("log_predictive: no draws");
  std::vector<double> out(n), col(S);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < S; ++s) col[s] = loglik(s, i);
    out[i] = log_sum_exp(col) - std::log(static_cast<double>(S));
  }
  return out;
}

LooResult elpd_loo(const Matrix& loglik) {
  const std::size_t S = loglik.rows(), n = loglik.cols();
  if (S == 0 || n == 0) throw DomainError("elpd_loo: empty log-likelihood matrix");
  if (S < 100) warn("elpd_loo: fewer than 100 draws; PSIS diagnostics are unreliable");
  LooResult out;
  out.pointwise.resize(n);
  out.pareto_k.resize(n);
  std::vector<double> ll(S), lr(S), terms(S);
  double lppd = 0.0;
  int bad = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < S; ++s) {
      ll[s] = loglik(s, i);
      if (!std::isfinite(ll[s])) throw NumericalError("elpd_loo: non-finite log-likelihood in column " + std::to_string(i + 1));
      lr[s] = -ll[s];
    }
    lppd += log_sum_exp(ll) - std::log(static_cast<double>(S));
    const PsisResult w = psis_smooth(lr);
    for (std::size_t s = 0; s < S; ++s) terms[s] = w.log_weights[s] + ll[s];
    out.pointwise[i] = log_sum_exp(terms) - log_sum_exp(w.log_weights);
    out.pareto_k[i] = w.pareto_k;
    if (w.pareto_k > 0.7) ++bad;
  }
  out.elpd = std::accumulate(out.pointwise.begin(), out.pointwise.end(), 0.0);
  out.se = std::sqrt(static_cast<double>(n)) * sample_sd(out.pointwise);
  out.p_loo = lppd - out.elpd;
  if (bad > 0) warn("elpd_loo: " + std::to_string(bad) + " observations have Pareto k > 0.7");
  return out;
}

// ---------------------------------------------------------------- k-fold

std::vector<int> fold_assignment(std::size_t n, int folds, Rng& rng) {
  if (folds < 2) throw UsageError("k-fold needs at least 2 folds");
  if (n < static_cast<std::size_t>(folds)) throw DataError("k-fold: fewer observations than folds");
  std::vector<int> a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = static_cast<int>(i % static_cast<std::size_t>(folds));
  for (std::size_t i = n - 1; i > 0; --i) std::swap(a[i], a[rng.index(i + 1)]);
  return a;
}

void check_fold_levels(std::span<const int> labels, std::span<const int> assignment, int folds) {
  std::vector<int> levels(labels.begin(), labels.end());
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  for (int f = 0; f < folds; ++f) {
    for (int level : levels) {
      bool seen = false;
      for (std::size_t i = 0; i < labels.size() && !seen; ++i) seen = assignment[i] != f && labels[i] == level;
      if (!seen) {
        warn("fold " + std::to_string(f + 1) + ": training data has no observation at level " + std::to_string(level));
      }
    }
  }
}

double heldout_deviance(const HeldoutFn& fit, std::span<const int> assignment, int folds, const Rng& rng) {
  double dev = 0.0;
  for (int f = 0; f < folds; ++f) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < assignment.size(); ++i) (assignment[i] == f ? test : train).push_back(i);
    if (test.empty()) continue;
    Rng r = rng.split(static_cast<std::uint64_t>(f));
    const std::vector<double> lp = fit(train, test, r);
    if (lp.size() != test.size()) throw SchemaError("k-fold: one log predictive per held-out row expected");
    for (double v : lp) dev -= 2.0 * v;
  }
  return dev;
}

namespace {

constexpr std::uint64_t kAssignStream = 1ULL << 32;

std::vector<int> split_assignment(std::size_t n, int folds, const Rng& split_rng) {
  Rng a = split_rng.split(kAssignStream);
  return fold_assignment(n, folds, a);
}

void finish(KfoldResult& r) {
  r.mean = std::accumulate(r.split_deviance.begin(), r.split_deviance.end(), 0.0) /
           static_cast<double>(r.split_deviance.size());
}

}  // namespace

KfoldResult kfold_deviance(const HeldoutFn& fit, std::size_t n, int folds, int splits, const Rng& rng) {
  if (splits < 1) throw UsageError("k-fold needs at least one split");
  KfoldResult out;
  for (int s = 0; s < splits; ++s) {
    const Rng sr = rng.split(static_cast<std::uint64_t>(s));
    out.split_deviance.push_back(heldout_deviance(fit, split_assignment(n, folds, sr), folds, sr));
  }
  finish(out);
  return out;
}

DevianceComparison compare_kfold(const HeldoutFn& reference, const HeldoutFn& competitor, std::size_t n,
                                 int folds, int splits, const Rng& rng) {
  if (splits < 1) throw UsageError("k-fold needs at least one split");
  DevianceComparison out;
  for (int s = 0; s < splits; ++s) {
    const Rng sr = rng.split(static_cast<std::uint64_t>(s));
    const std::vector<int> a = split_assignment(n, folds, sr);
    const double dr = heldout_deviance(reference, a, folds, sr);
    const double dc = heldout_deviance(competitor, a, folds, sr);
    out.reference.split_deviance.push_back(dr);
    out.competitor.split_deviance.push_back(dc);
    out.difference.push_back(dr - dc);
    if (dr - dc > 0.0) ++out.competitor_better;
  }
  finish(out.reference);
  finish(out.competitor);
  out.mean = std::accumulate(out.difference.begin(), out.difference.end(), 0.0) / splits;
  out.se = sample_sd(out.difference) / std::sqrt(static_cast<double>(splits));
  return out;
}

// ---------------------------------------------------------------- held-out likelihoods

namespace {

std::vector<double> ordinal_links(const Forest& f, bool proportional, std::size_t K, std::span<const double> x) {
  if (proportional) return std::vector<double>(K - 1, f.evaluate(x));
  std::vector<double> r = f.evaluate_categories(x);
  r.resize(K - 1, 0.0);
  return r;
}

void check_rows(const Matrix& x, std::size_t n, std::size_t cols, const char* what) {
  if (x.rows() != n) throw SchemaError(std::string(what) + ": outcome length does not match predictors");
  if (x.cols() != cols) throw SchemaError(std::string(what) + ": wrong number of predictors");
}

std::size_t predictor_count(const std::vector<Forest>& forests) {
  if (forests.empty() || !forests[0].split_prior().grid) return 0;
  return forests[0].split_prior().num_predictors();
}

}  // namespace

Matrix heldout_loglik(const OrdinalFit& fit, const Matrix& x, std::span<const int> y) {
  check_rows(x, y.size(), predictor_count(fit.forests), "heldout_loglik");
  const int K = fit.config.num_categories;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 1 || y[i] > K) throw DataError("heldout_loglik: outcome at row " + std::to_string(i + 1) + " out of range");
  }
  Matrix out(fit.forests.size(), y.size());
  for (std::size_t d = 0; d < fit.forests.size(); ++d) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      const auto r = ordinal_links(fit.forests[d], fit.config.proportional, static_cast<std::size_t>(K), x.row(i));
      out(d, i) = ordinal_log_pmf(fit.gamma[d], r, y[i]);
    }
  }
  return out;
}

Matrix heldout_loglik(const BinaryFit& fit, const Matrix& x, std::span<const int> y) {
  std::vector<int> ord(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 0 && y[i] != 1) throw DataError("heldout_loglik: binary outcome at row " + std::to_string(i + 1) + " must be 0 or 1");
    const int success = fit.link == BinaryLink::kCloglog ? y[i] : 1 - y[i];
    ord[i] = 2 - success;
  }
  return heldout_loglik(fit.ordinal, x, ord);
}

Matrix heldout_loglik(const SurvivalFit& fit, const Matrix& x, std::span<const double> time,
                      std::span<const int> status) {
  check_rows(x, time.size(), predictor_count(fit.forests), "heldout_loglik");
  if (status.size() != time.size()) throw SchemaError("heldout_loglik: time and status lengths differ");
  const std::size_t B = fit.cuts.size() + 1;
  Matrix out(fit.forests.size(), time.size());
  for (std::size_t i = 0; i < time.size(); ++i) {
    if (!(time[i] > 0.0)) throw DataError("heldout_loglik: time at row " + std::to_string(i + 1) + " must be positive");
    if (status[i] != 0 && status[i] != 1) throw DataError("heldout_loglik: status must be 0 or 1");
  }
  for (std::size_t d = 0; d < fit.forests.size(); ++d) {
    const HazardGrid g{fit.cuts, fit.lambda[d]};
    for (std::size_t i = 0; i < time.size(); ++i) {
      std::vector<double> r;
      if (fit.config.proportional) {
        r.assign(1, fit.forests[d].evaluate(x.row(i)));
      } else {
        r = fit.forests[d].evaluate_categories(x.row(i));
        r.resize(B, 0.0);
      }
      out(d, i) = survival_loglik(g, r, time[i], status[i]);
    }
  }
  return out;
}

Matrix heldout_loglik(const DensityFit& fit, const Matrix& x, std::span<const double> y) {
  if (x.rows() != y.size()) throw SchemaError("heldout_loglik: outcome length does not match predictors");
  Matrix out(fit.states.size(), y.size());
  std::vector<double> terms;
  for (std::size_t d = 0; d < fit.states.size(); ++d) {
    const DensityState& s = fit.states[d];
    for (std::size_t i = 0; i < y.size(); ++i) {
      const std::vector<double> w = state_weights(fit, d, x.row(i));
      const double h = s.mean.evaluate(x.row(i));
      const double ys = (y[i] - fit.center) / fit.scale;
      terms.clear();
      for (std::size_t k = 0; k < w.size(); ++k) {
        if (w[k] <= 0.0) continue;
        const double z = (ys - s.comp.mu[k] - h) / s.comp.sigma[k];
        terms.push_back(std::log(w[k]) - 0.5 * z * z - std::log(s.comp.sigma[k]) - kLogSqrt2Pi);
      }
      out(d, i) = log_sum_exp(terms) - std::log(fit.scale);
    }
  }
  return out;
}

// ---------------------------------------------------------------- projection

namespace {

double quantile7(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double cube_plus(double v) { return v > 0.0 ? v * v * v : 0.0; }

}  // namespace

AdditiveBasis additive_basis(const Matrix& x, const AdditiveOptions& options) {
  const std::size_t m = x.rows(), P = x.cols();
  if (m == 0) throw DataError("additive_basis: no design points");
  if (!options.discrete.empty() && options.discrete.size() != P) {
    throw SchemaError("additive_basis: one discrete flag per predictor expected");
  }
  if (options.interior_knots < 0) throw UsageError("additive_basis: negative knot count");
  std::vector<std::vector<double>> cols{std::vector<double>(m, 1.0)};
  AdditiveBasis out;
  out.block_begin.resize(P);
  out.block_end.resize(P);
  for (std::size_t j = 0; j < P; ++j) {
    out.block_begin[j] = out.block_end[j] = cols.size();
    if (std::find(options.exclude.begin(), options.exclude.end(), static_cast<int>(j)) != options.exclude.end()) {
      continue;
    }
    std::vector<double> v(m);
    for (std::size_t i = 0; i < m; ++i) v[i] = x(i, j);
    std::vector<double> levels = v;
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    if (levels.size() < 2) continue;
    const bool discrete = options.discrete.empty() ? levels.size() <= 8 : bool(options.discrete[j]);
    if (discrete) {
      for (std::size_t l = 1; l < levels.size(); ++l) {
        std::vector<double> c(m);
        for (std::size_t i = 0; i < m; ++i) c[i] = v[i] == levels[l] ? 1.0 : 0.0;
        cols.push_back(std::move(c));
      }
    } else {
      const double lo = levels.front(), hi = levels.back();
      std::vector<double> u(m);
      for (std::size_t i = 0; i < m; ++i) u[i] = (v[i] - lo) / (hi - lo);
      std::vector<double> knots{0.0};
      for (int k = 1; k <= options.interior_knots; ++k) {
        const double q = quantile7(u, static_cast<double>(k) / (options.interior_knots + 1));
        if (q > knots.back() + 1e-9 && q < 1.0 - 1e-9) knots.push_back(q);
      }
      knots.push_back(1.0);
      cols.push_back(u);
      // natural cubic spline, truncated-power form: d_k - d_{K-1}
      const std::size_t K = knots.size();
      auto d = [&](std::size_t k, double t) {
        return (cube_plus(t - knots[k]) - cube_plus(t - knots[K - 1])) / (knots[K - 1] - knots[k]);
      };
      for (std::size_t k = 0; k + 2 < K; ++k) {
        std::vector<double> c(m);
        for (std::size_t i = 0; i < m; ++i) c[i] = d(k, u[i]) - d(K - 2, u[i]);
        cols.push_back(std::move(c));
      }
    }
    out.block_end[j] = cols.size();
  }
  out.design = Matrix(m, cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c) {
    for (std::size_t i = 0; i < m; ++i) out.design(i, c) = cols[c][i];
  }
  return out;
}

AdditiveProjection project_additive(const Matrix& r_draws, const Matrix& x, const AdditiveOptions& options) {
  const std::size_t S = r_draws.rows(), m = r_draws.cols();
  if (x.rows() != m) throw SchemaError("project_additive: one design row per evaluation point expected");
  const AdditiveBasis basis = additive_basis(x, options);
  const std::size_t p = basis.design.cols();
  Eigen::MatrixXd D(m, p);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t c = 0; c < p; ++c) D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = basis.design(i, c);
  }
  Eigen::MatrixXd R(m, S);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t i = 0; i < m; ++i) R(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s)) = r_draws(s, i);
  }
  AdditiveProjection out;
  Eigen::MatrixXd beta;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(D);
  if (qr.rank() == static_cast<Eigen::Index>(p)) {
    beta = qr.solve(R);
  } else {
    warn("project_additive: additive basis is rank deficient; using a ridge penalty of " + std::to_string(options.ridge));
    out.ridge_used = true;
    Eigen::MatrixXd G = D.transpose() * D;
    G.diagonal().array() += options.ridge;
    beta = G.ldlt().solve(D.transpose() * R);
  }
  const Eigen::MatrixXd F = D * beta;
  out.fitted = Matrix(S, m);
  out.r2.resize(S);
  out.ratio.resize(S);
  out.partial.assign(x.cols(), Matrix(S, m));
  for (std::size_t s = 0; s < S; ++s) {
    const auto si = static_cast<Eigen::Index>(s);
    double mean = 0.0;
    for (std::size_t i = 0; i < m; ++i) mean += r_draws(s, i) / static_cast<double>(m);
    double sse = 0.0, sst = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double f = F(static_cast<Eigen::Index>(i), si);
      out.fitted(s, i) = f;
      sse += (r_draws(s, i) - f) * (r_draws(s, i) - f);
      sst += (r_draws(s, i) - mean) * (r_draws(s, i) - mean);
      scale += r_draws(s, i) * r_draws(s, i);
    }
    if (sst <= 1e-24 * std::max(scale, 1e-300)) {
      out.ratio[s] = 0.0;
      out.r2[s] = 1.0;  // constant r: nothing to explain
    } else {
      out.ratio[s] = sse / sst;
      out.r2[s] = 1.0 - out.ratio[s];
    }
    for (std::size_t j = 0; j < x.cols(); ++j) {
      std::vector<double> q(m, 0.0);
      for (std::size_t c = basis.block_begin[j]; c < basis.block_end[j]; ++c) {
        for (std::size_t i = 0; i < m; ++i) q[i] += basis.design(i, c) * beta(static_cast<Eigen::Index>(c), si);
      }
      const double qm = std::accumulate(q.begin(), q.end(), 0.0) / static_cast<double>(m);
      for (std::size_t i = 0; i < m; ++i) out.partial[j](s, i) = q[i] - qm;
    }
  }
  return out;
}

}  // namespace cloglog
