// Apache License, Version 2.0, refer to LICENSE.txt

#include "cloglog/verify.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <memory>
#include <optional>
#include <thread>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "cloglog/density.hpp"
#include "cloglog/error.hpp"
#include "cloglog/forest.hpp"
#include "cloglog/logging.hpp"
#include "cloglog/ordinal.hpp"
#include "cloglog/special_math.hpp"
#include "cloglog/survival.hpp"

namespace cloglog {

// ---------------------------------------------------------------- oracles

double oracle_integrated_marginal(double a, double b, double A, double B) {
  if (!(a > 0.0) || !(b > 0.0) || !(A >= 0.0) || !(B >= 0.0)) {
    throw DomainError("oracle_integrated_marginal: need a, b > 0 and A, B >= 0");
  }
  const double shape = a + A, rate = b + B;
  auto g = [&](double mu) { return shape * mu - rate * std::exp(mu); };
  // integrate exp(g - g(mode)) so the peak is 1. With d = mu - mode the log
  // integrand is -shape * (e^d - 1 - d), which is below -40 beyond these
  // limits; the left tail decays only like exp(shape * d)
  const double mode = std::log(shape / rate);
  const double peak = g(mode);
  auto f = [&](double mu) { return std::exp(g(mu) - peak); };
  const double width = std::sqrt(80.0 / shape);
  const double left = mode - 40.0 / shape - 1.0 - width;
  const double right = mode + width;
  using Quad = boost::math::quadrature::gauss_kronrod<double, 61>;
  double err_lo = 0.0, err_hi = 0.0;
  const double lo = Quad::integrate(f, left, mode, 15, 1e-14, &err_lo);
  const double hi = Quad::integrate(f, mode, right, 15, 1e-14, &err_hi);
  const double total = lo + hi;
  if (!(total > 0.0) || err_lo + err_hi > 1e-9 * total) {
    throw ConvergenceError("oracle_integrated_marginal: quadrature did not converge");
  }
  return std::log(total) + peak + a * std::log(b) - std::lgamma(a);
}

double check_link_equivalence(std::span<const double> gamma, double r) {
  const std::size_t K = gamma.size() + 1;
  if (K < 2) throw DomainError("check_link_equivalence: need K >= 2");
  // continuation form
  std::vector<double> prod(K);
  double reach = 1.0;
  for (std::size_t k = 0; k + 1 < K; ++k) {
    const double h = -std::expm1(-std::exp(gamma[k] + r));
    prod[k] = h * reach;
    reach *= std::exp(-std::exp(gamma[k] + r));
  }
  prod[K - 1] = reach;
  // cumulative form on c_k
  const std::vector<double> c = cutpoints_from_gamma(gamma);
  std::vector<double> cum(K);
  double upper = 1.0;  // Pr(Y > k - 1)
  for (std::size_t k = 0; k < K; ++k) {
    const double next = k + 1 < K ? std::exp(-std::exp(c[k] + r)) : 0.0;
    cum[k] = upper - next;
    upper = next;
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double lib = ordinal_pmf(gamma, r, static_cast<int>(k) + 1);
    worst = std::max({worst, std::abs(prod[k] - cum[k]), std::abs(lib - prod[k])});
  }
  return worst;
}

double kolmogorov_pvalue(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  if (lambda < 0.2) return 1.0;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    p += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

KsReport check_dp_property(double r, std::size_t n_samples, Rng& rng) {
  if (n_samples < 2) throw DomainError("check_dp_property: need samples");
  std::vector<double> rest(n_samples);
  const std::vector<double> rr{r};
  for (double& v : rest) {
    const std::vector<double> g{sample_log_gamma(1.0, 1.0, rng)};
    v = stick_weights(g, rr)[1];  // exp(-e^{gamma + r})
  }
  std::sort(rest.begin(), rest.end());
  const double shape = std::exp(-r);
  const double n = static_cast<double>(n_samples);
  double d = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double f = std::pow(rest[i], shape);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return {d, kolmogorov_pvalue(d, n_samples), n_samples};
}

double check_latent_representation(std::span<const double> gamma, double r, std::size_t n_samples, Rng& rng) {
  const std::size_t K = gamma.size() + 1;
  if (K < 2) throw DomainError("check_latent_representation: need K >= 2");
  std::vector<double> count(K, 0.0);
  for (std::size_t s = 0; s < n_samples; ++s) {
    std::size_t y = K - 1;
    for (std::size_t k = 0; k + 1 < K; ++k) {
      const double t = std::clamp(gamma[k] + r, -30.0, 30.0);
      if (-t + std::log(rng.exponential()) < 0.0) {
        y = k;
        break;
      }
    }
    count[y] += 1.0;
  }
  const double n = static_cast<double>(n_samples);
  std::vector<double> clamped(gamma.begin(), gamma.end());
  for (double& g : clamped) g = std::clamp(g + r, -30.0, 30.0) - r;
  double worst = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double p = ordinal_pmf(clamped, r, static_cast<int>(k) + 1);
    const double se = std::max(std::sqrt(p * (1.0 - p) / n), 1.0 / n);
    worst = std::max(worst, std::abs(count[k] / n - p) / se);
  }
  return worst;
}

double check_leaf_prior_solver(double sigma_mu) {
  const LogGammaPrior p = solve_leaf_prior(sigma_mu);
  return std::max(std::abs(boost::math::digamma(p.a) - std::log(p.b)),
                  std::abs(boost::math::trigamma(p.a) - sigma_mu * sigma_mu));
}

double chi_square_pvalue(double statistic, double df) {
  if (!(df > 0.0)) throw DomainError("chi_square_pvalue: df must be positive");
  if (statistic <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * df, 0.5 * statistic);
}

// ---------------------------------------------------------------- SBC

namespace {

Forest prior_forest(std::size_t trees, const std::shared_ptr<const SplitGrid>& grid, int categories,
                    double category_weight, Rng& rng) {
  Forest f(trees, grid, categories);
  if (f.has_category_slot()) {
    std::vector<double> alpha(f.split_prior().num_slots(), 1.0);
    alpha.back() = category_weight;
    f.set_split_probs(rng.dirichlet(alpha));
  }
  for (std::size_t t = 0; t < trees; ++t) f.tree(t) = sample_tree_prior(f.depth_prior(), f.split_prior(), rng);
  return f;
}

void fill_log_gamma_leaves(Forest& f, const LogGammaPrior& prior, Rng& rng) {
  for (std::size_t t = 0; t < f.num_trees(); ++t) {
    std::vector<double> v(f.tree(t).leaves().size());
    for (double& x : v) x = sample_log_gamma(prior.a, prior.b, rng);
    f.tree(t).set_leaf_values(v);
  }
}

void fill_normal_leaves(Forest& f, double sigma, Rng& rng) {
  for (std::size_t t = 0; t < f.num_trees(); ++t) {
    std::vector<double> v(f.tree(t).leaves().size());
    for (double& x : v) x = sigma * rng.normal();
    f.tree(t).set_leaf_values(v);
  }
}

// truth and posterior draws per monitored quantity
struct Replicate {
  std::vector<double> truth;
  std::vector<std::vector<double>> draws;
};

McmcConfig sbc_mcmc(const SbcConfig& c) {
  McmcConfig m;
  m.burn_in = c.burn_in;
  m.kept = c.kept;
  m.thin = std::max(1, c.kept / c.draws);
  m.kept = m.thin * c.draws;
  return m;
}

Matrix uniform_design(std::size_t n, std::size_t p, Rng& rng) {
  Matrix x(n, p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) x(i, j) = rng.uniform();
  }
  return x;
}

Replicate ordinal_replicate(const SbcConfig& c, Rng& rng) {
  const int K = c.categories;
  OrdinalConfig oc;
  oc.num_categories = K;
  oc.proportional = c.proportional;
  oc.num_trees = c.trees;
  oc.exposure_scale = c.exposure_scale;
  const Matrix x = uniform_design(c.n, c.predictors, rng);
  const auto grid = std::make_shared<const SplitGrid>(SplitGrid::from_data(x, oc.max_cuts));
  Forest f = prior_forest(c.trees, grid, c.proportional ? 0 : K - 1, oc.category_weight, rng);
  fill_log_gamma_leaves(f, solve_leaf_prior(oc.leaf_sigma()), rng);
  std::vector<double> gamma(static_cast<std::size_t>(K - 1));
  for (double& g : gamma) g = sample_log_gamma(oc.a_gamma, oc.b_gamma, rng);
  std::vector<int> y(c.n);
  for (std::size_t i = 0; i < c.n; ++i) {
    std::vector<double> r(static_cast<std::size_t>(K - 1));
    if (c.proportional) {
      std::fill(r.begin(), r.end(), f.evaluate(x.row(i)));
    } else {
      r = f.evaluate_categories(x.row(i));
    }
    y[i] = static_cast<int>(rng.categorical(ordinal_pmf_vector(gamma, r))) + 1;
  }
  const std::vector<double> xs(c.predictors, 0.5);
  const int k_star = c.proportional ? 0 : 1;
  Replicate rep;
  rep.truth = {gamma[0], f.evaluate(xs, k_star)};
  const OrdinalFit fit = fit_ordinal(oc, sbc_mcmc(c), x, y, Matrix(), rng);
  rep.draws.resize(2);
  for (std::size_t d = 0; d < fit.forests.size(); ++d) {
    rep.draws[0].push_back(fit.gamma[d][0]);
    rep.draws[1].push_back(fit.forests[d].evaluate(xs, k_star));
  }
  return rep;
}

Replicate survival_replicate(const SbcConfig& c, Rng& rng) {
  SurvivalConfig sc;
  sc.proportional = c.proportional;
  sc.num_trees = c.trees;
  sc.exposure_scale = c.exposure_scale;
  sc.cuts = {0.25, 0.75, 1.5};
  const std::size_t B = sc.cuts.size() + 1;
  const Matrix x = uniform_design(c.n, c.predictors, rng);
  const auto grid = std::make_shared<const SplitGrid>(SplitGrid::from_data(x, sc.max_cuts));
  Forest f = prior_forest(c.trees, grid, c.proportional ? 0 : static_cast<int>(B), sc.category_weight, rng);
  fill_log_gamma_leaves(f, solve_leaf_prior(sc.leaf_sigma()), rng);
  HazardGrid hz{sc.cuts, std::vector<double>(B)};
  for (double& l : hz.lambda) l = rng.gamma(sc.a_lambda, sc.b_lambda);
  std::vector<double> time(c.n);
  std::vector<int> status(c.n);
  for (std::size_t i = 0; i < c.n; ++i) {
    std::vector<double> r(B);
    if (c.proportional) {
      std::fill(r.begin(), r.end(), f.evaluate(x.row(i)));
    } else {
      r = f.evaluate_categories(x.row(i));
    }
    // invert the piecewise-linear cumulative hazard
    double e = rng.exponential(), t = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      const double h = hz.lambda[b] * std::exp(std::clamp(r[b], -kExponentClamp, kExponentClamp));
      const double width = b + 1 < B ? hz.cuts[b] - hz.lower(b) : INFINITY;
      if (e <= h * width) {
        t = hz.lower(b) + e / h;
        break;
      }
      e -= h * width;
    }
    const double cens = rng.exponential() / 0.3;
    time[i] = std::max(std::min(t, cens), 1e-12);
    status[i] = t <= cens ? 1 : 0;
  }
  const std::vector<double> xs(c.predictors, 0.5);
  const int k_star = c.proportional ? 0 : 1;
  Replicate rep;
  rep.truth = {f.evaluate(xs, k_star), hz.lambda[0]};
  const SurvivalFit fit = fit_survival(sc, sbc_mcmc(c), x, time, status, Matrix(), rng);
  rep.draws.resize(2);
  for (std::size_t d = 0; d < fit.forests.size(); ++d) {
    rep.draws[0].push_back(fit.forests[d].evaluate(xs, k_star));
    rep.draws[1].push_back(fit.lambda[d][0]);
  }
  return rep;
}

Replicate density_replicate(const SbcConfig& c, Rng& rng) {
  DensityConfig dc;
  dc.max_components = c.categories;
  dc.proportional = c.proportional;
  dc.stick_trees = dc.mean_trees = c.trees;
  dc.standardize = false;
  dc.exposure_scale = c.exposure_scale;
  const auto K = static_cast<std::size_t>(c.categories);
  const Matrix x = uniform_design(c.n, c.predictors, rng);
  const auto grid = std::make_shared<const SplitGrid>(SplitGrid::from_data(x, dc.max_cuts));
  const double leaf = 1.0 / std::sqrt(static_cast<double>(c.trees));
  Forest sticks = prior_forest(c.trees, grid, c.proportional ? 0 : c.categories - 1, dc.category_weight, rng);
  fill_log_gamma_leaves(sticks, solve_leaf_prior(leaf), rng);
  Forest mean = prior_forest(c.trees, grid, 0, dc.category_weight, rng);
  fill_normal_leaves(mean, leaf, rng);
  std::vector<double> gamma(K - 1);
  for (double& g : gamma) g = sample_log_gamma(dc.a_gamma, dc.b_gamma, rng);
  const double tau0 = rng.gamma(1.0, 1.0);
  const double a_sigma = rng.gamma(4.0, 2.0), b_sigma = rng.gamma(4.0, 2.0);
  std::vector<double> mu(K), sd(K);
  for (std::size_t k = 0; k < K; ++k) {
    mu[k] = dc.mu0 + rng.normal() / std::sqrt(tau0);
    sd[k] = std::exp(-0.5 * rng.log_gamma(a_sigma, b_sigma));
  }
  auto links = [&](std::span<const double> xi) {
    std::vector<double> r(K - 1);
    if (c.proportional) {
      std::fill(r.begin(), r.end(), sticks.evaluate(xi));
    } else {
      r = sticks.evaluate_categories(xi);
    }
    return r;
  };
  std::vector<double> y(c.n);
  for (std::size_t i = 0; i < c.n; ++i) {
    const std::size_t k = rng.categorical(stick_weights(gamma, links(x.row(i))));
    y[i] = mu[k] + mean.evaluate(x.row(i)) + sd[k] * rng.normal();
  }
  const std::vector<double> xs(c.predictors, 0.5);
  const int k_star = c.proportional ? 0 : 1;
  Replicate rep;
  rep.truth = {gamma[0], sticks.evaluate(xs, k_star), stick_weights(gamma, links(xs))[0]};
  const DensityFit fit = fit_density(dc, sbc_mcmc(c), x, y, Matrix(), rng);
  rep.draws.resize(3);
  for (std::size_t d = 0; d < fit.states.size(); ++d) {
    rep.draws[0].push_back(fit.states[d].gamma[0]);
    rep.draws[1].push_back(fit.states[d].sticks.evaluate(xs, k_star));
    rep.draws[2].push_back(state_weights(fit, d, xs)[0]);
  }
  return rep;
}

}  // namespace

std::vector<SbcReport> sbc_run(const SbcConfig& config, const Rng& rng) {
  if (config.replications < 1 || config.draws < 1 || config.bins < 2) {
    throw UsageError("sbc: need replications, draws and at least two bins");
  }
  if (config.model != SbcModel::kSurvival && config.categories < 2) throw UsageError("sbc: need K >= 2");
  std::vector<std::string> names;
  switch (config.model) {
    case SbcModel::kOrdinal: names = {"gamma[1]", "r(x*)"}; break;
    case SbcModel::kSurvival: names = {"r(x*)", "lambda[1]"}; break;
    case SbcModel::kDensity: names = {"gamma[1]", "r(x*)", "w1(x*)"}; break;
  }
  const auto R = static_cast<std::size_t>(config.replications);
  std::vector<std::optional<std::vector<int>>> ranks(R);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t rep = next++; rep < R; rep = next++) {
      Rng r = rng.split(rep);
      try {
        Replicate out;
        switch (config.model) {
          case SbcModel::kOrdinal: out = ordinal_replicate(config, r); break;
          case SbcModel::kSurvival: out = survival_replicate(config, r); break;
          case SbcModel::kDensity: out = density_replicate(config, r); break;
        }
        std::vector<int> rk;
        for (std::size_t q = 0; q < out.truth.size(); ++q) {
          int less = 0, equal = 0;
          for (double v : out.draws[q]) {
            less += v < out.truth[q];
            equal += v == out.truth[q];
          }
          // ties are spread uniformly over the tied positions
          rk.push_back(less + static_cast<int>(r.index(static_cast<std::size_t>(equal) + 1)));
        }
        ranks[rep] = std::move(rk);
      } catch (const Error&) {
        ranks[rep].reset();
      }
    }
  };
  const int threads = std::max(1, config.threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  int failed = 0;
  for (const auto& r : ranks) failed += !r.has_value();
  if (failed > 0) {
    warn("sbc: " + std::to_string(failed) + " of " + std::to_string(R) + " replications failed and were excluded");
  }
  const int L = config.draws;  // ranks take values 0..L
  std::vector<double> expected(static_cast<std::size_t>(config.bins), 0.0);
  for (int q = 0; q <= L; ++q) expected[static_cast<std::size_t>(q * config.bins / (L + 1))] += 1.0 / (L + 1);
  std::vector<SbcReport> out;
  for (std::size_t p = 0; p < names.size(); ++p) {
    SbcReport rep;
    rep.parameter = names[p];
    rep.histogram.assign(static_cast<std::size_t>(config.bins), 0);
    rep.failed = failed;
    for (const auto& r : ranks) {
      if (!r) continue;
      ++rep.histogram[static_cast<std::size_t>((*r)[p] * config.bins / (L + 1))];
      ++rep.replications;
    }
    double chi2 = 0.0;
    for (std::size_t b = 0; b < expected.size(); ++b) {
      const double e = expected[b] * rep.replications;
      chi2 += (rep.histogram[b] - e) * (rep.histogram[b] - e) / e;
    }
    rep.chi2 = chi2;
    rep.p_value = rep.replications > 0 ? chi_square_pvalue(chi2, config.bins - 1) : 0.0;
    // too many failures invalidate the calibration check
    if (failed * 20 >= config.replications) rep.p_value = 0.0;
    out.push_back(std::move(rep));
  }
  return out;
}

}  // namespace cloglog
