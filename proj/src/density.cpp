// Apache License, Version 2.0, refer to LICENSE.txt

#include "cloglog/density.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "cloglog/error.hpp"
#include "cloglog/logging.hpp"

namespace cloglog {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double log_normal(double y, double mean, double sd) {
  const double z = (y - mean) / sd;
  return -0.5 * z * z - std::log(sd) - kLogSqrt2Pi;
}

OrdinalConfig stick_config(const DensityConfig& c) {
  OrdinalConfig o;
  o.num_categories = c.max_components;
  o.proportional = c.proportional;
  o.num_trees = c.stick_trees;
  o.sigma_mu = c.stick_sigma > 0.0 ? c.stick_sigma : 1.0 / std::sqrt(static_cast<double>(c.stick_trees));
  o.a_gamma = c.a_gamma;
  o.b_gamma = c.b_gamma;
  o.category_weight = c.category_weight;
  o.depth = c.depth;
  o.max_cuts = c.max_cuts;
  o.exposure_scale = c.exposure_scale;
  return o;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// log w_k for k = 1..K, with the remainder in the last slot.
std::vector<double> log_stick_weights(std::span<const double> gamma, std::span<const double> r) {
  const std::size_t K = gamma.size() + 1;
  std::vector<double> out(K);
  double log_reach = 0.0;
  for (std::size_t k = 0; k + 1 < K; ++k) {
    const double t = gamma[k] + r[k];
    out[k] = log_reach + std::log(gumbel_cdf(t));
    log_reach -= std::exp(t);
  }
  out[K - 1] = log_reach;
  return out;
}

std::vector<double> links_at(const Forest& f, bool proportional, std::size_t K, std::span<const double> x) {
  if (proportional) return std::vector<double>(K - 1, f.evaluate(x));
  std::vector<double> r = f.evaluate_categories(x);
  r.resize(K - 1, 0.0);
  return r;
}

}  // namespace

std::vector<double> stick_weights(std::span<const double> gamma, std::span<const double> r) {
  return ordinal_pmf_vector(gamma, r);
}

void DensityConfig::validate() const {
  if (max_components < 1) throw UsageError("density model needs K_max >= 1");
  if (stick_trees < 1 || mean_trees < 1) throw UsageError("need at least one tree per forest");
  if (!(a_sigma_step > 0.0)) throw UsageError("a_sigma step must be positive");
}

// ---------------------------------------------------------------- sampler

namespace {

std::vector<double> standardize(std::span<const double> y, bool enabled, double& center, double& scale) {
  if (y.empty()) throw DataError("density: no observations");
  if (!enabled) {
    center = 0.0;
    scale = 1.0;
    return {y.begin(), y.end()};
  }
  center = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double ss = 0.0;
  for (double v : y) ss += (v - center) * (v - center);
  scale = y.size() > 1 ? std::sqrt(ss / static_cast<double>(y.size() - 1)) : 0.0;
  if (!(scale > 0.0)) {
    warn("density: outcome has zero variance; skipping the scale standardization");
    scale = 1.0;
  }
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = (y[i] - center) / scale;
  return out;
}

}  // namespace

DensitySampler::DensitySampler(const DensityConfig& config, const Matrix& x,
                               std::span<const double> y)
    : config_(config),
      x_(&x),
      y_(standardize(y, config.standardize, center_, scale_)),
      c_(y.size(), 1),
      mean_(Forest(config.mean_trees,
                   std::make_shared<const SplitGrid>(SplitGrid::from_data(x, config.max_cuts)), 0,
                   config.depth),
            x) {
  config_.validate();
  if (y.size() != x.rows()) throw SchemaError("density: outcome length does not match predictors");
  for (double v : y) {
    if (!std::isfinite(v)) throw DataError("density: non-finite outcome");
  }
  if (static_cast<int>(y.size()) < config_.max_components) {
    warn("density: fewer observations than mixture components");
  }
  const auto K = static_cast<std::size_t>(config_.max_components);
  comp_.mu.assign(K, config_.mu0);
  comp_.sigma.assign(K, 1.0);
  // start from clusters of adjacent outcome values
  const std::size_t G = std::min<std::size_t>(K, 5), n = y_.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return y_[a] < y_[b]; });
  for (std::size_t g = 0; g < G; ++g) {
    const std::size_t lo = g * n / G, hi = (g + 1) * n / G;
    if (hi == lo) continue;
    double m = 0.0, ss = 0.0;
    for (std::size_t j = lo; j < hi; ++j) m += y_[order[j]];
    m /= static_cast<double>(hi - lo);
    for (std::size_t j = lo; j < hi; ++j) {
      c_[order[j]] = static_cast<int>(g) + 1;
      ss += (y_[order[j]] - m) * (y_[order[j]] - m);
    }
    comp_.mu[g] = m;
    comp_.sigma[g] = std::max(std::sqrt(ss / static_cast<double>(hi - lo)), 0.1);
  }
  if (config_.max_components >= 2) sticks_.emplace(stick_config(config_), x, c_);
  mean_prior_.sigma_mu =
      config_.mean_sigma > 0.0 ? config_.mean_sigma : 1.0 / std::sqrt(static_cast<double>(config_.mean_trees));
}

void DensitySampler::set_assignments(std::vector<int> c) {
  if (c.size() != y_.size()) throw SchemaError("density: one assignment per observation expected");
  for (int v : c) {
    if (v < 1 || v > config_.max_components) throw DomainError("density: assignment out of range");
  }
  c_ = std::move(c);
  if (sticks_) sticks_->set_outcomes(c_);
}

void DensitySampler::set_components(MixtureComponents comp) {
  const auto K = static_cast<std::size_t>(config_.max_components);
  if (comp.mu.size() != K || comp.sigma.size() != K) throw SchemaError("density: need K_max components");
  comp_ = std::move(comp);
}

std::vector<double> DensitySampler::log_weights(std::span<const double> x) const {
  if (!sticks_) return {0.0};
  return log_stick_weights(sticks_->gamma(), sticks_->link_values(x));
}

std::vector<double> DensitySampler::stick_gamma() const {
  if (!sticks_) return {};
  return {sticks_->gamma().begin(), sticks_->gamma().end()};
}

Forest DensitySampler::stick_forest() const { return sticks_ ? sticks_->forest() : Forest(); }

void DensitySampler::update_assignments(Rng& rng) {
  const auto K = static_cast<std::size_t>(config_.max_components);
  const auto h = mean_.fit();
  std::vector<double> lp(K), p(K);
  for (std::size_t i = 0; i < y_.size(); ++i) {
    const std::vector<double> lw = log_weights(x_->row(i));
    double top = -INFINITY;
    for (std::size_t k = 0; k < K; ++k) {
      lp[k] = lw[k] + log_normal(y_[i], comp_.mu[k] + h[i], comp_.sigma[k]);
      top = std::max(top, lp[k]);
    }
    std::size_t pick;
    if (!std::isfinite(top)) {
      // every component numerically impossible: take the largest log weight
      pick = static_cast<std::size_t>(std::max_element(lw.begin(), lw.end()) - lw.begin());
    } else {
      for (std::size_t k = 0; k < K; ++k) p[k] = std::exp(lp[k] - top);
      pick = rng.categorical(p);
    }
    c_[i] = static_cast<int>(pick) + 1;
  }
}

void DensitySampler::update_sticks(Rng& rng) {
  if (!sticks_) return;
  sticks_->set_outcomes(c_);
  sticks_->sweep(rng);
}

void DensitySampler::update_mean_forest(Rng& rng) {
  const std::size_t n = y_.size();
  std::vector<double> target(n), weight(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(c_[i] - 1);
    target[i] = y_[i] - comp_.mu[k];
    weight[i] = 1.0 / (comp_.sigma[k] * comp_.sigma[k]);
  }
  mean_.set_targets(target, weight);
  mean_.sweep(mean_prior_, rng);
}

void DensitySampler::update_components(Rng& rng) {
  const auto K = static_cast<std::size_t>(config_.max_components);
  const auto h = mean_.fit();
  std::vector<double> count(K, 0.0), sum(K, 0.0);
  for (std::size_t i = 0; i < y_.size(); ++i) {
    const auto k = static_cast<std::size_t>(c_[i] - 1);
    count[k] += 1.0;
    sum[k] += y_[i] - h[i];
  }
  double sq_mu = 0.0, tau_sum = 0.0, log_tau_sum = 0.0;
  std::vector<double> tau(K);
  for (std::size_t k = 0; k < K; ++k) {
    const double tau_k = 1.0 / (comp_.sigma[k] * comp_.sigma[k]);
    const double prec = tau0_ + count[k] * tau_k;
    const double mean = (tau_k * sum[k] + tau0_ * config_.mu0) / prec;
    comp_.mu[k] = mean + rng.normal() / std::sqrt(prec);
    double ss = 0.0;
    if (count[k] > 0) {
      for (std::size_t i = 0; i < y_.size(); ++i) {
        if (static_cast<std::size_t>(c_[i] - 1) != k) continue;
        const double e = y_[i] - h[i] - comp_.mu[k];
        ss += e * e;
      }
    }
    const double log_tau = rng.log_gamma(a_sigma_ + 0.5 * count[k], b_sigma_ + 0.5 * ss);
    tau[k] = std::exp(log_tau);
    comp_.sigma[k] = std::exp(-0.5 * log_tau);
    sq_mu += (comp_.mu[k] - config_.mu0) * (comp_.mu[k] - config_.mu0);
    tau_sum += tau[k];
    log_tau_sum += log_tau;
  }
  const double Kd = static_cast<double>(K);
  tau0_ = rng.gamma(1.0 + 0.5 * Kd, 1.0 + 0.5 * sq_mu);
  b_sigma_ = rng.gamma(4.0 + Kd * a_sigma_, 2.0 + tau_sum);
  // random walk on log a_sigma; prior Gam(4, 2)
  auto log_target = [&](double a) {
    return 3.0 * std::log(a) - 2.0 * a + Kd * (a * std::log(b_sigma_) - std::lgamma(a)) +
           (a - 1.0) * log_tau_sum;
  };
  const double proposal = a_sigma_ * std::exp(config_.a_sigma_step * rng.normal());
  const double log_ratio =
      log_target(proposal) - log_target(a_sigma_) + std::log(proposal) - std::log(a_sigma_);
  if (std::log(rng.uniform()) < log_ratio) a_sigma_ = proposal;
}

void DensitySampler::sweep(Rng& rng) {
  update_assignments(rng);
  update_sticks(rng);
  update_mean_forest(rng);
  update_components(rng);
}

double DensitySampler::log_likelihood(std::size_t i) const {
  const auto K = static_cast<std::size_t>(config_.max_components);
  const std::vector<double> lw = log_weights(x_->row(i));
  const double h = mean_.fit()[i];
  std::vector<double> lp(K);
  for (std::size_t k = 0; k < K; ++k) lp[k] = lw[k] + log_normal(y_[i], comp_.mu[k] + h, comp_.sigma[k]);
  return log_sum_exp(lp) - std::log(scale_);
}

// ---------------------------------------------------------------- driver

DensityFit fit_density(const DensityConfig& config, const McmcConfig& mcmc, const Matrix& x,
                       std::span<const double> y, const Matrix& query, Rng& rng) {
  config.validate();
  mcmc.validate();
  if (!query.empty() && query.cols() != x.cols()) {
    throw SchemaError("fit_density: query points have the wrong number of predictors");
  }
  DensitySampler sampler(config, x, y);
  DensityFit fit;
  fit.config = config;
  fit.mcmc = mcmc;
  fit.center = sampler.center();
  fit.scale = sampler.scale();
  fit.query = query;
  PosteriorDraws& d = fit.draws;
  d.set_meta("model", "density");
  d.set_meta("mode", config.proportional ? "ph" : "nph");
  d.set_meta("K_max", std::to_string(config.max_components));
  d.set_meta("stick_trees", std::to_string(config.stick_trees));
  d.set_meta("mean_trees", std::to_string(config.mean_trees));
  d.set_meta("y_center", fmt(fit.center));
  d.set_meta("y_scale", fmt(fit.scale));
  d.columns = {"sigma0", "a_sigma", "b_sigma", "occupied"};
  for (std::size_t q = 0; q < query.rows(); ++q) {
    d.columns.push_back("mean[" + std::to_string(q + 1) + "]");
    d.columns.push_back("w1[" + std::to_string(q + 1) + "]");
  }
  const std::size_t n = x.rows();
  d.loglik = Matrix(static_cast<std::size_t>(mcmc.retained()), n);
  std::size_t kept = 0;
  for (int it = 0; it < mcmc.burn_in + mcmc.kept; ++it) {
    sampler.sweep(rng);
    const int post = it - mcmc.burn_in;
    if (post < 0 || post % mcmc.thin != mcmc.thin - 1) continue;
    if (kept >= d.loglik.rows()) break;
    DensityState s;
    s.gamma = sampler.stick_gamma();
    s.sticks = sampler.stick_forest();
    s.mean = sampler.mean_forest();
    s.comp = sampler.components();
    fit.states.push_back(std::move(s));

    std::vector<int> used(static_cast<std::size_t>(config.max_components), 0);
    for (int c : sampler.assignments()) used[static_cast<std::size_t>(c - 1)] = 1;
    std::vector<double> row{sampler.sigma0(), sampler.a_sigma(), sampler.b_sigma(),
                            static_cast<double>(std::accumulate(used.begin(), used.end(), 0))};
    for (std::size_t q = 0; q < query.rows(); ++q) {
      const std::vector<double> w = state_weights(fit, kept, query.row(q));
      const auto& st = fit.states.back();
      const double h = st.mean.evaluate(query.row(q));
      double m = 0.0;
      for (std::size_t k = 0; k < w.size(); ++k) m += w[k] * (st.comp.mu[k] + h);
      row.push_back(fit.center + fit.scale * m);
      row.push_back(w[0]);
    }
    for (std::size_t i = 0; i < n; ++i) d.loglik(kept, i) = sampler.log_likelihood(i);
    d.rows.push_back(std::move(row));
    ++kept;
  }
  return fit;
}

std::vector<double> state_weights(const DensityFit& fit, std::size_t d, std::span<const double> x) {
  const DensityState& s = fit.states[d];
  const auto K = static_cast<std::size_t>(fit.config.max_components);
  if (K == 1) return {1.0};
  return stick_weights(s.gamma, links_at(s.sticks, fit.config.proportional, K, x));
}

std::vector<std::vector<double>> conditional_density(const DensityFit& fit, std::span<const double> x,
                                                     std::span<const double> y_grid) {
  for (std::size_t g = 1; g < y_grid.size(); ++g) {
    if (!(y_grid[g] > y_grid[g - 1])) throw DomainError("conditional_density: grid must be ascending");
  }
  std::vector<std::vector<double>> out;
  out.reserve(fit.states.size());
  for (std::size_t d = 0; d < fit.states.size(); ++d) {
    const DensityState& s = fit.states[d];
    const std::vector<double> w = state_weights(fit, d, x);
    const double h = s.mean.evaluate(x);
    std::vector<double> f(y_grid.size(), 0.0);
    for (std::size_t g = 0; g < y_grid.size(); ++g) {
      const double ys = (y_grid[g] - fit.center) / fit.scale;
      double v = 0.0;
      for (std::size_t k = 0; k < w.size(); ++k) {
        if (w[k] <= 0.0) continue;
        v += w[k] * std::exp(log_normal(ys, s.comp.mu[k] + h, s.comp.sigma[k]));
      }
      f[g] = v / fit.scale;
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<double> conditional_mean(const DensityFit& fit, std::span<const double> x) {
  std::vector<double> out;
  out.reserve(fit.states.size());
  for (std::size_t d = 0; d < fit.states.size(); ++d) {
    const DensityState& s = fit.states[d];
    const std::vector<double> w = state_weights(fit, d, x);
    const double h = s.mean.evaluate(x);
    double m = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) m += w[k] * (s.comp.mu[k] + h);
    out.push_back(fit.center + fit.scale * m);
  }
  return out;
}

}  // namespace cloglog
