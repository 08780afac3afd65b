// Apache License, Version 2.0, refer to LICENSE.txt

#include "cloglog/ordinal.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cloglog/error.hpp"
#include "cloglog/logging.hpp"

namespace cloglog {

namespace {

double clamp_exponent(double t) { return std::clamp(t, -kExponentClamp, kExponentClamp); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<double> cutpoints_from_gamma(std::span<const double> gamma) {
  std::vector<double> c(gamma.size());
  double acc = -INFINITY;
  for (std::size_t k = 0; k < gamma.size(); ++k) {
    // running log-sum-exp
    const double hi = std::max(acc, gamma[k]);
    const double lo = std::min(acc, gamma[k]);
    acc = hi + std::log1p(std::exp(lo - hi));
    c[k] = acc;
  }
  return c;
}

double ordinal_pmf(std::span<const double> gamma, double r, int k) {
  const int K = static_cast<int>(gamma.size()) + 1;
  if (k < 1 || k > K) throw DomainError("ordinal_pmf: category out of range");
  const std::vector<double> c = cutpoints_from_gamma(gamma);
  auto survivor = [&](int j) {  // exp(-e^{c_j + r}), with c_0 = -inf and c_K = +inf
    if (j <= 0) return 1.0;
    if (j >= K) return 0.0;
    return std::exp(-std::exp(c[static_cast<std::size_t>(j - 1)] + r));
  };
  if (k == 1) return -std::expm1(-std::exp(c[0] + r));
  return survivor(k - 1) - survivor(k);
}

double ordinal_pmf(std::span<const double> gamma, std::span<const double> r, int k) {
  const int K = static_cast<int>(gamma.size()) + 1;
  if (k < 1 || k > K) throw DomainError("ordinal_pmf: category out of range");
  if (r.size() + 1 < static_cast<std::size_t>(K)) throw SchemaError("ordinal_pmf: need K-1 link values");
  double log_reach = 0.0;
  for (int j = 1; j < k; ++j) log_reach -= std::exp(gamma[j - 1] + r[j - 1]);
  if (k == K) return std::exp(log_reach);
  return gumbel_cdf(gamma[k - 1] + r[k - 1]) * std::exp(log_reach);
}

double ordinal_log_pmf(std::span<const double> gamma, std::span<const double> r, int k) {
  const int K = static_cast<int>(gamma.size()) + 1;
  if (k < 1 || k > K) throw DomainError("ordinal_log_pmf: category out of range");
  double out = 0.0;
  for (int j = 1; j < k; ++j) out -= std::exp(gamma[j - 1] + r[j - 1]);
  if (k < K) out += std::log(gumbel_cdf(gamma[k - 1] + r[k - 1]));
  return out;
}

std::vector<double> ordinal_pmf_vector(std::span<const double> gamma, std::span<const double> r) {
  const std::size_t K = gamma.size() + 1;
  if (r.size() + 1 < K) throw SchemaError("ordinal_pmf_vector: need K-1 link values");
  std::vector<double> p(K);
  double log_reach = 0.0, used = 0.0;
  for (std::size_t k = 0; k + 1 < K; ++k) {
    const double t = gamma[k] + r[k];
    p[k] = gumbel_cdf(t) * std::exp(log_reach);
    used += p[k];
    log_reach -= std::exp(t);
  }
  p[K - 1] = std::max(0.0, 1.0 - used);
  return p;
}

// ---------------------------------------------------------------- config

double OrdinalConfig::leaf_sigma() const {
  return sigma_mu > 0.0 ? sigma_mu : 1.5 / std::sqrt(static_cast<double>(num_trees));
}

void OrdinalConfig::validate() const {
  if (num_categories < 2) throw UsageError("ordinal model needs K >= 2");
  if (num_trees < 1) throw UsageError("need at least one tree");
  if (!(a_gamma > 0.0) || !(b_gamma > 0.0)) throw UsageError("a_gamma and b_gamma must be positive");
  if (!(category_weight > 0.0)) throw UsageError("category weight w must be positive");
  if (augment_top && num_categories != 2) throw UsageError("top-category augmentation needs K = 2");
  if (!(exposure_scale > 0.0)) throw UsageError("exposure scale must be positive");
}

// ---------------------------------------------------------------- sampler

OrdinalSampler::OrdinalSampler(const OrdinalConfig& config, const Matrix& x,
                               std::span<const int> y, std::shared_ptr<const SplitGrid> grid)
    : config_(config),
      x_(&x),
      leaf_prior_(solve_leaf_prior(config.leaf_sigma())),
      ensemble_(Forest(config.num_trees,
                       grid ? grid : std::make_shared<const SplitGrid>(SplitGrid::from_data(x, config.max_cuts)),
                       config.proportional ? 0 : config.num_categories - 1, config.depth),
                x) {
  config_.validate();
  const int K = config_.num_categories;
  set_outcomes(y);
  // Start gamma at smoothed empirical cloglog hazards.
  gamma_.assign(static_cast<std::size_t>(K - 1), 0.0);
  for (int j = 1; j < K; ++j) {
    double at = 0, above = 0;
    for (int v : y_) {
      at += v == j;
      above += v >= j;
    }
    const double h = (at + 0.5) / (above + 1.0);
    gamma_[static_cast<std::size_t>(j - 1)] = std::log(-std::log1p(-h));
  }
  refresh_bases();
}

void OrdinalSampler::set_outcomes(std::span<const int> y) {
  const int K = config_.num_categories;
  if (y.size() != x_->rows()) throw SchemaError("ordinal: outcome length does not match predictors");
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 1 || y[i] > K) {
      throw DataError("ordinal: outcome at row " + std::to_string(i + 1) + " is " +
                      std::to_string(y[i]) + ", expected 1.." + std::to_string(K));
    }
  }
  y_.assign(y.begin(), y.end());
  z_.resize(y_.size());
  for (std::size_t i = 0; i < y_.size(); ++i) {
    // keep existing latents where they are still valid
    const bool top = y_[i] == K;
    if (top) {
      z_[i] = config_.augment_top ? std::max(z_[i], 1.5) : 0.0;
    } else if (!(z_[i] > 0.0 && z_[i] < 1.0)) {
      z_[i] = 0.5;
    }
  }
  build_units();
  if (!gamma_.empty()) refresh_bases();
}

void OrdinalSampler::build_units() {
  const int K = config_.num_categories;
  std::vector<int> rows, slots;
  first_unit_.assign(y_.size(), 0);
  for (std::size_t i = 0; i < y_.size(); ++i) {
    first_unit_[i] = rows.size();
    if (config_.proportional) {
      rows.push_back(static_cast<int>(i));
      slots.push_back(0);
    } else {
      for (int j = 1; j <= std::min(y_[i], K - 1); ++j) {
        rows.push_back(static_cast<int>(i));
        slots.push_back(j);
      }
    }
  }
  ensemble_.set_units(std::move(rows), std::move(slots));
}

int OrdinalSampler::top_pair(std::size_t i) const {
  return std::min(y_[i], config_.num_categories - 1);
}

double OrdinalSampler::z_term(std::size_t i, int j) const {
  const int y = y_[i];
  if (y > j) {
    const int K = config_.num_categories;
    return config_.augment_top && y == K && j == K - 1 ? z_[i] : 1.0;
  }
  return y == j ? z_[i] : 0.0;
}

double OrdinalSampler::unit_link(std::size_t i, int j) const {
  const auto fit = ensemble_.fit();
  if (config_.proportional) return fit[first_unit_[i]];
  return fit[first_unit_[i] + static_cast<std::size_t>(j - 1)];
}

void OrdinalSampler::refresh_bases() {
  const int K = config_.num_categories;
  auto& counts = ensemble_.counts();
  auto& bases = ensemble_.bases();
  for (std::size_t i = 0; i < y_.size(); ++i) {
    const int y = y_[i];
    const double event = (y < K || config_.augment_top) ? 1.0 : 0.0;
    if (config_.proportional) {
      double b = 0.0;
      for (int j = 1; j <= top_pair(i); ++j) {
        b += z_term(i, j) * std::exp(clamp_exponent(gamma_[static_cast<std::size_t>(j - 1)]));
      }
      counts[first_unit_[i]] = event;
      bases[first_unit_[i]] = b;
    } else {
      for (int j = 1; j <= top_pair(i); ++j) {
        const std::size_t u = first_unit_[i] + static_cast<std::size_t>(j - 1);
        counts[u] = j == top_pair(i) ? event : 0.0;
        bases[u] = z_term(i, j) * std::exp(clamp_exponent(gamma_[static_cast<std::size_t>(j - 1)]));
      }
    }
  }
}

void OrdinalSampler::update_latents(Rng& rng) {
  const int K = config_.num_categories;
  for (std::size_t i = 0; i < y_.size(); ++i) {
    const int y = y_[i];
    if (y < K) {
      const double rate =
          std::exp(clamp_exponent(gamma_[static_cast<std::size_t>(y - 1)] + unit_link(i, y)));
      z_[i] = sample_trunc_exp({rate, 0.0, 1.0}, rng);
    } else if (config_.augment_top) {
      const double rate =
          std::exp(clamp_exponent(gamma_[static_cast<std::size_t>(K - 2)] + unit_link(i, K - 1)));
      z_[i] = sample_trunc_exp({rate, 1.0, INFINITY}, rng);
    }
  }
  refresh_bases();
}

void OrdinalSampler::update_forest(Rng& rng) {
  ensemble_.sweep(leaf_prior_, rng, config_.exposure_scale);
}

void OrdinalSampler::update_gamma(Rng& rng) {
  const int K = config_.num_categories;
  std::vector<double> shape(static_cast<std::size_t>(K - 1), config_.a_gamma);
  std::vector<double> rate(static_cast<std::size_t>(K - 1), config_.b_gamma);
  for (std::size_t i = 0; i < y_.size(); ++i) {
    const int y = y_[i];
    const bool event = y < K || config_.augment_top;
    for (int j = 1; j <= top_pair(i); ++j) {
      const auto s = static_cast<std::size_t>(j - 1);
      rate[s] += z_term(i, j) * std::exp(clamp_exponent(unit_link(i, j)));
      if (event && j == top_pair(i)) shape[s] += 1.0;
    }
  }
  for (std::size_t s = 0; s < gamma_.size(); ++s) {
    gamma_[s] = rng.log_gamma(shape[s], rate[s]);
  }
  refresh_bases();
}

void OrdinalSampler::update_split_probs(Rng& rng) {
  ensemble_.update_split_probs(config_.category_weight, rng);
}

void OrdinalSampler::sweep(Rng& rng) {
  update_latents(rng);
  update_forest(rng);
  update_gamma(rng);
  if (!config_.proportional) update_split_probs(rng);
}

std::vector<LeafStats> OrdinalSampler::suffstats(std::size_t t, const Tree& candidate) const {
  return ensemble_.stats_for(candidate, t);
}

void OrdinalSampler::set_gamma(std::vector<double> gamma) {
  if (gamma.size() + 1 != static_cast<std::size_t>(config_.num_categories)) {
    throw SchemaError("ordinal: gamma must have K-1 entries");
  }
  gamma_ = std::move(gamma);
  refresh_bases();
}

void OrdinalSampler::set_latents(std::vector<double> z) {
  if (z.size() != y_.size()) throw SchemaError("ordinal: one latent per observation expected");
  z_ = std::move(z);
  refresh_bases();
}

void OrdinalSampler::set_forest(Forest forest) { ensemble_.set_forest(std::move(forest)); }

std::vector<double> OrdinalSampler::link_values(std::span<const double> x) const {
  const int K = config_.num_categories;
  const Forest& f = ensemble_.forest();
  if (config_.proportional) return std::vector<double>(static_cast<std::size_t>(K - 1), f.evaluate(x));
  return f.evaluate_categories(x);
}

std::vector<double> OrdinalSampler::pmf(std::span<const double> x) const {
  return ordinal_pmf_vector(gamma_, link_values(x));
}

double OrdinalSampler::log_likelihood(std::size_t i) const {
  std::vector<double> r(gamma_.size(), 0.0);
  for (int j = 1; j <= top_pair(i); ++j) r[static_cast<std::size_t>(j - 1)] = unit_link(i, j);
  return ordinal_log_pmf(gamma_, r, y_[i]);
}

// ---------------------------------------------------------------- drivers

namespace {

std::vector<double> forest_links(const Forest& f, const OrdinalConfig& c, std::span<const double> x) {
  const auto K = static_cast<std::size_t>(c.num_categories);
  if (c.proportional) return std::vector<double>(K - 1, f.evaluate(x));
  return f.evaluate_categories(x);
}

}  // namespace

OrdinalFit fit_ordinal(const OrdinalConfig& config, const McmcConfig& mcmc, const Matrix& x,
                       std::span<const int> y, const Matrix& query, Rng& rng) {
  config.validate();
  mcmc.validate();
  if (!query.empty() && query.cols() != x.cols()) {
    throw SchemaError("fit_ordinal: query points have the wrong number of predictors");
  }
  const int K = config.num_categories;
  OrdinalSampler sampler(config, x, y);
  for (int k = 1; k <= K; ++k) {
    if (std::find(y.begin(), y.end(), k) == y.end()) {
      warn("category " + std::to_string(k) + " is never observed; its cutpoint is prior-driven");
    }
  }

  OrdinalFit fit;
  fit.config = config;
  fit.mcmc = mcmc;
  fit.query = query;
  PosteriorDraws& d = fit.draws;
  d.set_meta("model", "ordinal");
  d.set_meta("mode", config.proportional ? "ph" : "nph");
  d.set_meta("K", std::to_string(K));
  d.set_meta("trees", std::to_string(config.num_trees));
  d.set_meta("sigma_mu", fmt(config.leaf_sigma()));
  d.set_meta("leaf_a", fmt(sampler.leaf_prior().a));
  d.set_meta("leaf_b", fmt(sampler.leaf_prior().b));
  d.set_meta("a_gamma", fmt(config.a_gamma));
  d.set_meta("b_gamma", fmt(config.b_gamma));
  if (!config.proportional) d.set_meta("w", fmt(config.category_weight));
  for (int j = 1; j < K; ++j) d.columns.push_back("gamma[" + std::to_string(j) + "]");
  for (std::size_t q = 0; q < query.rows(); ++q) {
    const std::string qs = std::to_string(q + 1);
    if (config.proportional) {
      d.columns.push_back("r[" + qs + "]");
    } else {
      for (int k = 1; k < K; ++k) d.columns.push_back("r[" + qs + "," + std::to_string(k) + "]");
    }
    for (int k = 1; k <= K; ++k) d.columns.push_back("pmf[" + qs + "," + std::to_string(k) + "]");
  }

  const std::size_t n = x.rows();
  d.loglik = Matrix(static_cast<std::size_t>(mcmc.retained()), n);
  std::size_t kept = 0;
  for (int it = 0; it < mcmc.burn_in + mcmc.kept; ++it) {
    sampler.sweep(rng);
    const int post = it - mcmc.burn_in;
    if (post < 0 || post % mcmc.thin != mcmc.thin - 1) continue;
    if (kept >= d.loglik.rows()) break;
    std::vector<double> row(sampler.gamma().begin(), sampler.gamma().end());
    for (std::size_t q = 0; q < query.rows(); ++q) {
      const std::vector<double> r = sampler.link_values(query.row(q));
      if (config.proportional) {
        row.push_back(r[0]);
      } else {
        row.insert(row.end(), r.begin(), r.end());
      }
      const std::vector<double> p = ordinal_pmf_vector(sampler.gamma(), r);
      row.insert(row.end(), p.begin(), p.end());
    }
    for (std::size_t i = 0; i < n; ++i) d.loglik(kept, i) = sampler.log_likelihood(i);
    d.rows.push_back(std::move(row));
    fit.gamma.emplace_back(sampler.gamma().begin(), sampler.gamma().end());
    fit.forests.push_back(sampler.forest());
    ++kept;
  }
  return fit;
}

std::vector<std::vector<double>> predict_ordinal(const OrdinalFit& fit, std::span<const double> x) {
  std::vector<std::vector<double>> out;
  out.reserve(fit.forests.size());
  for (std::size_t d = 0; d < fit.forests.size(); ++d) {
    const std::vector<double> r = forest_links(fit.forests[d], fit.config, x);
    out.push_back(ordinal_pmf_vector(fit.gamma[d], r));
  }
  return out;
}

BinaryFit fit_binary(OrdinalConfig config, const McmcConfig& mcmc, const Matrix& x,
                     std::span<const int> y, BinaryLink link, bool augment_zeros,
                     const Matrix& query, Rng& rng) {
  // Success (after recoding) is the "stop at the first category" event.
  std::vector<int> ord(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 0 && y[i] != 1) {
      throw DataError("binary outcome at row " + std::to_string(i + 1) + " is not 0/1");
    }
    const int success = link == BinaryLink::kCloglog ? y[i] : 1 - y[i];
    ord[i] = 2 - success;
  }
  config.num_categories = 2;
  config.proportional = true;
  config.augment_top = augment_zeros;
  BinaryFit out;
  out.link = link;
  out.ordinal = fit_ordinal(config, mcmc, x, ord, query, rng);
  PosteriorDraws& d = out.ordinal.draws;
  d.set_meta("model", "binary");
  d.set_meta("link", link == BinaryLink::kCloglog ? "cloglog" : "loglog");
  d.set_meta("augment_zeros", augment_zeros ? "1" : "0");
  for (std::size_t q = 0; q < query.rows(); ++q) d.columns.push_back("p[" + std::to_string(q + 1) + "]");
  for (std::size_t s = 0; s < d.rows.size(); ++s) {
    for (std::size_t q = 0; q < query.rows(); ++q) {
      const double p1 = d.rows[s][d.column_index("pmf[" + std::to_string(q + 1) + ",1]")];
      d.rows[s].push_back(link == BinaryLink::kCloglog ? p1 : 1.0 - p1);
    }
  }
  return out;
}

std::vector<double> predict_binary(const BinaryFit& fit, std::span<const double> x) {
  std::vector<double> out;
  for (const auto& p : predict_ordinal(fit.ordinal, x)) {
    out.push_back(fit.link == BinaryLink::kCloglog ? p[0] : 1.0 - p[0]);
  }
  return out;
}

}  // namespace cloglog
