// Apache License, Version 2.0, refer to LICENSE.txt

#include "cloglog/survival.hpp"

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

double link_at(std::span<const double> r, std::size_t b) { return r.size() == 1 ? r[0] : r[b]; }

}  // namespace

// ---------------------------------------------------------------- grid

std::size_t HazardGrid::bin_of(double y) const {
  return static_cast<std::size_t>(std::upper_bound(cuts.begin(), cuts.end(), y) - cuts.begin());
}

double HazardGrid::exposure(double y, std::size_t b) const {
  const double lo = lower(b);
  if (y <= lo) return 0.0;
  if (b + 1 < num_bins() && y >= cuts[b]) return cuts[b] - lo;
  return y - lo;
}

void HazardGrid::validate() const {
  for (std::size_t b = 0; b < cuts.size(); ++b) {
    if (!(cuts[b] > 0.0) || !std::isfinite(cuts[b]) || (b > 0 && !(cuts[b] > cuts[b - 1]))) {
      throw DomainError("hazard grid boundaries must be positive and strictly increasing");
    }
  }
  if (!lambda.empty() && lambda.size() != num_bins()) throw SchemaError("hazard grid: one rate per bin");
}

int default_num_bins(std::size_t n) {
  int b = 1;
  while (static_cast<std::size_t>(b) * b * b < n) ++b;
  return b;
}

std::vector<double> make_bins(std::span<const double> uncensored, std::size_t n, int num_bins) {
  if (uncensored.empty()) throw DataError("survival: every time is censored, no events to bin");
  std::vector<double> t(uncensored.begin(), uncensored.end());
  std::sort(t.begin(), t.end());
  const int B = num_bins > 0 ? num_bins : default_num_bins(n);
  std::vector<double> cuts;
  const double m = static_cast<double>(t.size() - 1);
  for (int j = 1; j < B; ++j) {
    const double h = m * j / B;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, t.size() - 1);
    const double q = t[lo] + (h - static_cast<double>(lo)) * (t[hi] - t[lo]);
    if (q > 0.0 && (cuts.empty() || q > cuts.back())) cuts.push_back(q);
  }
  return cuts;
}

double survival_loglik(const HazardGrid& grid, std::span<const double> r, double y, int delta) {
  const std::size_t bi = grid.bin_of(y);
  double out = 0.0;
  for (std::size_t b = 0; b <= bi; ++b) {
    out -= grid.lambda[b] * std::exp(clamp_exponent(link_at(r, b))) * grid.exposure(y, b);
  }
  if (delta == 1) out += std::log(grid.lambda[bi]) + link_at(r, bi);
  return out;
}

double survival_probability(const HazardGrid& grid, std::span<const double> r, double t) {
  if (t <= 0.0) return 1.0;
  const std::size_t bi = grid.bin_of(t);
  double cum = 0.0;
  for (std::size_t b = 0; b <= bi; ++b) {
    cum += grid.lambda[b] * std::exp(clamp_exponent(link_at(r, b))) * grid.exposure(t, b);
  }
  return std::exp(-cum);
}

// ---------------------------------------------------------------- config

double SurvivalConfig::leaf_sigma() const {
  return sigma_mu > 0.0 ? sigma_mu : 1.5 / std::sqrt(static_cast<double>(num_trees));
}

void SurvivalConfig::validate() const {
  if (num_trees < 1) throw UsageError("need at least one tree");
  if (!(a_lambda > 0.0) || !(b_lambda > 0.0)) throw UsageError("a_lambda and b_lambda must be positive");
  if (max_nph_bins < 1) throw UsageError("bin cap must be positive");
  if (!(category_weight > 0.0)) throw UsageError("category weight w must be positive");
  if (!(exposure_scale > 0.0)) throw UsageError("exposure scale must be positive");
  HazardGrid{cuts, {}}.validate();
}

// ---------------------------------------------------------------- sampler

namespace {

HazardGrid build_hazard(const SurvivalConfig& config, std::span<const double> time,
                        std::span<const int> status) {
  config.validate();
  if (time.size() != status.size()) throw SchemaError("survival: time and status lengths differ");
  std::vector<double> events;
  for (std::size_t i = 0; i < time.size(); ++i) {
    if (!std::isfinite(time[i]) || !(time[i] > 0.0)) {
      throw DataError("survival: time at row " + std::to_string(i + 1) + " must be positive");
    }
    if (status[i] != 0 && status[i] != 1) {
      throw DataError("survival: status at row " + std::to_string(i + 1) + " must be 0 or 1");
    }
    if (status[i] == 1) events.push_back(time[i]);
  }
  HazardGrid g;
  if (!config.cuts.empty()) {
    g.cuts = config.cuts;
  } else {
    int B = config.num_bins > 0 ? config.num_bins : default_num_bins(time.size());
    if (!config.proportional && B > config.max_nph_bins) B = config.max_nph_bins;
    if (B > 1) g.cuts = make_bins(events, time.size(), B);
  }
  g.lambda.assign(g.num_bins(), 1.0);
  return g;
}

}  // namespace

SurvivalSampler::SurvivalSampler(const SurvivalConfig& config, const Matrix& x,
                                 std::span<const double> time, std::span<const int> status,
                                 std::shared_ptr<const SplitGrid> grid)
    : config_(config),
      x_(&x),
      time_(time.begin(), time.end()),
      status_(status.begin(), status.end()),
      hazard_(build_hazard(config, time, status)),
      leaf_prior_(solve_leaf_prior(config.leaf_sigma())),
      ensemble_(Forest(config.num_trees,
                       grid ? grid : std::make_shared<const SplitGrid>(SplitGrid::from_data(x, config.max_cuts)),
                       config.proportional ? 0 : static_cast<int>(hazard_.num_bins()), config.depth),
                x) {
  const std::size_t n = time_.size();
  if (n != x.rows()) throw SchemaError("survival: outcome length does not match predictors");
  const std::size_t B = hazard_.num_bins();
  bin_.resize(n);
  std::vector<int> rows, slots;
  first_unit_.resize(n);
  std::vector<double> events(B, 0.0), exposure(B, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    bin_[i] = hazard_.bin_of(time_[i]);
    first_unit_[i] = rows.size();
    if (config_.proportional) {
      rows.push_back(static_cast<int>(i));
      slots.push_back(0);
    } else {
      for (std::size_t b = 0; b <= bin_[i]; ++b) {
        rows.push_back(static_cast<int>(i));
        slots.push_back(static_cast<int>(b) + 1);
      }
    }
    events[bin_[i]] += status_[i];
    for (std::size_t b = 0; b <= bin_[i]; ++b) exposure[b] += hazard_.exposure(time_[i], b);
  }
  ensemble_.set_units(std::move(rows), std::move(slots));
  // start at the posterior mean of each rate with r = 0
  for (std::size_t b = 0; b < B; ++b) {
    hazard_.lambda[b] = (config_.a_lambda + events[b]) / (config_.b_lambda + exposure[b]);
  }
  refresh_bases();
}

double SurvivalSampler::unit_link(std::size_t i, std::size_t b) const {
  const auto fit = ensemble_.fit();
  return config_.proportional ? fit[first_unit_[i]] : fit[first_unit_[i] + b];
}

void SurvivalSampler::refresh_bases() {
  auto& counts = ensemble_.counts();
  auto& bases = ensemble_.bases();
  for (std::size_t i = 0; i < time_.size(); ++i) {
    const std::size_t bi = bin_[i];
    if (config_.proportional) {
      double s = 0.0;
      for (std::size_t b = 0; b <= bi; ++b) s += hazard_.lambda[b] * hazard_.exposure(time_[i], b);
      counts[first_unit_[i]] = status_[i];
      bases[first_unit_[i]] = s;
    } else {
      for (std::size_t b = 0; b <= bi; ++b) {
        const std::size_t u = first_unit_[i] + b;
        counts[u] = b == bi ? status_[i] : 0.0;
        bases[u] = hazard_.lambda[b] * hazard_.exposure(time_[i], b);
      }
    }
  }
}

std::vector<GammaParams> SurvivalSampler::lambda_conditionals() const {
  const std::size_t B = hazard_.num_bins();
  std::vector<GammaParams> out(B, GammaParams{config_.a_lambda, config_.b_lambda});
  for (std::size_t i = 0; i < time_.size(); ++i) {
    const std::size_t bi = bin_[i];
    out[bi].shape += status_[i];
    for (std::size_t b = 0; b <= bi; ++b) {
      out[b].rate += std::exp(clamp_exponent(unit_link(i, b))) * hazard_.exposure(time_[i], b);
    }
  }
  return out;
}

void SurvivalSampler::update_lambda(Rng& rng) {
  const std::vector<GammaParams> post = lambda_conditionals();
  for (std::size_t b = 0; b < post.size(); ++b) {
    const double v = std::exp(rng.log_gamma(post[b].shape, post[b].rate));
    if (!(v > 0.0) || !std::isfinite(v)) throw NumericalError("survival: hazard rate draw is not finite");
    hazard_.lambda[b] = v;
  }
  refresh_bases();
}

void SurvivalSampler::update_forest(Rng& rng) {
  ensemble_.sweep(leaf_prior_, rng, config_.exposure_scale);
}

void SurvivalSampler::update_split_probs(Rng& rng) {
  ensemble_.update_split_probs(config_.category_weight, rng);
}

void SurvivalSampler::sweep(Rng& rng) {
  update_lambda(rng);
  update_forest(rng);
  if (!config_.proportional) update_split_probs(rng);
}

std::vector<LeafStats> SurvivalSampler::suffstats(std::size_t t, const Tree& candidate) const {
  return ensemble_.stats_for(candidate, t);
}

void SurvivalSampler::set_lambda(std::vector<double> lambda) {
  if (lambda.size() != hazard_.num_bins()) throw SchemaError("survival: one rate per bin expected");
  for (double v : lambda) {
    if (!(v > 0.0)) throw DomainError("survival: hazard rates must be positive");
  }
  hazard_.lambda = std::move(lambda);
  refresh_bases();
}

void SurvivalSampler::set_forest(Forest forest) { ensemble_.set_forest(std::move(forest)); }

std::vector<double> SurvivalSampler::link_values(std::span<const double> x) const {
  const std::size_t B = hazard_.num_bins();
  if (config_.proportional) return std::vector<double>(B, forest().evaluate(x));
  std::vector<double> r = forest().evaluate_categories(x);
  r.resize(B, 0.0);
  return r;
}

double SurvivalSampler::log_likelihood(std::size_t i) const {
  std::vector<double> r(bin_[i] + 1);
  for (std::size_t b = 0; b <= bin_[i]; ++b) r[b] = unit_link(i, b);
  if (config_.proportional) r.resize(1);
  return survival_loglik(hazard_, r, time_[i], status_[i]);
}

// ---------------------------------------------------------------- driver

SurvivalFit fit_survival(const SurvivalConfig& config, const McmcConfig& mcmc, const Matrix& x,
                         std::span<const double> time, std::span<const int> status,
                         const Matrix& query, Rng& rng) {
  config.validate();
  mcmc.validate();
  if (!query.empty() && query.cols() != x.cols()) {
    throw SchemaError("fit_survival: query points have the wrong number of predictors");
  }
  SurvivalSampler sampler(config, x, time, status);
  const std::size_t B = sampler.hazard().num_bins();
  SurvivalFit fit;
  fit.config = config;
  fit.mcmc = mcmc;
  fit.cuts = sampler.hazard().cuts;
  fit.query = query;
  PosteriorDraws& d = fit.draws;
  d.set_meta("model", "survival");
  d.set_meta("mode", config.proportional ? "ph" : "nph");
  d.set_meta("bins", std::to_string(B));
  std::string cuts;
  for (double c : fit.cuts) cuts += (cuts.empty() ? "" : ",") + fmt(c);
  d.set_meta("cuts", cuts);
  d.set_meta("trees", std::to_string(config.num_trees));
  d.set_meta("sigma_mu", fmt(config.leaf_sigma()));
  d.set_meta("leaf_a", fmt(sampler.leaf_prior().a));
  d.set_meta("leaf_b", fmt(sampler.leaf_prior().b));
  d.set_meta("a_lambda", fmt(config.a_lambda));
  d.set_meta("b_lambda", fmt(config.b_lambda));
  if (!config.proportional) d.set_meta("w", fmt(config.category_weight));
  for (std::size_t b = 1; b <= B; ++b) d.columns.push_back("lambda[" + std::to_string(b) + "]");
  for (std::size_t q = 0; q < query.rows(); ++q) {
    const std::string qs = std::to_string(q + 1);
    if (config.proportional) {
      d.columns.push_back("r[" + qs + "]");
    } else {
      for (std::size_t b = 1; b <= B; ++b) d.columns.push_back("r[" + qs + "," + std::to_string(b) + "]");
    }
  }
  const std::size_t n = x.rows();
  d.loglik = Matrix(static_cast<std::size_t>(mcmc.retained()), n);
  std::size_t kept = 0;
  for (int it = 0; it < mcmc.burn_in + mcmc.kept; ++it) {
    sampler.sweep(rng);
    const int post = it - mcmc.burn_in;
    if (post < 0 || post % mcmc.thin != mcmc.thin - 1) continue;
    if (kept >= d.loglik.rows()) break;
    std::vector<double> row = sampler.hazard().lambda;
    for (std::size_t q = 0; q < query.rows(); ++q) {
      const std::vector<double> r = sampler.link_values(query.row(q));
      if (config.proportional) {
        row.push_back(r[0]);
      } else {
        row.insert(row.end(), r.begin(), r.end());
      }
    }
    for (std::size_t i = 0; i < n; ++i) d.loglik(kept, i) = sampler.log_likelihood(i);
    d.rows.push_back(std::move(row));
    fit.lambda.push_back(sampler.hazard().lambda);
    fit.forests.push_back(sampler.forest());
    ++kept;
  }
  return fit;
}

std::vector<std::vector<double>> survival_function(const SurvivalFit& fit, std::span<const double> x,
                                                   std::span<const double> t_grid) {
  for (std::size_t g = 1; g < t_grid.size(); ++g) {
    if (!(t_grid[g] >= t_grid[g - 1])) throw DomainError("survival_function: time grid must be ascending");
  }
  const std::size_t B = fit.cuts.size() + 1;
  std::vector<std::vector<double>> out;
  out.reserve(fit.forests.size());
  for (std::size_t d = 0; d < fit.forests.size(); ++d) {
    const HazardGrid g{fit.cuts, fit.lambda[d]};
    std::vector<double> r;
    if (fit.config.proportional) {
      r.assign(1, fit.forests[d].evaluate(x));
    } else {
      r = fit.forests[d].evaluate_categories(x);
      r.resize(B, 0.0);
    }
    std::vector<double> s(t_grid.size());
    for (std::size_t k = 0; k < t_grid.size(); ++k) s[k] = survival_probability(g, r, t_grid[k]);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace cloglog
