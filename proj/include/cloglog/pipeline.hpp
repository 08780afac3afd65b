// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "cloglog/density.hpp"
#include "cloglog/eval.hpp"
#include "cloglog/io.hpp"
#include "cloglog/ordinal.hpp"
#include "cloglog/survival.hpp"

namespace cloglog {

enum class ModelKind { kBinary, kOrdinal, kDensity, kSurvival };

ModelKind parse_model_kind(const std::string& name);
const char* model_kind_name(ModelKind kind);

using AnyFit = std::variant<BinaryFit, OrdinalFit, DensityFit, SurvivalFit>;

// Everything needed to fit one chain, resolved from a RunConfig.
struct ModelSpec {
  ModelKind kind = ModelKind::kOrdinal;
  OrdinalConfig ordinal;
  BinaryLink link = BinaryLink::kCloglog;
  bool augment_zeros = false;
  DensityConfig density;
  SurvivalConfig survival;
  McmcConfig mcmc;
};

Schema schema_for(const RunConfig& config, ModelKind kind);
// `data` supplies K when the config leaves it on auto.
ModelSpec resolve_spec(const RunConfig& config, ModelKind kind, const Dataset& data);

// Query points from the config, or the 10/25/50/75/90% quantiles of the
// first predictor with the others at their medians.
Matrix resolve_query(const RunConfig& config, const Matrix& x);

AnyFit fit_model(const ModelSpec& spec, const Dataset& data, const Matrix& query, Rng& rng);
// Chain c uses Rng(seed).split(c); chains run on up to `threads` threads.
std::vector<AnyFit> fit_chains(const ModelSpec& spec, const Dataset& data, const Matrix& query,
                               std::uint64_t seed, int chains, int threads);

const PosteriorDraws& fit_draws(const AnyFit& fit);
PosteriorDraws& fit_draws(AnyFit& fit);
// Per-draw log likelihood of the rows of `data`: draws x rows.
Matrix fit_loglik(const AnyFit& fit, const Dataset& data);
std::size_t fit_num_predictors(const AnyFit& fit);

// Plain-text model files: enough state to evaluate every retained draw.
void write_model(std::ostream& out, const AnyFit& fit);
AnyFit read_model(std::istream& in, const std::string& label = "model");
// Appends the draws of `more` to `into`; both must be the same model.
void merge_fits(AnyFit& into, const AnyFit& more);

// Posterior summaries (mean and 95% band) at each query point.
void write_prediction_grid(std::ostream& out, const AnyFit& fit, const Matrix& query, int grid_points);

Dataset select_rows(const Dataset& data, std::span<const std::size_t> rows);

// Held-out log predictive densities for k-fold comparisons. `data` must
// outlive the returned function.
HeldoutFn heldout_for(const ModelSpec& spec, const Dataset& data);

// Runs one CLI subcommand. Returns 0 or 5 (a verify check failed); other
// failures throw Error with the matching code.
int run_command(const std::string& command, const RunConfig& config, std::ostream& out);

}  // namespace cloglog
