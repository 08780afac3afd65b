// Apache License, Version 2.0, refer to LICENSE.txt

#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cloglog/cloglog.h"

namespace {

// Flag values by config key, filled only for flags that were given.
struct Bindings {
  std::vector<std::pair<CLI::Option*, std::string>> options;
  std::vector<std::pair<CLI::Option*, std::string>> flags;
  std::map<std::string, std::string> storage;
};

void option(CLI::App* app, Bindings& b, const std::string& flag, const std::string& key, const std::string& help) {
  std::string& slot = b.storage[app->get_name() + "/" + key];
  b.options.emplace_back(app->add_option(flag, slot, help), key);
}

void flag(CLI::App* app, Bindings& b, const std::string& name, const std::string& key, const std::string& help) {
  b.flags.emplace_back(app->add_flag(name, help), key);
}

void data_options(CLI::App* a, Bindings& b) {
  option(a, b, "--data", "data", "input CSV with a header row");
  option(a, b, "--predictors", "predictors", "comma-separated predictor columns (default: all others)");
  option(a, b, "--categorical", "categorical", "comma-separated predictors to one-hot encode");
}

void outcome_options(CLI::App* a, Bindings& b, bool survival) {
  if (survival) {
    option(a, b, "--time", "time", "follow-up time column");
    option(a, b, "--status", "status", "event indicator column (1 = event)");
  } else {
    option(a, b, "--outcome", "outcome", "outcome column");
  }
}

void mcmc_options(CLI::App* a, Bindings& b) {
  option(a, b, "--trees", "trees", "number of trees (50)");
  option(a, b, "--burnin", "burnin", "burn-in iterations");
  option(a, b, "--iters", "iters", "kept iterations");
  option(a, b, "--thin", "thin", "thinning interval (1)");
  option(a, b, "--chains", "chains", "number of chains (1)");
  option(a, b, "--threads", "threads", "worker threads (1)");
  option(a, b, "--seed", "seed", "random seed (required)");
}

void prior_options(CLI::App* a, Bindings& b) {
  option(a, b, "--mode", "mode", "ph or nph");
  option(a, b, "--query", "query", "query points 'x1,x2;x1,x2'");
  option(a, b, "--sigma-mu", "sigma_mu", "leaf scale (default 1.5/sqrt(T), 1/sqrt(T) for density)");
  option(a, b, "--a-gamma", "a_gamma", "gamma prior shape");
  option(a, b, "--b-gamma", "b_gamma", "gamma prior rate");
  option(a, b, "--w", "w", "category-slot Dirichlet weight");
  option(a, b, "--max-cuts", "max_cuts", "candidate cutpoints per predictor");
}

void model_options(CLI::App* a, Bindings& b, const std::string& model) {
  if (model == "binary") {
    option(a, b, "--link", "link", "cloglog or loglog");
    flag(a, b, "--augment-zeros", "augment_zeros", "add the top-category augmentation");
  }
  if (model == "ordinal") option(a, b, "--K", "K", "number of categories (default: max outcome)");
  if (model == "density") {
    option(a, b, "--Kmax", "Kmax", "truncation level (25)");
    option(a, b, "--mu0", "mu0", "fixed base-measure mean, standardized units (0)");
  }
  if (model == "survival") {
    option(a, b, "--bins", "bins", "number of hazard bins (default ceil(n^(1/3)))");
    option(a, b, "--a-lambda", "a_lambda", "baseline hazard prior shape");
    option(a, b, "--b-lambda", "b_lambda", "baseline hazard prior rate");
  }
}

void output_options(CLI::App* a, Bindings& b) {
  option(a, b, "--out-dir", "out_dir", "output directory");
  option(a, b, "--config", "@config", "key=value file applied before the flags");
}

int status_code(cloglog_status s) { return static_cast<int>(s); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian cloglog regression with additive tree ensembles"};
  app.require_subcommand(1);
  Bindings b;

  for (const std::string model : {"binary", "ordinal", "density", "survival"}) {
    auto* fit = app.add_subcommand("fit-" + model, "fit the " + model + " model");
    data_options(fit, b);
    outcome_options(fit, b, model == "survival");
    mcmc_options(fit, b);
    prior_options(fit, b);
    model_options(fit, b, model);
    option(fit, b, "--grid-points", "grid_points", "points per prediction grid (101)");
    output_options(fit, b);
  }

  auto* predict = app.add_subcommand("predict", "evaluate a saved fit at new points");
  option(predict, b, "--fit-dir", "fit_dir", "directory written by a fit command");
  option(predict, b, "--query", "query", "query points 'x1,x2;x1,x2'");
  data_options(predict, b);
  option(predict, b, "--grid-points", "grid_points", "points per prediction grid (101)");
  output_options(predict, b);

  auto* cv = app.add_subcommand("cv", "k-fold held-out deviance");
  option(cv, b, "--model", "model", "binary, ordinal, density or survival");
  data_options(cv, b);
  option(cv, b, "--outcome", "outcome", "outcome column");
  option(cv, b, "--time", "time", "follow-up time column");
  option(cv, b, "--status", "status", "event indicator column");
  mcmc_options(cv, b);
  prior_options(cv, b);
  for (const char* m : {"binary", "ordinal", "density", "survival"}) model_options(cv, b, m);
  option(cv, b, "--folds", "folds", "number of folds (5)");
  option(cv, b, "--splits", "splits", "independent fold assignments (10)");
  flag(cv, b, "--compare", "compare", "compare ph against nph on shared folds");
  output_options(cv, b);

  auto* elpd = app.add_subcommand("elpd", "PSIS-LOO expected log predictive density");
  option(elpd, b, "--fit-dir", "fit_dir", "use the log likelihood saved by a fit command");
  option(elpd, b, "--model", "model", "fit afresh: binary, ordinal, density or survival");
  data_options(elpd, b);
  option(elpd, b, "--outcome", "outcome", "outcome column");
  option(elpd, b, "--time", "time", "follow-up time column");
  option(elpd, b, "--status", "status", "event indicator column");
  mcmc_options(elpd, b);
  prior_options(elpd, b);
  for (const char* m : {"binary", "ordinal", "density", "survival"}) model_options(elpd, b, m);
  output_options(elpd, b);

  auto* project = app.add_subcommand("project", "additive summary of a fitted r(x)");
  option(project, b, "--fit-dir", "fit_dir", "directory written by a fit command");
  data_options(project, b);
  output_options(project, b);

  auto* simulate = app.add_subcommand("simulate", "write a simulated data set");
  option(simulate, b, "--dgp", "dgp", "dunson, ph-survival or crossing");
  option(simulate, b, "--n", "n", "number of rows (500)");
  option(simulate, b, "--seed", "seed", "random seed (required)");
  option(simulate, b, "--censoring", "censoring", "censoring rate for ph-survival (0.3)");
  option(simulate, b, "--out", "data", "output CSV (default stdout)");

  auto* verify = app.add_subcommand("verify", "run the built-in correctness checks");
  std::map<std::string, CLI::Option*> checks;
  checks["all"] = verify->add_flag("--all", "every check");
  for (const char* c : {"marginal", "link", "latent", "dp", "solver"}) {
    checks[c] = verify->add_flag(std::string("--") + c, "run the named check");
  }
  option(verify, b, "--seed", "seed", "random seed (required)");

  auto* sbc = app.add_subcommand("sbc", "simulation-based calibration of a toy model");
  option(sbc, b, "--model", "sbc_model", "ordinal, survival or density");
  option(sbc, b, "--mode", "mode", "ph or nph");
  option(sbc, b, "--n", "n", "observations per replication (100)");
  option(sbc, b, "--trees", "trees", "trees (10)");
  option(sbc, b, "--burnin", "burnin", "burn-in per fit (500)");
  option(sbc, b, "--iters", "iters", "kept iterations per fit (500)");
  option(sbc, b, "--K", "K", "ordinal categories (3)");
  option(sbc, b, "--Kmax", "Kmax", "density truncation (3)");
  option(sbc, b, "--replications", "replications", "replications (200)");
  option(sbc, b, "--draws", "sbc_draws", "thinned draws per fit (100)");
  option(sbc, b, "--bins", "sbc_bins", "rank histogram bins (20)");
  option(sbc, b, "--exposure-scale", "exposure_scale", "corrupt the leaf update (negative control)");
  option(sbc, b, "--threads", "threads", "worker threads (1)");
  option(sbc, b, "--seed", "seed", "random seed (required)");
  output_options(sbc, b);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  CLI::App* cmd = app.get_subcommands().front();
  cloglog_config* config = nullptr;
  if (cloglog_config_create(&config) != CLOGLOG_OK) {
    std::fprintf(stderr, "error: %s\n", cloglog_last_error());
    return 1;
  }
  auto fail = [&](cloglog_status s) {
    std::fprintf(stderr, "error: %s\n", cloglog_last_error());
    cloglog_config_destroy(config);
    return status_code(s);
  };

  // config file first, then flags
  for (const auto& [opt, key] : b.options) {
    if (key != "@config" || opt->count() == 0) continue;
    if (auto s = cloglog_config_load(config, opt->as<std::string>().c_str()); s != CLOGLOG_OK) return fail(s);
  }
  for (const auto& [opt, key] : b.options) {
    if (key == "@config" || opt->count() == 0) continue;
    if (auto s = cloglog_config_set(config, key.c_str(), opt->as<std::string>().c_str()); s != CLOGLOG_OK) {
      return fail(s);
    }
  }
  for (const auto& [opt, key] : b.flags) {
    if (opt->count() == 0) continue;
    if (auto s = cloglog_config_set(config, key.c_str(), "true"); s != CLOGLOG_OK) return fail(s);
  }
  if (cmd == verify) {
    std::string list;
    for (const auto& [name, opt] : checks) {
      if (opt->count() > 0) list += (list.empty() ? "" : ",") + name;
    }
    if (list.empty() || checks["all"]->count() > 0) list = "all";
    if (auto s = cloglog_config_set(config, "checks", list.c_str()); s != CLOGLOG_OK) return fail(s);
  }

  const auto print = [](const char* text, void*) { std::fputs(text, stdout); };
  const cloglog_status s = cloglog_run(cmd->get_name().c_str(), config, print, nullptr);
  std::fflush(stdout);
  if (s != CLOGLOG_OK && s != CLOGLOG_VERIFY_FAILED) return fail(s);
  cloglog_config_destroy(config);
  return status_code(s);
}
