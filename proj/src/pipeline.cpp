// Apache License, Version 2.0, refer to LICENSE.txt

#include "cloglog/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>
#include <utility>

#include "cloglog/error.hpp"
#include "cloglog/eval.hpp"
#include "cloglog/logging.hpp"
#include "cloglog/verify.hpp"

namespace cloglog {

namespace fs = std::filesystem;

ModelKind parse_model_kind(const std::string& name) {
  if (name == "binary") return ModelKind::kBinary;
  if (name == "ordinal") return ModelKind::kOrdinal;
  if (name == "density") return ModelKind::kDensity;
  if (name == "survival") return ModelKind::kSurvival;
  throw UsageError("unknown model '" + name + "' (binary, ordinal, density, survival)");
}

const char* model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kBinary: return "binary";
    case ModelKind::kOrdinal: return "ordinal";
    case ModelKind::kDensity: return "density";
    case ModelKind::kSurvival: return "survival";
  }
  return "ordinal";
}

// ---------------------------------------------------------------- specs

Schema schema_for(const RunConfig& config, ModelKind kind) {
  Schema s;
  s.predictors = config.get_list("predictors");
  s.categorical = config.get_list("categorical");
  if (kind == ModelKind::kSurvival) {
    s.time = config.get("time");
    s.status = config.get("status");
    if (s.time.empty() || s.status.empty()) throw UsageError("survival models need --time and --status");
    return s;
  }
  s.outcome = config.get("outcome");
  if (s.outcome.empty()) throw UsageError("this model needs --outcome");
  if (kind == ModelKind::kOrdinal) {
    s.outcome_kind = OutcomeKind::kOrdinal;
    if (config.get("K") != "auto") s.num_categories = static_cast<int>(config.get_int("K"));
  } else if (kind == ModelKind::kBinary) {
    s.outcome_kind = OutcomeKind::kBinary;
  }
  return s;
}

namespace {

bool nph_mode(const RunConfig& config, ModelKind kind) {
  const std::string m = config.get("mode");
  if (m == "auto") return kind == ModelKind::kDensity;
  if (m == "ph") return false;
  if (m == "nph") return true;
  throw UsageError("mode must be ph or nph");
}

int run_length(const RunConfig& config, const std::string& key, ModelKind kind) {
  if (config.get(key) != "auto") return static_cast<int>(config.get_int(key));
  return kind == ModelKind::kOrdinal || kind == ModelKind::kBinary ? 2500 : 2000;
}

double auto_double(const RunConfig& config, const std::string& key) {
  return config.get(key) == "auto" ? 0.0 : config.get_double(key);
}

}  // namespace

ModelSpec resolve_spec(const RunConfig& config, ModelKind kind, const Dataset& data) {
  ModelSpec s;
  s.kind = kind;
  s.mcmc.burn_in = run_length(config, "burnin", kind);
  s.mcmc.kept = run_length(config, "iters", kind);
  s.mcmc.thin = static_cast<int>(config.get_int("thin"));
  s.mcmc.validate();
  const long long trees = config.get_int("trees");
  if (trees < 1) throw UsageError("need at least one tree");
  const bool nph = nph_mode(config, kind);
  DepthPrior depth{config.get_double("alpha"), config.get_double("beta")};
  const int max_cuts = static_cast<int>(config.get_int("max_cuts"));
  const double w = config.get_double("w");
  const double sigma = auto_double(config, "sigma_mu");

  auto& o = s.ordinal;
  o.num_trees = static_cast<std::size_t>(trees);
  o.proportional = !nph;
  o.sigma_mu = sigma;
  o.a_gamma = config.get_double("a_gamma");
  o.b_gamma = config.get_double("b_gamma");
  o.category_weight = w;
  o.depth = depth;
  o.max_cuts = max_cuts;
  if (kind == ModelKind::kOrdinal) {
    if (config.get("K") != "auto") {
      o.num_categories = static_cast<int>(config.get_int("K"));
    } else {
      const auto y = data.int_column(Role::kOutcome);
      o.num_categories = std::max(2, *std::max_element(y.begin(), y.end()));
    }
    o.validate();
  }
  if (kind == ModelKind::kBinary) {
    if (nph) throw UsageError("binary models are proportional; drop --mode nph");
    const std::string link = config.get("link");
    if (link != "cloglog" && link != "loglog") throw UsageError("link must be cloglog or loglog");
    s.link = link == "cloglog" ? BinaryLink::kCloglog : BinaryLink::kLoglog;
    s.augment_zeros = config.get_bool("augment_zeros");
  }

  auto& d = s.density;
  d.max_components = static_cast<int>(config.get_int("Kmax"));
  d.proportional = !nph;
  d.stick_trees = d.mean_trees = static_cast<std::size_t>(trees);
  d.stick_sigma = d.mean_sigma = sigma;
  d.a_gamma = o.a_gamma;
  d.b_gamma = o.b_gamma;
  d.category_weight = w;
  d.depth = depth;
  d.max_cuts = max_cuts;
  d.mu0 = config.get_double("mu0");
  if (kind == ModelKind::kDensity) d.validate();

  auto& v = s.survival;
  v.proportional = !nph;
  v.num_trees = static_cast<std::size_t>(trees);
  v.sigma_mu = sigma;
  v.a_lambda = config.get_double("a_lambda");
  v.b_lambda = config.get_double("b_lambda");
  v.num_bins = config.get("bins") == "auto" ? 0 : static_cast<int>(config.get_int("bins"));
  v.max_nph_bins = static_cast<int>(config.get_int("max_nph_bins"));
  v.category_weight = w;
  v.depth = depth;
  v.max_cuts = max_cuts;
  if (kind == ModelKind::kSurvival) v.validate();
  return s;
}

Matrix resolve_query(const RunConfig& config, const Matrix& x) {
  if (!config.get("query").empty()) return parse_points(config.get("query"), x.cols());
  Matrix q;
  if (x.cols() == 0) return q;
  std::vector<double> med(x.cols());
  std::vector<std::vector<double>> cols(x.cols());
  for (std::size_t j = 0; j < x.cols(); ++j) {
    for (std::size_t i = 0; i < x.rows(); ++i) cols[j].push_back(x(i, j));
    med[j] = quantile(cols[j], 0.5);
  }
  for (const double p : {0.1, 0.25, 0.5, 0.75, 0.9}) {
    std::vector<double> row = med;
    row[0] = quantile(cols[0], p);
    q.append_row(row);
  }
  return q;
}

// ---------------------------------------------------------------- fitting

AnyFit fit_model(const ModelSpec& spec, const Dataset& data, const Matrix& query, Rng& rng) {
  const Matrix x = data.predictors();
  switch (spec.kind) {
    case ModelKind::kBinary:
      return fit_binary(spec.ordinal, spec.mcmc, x, data.int_column(Role::kOutcome), spec.link, spec.augment_zeros,
                        query, rng);
    case ModelKind::kOrdinal:
      return fit_ordinal(spec.ordinal, spec.mcmc, x, data.int_column(Role::kOutcome), query, rng);
    case ModelKind::kDensity:
      return fit_density(spec.density, spec.mcmc, x, data.column(Role::kOutcome), query, rng);
    case ModelKind::kSurvival:
      return fit_survival(spec.survival, spec.mcmc, x, data.column(Role::kTime), data.int_column(Role::kStatus),
                          query, rng);
  }
  throw UsageError("unknown model");
}

std::vector<AnyFit> fit_chains(const ModelSpec& spec, const Dataset& data, const Matrix& query,
                               std::uint64_t seed, int chains, int threads) {
  if (chains < 1) throw UsageError("need at least one chain");
  const Rng root(seed);
  std::vector<std::optional<AnyFit>> out(static_cast<std::size_t>(chains));
  std::vector<std::exception_ptr> errors(out.size());
  auto run = [&](std::size_t c) {
    try {
      Rng rng = root.split(c);
      out[c] = fit_model(spec, data, query, rng);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  const auto workers = static_cast<std::size_t>(std::clamp(threads, 1, chains));
  if (workers == 1) {
    for (std::size_t c = 0; c < out.size(); ++c) run(c);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t c = w; c < out.size(); c += workers) run(c);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<AnyFit> fits;
  for (auto& f : out) fits.push_back(std::move(*f));
  return fits;
}

const PosteriorDraws& fit_draws(const AnyFit& fit) {
  return std::visit(
      [](const auto& f) -> const PosteriorDraws& {
        if constexpr (std::is_same_v<std::decay_t<decltype(f)>, BinaryFit>) {
          return f.ordinal.draws;
        } else {
          return f.draws;
        }
      },
      fit);
}

PosteriorDraws& fit_draws(AnyFit& fit) { return const_cast<PosteriorDraws&>(fit_draws(std::as_const(fit))); }

Matrix fit_loglik(const AnyFit& fit, const Dataset& data) {
  const Matrix x = data.predictors();
  return std::visit(
      [&](const auto& f) -> Matrix {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, SurvivalFit>) {
          return heldout_loglik(f, x, data.column(Role::kTime), data.int_column(Role::kStatus));
        } else if constexpr (std::is_same_v<T, DensityFit>) {
          return heldout_loglik(f, x, data.column(Role::kOutcome));
        } else {
          return heldout_loglik(f, x, data.int_column(Role::kOutcome));
        }
      },
      fit);
}

namespace {

std::size_t forest_predictors(const Forest& f) { return f.split_prior().num_predictors(); }

}  // namespace

std::size_t fit_num_predictors(const AnyFit& fit) {
  return std::visit(
      [](const auto& f) -> std::size_t {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, BinaryFit>) {
          return f.ordinal.forests.empty() ? 0 : forest_predictors(f.ordinal.forests[0]);
        } else if constexpr (std::is_same_v<T, DensityFit>) {
          return f.states.empty() ? 0 : forest_predictors(f.states[0].sticks);
        } else {
          return f.forests.empty() ? 0 : forest_predictors(f.forests[0]);
        }
      },
      fit);
}

// ---------------------------------------------------------------- model files

namespace {

constexpr const char* kModelMagic = "cloglog-model";

void put_values(std::ostream& out, const char* tag, std::span<const double> v) {
  out << tag << ' ' << v.size();
  for (double x : v) out << ' ' << format_double(x);
  out << '\n';
}

void put_forest(std::ostream& out, const Forest& f) {
  out << "forest " << f.num_trees() << ' ' << f.num_categories() << '\n';
  for (const Tree& t : f.trees()) {
    out << "tree " << t.size() << '\n';
    for (const TreeNode& n : t.nodes()) {
      out << n.left << ' ' << n.right << ' ' << n.parent << ' ' << n.depth << ' ' << static_cast<int>(n.rule.kind)
          << ' ' << n.rule.var << ' ' << n.rule.cut << ' ' << format_double(n.rule.threshold) << ' '
          << format_double(n.value) << '\n';
    }
  }
}

class Reader {
 public:
  Reader(std::istream& in, std::string label) : in_(in), label_(std::move(label)) {}

  std::string word() {
    std::string w;
    if (!(in_ >> w)) fail("unexpected end of file");
    return w;
  }
  void expect(const std::string& w) {
    const std::string got = word();
    if (got != w) fail("expected '" + w + "', found '" + got + "'");
  }
  double real() {
    const std::string w = word();
    char* end = nullptr;
    const double v = std::strtod(w.c_str(), &end);
    if (end != w.c_str() + w.size()) fail("bad number '" + w + "'");
    return v;
  }
  long long integer() {
    const std::string w = word();
    char* end = nullptr;
    const long long v = std::strtoll(w.c_str(), &end, 10);
    if (end != w.c_str() + w.size()) fail("bad integer '" + w + "'");
    return v;
  }
  std::size_t count(long long max = 100000000) {
    const long long v = integer();
    if (v < 0 || v > max) fail("count out of range");
    return static_cast<std::size_t>(v);
  }
  std::vector<double> values(const std::string& tag) {
    expect(tag);
    std::vector<double> v(count());
    for (double& x : v) x = real();
    return v;
  }
  Forest forest(const std::shared_ptr<const SplitGrid>& grid) {
    expect("forest");
    const std::size_t T = count();
    const int ncat = static_cast<int>(integer());
    if (T == 0) fail("forest without trees");
    Forest f(T, grid, ncat);
    for (std::size_t t = 0; t < T; ++t) {
      expect("tree");
      std::vector<TreeNode> nodes(count());
      if (nodes.empty()) fail("empty tree");
      for (TreeNode& n : nodes) {
        n.left = static_cast<int>(integer());
        n.right = static_cast<int>(integer());
        n.parent = static_cast<int>(integer());
        n.depth = static_cast<int>(integer());
        const long long kind = integer();
        if (kind != 0 && kind != 1) fail("bad split kind");
        n.rule.kind = static_cast<SplitRule::Kind>(kind);
        n.rule.var = static_cast<int>(integer());
        n.rule.cut = static_cast<int>(integer());
        n.rule.threshold = real();
        n.value = real();
        const auto size = static_cast<int>(nodes.size());
        if (n.left >= size || n.right >= size || (n.left < 0) != (n.right < 0)) fail("bad node links");
        if (n.left >= 0 && n.rule.kind == SplitRule::Kind::kPredictor &&
            (n.rule.var < 0 || static_cast<std::size_t>(n.rule.var) >= grid->num_predictors())) {
          fail("split on an unknown predictor");
        }
      }
      f.tree(t) = Tree(std::move(nodes));
    }
    return f;
  }
  [[noreturn]] void fail(const std::string& what) const { throw DataError(label_ + ": " + what); }

 private:
  std::istream& in_;
  std::string label_;
};

void put_ordinal_body(std::ostream& out, const OrdinalFit& f) {
  out << "categories " << f.config.num_categories << '\n';
  out << "proportional " << (f.config.proportional ? 1 : 0) << '\n';
  out << "augment " << (f.config.augment_top ? 1 : 0) << '\n';
  out << "draws " << f.forests.size() << '\n';
  for (std::size_t d = 0; d < f.forests.size(); ++d) {
    put_values(out, "gamma", f.gamma[d]);
    put_forest(out, f.forests[d]);
  }
}

OrdinalFit read_ordinal_body(Reader& r, const std::shared_ptr<const SplitGrid>& grid) {
  OrdinalFit f;
  r.expect("categories");
  f.config.num_categories = static_cast<int>(r.integer());
  r.expect("proportional");
  f.config.proportional = r.integer() != 0;
  r.expect("augment");
  f.config.augment_top = r.integer() != 0;
  if (f.config.num_categories < 2) r.fail("need at least two categories");
  r.expect("draws");
  const std::size_t D = r.count();
  for (std::size_t d = 0; d < D; ++d) {
    f.gamma.push_back(r.values("gamma"));
    if (f.gamma.back().size() != static_cast<std::size_t>(f.config.num_categories - 1)) r.fail("wrong gamma length");
    f.forests.push_back(r.forest(grid));
  }
  return f;
}

}  // namespace

void write_model(std::ostream& out, const AnyFit& fit) {
  const std::size_t P = fit_num_predictors(fit);
  std::visit(
      [&](const auto& f) {
        using T = std::decay_t<decltype(f)>;
        out << kModelMagic << " 1\n";
        if constexpr (std::is_same_v<T, BinaryFit>) {
          out << "model binary\npredictors " << P << '\n';
          out << "link " << (f.link == BinaryLink::kCloglog ? "cloglog" : "loglog") << '\n';
          put_ordinal_body(out, f.ordinal);
        } else if constexpr (std::is_same_v<T, OrdinalFit>) {
          out << "model ordinal\npredictors " << P << '\n';
          put_ordinal_body(out, f);
        } else if constexpr (std::is_same_v<T, SurvivalFit>) {
          out << "model survival\npredictors " << P << '\n';
          out << "proportional " << (f.config.proportional ? 1 : 0) << '\n';
          put_values(out, "cuts", f.cuts);
          out << "draws " << f.forests.size() << '\n';
          for (std::size_t d = 0; d < f.forests.size(); ++d) {
            put_values(out, "lambda", f.lambda[d]);
            put_forest(out, f.forests[d]);
          }
        } else {
          out << "model density\npredictors " << P << '\n';
          out << "proportional " << (f.config.proportional ? 1 : 0) << '\n';
          out << "components " << f.config.max_components << '\n';
          out << "center " << format_double(f.center) << "\nscale " << format_double(f.scale) << '\n';
          out << "draws " << f.states.size() << '\n';
          for (const DensityState& s : f.states) {
            put_values(out, "gamma", s.gamma);
            put_values(out, "mu", s.comp.mu);
            put_values(out, "sigma", s.comp.sigma);
            put_forest(out, s.sticks);
            put_forest(out, s.mean);
          }
        }
      },
      fit);
}

AnyFit read_model(std::istream& in, const std::string& label) {
  Reader r(in, label);
  r.expect(kModelMagic);
  if (r.integer() != 1) r.fail("unsupported model file version");
  r.expect("model");
  const ModelKind kind = parse_model_kind(r.word());
  r.expect("predictors");
  const std::size_t P = r.count(1000000);
  auto grid = std::make_shared<const SplitGrid>(std::vector<std::vector<double>>(P));
  switch (kind) {
    case ModelKind::kBinary: {
      BinaryFit f;
      r.expect("link");
      const std::string link = r.word();
      if (link != "cloglog" && link != "loglog") r.fail("unknown link");
      f.link = link == "cloglog" ? BinaryLink::kCloglog : BinaryLink::kLoglog;
      f.ordinal = read_ordinal_body(r, grid);
      return f;
    }
    case ModelKind::kOrdinal:
      return read_ordinal_body(r, grid);
    case ModelKind::kSurvival: {
      SurvivalFit f;
      r.expect("proportional");
      f.config.proportional = r.integer() != 0;
      f.cuts = r.values("cuts");
      HazardGrid{f.cuts, {}}.validate();
      r.expect("draws");
      const std::size_t D = r.count();
      for (std::size_t d = 0; d < D; ++d) {
        f.lambda.push_back(r.values("lambda"));
        if (f.lambda.back().size() != f.cuts.size() + 1) r.fail("one rate per bin");
        f.forests.push_back(r.forest(grid));
      }
      return f;
    }
    case ModelKind::kDensity: {
      DensityFit f;
      r.expect("proportional");
      f.config.proportional = r.integer() != 0;
      r.expect("components");
      f.config.max_components = static_cast<int>(r.count(100000));
      if (f.config.max_components < 1) r.fail("need at least one component");
      r.expect("center");
      f.center = r.real();
      r.expect("scale");
      f.scale = r.real();
      r.expect("draws");
      const std::size_t D = r.count();
      const auto K = static_cast<std::size_t>(f.config.max_components);
      for (std::size_t d = 0; d < D; ++d) {
        DensityState s;
        s.gamma = r.values("gamma");
        s.comp.mu = r.values("mu");
        s.comp.sigma = r.values("sigma");
        if (s.gamma.size() + 1 != K || s.comp.mu.size() != K || s.comp.sigma.size() != K) {
          r.fail("wrong component count");
        }
        s.sticks = r.forest(grid);
        s.mean = r.forest(grid);
        f.states.push_back(std::move(s));
      }
      return f;
    }
  }
  r.fail("unknown model");
}

void merge_fits(AnyFit& into, const AnyFit& more) {
  if (into.index() != more.index()) throw DataError("cannot merge different models");
  auto append = [](auto& a, const auto& b) { a.insert(a.end(), b.begin(), b.end()); };
  std::visit(
      [&](auto& f) {
        using T = std::decay_t<decltype(f)>;
        const T& g = std::get<T>(more);
        if constexpr (std::is_same_v<T, BinaryFit>) {
          append(f.ordinal.gamma, g.ordinal.gamma);
          append(f.ordinal.forests, g.ordinal.forests);
        } else if constexpr (std::is_same_v<T, OrdinalFit>) {
          append(f.gamma, g.gamma);
          append(f.forests, g.forests);
        } else if constexpr (std::is_same_v<T, SurvivalFit>) {
          if (f.cuts != g.cuts) throw DataError("cannot merge survival fits with different bins");
          append(f.lambda, g.lambda);
          append(f.forests, g.forests);
        } else {
          if (f.center != g.center || f.scale != g.scale) throw DataError("cannot merge density fits with different scaling");
          append(f.states, g.states);
        }
      },
      into);
}

// ---------------------------------------------------------------- grids

namespace {

struct Band {
  double mean, lo, hi;
};

Band band(const std::vector<double>& v) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  return {m, quantile(v, 0.025), quantile(v, 0.975)};
}

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> g(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = n == 1 ? a : a + (b - a) * i / (n - 1);
  return g;
}

void put_band(std::ostream& out, const Band& b) {
  out << '\t' << format_double(b.mean) << '\t' << format_double(b.lo) << '\t' << format_double(b.hi) << '\n';
}

}  // namespace

void write_prediction_grid(std::ostream& out, const AnyFit& fit, const Matrix& query, int grid_points) {
  if (grid_points < 2) throw UsageError("grid_points must be at least 2");
  if (query.rows() > 0 && query.cols() != fit_num_predictors(fit)) {
    throw UsageError("query points have the wrong number of predictors");
  }
  std::visit(
      [&](const auto& f) {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, BinaryFit>) {
          out << "query\tmean\tq2.5\tq97.5\n";
          for (std::size_t q = 0; q < query.rows(); ++q) {
            out << q + 1;
            put_band(out, band(predict_binary(f, query.row(q))));
          }
        } else if constexpr (std::is_same_v<T, OrdinalFit>) {
          out << "query\tk\tmean\tq2.5\tq97.5\n";
          for (std::size_t q = 0; q < query.rows(); ++q) {
            const auto pmf = predict_ordinal(f, query.row(q));
            for (int k = 0; k < f.config.num_categories; ++k) {
              std::vector<double> v;
              for (const auto& p : pmf) v.push_back(p[static_cast<std::size_t>(k)]);
              out << q + 1 << '\t' << k + 1;
              put_band(out, band(v));
            }
          }
        } else if constexpr (std::is_same_v<T, SurvivalFit>) {
          const double tmax = f.cuts.empty() ? 1.0 : 2.0 * f.cuts.back();
          const auto grid = linspace(0.0, tmax, grid_points);
          out << "query\tt\tmean\tq2.5\tq97.5\n";
          for (std::size_t q = 0; q < query.rows(); ++q) {
            const auto s = survival_function(f, query.row(q), grid);
            for (std::size_t g = 0; g < grid.size(); ++g) {
              std::vector<double> v;
              for (const auto& row : s) v.push_back(row[g]);
              out << q + 1 << '\t' << format_double(grid[g]);
              put_band(out, band(v));
            }
          }
        } else {
          const auto grid = linspace(f.center - 4.0 * f.scale, f.center + 4.0 * f.scale, grid_points);
          out << "query\ty\tmean\tq2.5\tq97.5\n";
          for (std::size_t q = 0; q < query.rows(); ++q) {
            const auto dens = conditional_density(f, query.row(q), grid);
            for (std::size_t g = 0; g < grid.size(); ++g) {
              std::vector<double> v;
              for (const auto& row : dens) v.push_back(row[g]);
              out << q + 1 << '\t' << format_double(grid[g]);
              put_band(out, band(v));
            }
            out << q + 1 << "\tmean";
            put_band(out, band(conditional_mean(f, query.row(q))));
          }
        }
      },
      fit);
}

Dataset select_rows(const Dataset& data, std::span<const std::size_t> rows) {
  Dataset out = data;
  out.values = data.values.select_rows(rows);
  return out;
}

HeldoutFn heldout_for(const ModelSpec& spec, const Dataset& data) {
  return [spec, &data](std::span<const std::size_t> train, std::span<const std::size_t> test, Rng& rng) {
    const Dataset tr = select_rows(data, train);
    const Dataset te = select_rows(data, test);
    const AnyFit fit = fit_model(spec, tr, Matrix(), rng);
    return log_predictive(fit_loglik(fit, te));
  };
}

// ---------------------------------------------------------------- commands

namespace {

std::uint64_t require_seed(const RunConfig& config) {
  if (config.get("seed").empty()) throw UsageError("a seed is required (--seed)");
  const long long s = config.get_int("seed");
  if (s < 0) throw UsageError("seed must be non-negative");
  return static_cast<std::uint64_t>(s);
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw DataError("cannot write '" + p.string() + "'");
  return out;
}

fs::path prepare_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory '" + dir + "': " + ec.message());
  return fs::path(dir);
}

Dataset load_for(const RunConfig& config, ModelKind kind) {
  const std::string path = config.get("data");
  if (path.empty()) throw UsageError("--data is required");
  return load_dataset(path, schema_for(config, kind));
}

void add_provenance(PosteriorDraws& d, const RunConfig& config, int chain) {
  d.set_meta("chain", std::to_string(chain + 1));
  d.set_meta("seed", config.get("seed"));
  d.set_meta("config_hash", config.hash());
  for (const auto& [k, v] : config.entries()) {
    if (!RunConfig::affects_results(k)) continue;
    d.set_meta("config." + k, v);
    d.set_meta("origin." + k, origin_name(config.origin(k)));
  }
}

std::vector<AnyFit> load_models(const std::string& dir) {
  if (dir.empty()) throw UsageError("--fit-dir is required");
  std::vector<AnyFit> fits;
  for (int c = 1;; ++c) {
    const fs::path p = fs::path(dir) / ("model_chain" + std::to_string(c) + ".txt");
    if (!fs::exists(p)) break;
    std::ifstream in(p);
    fits.push_back(read_model(in, p.string()));
  }
  if (fits.empty()) throw DataError("no model files in '" + dir + "'");
  return fits;
}

AnyFit merged(std::vector<AnyFit> fits) {
  AnyFit all = std::move(fits[0]);
  for (std::size_t c = 1; c < fits.size(); ++c) merge_fits(all, fits[c]);
  return all;
}

int cmd_fit(ModelKind kind, const RunConfig& config, std::ostream& out) {
  const std::uint64_t seed = require_seed(config);
  const Dataset data = load_for(config, kind);
  const ModelSpec spec = resolve_spec(config, kind, data);
  const Matrix query = resolve_query(config, data.predictors());
  const int chains = static_cast<int>(config.get_int("chains"));
  auto fits = fit_chains(spec, data, query, seed, chains, static_cast<int>(config.get_int("threads")));

  const fs::path dir = prepare_dir(config.get("out_dir"));
  std::vector<PosteriorDraws> draws;
  for (std::size_t c = 0; c < fits.size(); ++c) {
    PosteriorDraws& d = fit_draws(fits[c]);
    add_provenance(d, config, static_cast<int>(c));
    const std::string tag = "_chain" + std::to_string(c + 1) + ".txt";
    auto f = open_out(dir / ("draws" + tag));
    write_draws(f, d);
    auto l = open_out(dir / ("loglik" + tag));
    write_matrix(l, d.loglik);
    auto m = open_out(dir / ("model" + tag));
    write_model(m, fits[c]);
    draws.push_back(d);
  }
  auto s = open_out(dir / "summary.tsv");
  write_summary(s, summarize(draws));
  auto g = open_out(dir / "grid.tsv");
  write_prediction_grid(g, merged(fits), query, static_cast<int>(config.get_int("grid_points")));
  auto q = open_out(dir / "query.tsv");
  for (std::size_t i = 0; i < query.rows(); ++i) {
    for (std::size_t j = 0; j < query.cols(); ++j) q << (j ? "\t" : "") << format_double(query(i, j));
    q << '\n';
  }
  auto cfg = open_out(dir / "config.txt");
  for (const auto& [k, v] : config.entries()) cfg << k << " = " << v << "  # " << origin_name(config.origin(k)) << '\n';
  out << model_kind_name(kind) << ": " << chains << " chain(s), " << fit_draws(fits[0]).num_draws()
      << " retained draws each, written to " << dir.string() << '\n';
  return 0;
}

// Predictor columns for new data: explicit flags win, otherwise the roles the
// fit recorded in its config.txt, so the fit's outcome columns are skipped.
Dataset prediction_inputs(const RunConfig& config) {
  Schema s;
  s.predictors = config.get_list("predictors");
  s.categorical = config.get_list("categorical");
  const fs::path saved = fs::path(config.get("fit_dir")) / "config.txt";
  if (s.predictors.empty() && fs::exists(saved)) {
    RunConfig fitted;
    fitted.load_file(saved.string());
    if (s.categorical.empty()) s.categorical = fitted.get_list("categorical");
    s.predictors = fitted.get_list("predictors");
    if (s.predictors.empty()) {
      const Dataset all = load_dataset(config.get("data"), s);
      for (const auto& c : all.columns) {
        if (c != fitted.get("outcome") && c != fitted.get("time") && c != fitted.get("status")) {
          s.predictors.push_back(c);
        }
      }
    }
  }
  return load_dataset(config.get("data"), s);
}

int cmd_predict(const RunConfig& config, std::ostream& out) {
  AnyFit fit = merged(load_models(config.get("fit_dir")));
  const std::size_t P = fit_num_predictors(fit);
  Matrix query;
  if (!config.get("query").empty()) {
    query = parse_points(config.get("query"), P);
  } else if (!config.get("data").empty()) {
    query = prediction_inputs(config).predictors();
  } else {
    throw UsageError("predict needs --query or --data");
  }
  const fs::path dir = prepare_dir(config.get("out_dir"));
  auto f = open_out(dir / "predictions.tsv");
  write_prediction_grid(f, fit, query, static_cast<int>(config.get_int("grid_points")));
  out << "predictions for " << query.rows() << " point(s) written to " << (dir / "predictions.tsv").string() << '\n';
  return 0;
}

int cmd_cv(ModelKind kind, const RunConfig& config, std::ostream& out) {
  const std::uint64_t seed = require_seed(config);
  const Dataset data = load_for(config, kind);
  const int folds = static_cast<int>(config.get_int("folds"));
  const int splits = static_cast<int>(config.get_int("splits"));
  const fs::path dir = prepare_dir(config.get("out_dir"));
  auto f = open_out(dir / "cv.tsv");
  if (config.get_bool("compare")) {
    if (kind == ModelKind::kBinary) throw UsageError("--compare needs a model with both ph and nph modes");
    RunConfig ph = config, nph = config;
    ph.set("mode", "ph");
    nph.set("mode", "nph");
    const ModelSpec a = resolve_spec(ph, kind, data), b = resolve_spec(nph, kind, data);
    const auto cmp = compare_kfold(heldout_for(a, data), heldout_for(b, data), data.rows(), folds, splits, Rng(seed));
    f << "split\tdeviance_ph\tdeviance_nph\tph_minus_nph\n";
    for (std::size_t s = 0; s < cmp.difference.size(); ++s) {
      f << s + 1 << '\t' << format_double(cmp.reference.split_deviance[s]) << '\t'
        << format_double(cmp.competitor.split_deviance[s]) << '\t' << format_double(cmp.difference[s]) << '\n';
    }
    out << "mean deviance ph " << format_double(cmp.reference.mean) << ", nph " << format_double(cmp.competitor.mean)
        << "; nph lower in " << cmp.competitor_better << " of " << splits << " splits\n";
    return 0;
  }
  const ModelSpec spec = resolve_spec(config, kind, data);
  const auto res = kfold_deviance(heldout_for(spec, data), data.rows(), folds, splits, Rng(seed));
  f << "split\tdeviance\n";
  for (std::size_t s = 0; s < res.split_deviance.size(); ++s) {
    f << s + 1 << '\t' << format_double(res.split_deviance[s]) << '\n';
  }
  out << folds << "-fold held-out deviance averaged over " << splits << " split(s): " << format_double(res.mean) << '\n';
  return 0;
}

int cmd_elpd(const RunConfig& config, std::ostream& out) {
  Matrix ll;
  if (!config.get("fit_dir").empty()) {
    std::vector<std::vector<double>> rows;
    for (int c = 1;; ++c) {
      const fs::path p = fs::path(config.get("fit_dir")) / ("loglik_chain" + std::to_string(c) + ".txt");
      if (!fs::exists(p)) break;
      std::ifstream in(p);
      const Matrix m = read_matrix(in, p.string());
      if (!ll.empty() && m.cols() != ll.cols()) throw DataError("chains disagree on the number of observations");
      for (std::size_t i = 0; i < m.rows(); ++i) ll.append_row(m.row(i));
    }
    if (ll.empty()) throw DataError("no log-likelihood files in '" + config.get("fit_dir") + "'");
  } else {
    const ModelKind kind = parse_model_kind(config.get("model"));
    const Dataset data = load_for(config, kind);
    Rng rng(require_seed(config));
    ll = fit_draws(fit_model(resolve_spec(config, kind, data), data, Matrix(), rng)).loglik;
  }
  const LooResult loo = elpd_loo(ll);
  const fs::path dir = prepare_dir(config.get("out_dir"));
  auto f = open_out(dir / "elpd.tsv");
  f << "observation\telpd\tpareto_k\n";
  for (std::size_t i = 0; i < loo.pointwise.size(); ++i) {
    f << i + 1 << '\t' << format_double(loo.pointwise[i]) << '\t' << format_double(loo.pareto_k[i]) << '\n';
  }
  const auto bad = std::count_if(loo.pareto_k.begin(), loo.pareto_k.end(), [](double k) { return k > 0.7; });
  out << "elpd_loo " << format_double(loo.elpd) << " (se " << format_double(loo.se) << "), p_loo "
      << format_double(loo.p_loo) << ", pareto k > 0.7: " << bad << '\n';
  return 0;
}

// r(x) per draw at the rows of x; the first category slot for NPH forests.
Matrix link_draws(const AnyFit& fit, const Matrix& x) {
  std::vector<const Forest*> forests;
  std::visit(
      [&](const auto& f) {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, BinaryFit>) {
          for (const auto& g : f.ordinal.forests) forests.push_back(&g);
        } else if constexpr (std::is_same_v<T, DensityFit>) {
          for (const auto& s : f.states) forests.push_back(&s.sticks);
        } else {
          for (const auto& g : f.forests) forests.push_back(&g);
        }
      },
      fit);
  Matrix r(forests.size(), x.rows());
  for (std::size_t d = 0; d < forests.size(); ++d) {
    for (std::size_t i = 0; i < x.rows(); ++i) {
      r(d, i) = forests[d]->evaluate(x.row(i), forests[d]->has_category_slot() ? 1 : 0);
    }
  }
  return r;
}

int cmd_project(const RunConfig& config, std::ostream& out) {
  const AnyFit fit = merged(load_models(config.get("fit_dir")));
  if (config.get("data").empty()) throw UsageError("--data is required");
  const Dataset data = prediction_inputs(config);
  const Matrix x = data.predictors();
  if (x.cols() != fit_num_predictors(fit)) throw SchemaError("data and model disagree on the predictors");
  const AdditiveProjection proj = project_additive(link_draws(fit, x), x);
  const fs::path dir = prepare_dir(config.get("out_dir"));
  auto f = open_out(dir / "projection.tsv");
  f << "draw\tr2\n";
  for (std::size_t d = 0; d < proj.r2.size(); ++d) f << d + 1 << '\t' << format_double(proj.r2[d]) << '\n';
  auto p = open_out(dir / "partial.tsv");
  p << "predictor\tx\tmean\tq2.5\tq97.5\n";
  const auto names = data.predictor_names();
  for (std::size_t j = 0; j < proj.partial.size(); ++j) {
    const Matrix& m = proj.partial[j];
    std::vector<std::size_t> order(x.rows());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x(a, j) < x(b, j); });
    for (std::size_t i : order) {
      std::vector<double> v(m.rows());
      for (std::size_t d = 0; d < m.rows(); ++d) v[d] = m(d, i);
      p << names[j] << '\t' << format_double(x(i, j));
      put_band(p, band(v));
    }
  }
  const Band r2 = band(proj.r2);
  out << "additive R^2 posterior mean " << format_double(r2.mean) << " (95% " << format_double(r2.lo) << " to "
      << format_double(r2.hi) << ")" << (proj.ridge_used ? ", ridge fallback used" : "") << '\n';
  return 0;
}

int cmd_simulate(const RunConfig& config, std::ostream& out) {
  const std::uint64_t seed = require_seed(config);
  const long long n = config.get_int("n");
  if (n < 1) throw UsageError("--n must be positive");
  const std::string dgp = config.get("dgp");
  Dataset d;
  if (dgp == "dunson") {
    d = simulate_dunson(static_cast<std::size_t>(n), seed);
  } else if (dgp == "ph-survival") {
    d = simulate_ph_survival(static_cast<std::size_t>(n), config.get_double("censoring"), seed);
  } else if (dgp == "crossing") {
    d = simulate_crossing(static_cast<std::size_t>(n), seed);
  } else {
    throw UsageError("unknown dgp '" + dgp + "' (dunson, ph-survival, crossing)");
  }
  if (config.get("data").empty()) {
    write_dataset(out, d);
  } else {
    write_dataset(config.get("data"), d);
  }
  return 0;
}

int cmd_verify(const RunConfig& config, std::ostream& out) {
  const std::uint64_t seed = require_seed(config);
  std::vector<std::string> checks = config.get_list("checks");
  const std::vector<std::string> all{"marginal", "link", "latent", "dp", "solver"};
  if (checks.size() == 1 && checks[0] == "all") checks = all;
  bool ok = true;
  auto report = [&](const std::string& name, bool pass, const std::string& detail) {
    out << (pass ? "PASS " : "FAIL ") << name << ": " << detail << '\n';
    ok = ok && pass;
  };
  const Rng root(seed);
  for (const std::string& c : checks) {
    std::ostringstream detail;
    detail << std::setprecision(3);
    if (c == "marginal") {
      Rng rng = root.split(1);
      double worst = 0.0;
      for (int t = 0; t < 100; ++t) {
        LogGammaPrior prior;
        prior.a = 0.2 + 4.8 * rng.uniform();
        prior.b = 0.2 + 4.8 * rng.uniform();
        const LeafStats s{static_cast<double>(rng.index(21)), 50.0 * rng.uniform()};
        const double lib = integrated_log_marginal(std::span<const LeafStats>(&s, 1), prior);
        const double ref = oracle_integrated_marginal(prior.a, prior.b, s.count, s.exposure);
        worst = std::max(worst, std::abs(lib - ref) / std::max(std::abs(ref), 1e-300));
      }
      detail << "max relative error " << worst << " over 100 tuples";
      report(c, worst <= 1e-8, detail.str());
    } else if (c == "link") {
      Rng rng = root.split(2);
      double worst = 0.0;
      for (int t = 0; t < 1000; ++t) {
        std::vector<double> g(1 + rng.index(5));
        for (double& v : g) v = 6.0 * rng.uniform() - 3.0;
        worst = std::max(worst, check_link_equivalence(g, 6.0 * rng.uniform() - 3.0));
      }
      detail << "max pmf discrepancy " << worst << " over 1000 tuples";
      report(c, worst <= 1e-12, detail.str());
    } else if (c == "latent") {
      Rng rng = root.split(3);
      double worst = 0.0;
      for (int t = 0; t < 20; ++t) {
        std::vector<double> g(1 + rng.index(4));
        for (double& v : g) v = 4.0 * rng.uniform() - 2.0;
        worst = std::max(worst, check_latent_representation(g, 2.0 * rng.uniform() - 1.0, 100000, rng));
      }
      detail << "worst cell " << worst << " MC standard errors over 20 settings";
      report(c, worst <= 4.0, detail.str());
    } else if (c == "dp") {
      Rng rng = root.split(4);
      double p = 1.0;
      for (const double r : {-1.0, 0.0, 1.0}) p = std::min(p, check_dp_property(r, 100000, rng).p_value);
      detail << "smallest KS p-value " << p << " at r = -1, 0, 1";
      report(c, p > 0.01, detail.str());
    } else if (c == "solver") {
      double worst = 0.0;
      for (int i = 0; i <= 40; ++i) worst = std::max(worst, check_leaf_prior_solver(std::pow(10.0, -3.0 + 0.1 * i)));
      detail << "max residual " << worst << " over sigma in [1e-3, 10]";
      report(c, worst <= 1e-10, detail.str());
    } else {
      throw UsageError("unknown check '" + c + "' (marginal, link, latent, dp, solver, all)");
    }
  }
  return ok ? 0 : 5;
}

int cmd_sbc(const RunConfig& config, std::ostream& out) {
  SbcConfig c;
  const std::string m = config.get("sbc_model");
  if (m == "ordinal") {
    c.model = SbcModel::kOrdinal;
  } else if (m == "survival") {
    c.model = SbcModel::kSurvival;
  } else if (m == "density") {
    c.model = SbcModel::kDensity;
  } else {
    throw UsageError("unknown sbc model '" + m + "' (ordinal, survival, density)");
  }
  c.proportional = config.get("mode") != "nph";
  // the toy defaults apply unless overridden
  if (config.has("n")) c.n = static_cast<std::size_t>(config.get_int("n"));
  if (config.has("trees")) c.trees = static_cast<std::size_t>(config.get_int("trees"));
  if (config.has("burnin")) c.burn_in = static_cast<int>(config.get_int("burnin"));
  if (config.has("iters")) c.kept = static_cast<int>(config.get_int("iters"));
  if (config.has("K")) c.categories = static_cast<int>(config.get_int("K"));
  if (config.has("Kmax")) c.categories = static_cast<int>(config.get_int("Kmax"));
  c.replications = static_cast<int>(config.get_int("replications"));
  c.draws = static_cast<int>(config.get_int("sbc_draws"));
  c.bins = static_cast<int>(config.get_int("sbc_bins"));
  c.exposure_scale = config.get_double("exposure_scale");
  c.threads = static_cast<int>(config.get_int("threads"));
  const auto reports = sbc_run(c, Rng(require_seed(config)));
  bool ok = true;
  const fs::path dir = prepare_dir(config.get("out_dir"));
  auto f = open_out(dir / "sbc.tsv");
  f << "quantity\tbin\tcount\n";
  for (const auto& r : reports) {
    for (std::size_t b = 0; b < r.histogram.size(); ++b) f << r.parameter << '\t' << b + 1 << '\t' << r.histogram[b] << '\n';
    const bool pass = r.p_value > 0.005;
    ok = ok && pass;
    out << (pass ? "PASS " : "FAIL ") << r.parameter << ": chi2 " << format_double(r.chi2) << ", p "
        << format_double(r.p_value) << ", " << r.replications << " replications, " << r.failed << " failed\n";
  }
  return ok ? 0 : 5;
}

}  // namespace

int run_command(const std::string& command, const RunConfig& config, std::ostream& out) {
  if (command == "fit-binary") return cmd_fit(ModelKind::kBinary, config, out);
  if (command == "fit-ordinal") return cmd_fit(ModelKind::kOrdinal, config, out);
  if (command == "fit-density") return cmd_fit(ModelKind::kDensity, config, out);
  if (command == "fit-survival") return cmd_fit(ModelKind::kSurvival, config, out);
  if (command == "predict") return cmd_predict(config, out);
  if (command == "cv") return cmd_cv(parse_model_kind(config.get("model")), config, out);
  if (command == "elpd") return cmd_elpd(config, out);
  if (command == "project") return cmd_project(config, out);
  if (command == "simulate") return cmd_simulate(config, out);
  if (command == "verify") return cmd_verify(config, out);
  if (command == "sbc") return cmd_sbc(config, out);
  throw UsageError("unknown command '" + command + "'");
}

}  // namespace cloglog
