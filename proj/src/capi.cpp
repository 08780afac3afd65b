// Apache License, Version 2.0, refer to LICENSE.txt

#include "cloglog/cloglog.h"

#include <cstring>
#include <fstream>
#include <new>
#include <numeric>
#include <sstream>
#include <string>

#include "cloglog/error.hpp"
#include "cloglog/eval.hpp"
#include "cloglog/logging.hpp"
#include "cloglog/pipeline.hpp"
#include "cloglog/verify.hpp"

struct cloglog_config {
  cloglog::RunConfig config;
};

struct cloglog_dataset {
  cloglog::Dataset data;
};

struct cloglog_fit {
  cloglog::AnyFit fit;
};

namespace {

thread_local std::string g_last_error;

template <class F>
cloglog_status guarded(F&& f) {
  try {
    g_last_error.clear();
    return f();
  } catch (const cloglog::Error& e) {
    g_last_error = e.what();
    return static_cast<cloglog_status>(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return CLOGLOG_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CLOGLOG_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return CLOGLOG_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw cloglog::UsageError(std::string(what) + " must not be NULL");
}

// Forwards whole lines to a C callback.
class CallbackBuf : public std::stringbuf {
 public:
  CallbackBuf(cloglog_text_fn fn, void* user) : fn_(fn), user_(user) {}
  ~CallbackBuf() override { flush(); }
  int sync() override {
    flush();
    return 0;
  }

 private:
  void flush() {
    const std::string s = str();
    if (!s.empty() && fn_ != nullptr) fn_(s.c_str(), user_);
    str("");
  }
  cloglog_text_fn fn_;
  void* user_;
};

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

extern "C" {

const char* cloglog_last_error(void) { return g_last_error.c_str(); }

const char* cloglog_version(void) { return "1.0.0"; }

void cloglog_set_warning_sink(cloglog_text_fn fn, void* user) {
  if (fn == nullptr) {
    cloglog::set_warning_sink(nullptr);
  } else {
    cloglog::set_warning_sink([fn, user](const std::string& m) { fn(m.c_str(), user); });
  }
}

cloglog_status cloglog_config_create(cloglog_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new cloglog_config;
    return CLOGLOG_OK;
  });
}

void cloglog_config_destroy(cloglog_config* config) { delete config; }

cloglog_status cloglog_config_set(cloglog_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    config->config.set(key, value);
    return CLOGLOG_OK;
  });
}

cloglog_status cloglog_config_load(cloglog_config* config, const char* path) {
  return guarded([&] {
    require(config, "config");
    require(path, "path");
    config->config.load_file(path);
    return CLOGLOG_OK;
  });
}

cloglog_status cloglog_config_get(const cloglog_config* config, const char* key, char* buffer, size_t size) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(buffer, "buffer");
    if (size == 0) throw cloglog::UsageError("buffer size must be positive");
    const std::string v = config->config.get(key);
    const std::size_t n = std::min(v.size(), size - 1);
    std::memcpy(buffer, v.data(), n);
    buffer[n] = '\0';
    return CLOGLOG_OK;
  });
}

cloglog_status cloglog_run(const char* command, const cloglog_config* config, cloglog_text_fn out, void* user) {
  return guarded([&] {
    require(command, "command");
    require(config, "config");
    CallbackBuf buf(out, user);
    std::ostream os(&buf);
    const int code = cloglog::run_command(command, config->config, os);
    os.flush();
    return code == 0 ? CLOGLOG_OK : static_cast<cloglog_status>(code);
  });
}

cloglog_status cloglog_dataset_load(const char* path, const cloglog_config* config, cloglog_dataset** out) {
  return guarded([&] {
    require(path, "path");
    require(config, "config");
    require(out, "out");
    const std::string model = config->config.get("model");
    cloglog::Schema schema;
    if (model.empty()) {
      schema.outcome = config->config.get("outcome");
      schema.time = config->config.get("time");
      schema.status = config->config.get("status");
      schema.predictors = config->config.get_list("predictors");
      schema.categorical = config->config.get_list("categorical");
    } else {
      schema = cloglog::schema_for(config->config, cloglog::parse_model_kind(model));
    }
    *out = new cloglog_dataset{cloglog::load_dataset(path, schema)};
    return CLOGLOG_OK;
  });
}

cloglog_status cloglog_dataset_simulate_dunson(size_t n, uint64_t seed, cloglog_dataset** out) {
  return guarded([&] {
    require(out, "out");
    *out = new cloglog_dataset{cloglog::simulate_dunson(n, seed)};
    return CLOGLOG_OK;
  });
}

cloglog_status cloglog_dataset_write(const cloglog_dataset* data, const char* path) {
  return guarded([&] {
    require(data, "data");
    require(path, "path");
    cloglog::write_dataset(std::string(path), data->data);
    return CLOGLOG_OK;
  });
}

void cloglog_dataset_destroy(cloglog_dataset* data) { delete data; }

size_t cloglog_dataset_rows(const cloglog_dataset* data) { return data ? data->data.rows() : 0; }

size_t cloglog_dataset_cols(const cloglog_dataset* data) { return data ? data->data.columns.size() : 0; }

cloglog_status cloglog_dataset_value(const cloglog_dataset* data, size_t row, size_t col, double* out) {
  return guarded([&] {
    require(data, "data");
    require(out, "out");
    if (row >= data->data.rows() || col >= data->data.columns.size()) {
      throw cloglog::UsageError("dataset index out of range");
    }
    *out = data->data.values(row, col);
    return CLOGLOG_OK;
  });
}

const char* cloglog_dataset_column_name(const cloglog_dataset* data, size_t col) {
  if (data == nullptr || col >= data->data.columns.size()) return nullptr;
  return data->data.columns[col].c_str();
}

cloglog_status cloglog_fit_run(const cloglog_config* config, const cloglog_dataset* data, cloglog_fit** out) {
  return guarded([&] {
    require(config, "config");
    require(data, "data");
    require(out, "out");
    const cloglog::RunConfig& c = config->config;
    if (c.get("seed").empty()) throw cloglog::UsageError("a seed is required");
    const auto kind = cloglog::parse_model_kind(c.get("model"));
    const auto spec = cloglog::resolve_spec(c, kind, data->data);
    const auto query = cloglog::resolve_query(c, data->data.predictors());
    auto fits = cloglog::fit_chains(spec, data->data, query, static_cast<std::uint64_t>(c.get_int("seed")), 1, 1);
    *out = new cloglog_fit{std::move(fits[0])};
    return CLOGLOG_OK;
  });
}

cloglog_status cloglog_fit_load(const char* model_path, cloglog_fit** out) {
  return guarded([&] {
    require(model_path, "model_path");
    require(out, "out");
    std::ifstream in(model_path);
    if (!in) throw cloglog::DataError(std::string("cannot open '") + model_path + "'");
    *out = new cloglog_fit{cloglog::read_model(in, model_path)};
    return CLOGLOG_OK;
  });
}

cloglog_status cloglog_fit_save(const cloglog_fit* fit, const char* model_path) {
  return guarded([&] {
    require(fit, "fit");
    require(model_path, "model_path");
    std::ofstream out(model_path);
    if (!out) throw cloglog::DataError(std::string("cannot write '") + model_path + "'");
    cloglog::write_model(out, fit->fit);
    if (!out) throw cloglog::DataError(std::string("write failed for '") + model_path + "'");
    return CLOGLOG_OK;
  });
}

void cloglog_fit_destroy(cloglog_fit* fit) { delete fit; }

size_t cloglog_fit_num_draws(const cloglog_fit* fit) {
  if (fit == nullptr) return 0;
  return std::visit(
      [](const auto& f) -> std::size_t {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, cloglog::BinaryFit>) {
          return f.ordinal.forests.size();
        } else if constexpr (std::is_same_v<T, cloglog::DensityFit>) {
          return f.states.size();
        } else {
          return f.forests.size();
        }
      },
      fit->fit);
}

size_t cloglog_fit_num_predictors(const cloglog_fit* fit) { return fit ? cloglog::fit_num_predictors(fit->fit) : 0; }

cloglog_status cloglog_fit_predict(const cloglog_fit* fit, const double* x, size_t p, int k, double value,
                                   double* out) {
  return guarded([&] {
    require(fit, "fit");
    require(out, "out");
    if (p > 0) require(x, "x");
    if (p != cloglog::fit_num_predictors(fit->fit)) throw cloglog::UsageError("wrong number of predictors");
    const std::span<const double> xs(x, p);
    *out = std::visit(
        [&](const auto& f) -> double {
          using T = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<T, cloglog::BinaryFit>) {
            return mean(cloglog::predict_binary(f, xs));
          } else if constexpr (std::is_same_v<T, cloglog::OrdinalFit>) {
            if (k < 1 || k > f.config.num_categories) throw cloglog::UsageError("category out of range");
            std::vector<double> v;
            for (const auto& pmf : cloglog::predict_ordinal(f, xs)) v.push_back(pmf[static_cast<std::size_t>(k - 1)]);
            return mean(v);
          } else if constexpr (std::is_same_v<T, cloglog::DensityFit>) {
            std::vector<double> v;
            const double grid[] = {value};
            for (const auto& row : cloglog::conditional_density(f, xs, grid)) v.push_back(row[0]);
            return mean(v);
          } else {
            std::vector<double> v;
            const double grid[] = {value};
            for (const auto& row : cloglog::survival_function(f, xs, grid)) v.push_back(row[0]);
            return mean(v);
          }
        },
        fit->fit);
    return CLOGLOG_OK;
  });
}

cloglog_status cloglog_fit_elpd(const cloglog_fit* fit, double* elpd, double* se) {
  return guarded([&] {
    require(fit, "fit");
    require(elpd, "elpd");
    const cloglog::Matrix& ll = cloglog::fit_draws(fit->fit).loglik;
    if (ll.empty()) throw cloglog::DataError("this fit carries no pointwise log likelihood (loaded from a model file?)");
    const auto loo = cloglog::elpd_loo(ll);
    *elpd = loo.elpd;
    if (se != nullptr) *se = loo.se;
    return CLOGLOG_OK;
  });
}

cloglog_status cloglog_oracle_integrated_marginal(double a, double b, double A, double B, double* out) {
  return guarded([&] {
    require(out, "out");
    *out = cloglog::oracle_integrated_marginal(a, b, A, B);
    return CLOGLOG_OK;
  });
}

cloglog_status cloglog_check_link_equivalence(const double* gamma, size_t num_gamma, double r, double* out) {
  return guarded([&] {
    require(out, "out");
    if (num_gamma > 0) require(gamma, "gamma");
    *out = cloglog::check_link_equivalence(std::span<const double>(gamma, num_gamma), r);
    return CLOGLOG_OK;
  });
}

}  // extern "C"
