// Apache License, Version 2.0, refer to LICENSE.txt

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "cloglog/cloglog.h"
#include "doctest.h"

namespace fs = std::filesystem;

namespace {

void collect(const char* text, void* user) { static_cast<std::string*>(user)->append(text); }

void ignore(const char*, void*) {}

struct Silence {
  Silence() { cloglog_set_warning_sink(ignore, nullptr); }
  ~Silence() { cloglog_set_warning_sink(nullptr, nullptr); }
};

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cloglog_capi_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("configuration set and get") {
  cloglog_config* c = nullptr;
  REQUIRE(cloglog_config_create(&c) == CLOGLOG_OK);
  char buf[64];
  REQUIRE(cloglog_config_get(c, "trees", buf, sizeof buf) == CLOGLOG_OK);
  CHECK(std::string(buf) == "50");
  REQUIRE(cloglog_config_set(c, "trees", "12") == CLOGLOG_OK);
  REQUIRE(cloglog_config_get(c, "trees", buf, sizeof buf) == CLOGLOG_OK);
  CHECK(std::string(buf) == "12");
  // truncation keeps the terminator
  char tiny[2];
  REQUIRE(cloglog_config_get(c, "trees", tiny, sizeof tiny) == CLOGLOG_OK);
  CHECK(std::string(tiny) == "1");
  CHECK(cloglog_config_set(c, "no_such_key", "1") == CLOGLOG_USAGE);
  CHECK(std::string(cloglog_last_error()).find("no_such_key") != std::string::npos);
  CHECK(cloglog_config_get(c, "trees", buf, 0) == CLOGLOG_USAGE);
  CHECK(cloglog_config_load(c, "/nonexistent/cloglog.cfg") != CLOGLOG_OK);
  cloglog_config_destroy(c);
}

TEST_CASE("NULL arguments are usage errors") {
  CHECK(cloglog_config_create(nullptr) == CLOGLOG_USAGE);
  CHECK(cloglog_config_set(nullptr, "trees", "1") == CLOGLOG_USAGE);
  CHECK(std::strlen(cloglog_last_error()) > 0);
  CHECK(cloglog_run(nullptr, nullptr, nullptr, nullptr) == CLOGLOG_USAGE);
  CHECK(cloglog_fit_run(nullptr, nullptr, nullptr) == CLOGLOG_USAGE);
  CHECK(cloglog_fit_predict(nullptr, nullptr, 0, 1, 0.0, nullptr) == CLOGLOG_USAGE);
  double v = 0;
  CHECK(cloglog_oracle_integrated_marginal(1, 1, 0, 0, nullptr) == CLOGLOG_USAGE);
  CHECK(cloglog_oracle_integrated_marginal(-1, 1, 0, 0, &v) == CLOGLOG_USAGE);  // domain error
  CHECK(cloglog_dataset_rows(nullptr) == 0);
  CHECK(cloglog_dataset_column_name(nullptr, 0) == nullptr);
  CHECK(cloglog_fit_num_draws(nullptr) == 0);
  // destroy accepts NULL
  cloglog_config_destroy(nullptr);
  cloglog_dataset_destroy(nullptr);
  cloglog_fit_destroy(nullptr);
}

TEST_CASE("oracles through the C interface") {
  double v = 1;
  REQUIRE(cloglog_oracle_integrated_marginal(1, 1, 0, 0, &v) == CLOGLOG_OK);
  CHECK(std::abs(v) < 1e-10);
  const double g[] = {-0.4, 0.3, 1.2};
  REQUIRE(cloglog_check_link_equivalence(g, 3, 0.5, &v) == CLOGLOG_OK);
  CHECK(v <= 1e-12);
  CHECK(cloglog_check_link_equivalence(g, 0, 0.5, &v) != CLOGLOG_OK);
}

TEST_CASE("fit, predict, save and reload a density model") {
  Silence quiet;
  const fs::path dir = temp_dir("fit");
  cloglog_dataset* sim = nullptr;
  REQUIRE(cloglog_dataset_simulate_dunson(120, 3, &sim) == CLOGLOG_OK);
  CHECK(cloglog_dataset_rows(sim) == 120);
  REQUIRE(cloglog_dataset_cols(sim) == 2);
  CHECK(std::string(cloglog_dataset_column_name(sim, 0)) == "x");
  CHECK(std::string(cloglog_dataset_column_name(sim, 1)) == "y");
  double x0 = -1;
  REQUIRE(cloglog_dataset_value(sim, 0, 0, &x0) == CLOGLOG_OK);
  CHECK(x0 >= 0.0);
  CHECK(x0 <= 1.0);
  CHECK(cloglog_dataset_value(sim, 120, 0, &x0) == CLOGLOG_USAGE);
  const std::string csv = (dir / "d.csv").string();
  REQUIRE(cloglog_dataset_write(sim, csv.c_str()) == CLOGLOG_OK);
  cloglog_dataset_destroy(sim);

  cloglog_config* c = nullptr;
  REQUIRE(cloglog_config_create(&c) == CLOGLOG_OK);
  REQUIRE(cloglog_config_set(c, "model", "density") == CLOGLOG_OK);
  REQUIRE(cloglog_config_set(c, "outcome", "y") == CLOGLOG_OK);
  REQUIRE(cloglog_config_set(c, "trees", "5") == CLOGLOG_OK);
  REQUIRE(cloglog_config_set(c, "burnin", "50") == CLOGLOG_OK);
  REQUIRE(cloglog_config_set(c, "iters", "50") == CLOGLOG_OK);
  REQUIRE(cloglog_config_set(c, "Kmax", "5") == CLOGLOG_OK);
  cloglog_dataset* data = nullptr;
  REQUIRE(cloglog_dataset_load(csv.c_str(), c, &data) == CLOGLOG_OK);
  CHECK(cloglog_dataset_rows(data) == 120);

  cloglog_fit* fit = nullptr;
  CHECK(cloglog_fit_run(c, data, &fit) == CLOGLOG_USAGE);  // no seed
  REQUIRE(cloglog_config_set(c, "seed", "4") == CLOGLOG_OK);
  REQUIRE(cloglog_fit_run(c, data, &fit) == CLOGLOG_OK);
  CHECK(cloglog_fit_num_draws(fit) == 50);
  REQUIRE(cloglog_fit_num_predictors(fit) == 1);

  // the predictive density integrates to about one over a wide grid
  const double x[] = {0.5};
  double total = 0;
  for (int i = 0; i <= 400; ++i) {
    double f = 0;
    REQUIRE(cloglog_fit_predict(fit, x, 1, 0, -4.0 + 0.02 * i, &f) == CLOGLOG_OK);
    CHECK(f >= 0.0);
    total += f * 0.02;
  }
  CHECK(std::abs(total - 1.0) < 0.02);
  double f = 0;
  CHECK(cloglog_fit_predict(fit, x, 2, 0, 0.0, &f) == CLOGLOG_USAGE);

  double elpd = 0, se = -1;
  REQUIRE(cloglog_fit_elpd(fit, &elpd, &se) == CLOGLOG_OK);
  CHECK(std::isfinite(elpd));
  CHECK(se > 0.0);

  const std::string model = (dir / "model.txt").string();
  REQUIRE(cloglog_fit_save(fit, model.c_str()) == CLOGLOG_OK);
  cloglog_fit* back = nullptr;
  REQUIRE(cloglog_fit_load(model.c_str(), &back) == CLOGLOG_OK);
  for (const double y : {-1.0, 0.0, 0.4, 1.3}) {
    double a = 0, b = 1;
    REQUIRE(cloglog_fit_predict(fit, x, 1, 0, y, &a) == CLOGLOG_OK);
    REQUIRE(cloglog_fit_predict(back, x, 1, 0, y, &b) == CLOGLOG_OK);
    CHECK(a == b);
  }
  CHECK(cloglog_fit_load((dir / "missing.txt").string().c_str(), &back) == CLOGLOG_DATA);

  // a second fit with the same seed reproduces the first
  cloglog_fit* again = nullptr;
  REQUIRE(cloglog_fit_run(c, data, &again) == CLOGLOG_OK);
  double a = 0, b = 1;
  REQUIRE(cloglog_fit_predict(fit, x, 1, 0, 0.2, &a) == CLOGLOG_OK);
  REQUIRE(cloglog_fit_predict(again, x, 1, 0, 0.2, &b) == CLOGLOG_OK);
  CHECK(a == b);

  cloglog_fit_destroy(again);
  cloglog_fit_destroy(back);
  cloglog_fit_destroy(fit);
  cloglog_dataset_destroy(data);
  cloglog_config_destroy(c);
}

TEST_CASE("ordinal predictions form a distribution") {
  Silence quiet;
  const fs::path dir = temp_dir("ordinal");
  const std::string csv = (dir / "o.csv").string();
  {
    std::FILE* f = std::fopen(csv.c_str(), "w");
    REQUIRE(f != nullptr);
    std::fputs("x,y\n", f);
    for (int i = 0; i < 60; ++i) std::fprintf(f, "%g,%d\n", i / 60.0, 1 + (i * 7) % 3);
    std::fclose(f);
  }
  cloglog_config* c = nullptr;
  REQUIRE(cloglog_config_create(&c) == CLOGLOG_OK);
  for (const auto& [k, v] : std::vector<std::pair<std::string, std::string>>{
           {"model", "ordinal"}, {"outcome", "y"}, {"seed", "2"}, {"trees", "5"}, {"burnin", "40"}, {"iters", "40"}}) {
    REQUIRE(cloglog_config_set(c, k.c_str(), v.c_str()) == CLOGLOG_OK);
  }
  cloglog_dataset* data = nullptr;
  REQUIRE(cloglog_dataset_load(csv.c_str(), c, &data) == CLOGLOG_OK);
  cloglog_fit* fit = nullptr;
  REQUIRE(cloglog_fit_run(c, data, &fit) == CLOGLOG_OK);
  const double x[] = {0.3};
  double total = 0;
  for (int k = 1; k <= 3; ++k) {
    double p = 0;
    REQUIRE(cloglog_fit_predict(fit, x, 1, k, 0.0, &p) == CLOGLOG_OK);
    total += p;
  }
  CHECK(std::abs(total - 1.0) < 1e-12);
  double p = 0;
  CHECK(cloglog_fit_predict(fit, x, 1, 4, 0.0, &p) == CLOGLOG_USAGE);
  cloglog_fit_destroy(fit);
  cloglog_dataset_destroy(data);
  cloglog_config_destroy(c);
}

TEST_CASE("bad data reports the data status") {
  const fs::path dir = temp_dir("bad");
  const std::string csv = (dir / "bad.csv").string();
  std::FILE* f = std::fopen(csv.c_str(), "w");
  REQUIRE(f != nullptr);
  std::fputs("x,y\n0.1,1\n0.2,abc\n", f);
  std::fclose(f);
  cloglog_config* c = nullptr;
  REQUIRE(cloglog_config_create(&c) == CLOGLOG_OK);
  REQUIRE(cloglog_config_set(c, "outcome", "y") == CLOGLOG_OK);
  cloglog_dataset* data = nullptr;
  CHECK(cloglog_dataset_load(csv.c_str(), c, &data) == CLOGLOG_DATA);
  CHECK(std::string(cloglog_last_error()).find("row") != std::string::npos);
  cloglog_config_destroy(c);
}

TEST_CASE("run forwards report text") {
  cloglog_config* c = nullptr;
  REQUIRE(cloglog_config_create(&c) == CLOGLOG_OK);
  REQUIRE(cloglog_config_set(c, "seed", "3") == CLOGLOG_OK);
  REQUIRE(cloglog_config_set(c, "checks", "link") == CLOGLOG_OK);
  std::string text;
  CHECK(cloglog_run("verify", c, collect, &text) == CLOGLOG_OK);
  CHECK(text.find("PASS link") != std::string::npos);
  CHECK(cloglog_run("bogus", c, collect, &text) == CLOGLOG_USAGE);
  CHECK(std::string(cloglog_version()) == "1.0.0");
  cloglog_config_destroy(c);
}
