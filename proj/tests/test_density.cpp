// Apache License, Version 2.0, refer to LICENSE.txt

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "cloglog/density.hpp"
#include "cloglog/error.hpp"
#include "cloglog/logging.hpp"
#include "doctest.h"
#include "stats_util.hpp"

using namespace cloglog;

namespace {

double normal_pdf(double y, double m, double s) {
  const double z = (y - m) / s;
  return std::exp(-0.5 * z * z) / (s * std::sqrt(2 * std::numbers::pi));
}

Matrix uniform_x(std::size_t n, Rng& rng) {
  Matrix x(n, 1);
  for (std::size_t i = 0; i < n; ++i) x(i, 0) = rng.uniform();
  return x;
}

DensityConfig small_config(int k_max) {
  DensityConfig c;
  c.max_components = k_max;
  c.stick_trees = 10;
  c.mean_trees = 10;
  return c;
}

// Collects warnings for the lifetime of the object.
struct WarningCapture {
  std::vector<std::string> messages;
  WarningCapture() {
    set_warning_sink([this](const std::string& m) { messages.push_back(m); });
  }
  ~WarningCapture() { set_warning_sink(nullptr); }
};

}  // namespace

TEST_CASE("stick_weights values") {
  const std::vector<double> g0{0.0};
  const std::vector<double> r0{0.0};
  const auto w = stick_weights(g0, r0);
  REQUIRE(w.size() == 2);
  CHECK(w[0] == doctest::Approx(0.6321206).epsilon(1e-7));

  const std::vector<double> g(4, 0.0), r(4, 0.0);
  const auto w5 = stick_weights(g, r);
  REQUIRE(w5.size() == 5);
  CHECK(w5[1] == doctest::Approx(0.2325442).epsilon(1e-7));
  for (int k = 1; k <= 4; ++k) {
    CHECK(w5[static_cast<std::size_t>(k - 1)] ==
          doctest::Approx((1 - std::exp(-1.0)) * std::exp(-(k - 1.0))).epsilon(1e-14));
  }
  double s = 0;
  for (double v : w5) s += v;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(w5[4] == doctest::Approx(std::exp(-4.0)).epsilon(1e-12));

  // extreme links keep the simplex
  const std::vector<double> gx{40.0, -40.0, 5.0}, rx{3.0, -3.0, 0.0};
  const auto wx = stick_weights(gx, rx);
  double sx = 0;
  for (double v : wx) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    sx += v;
  }
  CHECK(sx == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("remaining stick under log Gam(1, 1) is Beta(e^{-r}, 1)") {
  // 1 - V_k = exp(-e^{gamma_k + r}) with e^{gamma_k + r} ~ Exp(e^{-r}), so
  // V_k ~ Beta(1, e^{-r}) as in the Sethuraman construction
  for (double r : {-1.0, 0.0, 1.0}) {
    Rng rng(100 + static_cast<std::uint64_t>(r + 5));
    const int n = 100000;
    std::vector<double> s1(n), s2(n), v1(n);
    const std::vector<double> rr{r, r};
    for (int i = 0; i < n; ++i) {
      const std::vector<double> g{sample_log_gamma(1, 1, rng), sample_log_gamma(1, 1, rng)};
      const auto w = stick_weights(g, rr);
      const auto u = static_cast<std::size_t>(i);
      v1[u] = w[0];
      s1[u] = 1 - w[0];
      s2[u] = 1 - w[1] / (1 - w[0]);
    }
    const double shape = std::exp(-r);
    auto cdf = [shape](double v) { return std::pow(v, shape); };
    auto cdf_v = [shape](double v) { return 1 - std::pow(1 - v, shape); };
    CHECK(testutil::ks_pvalue(testutil::ks_statistic(s1, cdf), n) > 0.01);
    CHECK(testutil::ks_pvalue(testutil::ks_statistic(s2, cdf), n) > 0.01);
    CHECK(testutil::ks_pvalue(testutil::ks_statistic(v1, cdf_v), n) > 0.01);
    if (r != 0.0) {
      // the proportion itself is not Beta(e^{-r}, 1) off r = 0
      CHECK(testutil::ks_pvalue(testutil::ks_statistic(v1, cdf), n) < 1e-6);
    }
  }
}

TEST_CASE("single component keeps every assignment at 1") {
  Rng rng(3);
  const Matrix x = uniform_x(40, rng);
  std::vector<double> y(40);
  for (double& v : y) v = rng.normal();
  DensitySampler s(small_config(1), x, y);
  for (int it = 0; it < 20; ++it) {
    s.sweep(rng);
    for (int c : s.assignments()) REQUIRE(c == 1);
  }
}

TEST_CASE("dominant component takes every observation") {
  WarningCapture capture;
  Rng rng(4);
  const Matrix x = uniform_x(30, rng);
  const std::vector<double> y(30, 2.5);  // standardizes to zero
  DensitySampler s(small_config(2), x, y);
  CHECK(std::any_of(capture.messages.begin(), capture.messages.end(),
                    [](const std::string& m) { return m.find("zero variance") != std::string::npos; }));
  CHECK(s.center() == 2.5);
  CHECK(s.scale() == 1.0);
  s.set_components({{0.0, 50.0}, {1.0, 1.0}});
  s.update_assignments(rng);
  for (int c : s.assignments()) CHECK(c == 1);
}

TEST_CASE("fewer observations than components warns") {
  WarningCapture capture;
  Rng rng(5);
  const Matrix x = uniform_x(10, rng);
  std::vector<double> y(10);
  for (double& v : y) v = rng.normal();
  DensitySampler s(small_config(25), x, y);
  CHECK(std::any_of(capture.messages.begin(), capture.messages.end(),
                    [](const std::string& m) { return m.find("fewer observations") != std::string::npos; }));
}

TEST_CASE("mean forest stays near zero on zero residuals") {
  Rng rng(6);
  const std::size_t n = 100;
  const Matrix x = uniform_x(n, rng);
  const auto grid = std::make_shared<const SplitGrid>(SplitGrid::from_data(x));
  GaussianEnsemble e(Forest(20, grid, 0), x);
  const std::vector<double> zero(n, 0.0), one(n, 1.0);
  e.set_targets(zero, one);
  NormalLeafPrior prior{0.05 / std::sqrt(20.0)};
  std::vector<double> avg(11, 0.0);
  const int sweeps = 200;
  for (int it = 0; it < sweeps; ++it) {
    e.sweep(prior, rng);
    for (int g = 0; g <= 10; ++g) {
      const std::vector<double> xg{g / 10.0};
      avg[static_cast<std::size_t>(g)] += e.forest().evaluate(xg) / sweeps;
    }
  }
  for (double v : avg) CHECK(std::abs(v) < 0.05);
}

TEST_CASE("weighted normal leaves match the weighted least-squares closed form") {
  // leaf 1 holds residuals {1, 3} at weight 1; leaf 2 the same residuals at
  // weight 2, i.e. a cluster with half the variance
  const double sigma = 0.8;
  const std::vector<NormalLeafStats> stats{{2.0, 4.0}, {4.0, 8.0}};
  Rng rng(7);
  const int n = 200000;
  double m1 = 0, m2 = 0;
  for (int i = 0; i < n; ++i) {
    const auto v = draw_leaves(std::span<const NormalLeafStats>(stats), NormalLeafPrior{sigma}, rng);
    m1 += v[0] / n;
    m2 += v[1] / n;
  }
  const double p0 = 1 / (sigma * sigma);
  const double e1 = 4.0 / (2.0 + p0), e2 = 8.0 / (4.0 + p0);
  CHECK(std::abs(m1 - e1) < 4 * std::sqrt(1 / (2.0 + p0) / n));
  CHECK(std::abs(m2 - e2) < 4 * std::sqrt(1 / (4.0 + p0) / n));
  CHECK(e2 > e1);  // doubled weight pulls the leaf toward the weighted mean 2
}

TEST_CASE("single-cluster component posterior") {
  Rng rng(8);
  const std::size_t n = 5000;
  const double mu_true = 2.0, sigma_true = 0.5;
  const Matrix x = uniform_x(n, rng);
  std::vector<double> y(n);
  for (double& v : y) v = mu_true + sigma_true * rng.normal();
  const double ybar = testutil::mean(y), ysd = testutil::sd(y);

  DensitySampler s(small_config(1), x, y);
  std::vector<double> mu, sd;
  for (int it = 0; it < 3000; ++it) {
    s.update_components(rng);  // h stays at its zero start
    if (it < 500) continue;
    mu.push_back(s.center() + s.scale() * s.components().mu[0]);
    sd.push_back(s.scale() * s.components().sigma[0]);
  }
  // conjugate oracle: with n this large the posterior centers on the sample
  // moments; the prior terms move them by O(1/n)
  const double mu_hat = testutil::mean(mu), sd_hat = testutil::mean(sd);
  CHECK(std::abs(mu_hat - ybar) < 3 * testutil::batch_mcse(mu) + 1e-3);
  CHECK(std::abs(sd_hat - ysd) < 3 * testutil::batch_mcse(sd) + 1e-3);
  // truth lies within three posterior sd (sampling error of the data)
  CHECK(std::abs(mu_hat - mu_true) < 3 * sigma_true / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(sd_hat - sigma_true) < 3 * sigma_true / std::sqrt(2.0 * n));
}

TEST_CASE("empty cluster draws come from the base measure") {
  // every observation in component 1: component 2 must follow N(mu0, sigma0^2)
  // given the current sigma0, checked by the standardized residual
  Rng rng(9);
  const std::size_t n = 50;
  const Matrix x = uniform_x(n, rng);
  std::vector<double> y(n);
  for (double& v : y) v = rng.normal();
  DensitySampler s(small_config(2), x, y);
  s.set_assignments(std::vector<int>(n, 1));
  std::vector<double> z;
  for (int it = 0; it < 20000; ++it) {
    const double sigma0 = s.sigma0();
    s.update_components(rng);
    z.push_back(s.components().mu[1] / sigma0);
  }
  // z_t is N(0, 1) given sigma0 at t, so the pooled draws are N(0, 1)
  auto cdf = [](double v) { return 0.5 * std::erfc(-v / std::sqrt(2.0)); };
  CHECK(testutil::ks_pvalue(testutil::ks_statistic(z, cdf), z.size()) > 0.001);
}

TEST_CASE("degenerate outcome concentrates the predictive density") {
  Rng rng(10);
  WarningCapture capture;
  const std::size_t n = 50;
  const Matrix x = uniform_x(n, rng);
  const double c = 3.7;
  const std::vector<double> y(n, c);
  const McmcConfig mcmc{300, 300, 3};
  const DensityFit fit = fit_density(small_config(5), mcmc, x, y, Matrix(), rng);
  std::vector<double> grid;
  for (int g = -200; g <= 200; ++g) grid.push_back(c + g * 0.01);
  const std::vector<double> xq{0.5};
  const auto f = conditional_density(fit, xq, grid);
  std::vector<double> avg(grid.size(), 0.0);
  for (const auto& row : f) {
    for (std::size_t g = 0; g < grid.size(); ++g) avg[g] += row[g];
  }
  const auto mode = grid[static_cast<std::size_t>(std::max_element(avg.begin(), avg.end()) - avg.begin())];
  CHECK(std::abs(mode - c) < 0.1);
}

TEST_CASE("conditional density is a normalized mixture and E(Y|x) matches") {
  Rng rng(11);
  const std::size_t n = 120;
  const Matrix x = uniform_x(n, rng);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = rng.uniform() < 0.5 ? 10 + x(i, 0) + 0.3 * rng.normal() : 12 + 0.5 * rng.normal();
  }
  Matrix query(2, 1);
  query(0, 0) = 0.2;
  query(1, 0) = 0.8;
  const McmcConfig mcmc{100, 100, 5};
  const DensityFit fit = fit_density(small_config(6), mcmc, x, y, query, rng);
  REQUIRE(fit.states.size() == 20);
  REQUIRE(fit.draws.num_draws() == 20);

  std::vector<double> grid;
  for (int g = 0; g <= 40000; ++g) grid.push_back(-20.0 + g * 0.001);  // [-20, 20]
  for (double& v : grid) v += fit.center;
  for (std::size_t q = 0; q < 2; ++q) {
    const auto f = conditional_density(fit, query.row(q), grid);
    for (const auto& row : f) {
      double area = 0;
      for (std::size_t g = 1; g < grid.size(); ++g) area += 0.5 * (row[g] + row[g - 1]) * (grid[g] - grid[g - 1]);
      CHECK(area == doctest::Approx(1.0).epsilon(1e-3));
      CHECK(*std::min_element(row.begin(), row.end()) >= 0.0);
    }
    const auto m = conditional_mean(fit, query.row(q));
    const auto col = fit.draws.column("mean[" + std::to_string(q + 1) + "]");
    for (std::size_t d = 0; d < fit.states.size(); ++d) {
      const auto& st = fit.states[d];
      const auto w = state_weights(fit, d, query.row(q));
      const double h = st.mean.evaluate(query.row(q));
      double e = 0;
      for (std::size_t k = 0; k < w.size(); ++k) e += w[k] * (st.comp.mu[k] + h);
      e = fit.center + fit.scale * e;
      CHECK(std::abs(m[d] - e) <= 1e-12 * std::max(1.0, std::abs(e)));
      CHECK(std::abs(col[d] - e) <= 1e-12 * std::max(1.0, std::abs(e)));
    }
  }
}

TEST_CASE("single-component density is the normal density") {
  Rng rng(12);
  const std::size_t n = 30;
  const Matrix x = uniform_x(n, rng);
  std::vector<double> y(n);
  for (double& v : y) v = 1 + 2 * rng.normal();
  const DensityFit fit = fit_density(small_config(1), McmcConfig{10, 10, 1}, x, y, Matrix(), rng);
  const std::vector<double> xq{0.3};
  const std::vector<double> grid{-3.0, 0.0, 1.0, 4.5};
  const auto f = conditional_density(fit, xq, grid);
  for (std::size_t d = 0; d < f.size(); ++d) {
    const auto& st = fit.states[d];
    const double m = fit.center + fit.scale * (st.comp.mu[0] + st.mean.evaluate(xq));
    const double s = fit.scale * st.comp.sigma[0];
    for (std::size_t g = 0; g < grid.size(); ++g) {
      CHECK(f[d][g] == doctest::Approx(normal_pdf(grid[g], m, s)).epsilon(1e-12));
    }
  }
}

TEST_CASE("conditional_density rejects a descending grid and wrong predictors") {
  Rng rng(13);
  const Matrix x = uniform_x(20, rng);
  std::vector<double> y(20);
  for (double& v : y) v = rng.normal();
  const DensityFit fit = fit_density(small_config(3), McmcConfig{2, 2, 1}, x, y, Matrix(), rng);
  const std::vector<double> xq{0.3};
  const std::vector<double> bad{1.0, 0.0};
  CHECK_THROWS_AS(conditional_density(fit, xq, bad), DomainError);
  const std::vector<double> wide{0.3, 0.4};
  const std::vector<double> ok{0.0, 1.0};
  CHECK_THROWS_AS(conditional_density(fit, wide, ok), SchemaError);
}

TEST_CASE("density fits are seeded") {
  Rng data(14);
  const Matrix x = uniform_x(40, data);
  std::vector<double> y(40);
  for (double& v : y) v = data.normal();
  Matrix q(1, 1);
  q(0, 0) = 0.5;
  Rng a(99), b(99);
  const auto fa = fit_density(small_config(4), McmcConfig{20, 20, 1}, x, y, q, a);
  const auto fb = fit_density(small_config(4), McmcConfig{20, 20, 1}, x, y, q, b);
  CHECK(fa.draws.rows == fb.draws.rows);
  CHECK(fa.draws.loglik == fb.draws.loglik);
}
