// Apache License, Version 2.0, refer to LICENSE.txt

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "cloglog/error.hpp"
#include "cloglog/survival.hpp"
#include "doctest.h"
#include "stats_util.hpp"

using namespace cloglog;

namespace {

struct SimData {
  Matrix x;
  std::vector<double> time;
  std::vector<int> status;
};

// Exponential event times with rate base * e^{x}, exponential censoring.
SimData simulate(std::size_t n, double base, double censor_rate, Rng& rng) {
  SimData d{Matrix(n, 1), std::vector<double>(n), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    d.x(i, 0) = rng.uniform();
    const double t = rng.exponential() / (base * std::exp(d.x(i, 0)));
    const double c = censor_rate > 0 ? rng.exponential() / censor_rate : INFINITY;
    d.time[i] = std::min(t, c);
    d.status[i] = t <= c ? 1 : 0;
  }
  return d;
}

SurvivalConfig small_config(bool ph) {
  SurvivalConfig c;
  c.proportional = ph;
  c.num_trees = 10;
  return c;
}

}  // namespace

TEST_CASE("make_bins") {
  const std::vector<double> t{3, 1, 4, 2, 8, 6, 5, 7};
  const auto cuts = make_bins(t, 8);
  REQUIRE(cuts.size() == 1);
  CHECK(cuts[0] == 4.5);
  CHECK(default_num_bins(8) == 2);
  CHECK(default_num_bins(9) == 3);
  CHECK(default_num_bins(1000) == 10);
  CHECK(default_num_bins(1001) == 11);

  std::vector<double> dup(60, 1.0);
  for (int i = 0; i < 20; ++i) dup.push_back(2.0 + (i % 2));
  const auto c2 = make_bins(dup, dup.size(), 8);
  CHECK(!c2.empty());
  for (std::size_t b = 1; b < c2.size(); ++b) CHECK(c2[b] > c2[b - 1]);

  CHECK_THROWS_AS(make_bins(std::vector<double>{}, 10), DataError);
}

TEST_CASE("bin convention and exposures") {
  const HazardGrid g{{1.0, 3.0}, {1.0, 1.0, 1.0}};
  CHECK(g.bin_of(0.5) == 0);
  CHECK(g.bin_of(1.0) == 1);  // boundary goes right
  CHECK(g.bin_of(2.9) == 1);
  CHECK(g.bin_of(3.0) == 2);
  CHECK(g.exposure(2.0, 0) == 1.0);
  CHECK(g.exposure(2.0, 1) == 1.0);
  CHECK(g.exposure(2.0, 2) == 0.0);
  CHECK(g.exposure(10.0, 2) == 7.0);
  CHECK_THROWS_AS((HazardGrid{{2.0, 2.0}, {}}.validate()), DomainError);
}

TEST_CASE("survival_loglik plug-ins") {
  const HazardGrid one{{}, {1.0}};
  const std::vector<double> r0{0.0};
  CHECK(survival_loglik(one, r0, 1.0, 1) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(survival_loglik(one, r0, 1.0, 0) == doctest::Approx(-1.0).epsilon(1e-15));

  const HazardGrid g{{1.0, 2.5}, {0.4, 1.3, 0.7}};
  const std::vector<double> r{0.3};
  // censored: only exposure; event adds log lambda + r
  const double expo = std::exp(0.3) * (0.4 * 1.0 + 1.3 * 1.0);
  CHECK(survival_loglik(g, r, 2.0, 0) == doctest::Approx(-expo).epsilon(1e-14));
  CHECK(survival_loglik(g, r, 2.0, 1) == doctest::Approx(std::log(1.3) + 0.3 - expo).epsilon(1e-14));

  // NPH with constant r(x, b) equals PH
  Rng rng(1);
  for (int rep = 0; rep < 200; ++rep) {
    const double rc = 2 * rng.normal();
    const std::vector<double> rb(3, rc), rp{rc};
    const double y = 4 * rng.uniform();
    for (int delta : {0, 1}) {
      CHECK(std::abs(survival_loglik(g, rb, y, delta) - survival_loglik(g, rp, y, delta)) <= 1e-12);
    }
  }
}

TEST_CASE("event density integrates to one") {
  const HazardGrid g{{0.7, 1.5, 4.0}, {0.4, 1.3, 0.7, 2.0}};
  using boost::math::quadrature::gauss_kronrod;
  for (const std::vector<double>& r : {std::vector<double>{0.2}, std::vector<double>{-0.5, 0.3, 1.0, -1.2}}) {
    auto f = [&](double y) { return std::exp(survival_loglik(g, r, y, 1)); };
    double total = 0;
    double lo = 0.0;
    for (double hi : g.cuts) {
      total += gauss_kronrod<double, 61>::integrate(f, lo, hi, 0, 0);
      lo = hi;
    }
    boost::math::quadrature::exp_sinh<double> tail;
    total += tail.integrate([&](double u) { return f(lo + u); });
    CHECK(std::abs(total - 1.0) <= 1e-4);
  }
}

TEST_CASE("lambda full conditionals") {
  const Matrix x(1, 1, 0.5);
  const std::vector<double> t{2.0};
  const std::vector<int> s{1};
  SurvivalConfig c = small_config(true);
  c.num_bins = 1;
  SurvivalSampler one(c, x, t, s);
  const auto p = one.lambda_conditionals();
  REQUIRE(p.size() == 1);
  CHECK(p[0].shape == 2.0);
  CHECK(p[0].rate == doctest::Approx(3.0).epsilon(1e-15));

  // a bin nobody reaches keeps the Gam(1, 1) prior
  SurvivalConfig c2 = small_config(true);
  c2.cuts = {10.0};
  SurvivalSampler far(c2, x, t, s);
  const auto p2 = far.lambda_conditionals();
  REQUIRE(p2.size() == 2);
  CHECK(p2[1].shape == 1.0);
  CHECK(p2[1].rate == 1.0);
}

TEST_CASE("lambda chain with r fixed at zero matches the gamma posterior") {
  Rng rng(2);
  SimData d = simulate(300, 0.8, 0.3, rng);
  for (std::size_t i = 0; i < d.time.size(); ++i) d.x(i, 0) = 0.0;  // unused by a fixed forest
  SurvivalSampler s(small_config(true), d.x, d.time, d.status);
  const std::size_t B = s.hazard().num_bins();
  // analytic posterior with r = 0
  std::vector<double> shape(B, 1.0), rate(B, 1.0);
  for (std::size_t i = 0; i < d.time.size(); ++i) {
    const std::size_t bi = s.hazard().bin_of(d.time[i]);
    shape[bi] += d.status[i];
    for (std::size_t b = 0; b <= bi; ++b) rate[b] += s.hazard().exposure(d.time[i], b);
  }
  std::vector<std::vector<double>> chain(B);
  for (int it = 0; it < 5000; ++it) {
    s.update_lambda(rng);
    for (std::size_t b = 0; b < B; ++b) chain[b].push_back(s.hazard().lambda[b]);
  }
  for (std::size_t b = 0; b < B; ++b) {
    CHECK(std::abs(testutil::mean(chain[b]) - shape[b] / rate[b]) < 3 * testutil::batch_mcse(chain[b]));
  }
}

TEST_CASE("survival leaf statistics") {
  const Matrix x(1, 1, 0.5);
  const std::vector<double> t{2.0};
  SurvivalConfig c = small_config(true);
  c.num_bins = 1;
  {
    SurvivalSampler s(c, x, t, std::vector<int>{1});
    s.set_lambda({1.0});
    const auto st = s.suffstats(0, Tree());
    REQUIRE(st.size() == 1);
    CHECK(st[0].count == 1.0);
    CHECK(st[0].exposure == doctest::Approx(2.0).epsilon(1e-15));
  }
  {
    SurvivalSampler s(c, x, t, std::vector<int>{0});
    CHECK(s.suffstats(0, Tree())[0].count == 0.0);
  }

  // NPH with a single bin reproduces PH statistics
  Rng rng(3);
  SimData d = simulate(80, 1.0, 0.5, rng);
  SurvivalConfig ph = small_config(true), nph = small_config(false);
  ph.num_bins = nph.num_bins = 1;
  SurvivalSampler a(ph, d.x, d.time, d.status), b(nph, d.x, d.time, d.status);
  Tree tree;
  SplitRule rule;
  rule.threshold = 0.4;
  tree.grow(0, rule);
  const auto sa = a.suffstats(0, tree), sb = b.suffstats(0, tree);
  for (std::size_t l = 0; l < sa.size(); ++l) {
    CHECK(sa[l].count == sb[l].count);
    CHECK(sa[l].exposure == doctest::Approx(sb[l].exposure).epsilon(1e-14));
  }

  // NPH statistics over several bins, computed by hand
  SurvivalConfig n3 = small_config(false);
  n3.cuts = {0.3, 0.9};
  SurvivalSampler m(n3, d.x, d.time, d.status);
  const auto& hz = m.hazard();
  double A = 0, Bx = 0;
  for (std::size_t i = 0; i < d.time.size(); ++i) {
    const std::size_t bi = hz.bin_of(d.time[i]);
    A += d.status[i];
    for (std::size_t k = 0; k <= bi; ++k) Bx += hz.lambda[k] * hz.exposure(d.time[i], k);
  }
  const auto sm = m.suffstats(0, Tree());
  CHECK(sm[0].count == A);
  CHECK(sm[0].exposure == doctest::Approx(Bx).epsilon(1e-12));
}

TEST_CASE("NPH with one bin follows the PH path") {
  Rng data(4);
  SimData d = simulate(60, 1.0, 0.5, data);
  Matrix q(1, 1, 0.5);
  SurvivalConfig ph = small_config(true), nph = small_config(false);
  ph.num_bins = nph.num_bins = 1;
  Rng a(7), b(7);
  const McmcConfig mcmc{20, 20, 1};
  const auto fa = fit_survival(ph, mcmc, d.x, d.time, d.status, q, a);
  const auto fb = fit_survival(nph, mcmc, d.x, d.time, d.status, q, b);
  CHECK(fa.draws.rows == fb.draws.rows);
  CHECK(fa.draws.loglik == fb.draws.loglik);
}

TEST_CASE("survival functions") {
  const HazardGrid one{{}, {1.0}};
  const std::vector<double> r0{0.0};
  CHECK(survival_probability(one, r0, 0.0) == 1.0);
  for (double t : {0.1, 1.0, 3.0}) CHECK(survival_probability(one, r0, t) == doctest::Approx(std::exp(-t)).epsilon(1e-15));

  Rng data(5);
  SimData d = simulate(80, 1.0, 0.5, data);
  SurvivalConfig c = small_config(false);
  c.cuts = {0.4, 1.0};
  Rng rng(8);
  const auto fit = fit_survival(c, McmcConfig{10, 10, 1}, d.x, d.time, d.status, Matrix(), rng);
  std::vector<double> grid;
  for (int g = 0; g <= 300; ++g) grid.push_back(g * 0.01);
  const std::vector<double> xq{0.6};
  const auto s = survival_function(fit, xq, grid);
  for (const auto& row : s) {
    CHECK(row[0] == 1.0);
    for (std::size_t g = 1; g < row.size(); ++g) {
      CHECK(row[g] <= row[g - 1]);
      CHECK(row[g] > 0.0);
    }
    // -log S is linear inside each bin: second differences vanish away from the kinks
    for (std::size_t g = 1; g + 1 < row.size(); ++g) {
      const double t = grid[g];
      const bool kink = std::abs(t - 0.4) < 1e-9 || std::abs(t - 1.0) < 1e-9;
      const double dd = -std::log(row[g + 1]) + 2 * std::log(row[g]) - std::log(row[g - 1]);
      if (kink) {
        continue;
      }
      CHECK(std::abs(dd) < 1e-12);
    }
  }
  // the kink is real at the boundary for a draw whose hazard jumps there
  const auto& lam = fit.lambda[0];
  const HazardGrid g{fit.cuts, lam};
  std::vector<double> rx = fit.forests[0].evaluate_categories(xq);
  const double h0 = lam[0] * std::exp(rx[0]), h1 = lam[1] * std::exp(rx[1]);
  const double left = -std::log(survival_probability(g, rx, 0.4)) + std::log(survival_probability(g, rx, 0.39));
  const double right = -std::log(survival_probability(g, rx, 0.41)) + std::log(survival_probability(g, rx, 0.4));
  CHECK(left == doctest::Approx(0.01 * h0).epsilon(1e-9));
  CHECK(right == doctest::Approx(0.01 * h1).epsilon(1e-9));
}

TEST_CASE("survival input errors") {
  const Matrix x(2, 1, 0.5);
  CHECK_THROWS_AS(SurvivalSampler(small_config(true), x, std::vector<double>{1.0, -1.0}, std::vector<int>{1, 1}), DataError);
  CHECK_THROWS_AS(SurvivalSampler(small_config(true), x, std::vector<double>{1.0, 2.0}, std::vector<int>{1, 2}), DataError);
  CHECK_THROWS_AS(SurvivalSampler(small_config(true), x, std::vector<double>{1.0, 2.0}, std::vector<int>{0, 0}), DataError);
}

TEST_CASE("NPH bins are capped") {
  Rng rng(6);
  SimData d = simulate(9000, 1.0, 0.0, rng);  // ceil(9000^{1/3}) = 21
  SurvivalSampler ph(small_config(true), d.x, d.time, d.status);
  SurvivalSampler nph(small_config(false), d.x, d.time, d.status);
  CHECK(ph.hazard().num_bins() == 21);
  CHECK(nph.hazard().num_bins() == 20);
}

TEST_CASE("PH fit recovers a proportional hazard") {
  Rng rng(9);
  SimData d = simulate(800, 0.5, 0.15, rng);
  Matrix q(10, 1);
  for (std::size_t k = 0; k < 10; ++k) q(k, 0) = 0.05 + 0.1 * static_cast<double>(k);
  SurvivalConfig c = small_config(true);
  c.num_trees = 20;
  const auto fit = fit_survival(c, McmcConfig{500, 500, 1}, d.x, d.time, d.status, Matrix(), rng);
  // averaged over x the curve is pinned down by the data; pointwise in x it
  // carries nonparametric uncertainty, so only the ordering is checked there
  for (double t : {0.5, 1.0, 2.0}) {
    const std::vector<double> tg{t};
    double m = 0, truth = 0;
    std::vector<double> by_x;
    for (std::size_t k = 0; k < 10; ++k) {
      const auto s = survival_function(fit, q.row(k), tg);
      double mk = 0;
      for (const auto& row : s) mk += row[0] / static_cast<double>(s.size());
      by_x.push_back(mk);
      m += mk / 10;
      truth += std::exp(-0.5 * std::exp(q(k, 0)) * t) / 10;
    }
    INFO("t=" << t << " m=" << m << " truth=" << truth);
    CHECK(std::abs(m - truth) < 0.03);
    CHECK(by_x.front() > by_x.back());
  }
}
