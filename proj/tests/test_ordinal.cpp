// Apache License, Version 2.0, refer to LICENSE.txt

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cloglog/error.hpp"
#include "cloglog/ordinal.hpp"
#include "doctest.h"

using namespace cloglog;

namespace {

Matrix uniform_x(std::size_t n, std::size_t p, Rng& rng) {
  Matrix x(n, p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) x(i, j) = rng.uniform();
  }
  return x;
}

// Inverse-cdf draw from the PH cloglog model.
int draw_ph(std::span<const double> gamma, double r, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0;
  const int K = static_cast<int>(gamma.size()) + 1;
  for (int k = 1; k < K; ++k) {
    acc += ordinal_pmf(gamma, r, k);
    if (u < acc) return k;
  }
  return K;
}

double batch_mcse(const std::vector<double>& v, std::size_t batches = 25) {
  const std::size_t m = v.size() / batches;
  std::vector<double> means(batches);
  for (std::size_t b = 0; b < batches; ++b) {
    means[b] = std::accumulate(v.begin() + b * m, v.begin() + (b + 1) * m, 0.0) / m;
  }
  const double mu = std::accumulate(means.begin(), means.end(), 0.0) / batches;
  double s2 = 0;
  for (double x : means) s2 += (x - mu) * (x - mu);
  return std::sqrt(s2 / (batches - 1) / batches);
}

}  // namespace

TEST_CASE("cutpoints_from_gamma") {
  const auto c = cutpoints_from_gamma(std::vector<double>{0, 0, 0});
  CHECK(c[0] == doctest::Approx(0.0));
  CHECK(c[1] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(c[2] == doctest::Approx(std::log(3.0)).epsilon(1e-15));
  const auto c2 = cutpoints_from_gamma(std::vector<double>{0, std::log(2.0)});
  CHECK(c2[1] == doctest::Approx(std::log(3.0)).epsilon(1e-15));
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> g(5);
    for (double& v : g) v = 6 * rng.uniform() - 3;
    const auto cc = cutpoints_from_gamma(g);
    for (std::size_t k = 1; k < cc.size(); ++k) CHECK(cc[k] > cc[k - 1]);
  }
}

TEST_CASE("ordinal_pmf values and identities") {
  CHECK(ordinal_pmf(std::vector<double>{0.0}, 0.0, 1) == doctest::Approx(0.6321206).epsilon(1e-7));
  const std::vector<double> g{0.0, 0.0};
  CHECK(ordinal_pmf(g, 0.0, 1) == doctest::Approx(0.6321206).epsilon(1e-7));
  CHECK(ordinal_pmf(g, 0.0, 2) == doctest::Approx(0.2325442).epsilon(1e-7));
  CHECK(ordinal_pmf(g, 0.0, 3) == doctest::Approx(0.1353353).epsilon(1e-7));
  CHECK_THROWS_AS(ordinal_pmf(g, 0.0, 4), DomainError);
  CHECK_THROWS_AS(ordinal_pmf(g, 0.0, 0), DomainError);

  Rng rng(2);
  double worst = 0;
  for (int t = 0; t < 1000; ++t) {
    const int K = 2 + static_cast<int>(rng.index(5));
    std::vector<double> gamma(static_cast<std::size_t>(K - 1));
    for (double& v : gamma) v = 4 * rng.uniform() - 2;
    const double r = 4 * rng.uniform() - 2;
    const std::vector<double> rk(gamma.size(), r);
    double sum = 0;
    for (int k = 1; k <= K; ++k) {
      worst = std::max(worst, std::abs(ordinal_pmf(gamma, r, k) - ordinal_pmf(gamma, rk, k)));
      CHECK(std::abs(std::exp(ordinal_log_pmf(gamma, rk, k)) - ordinal_pmf(gamma, rk, k)) <= 1e-14);
      sum += ordinal_pmf(gamma, rk, k);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
    const auto p = ordinal_pmf_vector(gamma, rk);
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-15));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("suffstats plug-in cases") {
  Matrix x(1, 1, 0.3);
  OrdinalConfig cfg;
  cfg.num_categories = 3;
  cfg.num_trees = 1;
  OrdinalSampler s(cfg, x, std::vector<int>{1});
  s.set_gamma({0.0, 0.4});
  s.set_latents({0.5});
  const auto st = s.suffstats(0, Tree());
  REQUIRE(st.size() == 1);
  CHECK(st[0].count == 1.0);
  CHECK(st[0].exposure == doctest::Approx(0.5).epsilon(1e-15));

  Matrix x3(3, 1, 0.3);
  OrdinalSampler top(cfg, x3, std::vector<int>{3, 3, 3});
  CHECK(top.suffstats(0, Tree())[0].count == 0.0);
  cfg.proportional = false;
  OrdinalSampler top_nph(cfg, x3, std::vector<int>{3, 3, 3});
  CHECK(top_nph.suffstats(0, Tree())[0].count == 0.0);
}

TEST_CASE("K = 2 PH statistics match the Bernoulli derivation") {
  Rng rng(3);
  const std::size_t n = 200;
  const Matrix x = uniform_x(n, 2, rng);
  std::vector<int> y(n);
  for (auto& v : y) v = 1 + static_cast<int>(rng.index(2));
  OrdinalConfig cfg;
  cfg.num_categories = 2;
  cfg.num_trees = 5;
  OrdinalSampler s(cfg, x, y);
  for (int i = 0; i < 20; ++i) s.sweep(rng);
  const Forest& f = s.forest();
  const double g = s.gamma()[0];
  for (std::size_t t = 0; t < f.num_trees(); ++t) {
    Tree cand = f.tree(t);
    const auto leaves = cand.leaves();
    cand.grow(leaves[0], f.split_prior().draw(rng));
    const auto got = s.suffstats(t, cand);
    // Independent calculation: success (Y=1) contributes (1, Z e^{gamma+eta}),
    // failure contributes (0, e^{gamma+eta}).
    const auto ids = cand.leaves();
    std::vector<double> A(ids.size()), B(ids.size());
    for (std::size_t i = 0; i < n; ++i) {
      double eta = 0;
      for (std::size_t u = 0; u < f.num_trees(); ++u) {
        if (u != t) eta += f.tree(u).evaluate(x.row(i));
      }
      const int leaf = cand.find_leaf(x.row(i));
      const auto pos = static_cast<std::size_t>(std::find(ids.begin(), ids.end(), leaf) - ids.begin());
      const double e = std::exp(g + eta);
      if (y[i] == 1) {
        A[pos] += 1;
        B[pos] += s.latents()[i] * e;
      } else {
        B[pos] += e;
      }
    }
    for (std::size_t l = 0; l < ids.size(); ++l) {
      CHECK(got[l].count == A[l]);
      CHECK(got[l].exposure == doctest::Approx(B[l]).epsilon(1e-12));
    }
  }
}

TEST_CASE("latents stay inside the truncation") {
  Rng rng(4);
  const Matrix x = uniform_x(300, 2, rng);
  std::vector<int> y(300);
  for (auto& v : y) v = 1 + static_cast<int>(rng.index(4));
  OrdinalConfig cfg;
  cfg.num_categories = 4;
  cfg.num_trees = 5;
  OrdinalSampler s(cfg, x, y);
  for (int it = 0; it < 10; ++it) {
    s.update_latents(rng);
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] < 4) {
        CHECK(s.latents()[i] > 0.0);
        CHECK(s.latents()[i] < 1.0);
      }
    }
  }
}

TEST_CASE("latent draws approach uniform as the rate vanishes") {
  Rng rng(5);
  const int n = 100000;
  std::vector<double> v(n);
  for (double& z : v) z = sample_trunc_exp({1e-8, 0.0, 1.0}, rng);
  std::sort(v.begin(), v.end());
  double d = 0;
  for (int i = 0; i < n; ++i) {
    d = std::max({d, std::abs(v[i] - static_cast<double>(i) / n), std::abs(v[i] - static_cast<double>(i + 1) / n)});
  }
  // Kolmogorov critical value for p = 0.01 is 1.628 / sqrt(n)
  CHECK(d * std::sqrt(static_cast<double>(n)) < 1.628);
}

TEST_CASE("gamma full conditional plug-in") {
  Matrix x(1, 1, 0.3);
  OrdinalConfig cfg;
  cfg.num_categories = 3;
  cfg.num_trees = 1;
  OrdinalSampler s(cfg, x, std::vector<int>{1});
  s.set_latents({0.5});
  Rng rng(6);
  const int n = 100000;
  double m1 = 0, m2 = 0;
  for (int i = 0; i < n; ++i) {
    s.update_gamma(rng);
    m1 += std::exp(s.gamma()[0]) / n;  // Gamma(2, 1.5)
    m2 += std::exp(s.gamma()[1]) / n;  // prior Gamma(1, 1): nobody reaches level 2
  }
  CHECK(std::abs(m1 - 2.0 / 1.5) < 4 * std::sqrt(2.0 / 2.25 / n));
  CHECK(std::abs(m2 - 1.0) < 4 * std::sqrt(1.0 / n));
}

TEST_CASE("gamma chain recovers the quadrature posterior with r fixed at zero") {
  // K = 2, 40 observations, 12 in category 1.
  Matrix x(40, 1, 0.5);
  std::vector<int> y(40, 2);
  std::fill(y.begin(), y.begin() + 12, 1);
  OrdinalConfig cfg;
  cfg.num_categories = 2;
  cfg.num_trees = 1;
  OrdinalSampler s(cfg, x, y);
  Rng rng(7);
  std::vector<double> draws;
  for (int it = 0; it < 60000; ++it) {
    s.update_latents(rng);
    s.update_gamma(rng);
    if (it >= 1000) draws.push_back(s.gamma()[0]);
  }
  const double mean = std::accumulate(draws.begin(), draws.end(), 0.0) / draws.size();

  // log posterior: gamma - e^gamma + 12 log G(gamma) - 28 e^gamma
  auto lp = [](double g) { return g - std::exp(g) + 12 * std::log(gumbel_cdf(g)) - 28 * std::exp(g); };
  double num = 0, den = 0;
  const double h = 1e-4;
  for (double g = -12; g <= 4; g += h) {
    const double w = std::exp(lp(g) + 40);
    num += g * w;
    den += w;
  }
  CHECK(std::abs(mean - num / den) < 3 * batch_mcse(draws));
}

TEST_CASE("fit paths coincide") {
  Rng data(8);
  const std::size_t n = 120;
  const Matrix x = uniform_x(n, 2, data);
  std::vector<int> yb(n), yo(n);
  for (std::size_t i = 0; i < n; ++i) {
    yb[i] = data.uniform() < gumbel_cdf(x(i, 0) - 0.5) ? 1 : 0;
    yo[i] = 2 - yb[i];
  }
  Matrix q(1, 2, 0.4);
  McmcConfig mc{50, 50, 1};
  OrdinalConfig cfg;
  cfg.num_trees = 5;
  cfg.num_categories = 2;

  Rng a(11), b(11), c(11);
  const OrdinalFit ph = fit_ordinal(cfg, mc, x, yo, q, a);
  const BinaryFit bin = fit_binary(cfg, mc, x, yb, BinaryLink::kCloglog, false, q, b);
  OrdinalConfig nph_cfg = cfg;
  nph_cfg.proportional = false;
  const OrdinalFit nph = fit_ordinal(nph_cfg, mc, x, yo, q, c);
  REQUIRE(ph.draws.rows.size() == 50);
  for (std::size_t d = 0; d < 50; ++d) {
    CHECK(ph.gamma[d] == bin.ordinal.gamma[d]);
    CHECK(ph.gamma[d] == nph.gamma[d]);
    CHECK(ph.draws.column("pmf[1,1]")[d] == bin.ordinal.draws.column("p[1]")[d]);
  }
  CHECK(ph.draws.loglik == nph.draws.loglik);

  // loglog on Y equals complemented cloglog on 1 - Y
  std::vector<int> flipped(n);
  for (std::size_t i = 0; i < n; ++i) flipped[i] = 1 - yb[i];
  Rng d1(12), d2(12);
  const BinaryFit ll = fit_binary(cfg, mc, x, yb, BinaryLink::kLoglog, false, q, d1);
  const BinaryFit cl = fit_binary(cfg, mc, x, flipped, BinaryLink::kCloglog, false, q, d2);
  const auto p_ll = ll.ordinal.draws.column("p[1]");
  const auto p_cl = cl.ordinal.draws.column("p[1]");
  for (std::size_t d = 0; d < p_ll.size(); ++d) CHECK(p_ll[d] == 1.0 - p_cl[d]);
  const auto pred = predict_binary(ll, q.row(0));
  for (std::size_t d = 0; d < p_ll.size(); ++d) CHECK(pred[d] == doctest::Approx(p_ll[d]).epsilon(1e-15));

  // root-only forest with gamma = 0 gives the plain Gumbel cdf
  CHECK(gumbel_cdf(0.0) == doctest::Approx(0.6321206).epsilon(1e-7));
}

TEST_CASE("augmenting zeros leaves the posterior unchanged") {
  Rng data(13);
  int overlaps = 0;
  for (int seed = 0; seed < 20; ++seed) {
    const std::size_t n = 200;
    const Matrix x = uniform_x(n, 1, data);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = data.uniform() < gumbel_cdf(2 * x(i, 0) - 1) ? 1 : 0;
    Matrix q(1, 1, 0.5);
    McmcConfig mc{300, 600, 1};
    OrdinalConfig cfg;
    cfg.num_trees = 10;
    Rng a(100 + seed), b(200 + seed);
    auto pa = fit_binary(cfg, mc, x, y, BinaryLink::kCloglog, false, q, a).ordinal.draws.column("p[1]");
    auto pb = fit_binary(cfg, mc, x, y, BinaryLink::kCloglog, true, q, b).ordinal.draws.column("p[1]");
    std::sort(pa.begin(), pa.end());
    std::sort(pb.begin(), pb.end());
    auto lo = [](const std::vector<double>& v) { return v[v.size() * 25 / 1000]; };
    auto hi = [](const std::vector<double>& v) { return v[v.size() * 975 / 1000]; };
    if (lo(pa) <= hi(pb) && lo(pb) <= hi(pa)) ++overlaps;
  }
  CHECK(overlaps == 20);
}

TEST_CASE("predict_ordinal rows are probability vectors") {
  Rng data(14);
  const std::size_t n = 150;
  const Matrix x = uniform_x(n, 2, data);
  std::vector<int> y(n);
  for (auto& v : y) v = 1 + static_cast<int>(data.index(3));
  Matrix q(1, 2, 0.5);
  OrdinalConfig cfg;
  cfg.num_categories = 3;
  cfg.num_trees = 5;
  cfg.proportional = false;
  Rng rng(15);
  const OrdinalFit fit = fit_ordinal(cfg, McmcConfig{20, 1, 1}, x, y, q, rng);
  REQUIRE(fit.forests.size() == 1);
  const auto pred = predict_ordinal(fit, q.row(0));
  double sum = 0;
  for (int k = 1; k <= 3; ++k) {
    CHECK(pred[0][k - 1] == fit.draws.column("pmf[1," + std::to_string(k) + "]")[0]);
    sum += pred[0][k - 1];
  }
  CHECK(std::abs(sum - 1.0) <= 1e-12);
}

TEST_CASE("PH recovery on simulated data") {
  Rng data(16);
  const std::size_t n = 5000;
  const Matrix x = uniform_x(n, 1, data);
  const std::vector<double> gamma{-0.5, 0.0};
  auto truth_r = [](double v) { return v < 0.5 ? -0.5 : 0.5; };
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = draw_ph(gamma, truth_r(x(i, 0)), data);
  Matrix q(2, 1);
  q(0, 0) = 0.25;
  q(1, 0) = 0.75;
  OrdinalConfig cfg;
  cfg.num_categories = 3;
  cfg.num_trees = 20;
  Rng rng(17);
  const OrdinalFit fit = fit_ordinal(cfg, McmcConfig{300, 600, 1}, x, y, q, rng);
  for (int qi = 1; qi <= 2; ++qi) {
    const double r = truth_r(q(static_cast<std::size_t>(qi - 1), 0));
    for (int k = 1; k <= 3; ++k) {
      auto v = fit.draws.column("pmf[" + std::to_string(qi) + "," + std::to_string(k) + "]");
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
      double var = 0;
      for (double p : v) var += (p - mean) * (p - mean) / v.size();
      // Posterior is centred on the truth to within three posterior sds.
      CHECK(std::abs(mean - ordinal_pmf(gamma, r, k)) < 3 * std::sqrt(var) + 1e-3);
    }
  }
}

TEST_CASE("seeded determinism") {
  Rng data(18);
  const Matrix x = uniform_x(80, 2, data);
  std::vector<int> y(80);
  for (auto& v : y) v = 1 + static_cast<int>(data.index(3));
  OrdinalConfig cfg;
  cfg.num_categories = 3;
  cfg.num_trees = 5;
  cfg.proportional = false;
  Rng a(19), b(19);
  const auto fa = fit_ordinal(cfg, McmcConfig{10, 20, 2}, x, y, Matrix(), a);
  const auto fb = fit_ordinal(cfg, McmcConfig{10, 20, 2}, x, y, Matrix(), b);
  CHECK(fa.draws.rows == fb.draws.rows);
  CHECK(fa.draws.loglik == fb.draws.loglik);
  CHECK(fa.draws.rows.size() == 10);
  CHECK_THROWS_AS(fit_ordinal(cfg, McmcConfig{10, 20, 2}, x, std::vector<int>(80, 0), Matrix(), a), DataError);
}
