// Apache License, Version 2.0, refer to LICENSE.txt

#include <chrono>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "cloglog/error.hpp"
#include "cloglog/forest.hpp"
#include "cloglog/logging.hpp"
#include "cloglog/special_math.hpp"
#include "cloglog/verify.hpp"
#include "doctest.h"

using namespace cloglog;

namespace {

struct QuietWarnings {
  int count = 0;
  QuietWarnings() {
    set_warning_sink([this](const std::string&) { ++count; });
  }
  ~QuietWarnings() { set_warning_sink(nullptr); }
};

}  // namespace

TEST_CASE("quadrature marginal matches worked values") {
  CHECK(oracle_integrated_marginal(1, 1, 0, 0) == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(oracle_integrated_marginal(1, 1, 1, 1) == doctest::Approx(-1.3862944).epsilon(1e-7));
  // closed form by hand: a log b - lgamma(a) + lgamma(a + A) - (a + A) log(b + B)
  const double a = 2.5, b = 0.7, A = 4, B = 3.1;
  const double hand = a * std::log(b) - std::lgamma(a) + std::lgamma(a + A) - (a + A) * std::log(b + B);
  CHECK(std::abs(oracle_integrated_marginal(a, b, A, B) - hand) < 1e-9);
  // small shape: the integrand's left tail decays like exp(0.2 mu)
  for (const double s : {0.2, 0.4}) {
    const double tail = s * std::log(0.9 / (0.9 + 0.9));
    CHECK(std::abs(oracle_integrated_marginal(s, 0.9, 0, 0.9) - tail) < 1e-10 * std::abs(tail));
  }
}

TEST_CASE("quadrature marginal agrees with the leaf marginal") {
  for (const double sigma : {0.1, 0.3, 1.0}) {
    const LogGammaPrior prior = solve_leaf_prior(sigma);
    for (const double A : {0.0, 1.0, 7.0, 40.0}) {
      for (const double B : {0.0, 0.5, 12.0}) {
        const LeafStats s{A, B};
        CHECK(std::abs(integrated_log_marginal(std::span<const LeafStats>(&s, 1), prior) -
                       oracle_integrated_marginal(prior.a, prior.b, A, B)) < 1e-8);
      }
    }
  }
}

TEST_CASE("quadrature marginal rejects bad hyperparameters") {
  CHECK_THROWS_AS(oracle_integrated_marginal(0, 1, 0, 0), DomainError);
  CHECK_THROWS_AS(oracle_integrated_marginal(1, 1, -1, 0), DomainError);
}

TEST_CASE("product and cumulative pmf forms agree") {
  const std::vector<double> g{-0.4, 0.3, 1.2, -2.0};
  for (const double r : {-3.0, -0.5, 0.0, 0.8, 2.5}) CHECK(check_link_equivalence(g, r) <= 1e-12);
  const std::vector<double> extreme{-20.0, 20.0, 0.0};
  for (const double r : {-20.0, 20.0}) CHECK(check_link_equivalence(extreme, r) <= 1e-9);
}

TEST_CASE("kolmogorov tail probabilities") {
  // standard values of the limiting distribution
  CHECK(kolmogorov_pvalue(1.3581 / std::sqrt(1e8), 100000000) == doctest::Approx(0.05).epsilon(1e-3));
  CHECK(kolmogorov_pvalue(1.6276 / std::sqrt(1e8), 100000000) == doctest::Approx(0.01).epsilon(1e-3));
  CHECK(kolmogorov_pvalue(0.0, 50) == 1.0);
  CHECK(chi_square_pvalue(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(chi_square_pvalue(30.14352720564616, 19) == doctest::Approx(0.05).epsilon(1e-9));
}

TEST_CASE("remaining stick follows the beta law") {
  Rng rng(101);
  for (const double r : {-1.0, 0.0, 1.0}) {
    const KsReport k = check_dp_property(r, 10000, rng);
    CHECK(k.n == 10000);
    CHECK(k.p_value > 0.01);
  }
}

TEST_CASE("latent exponential representation reproduces the pmf") {
  Rng rng(55);
  const std::vector<double> g{-0.4, 0.3, 1.2};
  for (const double r : {-1.0, 0.0, 1.5}) CHECK(check_latent_representation(g, r, 200000, rng) < 4.0);
  const std::vector<double> extreme{-25.0, 25.0};
  CHECK(check_latent_representation(extreme, 0.0, 20000, rng) < 4.0);
}

TEST_CASE("small ordinal calibration run") {
  QuietWarnings quiet;
  SbcConfig c;
  c.n = 30;
  c.trees = 5;
  c.burn_in = 100;
  c.kept = 100;
  c.draws = 19;
  c.bins = 5;
  c.replications = 60;
  const Rng rng(2024);
  const auto t0 = std::chrono::steady_clock::now();
  const auto reports = sbc_run(c, rng);
  MESSAGE("sbc seconds " << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  REQUIRE(reports.size() == 2);
  for (const auto& r : reports) {
    MESSAGE(r.parameter << " chi2 " << r.chi2 << " p " << r.p_value);
    CHECK(r.replications + r.failed == 60);
    CHECK(std::accumulate(r.histogram.begin(), r.histogram.end(), 0) == r.replications);
    CHECK(r.p_value > 0.001);
  }
  // same seed, same histograms, regardless of thread count
  c.threads = 2;
  const auto again = sbc_run(c, rng);
  for (std::size_t p = 0; p < reports.size(); ++p) CHECK(again[p].histogram == reports[p].histogram);
}

TEST_CASE("calibration input errors") {
  SbcConfig c;
  c.bins = 1;
  CHECK_THROWS_AS(sbc_run(c, Rng(1)), UsageError);
}
