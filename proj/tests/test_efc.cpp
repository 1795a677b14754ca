#include <doctest.h>

#include <cmath>

#include "qlc/efc.hpp"

using qlc::Family;

namespace {

// central difference of d, independent of the stored derivative
double fd_first(const Family& f, double u, double h = 1e-6) {
  return (f.log_partition(u + h) - f.log_partition(u - h)) / (2.0 * h);
}

double fd_cumulant_tt(const Family& f, double u, double h = 1e-4) {
  return (f.centered_cumulant(u, h) - 2.0 * f.centered_cumulant(u, 0.0) +
          f.centered_cumulant(u, -h)) /
         (h * h);
}

}  // namespace

TEST_CASE("log partition values") {
  CHECK(Family::gaussian(1.0).log_partition(2.0) == doctest::Approx(2.0));
  CHECK(Family::poisson().log_partition(0.0) == doctest::Approx(1.0));
  CHECK(Family::bernoulli().log_partition(0.0) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("family token parsing") {
  CHECK(Family::parse("gaussian:2.5").name() == "gaussian:2.5");
  CHECK(Family::parse("poisson").name() == "poisson");
  CHECK(Family::parse("bernoulli").name() == "bernoulli");
  CHECK_THROWS_AS(Family::parse("gamma"), qlc::config_error);
  CHECK_THROWS_AS(Family::parse("gaussian:-1"), qlc::config_error);
}

TEST_CASE("mean identity: d' matches finite differences") {
  for (const Family& f : {Family::gaussian(1.3), Family::poisson(), Family::bernoulli()}) {
    for (double u : {-1.5, -0.3, 0.0, 0.4, 1.2}) {
      CHECK(f.mean_value(u) ==
            doctest::Approx(fd_first(f, u)).epsilon(1e-6));
    }
  }
}

TEST_CASE("centered cumulant values") {
  CHECK(Family::gaussian(1.0).centered_cumulant(0.0, 1.0) == doctest::Approx(0.5));
  CHECK(Family::poisson().centered_cumulant(0.0, 1.0) ==
        doctest::Approx(std::exp(1.0) - 2.0));
  for (const Family& f : {Family::gaussian(2.0), Family::poisson(), Family::bernoulli()})
    CHECK(f.centered_cumulant(0.3, 0.0) == doctest::Approx(0.0));
}

TEST_CASE("centered cumulant matches Monte Carlo log-moments") {
  // independent oracle: sample mean of exp{t(Y - E Y)} under the family law
  const long n = 400000;
  struct Case {
    Family family;
    double u, t;
  } cases[] = {{Family::gaussian(1.0), 0.0, 1.0}, {Family::poisson(), 0.0, 1.0}};
  for (const auto& c : cases) {
    qlc::RngStream rng(7777, 0);
    const double b = c.family.mean_value(c.u);
    double acc = 0.0, acc_sq = 0.0;
    for (long i = 0; i < n; ++i) {
      const double v = std::exp(c.t * (c.family.sample(c.u, rng) - b));
      acc += v;
      acc_sq += v * v;
    }
    const double mean = acc / n;
    const double se = std::sqrt((acc_sq / n - mean * mean) / n);
    const double mc = std::log(mean);
    const double exact = c.family.centered_cumulant(c.u, c.t);
    CHECK(std::abs(std::exp(exact) - mean) < 4.0 * se);
    CHECK(mc == doctest::Approx(exact).epsilon(0.01));
  }
}

TEST_CASE("cumulant nonnegativity, convexity, curvature at zero") {
  for (const Family& f : {Family::gaussian(0.7), Family::poisson(), Family::bernoulli()}) {
    for (double u : {-0.8, 0.0, 0.6}) {
      for (double t : {-1.0, -0.25, 0.1, 0.5, 1.5}) {
        CHECK(f.centered_cumulant(u, t) >= -1e-12);
        // midpoint convexity in t
        const double mid = f.centered_cumulant(u, 0.5 * t);
        CHECK(0.5 * f.centered_cumulant(u, 0.0) + 0.5 * f.centered_cumulant(u, t) >=
              mid - 1e-12);
      }
      CHECK(fd_cumulant_tt(f, u) == doctest::Approx(f.variance(u)).epsilon(1e-5));
    }
  }
}

TEST_CASE("gaussian cumulant is u-independent and exactly quadratic") {
  const Family f = Family::gaussian(1.7);
  for (double u : {-2.0, 0.0, 3.0})
    for (double t : {-1.0, 0.3, 2.0})
      CHECK(f.centered_cumulant(u, t) == doctest::Approx(0.5 * 1.7 * 1.7 * t * t).epsilon(1e-14));
}

TEST_CASE("convexity of d on a grid") {
  for (const Family& f : {Family::gaussian(2.0), Family::poisson(), Family::bernoulli()})
    for (double u = -3.0; u <= 3.0; u += 0.25) CHECK(f.variance(u) >= 0.0);
}

TEST_CASE("subgaussian scale") {
  SUBCASE("gaussian is exact") {
    CHECK(Family::gaussian(1.0).subgaussian_scale(0.0, 0.5) == doctest::Approx(1.0));
    CHECK(Family::gaussian(2.0).subgaussian_scale(0.7, 1.0) == doctest::Approx(2.0));
  }
  SUBCASE("poisson regression fixture") {
    const double n = Family::poisson().subgaussian_scale(0.0, 0.25);
    CHECK(n > 1.0);
    CHECK(n < 2.0);
    // frozen from the bisection against the closed-form cumulant
    CHECK(n == doctest::Approx(1.0832310418456246).epsilon(1e-6));
  }
  SUBCASE("defining inequality holds on a 200-point lambda grid") {
    struct Case {
      Family family;
      double u, l1;
    } cases[] = {{Family::poisson(), 0.0, 0.25},
                 {Family::bernoulli(), 0.4, 1.0},
                 {Family::gaussian(1.5), -0.2, 2.0}};
    for (const auto& c : cases) {
      const double n = c.family.subgaussian_scale(c.u, c.l1);
      int violations = 0;
      for (int i = 0; i < 200; ++i) {
        const double lam = -c.l1 + 2.0 * c.l1 * i / 199.0;
        if (c.family.centered_cumulant(c.u, 2.0 * lam / n) > 2.0 * lam * lam + 1e-12)
          ++violations;
      }
      CHECK(violations == 0);
    }
  }
}

TEST_CASE("domain errors at excluded endpoints") {
  // custom family with a bounded natural domain
  const qlc::Interval dom{-1.0, 1.0};
  const Family f("unit", dom, [](double u) { return -std::log1p(-u * u); },
                 [](double u) { return 2.0 * u / (1.0 - u * u); },
                 [](double u) {
                   const double w = 1.0 - u * u;
                   return 2.0 / w + 4.0 * u * u / (w * w);
                 });
  CHECK_NOTHROW(f.log_partition(0.5));
  CHECK_THROWS_AS(f.log_partition(1.0), qlc::domain_error);   // endpoint excluded
  CHECK_THROWS_AS(f.log_partition(-1.0), qlc::domain_error);
  CHECK_THROWS_AS(f.centered_cumulant(0.5, 0.6), qlc::domain_error);  // tilt leaves the domain
  CHECK_NOTHROW(f.centered_cumulant(0.5, 0.4));
}

TEST_CASE("subgaussian scale failure is reported") {
  // cumulant too heavy for any scale within the bracket: c(u,t) = t^4 grows
  // faster than every 2 lambda^2 envelope near the cap
  const Family heavy("heavy", {}, [](double u) { return u * u * u * u; },
                     [](double u) { return 4.0 * u * u * u; },
                     [](double u) { return 12.0 * u * u; });
  qlc::SubgaussianOptions opts;
  opts.scale_max = 1e-2;  // too tight on purpose
  CHECK_THROWS_AS(heavy.subgaussian_scale(0.0, 2.0, opts), qlc::numeric_error);
}

TEST_CASE("natural parameter from mean") {
  CHECK(Family::poisson().natural_from_mean(2.0) == doctest::Approx(std::log(2.0)));
  CHECK(Family::bernoulli().natural_from_mean(0.5) == doctest::Approx(0.0));
  CHECK(Family::gaussian(2.0).natural_from_mean(1.0) == doctest::Approx(0.25));
  CHECK_THROWS_AS(Family::poisson().natural_from_mean(0.0), qlc::domain_error);
  CHECK_THROWS_AS(Family::bernoulli().natural_from_mean(1.0), qlc::domain_error);
}
