#include <doctest.h>

#include <cmath>

#include "qlc/glm.hpp"

using namespace qlc;

namespace {

Box box1(double lo, double hi) {
  Box b;
  b.lower = Eigen::VectorXd::Constant(1, lo);
  b.upper = Eigen::VectorXd::Constant(1, hi);
  return b;
}

Eigen::VectorXd vec1(double x) { return Eigen::VectorXd::Constant(1, x); }

GlmModel scalar_model(const Family& family, const Eigen::VectorXd& y, double mu, double lo,
                      double hi) {
  GlmModel m;
  m.design = Eigen::MatrixXd::Ones(y.size(), 1);
  m.responses = y;
  m.family = family;
  m.mu = mu;
  m.theta_box = box1(lo, hi);
  m.validate();
  return m;
}

double unif_pm1(RngStream& rng) { return 2.0 * rng.uniform01() - 1.0; }

}  // namespace

TEST_CASE("quasi loglik values") {
  Eigen::VectorXd y(1);
  y << 2.0;
  const GlmModel g = scalar_model(Family::gaussian(1.0), y, 1.0, -5, 5);
  CHECK(quasi_loglik(g, vec1(1.0)) == doctest::Approx(1.5));  // 2*1 - 1/2

  Eigen::VectorXd yp(2);
  yp << 1.0, 3.0;
  const GlmModel p = scalar_model(Family::poisson(), yp, 1.0, -5, 5);
  CHECK(quasi_loglik(p, vec1(0.0)) == doctest::Approx(-2.0));
  // summation-order cross-check
  double acc = 0.0;
  for (int i = 1; i >= 0; --i) acc += yp[i] * 0.0 - std::exp(0.0);
  CHECK(quasi_loglik(p, vec1(0.0)) == doctest::Approx(acc));

  CHECK(loglik_diff(p, vec1(0.3), vec1(0.3)) == doctest::Approx(0.0));
}

TEST_CASE("fit: gaussian sample mean and poisson log-mean") {
  Eigen::VectorXd y(3);
  y << 1.0, 2.0, 3.0;
  const GlmModel g = scalar_model(Family::gaussian(1.0), y, 1.0, -10, 10);
  const FitResult fg = fit_qmle(g, vec1(0.0), 1e-12, 100);
  CHECK(fg.diag.converged);
  CHECK(fg.theta[0] == doctest::Approx(2.0).epsilon(1e-10));

  const GlmModel p = scalar_model(Family::poisson(), y, 1.0, -10, 10);
  const FitResult fp = fit_qmle(p, vec1(0.0), 1e-12, 100);
  CHECK(fp.theta[0] == doctest::Approx(std::log(2.0)).epsilon(1e-10));
}

TEST_CASE("fit: init at the maximizer returns immediately") {
  Eigen::VectorXd y(3);
  y << 1.0, 2.0, 3.0;
  const GlmModel g = scalar_model(Family::gaussian(1.0), y, 1.0, -10, 10);
  const FitResult f = fit_qmle(g, vec1(2.0), 1e-9, 100);
  CHECK(f.diag.iterations == 0);
  CHECK(f.theta[0] == doctest::Approx(2.0));
}

TEST_CASE("fit is invariant to positive rescaling of the objective") {
  Eigen::VectorXd y(4);
  y << 0.0, 2.0, 1.0, 5.0;
  for (double mu : {0.25, 1.0, 3.0}) {
    const GlmModel p = scalar_model(Family::poisson(), y, mu, -10, 10);
    const FitResult f = fit_qmle(p, vec1(0.0), 1e-12, 100);
    CHECK(f.theta[0] == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  }
}

TEST_CASE("fit matches a brute-force grid on p=1") {
  qlc::RngStream rng(31, 5);
  Eigen::VectorXd y(20);
  for (int i = 0; i < 20; ++i) y[i] = rng.poisson(2.0);
  const GlmModel p = scalar_model(Family::poisson(), y, 1.0, -3, 3);
  const FitResult f = fit_qmle(p, vec1(0.0), 1e-10, 100);

  const long n_grid = 10000;
  double best = -1e300, best_theta = 0.0;
  for (long j = 0; j < n_grid; ++j) {
    const double theta = -3.0 + 6.0 * j / (n_grid - 1);
    const double val = quasi_loglik(p, vec1(theta));
    if (val > best) {
      best = val;
      best_theta = theta;
    }
  }
  CHECK(std::abs(f.theta[0] - best_theta) <= 6.0 / (n_grid - 1));
}

TEST_CASE("fit reports non-convergence") {
  Eigen::VectorXd y(3);
  y << 1.0, 2.0, 3.0;
  const GlmModel g = scalar_model(Family::gaussian(1.0), y, 1.0, -10, 10);
  const FitResult f = fit_qmle(g, vec1(-9.0), 1e-14, 0);  // no iterations allowed
  CHECK_FALSE(f.diag.converged);
  CHECK(f.diag.grad_norm > 0.0);
}

TEST_CASE("fit projects onto the box when the maximizer is outside") {
  Eigen::VectorXd y(3);
  y << 4.0, 5.0, 6.0;  // sample mean 5, box caps at 2
  const GlmModel g = scalar_model(Family::gaussian(1.0), y, 1.0, -2, 2);
  const FitResult f = fit_qmle(g, vec1(0.0), 1e-9, 100);
  CHECK(f.theta[0] == doctest::Approx(2.0));
  CHECK(f.diag.converged);  // projected gradient vanishes at the active bound
  CHECK(f.diag.on_boundary);
}

TEST_CASE("target theta0") {
  SUBCASE("well-specified score vanishes at theta_star") {
    Eigen::MatrixXd psi(3, 1);
    psi << 1.0, -0.5, 2.0;
    const Family fam = Family::poisson();
    const double theta_star = 0.4;
    Eigen::VectorXd b(3);
    for (int i = 0; i < 3; ++i) b[i] = fam.mean_value(psi(i, 0) * theta_star);
    const TargetSpec t = target_theta0(psi, fam, b, 0.7, 1e-12, box1(-2, 2));
    CHECK(t.theta0[0] == doctest::Approx(theta_star).epsilon(1e-10));
    CHECK(t.grad_residual <= 1e-10);
  }
  SUBCASE("gaussian mean of means") {
    Eigen::MatrixXd psi = Eigen::MatrixXd::Ones(2, 1);
    Eigen::VectorXd b(2);
    b << 0.0, 1.0;
    const TargetSpec t = target_theta0(psi, Family::gaussian(1.0), b, 1.0, 1e-12, box1(-2, 2));
    CHECK(t.theta0[0] == doctest::Approx(0.5).epsilon(1e-10));
  }
  SUBCASE("poisson log of mean response") {
    Eigen::MatrixXd psi = Eigen::MatrixXd::Ones(2, 1);
    Eigen::VectorXd b(2);
    b << 1.0, 3.0;
    const TargetSpec t = target_theta0(psi, Family::poisson(), b, 1.0, 1e-12, box1(-2, 2));
    CHECK(t.theta0[0] == doctest::Approx(std::log(2.0)).epsilon(1e-10));
  }
  SUBCASE("mu does not affect theta0") {
    Eigen::MatrixXd psi(4, 1);
    psi << 1.0, 0.3, -0.7, 1.4;
    Eigen::VectorXd b(4);
    b << 0.4, 0.8, 0.2, 1.1;
    const Eigen::VectorXd a =
        target_theta0(psi, Family::poisson(), b, 0.1, 1e-12, box1(-3, 3)).theta0;
    const Eigen::VectorXd c =
        target_theta0(psi, Family::poisson(), b, 0.9, 1e-12, box1(-3, 3)).theta0;
    CHECK(a[0] == doctest::Approx(c[0]).epsilon(1e-12));
  }
  SUBCASE("means outside the achievable range") {
    Eigen::MatrixXd psi = Eigen::MatrixXd::Ones(2, 1);
    Eigen::VectorXd b(2);
    b << -1.0, 2.0;  // negative mean not achievable for poisson
    CHECK_THROWS_AS(target_theta0(psi, Family::poisson(), b, 1.0, 1e-10, box1(-2, 2)),
                    qlc::error);
  }
}

TEST_CASE("rate function closed forms") {
  SUBCASE("M(theta0, theta0) = 0") {
    Eigen::VectorXd y(3);
    y << 1.0, 0.0, 2.0;
    const GlmModel m = scalar_model(Family::poisson(), y, 0.5, -2, 2);
    const TrueLaw truth = TrueLaw::efc(Family::poisson(), Eigen::VectorXd::Constant(3, 0.2));
    CHECK(rate_function(m, truth, vec1(0.2), vec1(0.2)) == doctest::Approx(0.0));
  }
  SUBCASE("gaussian scalar closed form n mu (1-mu)/2") {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(4);
    const GlmModel m = scalar_model(Family::gaussian(1.0), y, 0.5, -3, 3);
    const TrueLaw truth = TrueLaw::efc(Family::gaussian(1.0), Eigen::VectorXd::Zero(4));
    const double rate = rate_function(m, truth, vec1(1.0), vec1(0.0));
    CHECK(std::abs(rate - 0.5) < 1e-12);
  }
  SUBCASE("mu = 1 well-specified kills the rate") {
    for (const Family& fam : {Family::gaussian(1.0), Family::poisson()}) {
      GlmModel m;
      m.design = Eigen::MatrixXd::Ones(5, 1);
      m.responses = Eigen::VectorXd::Zero(5);
      m.family = fam;
      m.mu = 1.0;
      m.theta_box = box1(-2, 2);
      const TrueLaw well = TrueLaw::efc(fam, Eigen::VectorXd::Constant(5, 0.1));
      for (double theta = -1.0; theta <= 1.0; theta += 0.125)
        CHECK(std::abs(rate_function(m, well, vec1(theta), vec1(0.1))) < 1e-10);
    }
  }
  SUBCASE("nonnegative for mu <= 1 well-specified") {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(3);
    for (double mu : {0.25, 0.6, 1.0}) {
      const GlmModel m = scalar_model(Family::poisson(), y, mu, -2, 2);
      const TrueLaw truth = TrueLaw::efc(Family::poisson(), Eigen::VectorXd::Constant(3, -0.3));
      for (double theta = -1.5; theta <= 1.5; theta += 0.25)
        CHECK(rate_function(m, truth, vec1(theta), vec1(-0.3)) >= -1e-12);
    }
  }
}

TEST_CASE("rate function gradient vanishes at theta0 (finite differences)") {
  qlc::RngStream rng(123, 9);
  for (int inst = 0; inst < 6; ++inst) {
    const int p = 1 + inst % 2;
    const int n = 8;
    Eigen::MatrixXd psi(n, p);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < p; ++j) psi(i, j) = unif_pm1(rng);
    const Family fam = (inst % 3 == 0)   ? Family::gaussian(1.0)
                       : (inst % 3 == 1) ? Family::poisson()
                                         : Family::bernoulli();
    Eigen::VectorXd theta_star(p);
    for (int j = 0; j < p; ++j) theta_star[j] = 0.4 * unif_pm1(rng);

    GlmModel m;
    m.design = psi;
    m.responses = Eigen::VectorXd::Zero(n);
    m.family = fam;
    m.mu = 0.5;
    Box box;
    box.lower = Eigen::VectorXd::Constant(p, -2.0);
    box.upper = Eigen::VectorXd::Constant(p, 2.0);
    m.theta_box = box;
    const TrueLaw truth = TrueLaw::efc(fam, psi * theta_star);

    const double h = 1e-5;
    double norm_sq = 0.0;
    for (int j = 0; j < p; ++j) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(p);
      e[j] = h;
      const double g = (rate_function(m, truth, theta_star + e, theta_star) -
                        rate_function(m, truth, theta_star - e, theta_star)) /
                       (2.0 * h);
      norm_sq += g * g;
    }
    CHECK(std::sqrt(norm_sq) <= 1e-5);
  }
}

TEST_CASE("misspecified truth: stationarity at the target persists") {
  // gaussian quasi-likelihood fitted to poisson data: theta0 solves the
  // moment equation, and the rate gradient still vanishes there
  Eigen::MatrixXd psi(6, 1);
  psi << 1.0, 0.5, -0.4, 1.2, 0.8, -0.9;
  const Family truth_family = Family::poisson();
  Eigen::VectorXd f(6), means(6);
  for (int i = 0; i < 6; ++i) {
    f[i] = 0.3 * psi(i, 0);
    means[i] = truth_family.mean_value(f[i]);
  }
  GlmModel m;
  m.design = psi;
  m.responses = Eigen::VectorXd::Zero(6);
  m.family = Family::gaussian(1.0);
  m.mu = 0.5;
  m.theta_box = box1(-3, 3);
  const TrueLaw truth = TrueLaw::efc(truth_family, f);
  const TargetSpec target =
      target_theta0(m.design, m.family, means, m.mu, 1e-12, m.theta_box);

  const double h = 1e-5;
  const double g = (rate_function(m, truth, vec1(target.theta0[0] + h), target.theta0) -
                    rate_function(m, truth, vec1(target.theta0[0] - h), target.theta0)) /
                   (2.0 * h);
  CHECK(std::abs(g) <= 1e-5);
  CHECK(rate_function(m, truth, target.theta0, target.theta0) == doctest::Approx(0.0));
  // the poisson cumulant, not the gaussian one, drives the moment term
  const double tilt = m.mu * 1.0;
  CHECK(truth.cumulant(0, tilt) ==
        doctest::Approx(std::exp(f[0]) * (std::exp(tilt) - 1.0 - tilt)));
}

TEST_CASE("point law (zero noise) kills every cumulant") {
  const TrueLaw law = TrueLaw::point(Eigen::VectorXd::Constant(3, 0.7));
  CHECK(law.cumulant(1, 2.0) == 0.0);
  CHECK(law.tilted_variance(2, 1.0) == 0.0);
  CHECK(law.mean(0) == doctest::Approx(0.7));
  CHECK(law.is_point());
}

TEST_CASE("rate function matches the Monte Carlo exp-moment oracle") {
  // M = -log E exp{L(theta,theta0)} estimated from 2e5 draws
  struct Case {
    Family family;
    int n;
  } cases[] = {{Family::gaussian(1.0), 4}, {Family::poisson(), 4}};
  for (const auto& c : cases) {
    GlmModel m;
    m.design = Eigen::MatrixXd::Ones(c.n, 1);
    m.responses = Eigen::VectorXd::Zero(c.n);
    m.family = c.family;
    m.mu = 0.5;
    m.theta_box = box1(-2, 2);
    const Eigen::VectorXd theta0 = vec1(0.1);
    const TrueLaw truth = TrueLaw::efc(c.family, m.design * theta0);

    for (double theta : {-0.3, 0.5}) {
      const double exact = rate_function(m, truth, vec1(theta), theta0);
      const long reps = 200000;
      qlc::RngStream rng(4242, static_cast<std::uint64_t>(100 * (theta + 1)) + c.n);
      double acc = 0.0, acc_sq = 0.0;
      for (long rep = 0; rep < reps; ++rep) {
        double l = 0.0;
        for (int i = 0; i < c.n; ++i) {
          const double y = truth.sample(i, rng);
          l += y * (theta - theta0[0]) -
               (c.family.log_partition(theta) - c.family.log_partition(theta0[0]));
        }
        const double v = std::exp(m.mu * l);
        acc += v;
        acc_sq += v * v;
      }
      const double mean = acc / reps;
      const double se = std::sqrt((acc_sq / reps - mean * mean) / reps);
      CHECK(std::abs(std::exp(-exact) - mean) <= 3.0 * se);
    }
  }
}

TEST_CASE("geometry") {
  SUBCASE("gaussian ones design") {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(3);
    const GlmModel m = scalar_model(Family::gaussian(1.0), y, 1.0, -2, 2);
    const TrueLaw truth = TrueLaw::efc(Family::gaussian(1.0), Eigen::VectorXd::Zero(3));
    const GlmGeometry geo = glm_geometry(m, truth, 1.0);
    CHECK(geo.V1(0, 0) == doctest::Approx(3.0));
    CHECK(geo.V(0, 0) == doctest::Approx(3.0));
  }
  SUBCASE("rank-one outer product and mu^2 scaling") {
    GlmModel m;
    m.design = Eigen::MatrixXd(1, 2);
    m.design << 1.0, 0.0;
    m.responses = Eigen::VectorXd::Zero(1);
    m.family = Family::gaussian(2.0);  // scale n_i = 2
    m.mu = 1.0;
    Box box;
    box.lower = Eigen::VectorXd::Constant(2, -1.0);
    box.upper = Eigen::VectorXd::Constant(2, 1.0);
    m.theta_box = box;
    const TrueLaw truth = TrueLaw::efc(Family::gaussian(2.0), Eigen::VectorXd::Zero(1));
    const GlmGeometry geo = glm_geometry(m, truth, 1.0);
    CHECK(geo.V(0, 0) == doctest::Approx(4.0));
    CHECK(geo.V(0, 1) == doctest::Approx(0.0));
    CHECK(geo.V(1, 1) == doctest::Approx(0.0));

    GlmModel m2 = m;
    m2.mu = 2.0;
    const GlmGeometry geo2 = glm_geometry(m2, truth, 1.0);
    CHECK(geo2.V(0, 0) == doctest::Approx(4.0 * geo.V(0, 0)));
  }
}

TEST_CASE("tilted variance") {
  const TrueLaw g = TrueLaw::efc(Family::gaussian(1.4), Eigen::VectorXd::Constant(1, 0.2));
  for (double t : {-1.0, 0.0, 2.0})
    CHECK(g.tilted_variance(0, t) == doctest::Approx(1.4 * 1.4));

  const TrueLaw p = TrueLaw::efc(Family::poisson(), Eigen::VectorXd::Zero(1));
  CHECK(p.tilted_variance(0, 0.0) == doctest::Approx(1.0));  // Var Poisson(1)
  CHECK(p.tilted_variance(0, std::log(2.0)) == doctest::Approx(2.0));
}

TEST_CASE("identifiability constants") {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(6);
  const GlmModel m = scalar_model(Family::gaussian(1.0), y, 0.5, -2, 2);
  const Eigen::VectorXd theta0 = vec1(0.0);
  const TrueLaw truth = TrueLaw::efc(Family::gaussian(1.0), Eigen::VectorXd::Zero(6));
  const GlmGeometry geo = glm_geometry(m, truth, 1.0);

  std::vector<Eigen::VectorXd> grid;
  for (double t = -1.0; t <= 1.0; t += 0.25) grid.push_back(vec1(t));
  const IdentifiabilityReport rep = identifiability_constants(m, truth, theta0, geo, grid);
  CHECK(rep.a1 == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(rep.a == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
  CHECK(rep.s == doctest::Approx(1.0 - (0.25 * 0.25) / 0.5));
  CHECK(rep.s >= 0.0);
  CHECK(rep.s < 1.0);
  CHECK(rep.a1 <= rep.a);
  CHECK(rep.mu_admissible);  // mu = 0.5 = a1/a^2

  // single-point grid at theta0: tilted variance equals Var Y_i
  const IdentifiabilityReport at0 = identifiability_constants(m, truth, theta0, geo, {theta0});
  CHECK(at0.a * at0.a == doctest::Approx(0.5));  // (1/2) s_i^2 / n_i^2
}

TEST_CASE("glm conditions report") {
  SUBCASE("single-term normalization") {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(1);
    const GlmModel m = scalar_model(Family::gaussian(1.0), y, 1.0, -1, 1);
    const TrueLaw truth = TrueLaw::efc(Family::gaussian(1.0), Eigen::VectorXd::Zero(1));
    const GlmGeometry geo = glm_geometry(m, truth, 1.0);
    const GlmConditionReport rep =
        check_glm_conditions(m, geo, vec1(0.0), /*lambda_star=*/1.0, /*lambda1_star=*/1.0);
    CHECK(rep.worst_direction_ratio == doctest::Approx(1.0));
    CHECK(rep.lambda_star_max == doctest::Approx(1.0));
    CHECK(rep.direction_condition_ok);
    CHECK(rep.worst_sampled_ratio <= rep.worst_direction_ratio + 1e-12);
  }
  SUBCASE("symmetric box: worst case at a corner; huge lambda1 cap always passes") {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(4);
    const GlmModel m = scalar_model(Family::gaussian(1.0), y, 0.5, -2, 2);
    const TrueLaw truth = TrueLaw::efc(Family::gaussian(1.0), Eigen::VectorXd::Zero(4));
    const GlmGeometry geo = glm_geometry(m, truth, 1e6);
    const GlmConditionReport rep = check_glm_conditions(m, geo, vec1(0.0), 1.0, 1e6);
    CHECK(rep.worst_theta_term == doctest::Approx(0.5 * 1.0 * 2.0));  // mu*n_i*|corner shift|
    CHECK(rep.theta_condition_ok);
  }
}

TEST_CASE("optimizer falls back to gradient ascent on a broken hessian") {
  // hessian full of NaNs: every ridged solve fails, leaving plain ascent
  Box box;
  box.lower = Eigen::VectorXd::Constant(1, -5.0);
  box.upper = Eigen::VectorXd::Constant(1, 5.0);
  auto obj = [](const Eigen::VectorXd& x) { return -(x[0] - 1.0) * (x[0] - 1.0); };
  auto grad = [](const Eigen::VectorXd& x) {
    return Eigen::VectorXd::Constant(1, -2.0 * (x[0] - 1.0));
  };
  auto hess = [](const Eigen::VectorXd&) {
    return Eigen::MatrixXd::Constant(1, 1, std::nan(""));
  };
  const MaxResult r = maximize_box(obj, grad, hess, box, Eigen::VectorXd::Zero(1), 1e-8, 200);
  CHECK(r.diag.converged);
  CHECK(r.diag.used_fallback);
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("model validation") {
  GlmModel m;
  m.design = Eigen::MatrixXd::Ones(2, 1);
  m.responses = Eigen::VectorXd::Zero(2);
  m.family = Family::poisson();
  m.mu = 1.0;
  m.theta_box = box1(-1, 1);
  CHECK_NOTHROW(m.validate());

  GlmModel bad = m;
  bad.responses[0] = 1.5;  // non-integer poisson response
  CHECK_THROWS_AS(bad.validate(), qlc::config_error);

  GlmModel bad2 = m;
  bad2.mu = 0.0;
  CHECK_THROWS_AS(bad2.validate(), qlc::config_error);

  GlmModel bad3 = m;
  bad3.responses = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(bad3.validate(), qlc::config_error);
}
