#include <doctest.h>

#include <cmath>

#include "qlc/single_index.hpp"

using namespace qlc;

namespace {

Box boxd(int d, double lo, double hi) {
  Box b;
  b.lower = Eigen::VectorXd::Constant(d, lo);
  b.upper = Eigen::VectorXd::Constant(d, hi);
  return b;
}

Eigen::VectorXd vec1(double x) { return Eigen::VectorXd::Constant(1, x); }

SiModel make_model(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Family& fam,
                   const Link& link, double mu, const Box& box, const Eigen::VectorXd& f = {}) {
  SiModel m;
  m.X = X;
  m.responses = y;
  m.family = fam;
  m.link = link;
  m.mu = mu;
  m.theta_box = box;
  m.true_f = f;
  m.validate();
  return m;
}

double fd2(const std::function<double(double)>& f, double x, double h = 1e-5) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace

TEST_CASE("link derivatives match finite differences") {
  for (const Link& link :
       {Link::identity(), Link::logistic(), Link::tanh_link(), Link::sine()}) {
    for (double u : {-1.2, -0.3, 0.0, 0.7, 2.0}) {
      CHECK(link.g_dot(u) == doctest::Approx(fd2(link.g, u)).epsilon(1e-5));
      CHECK(link.g_ddot(u) == doctest::Approx(fd2(link.g_dot, u)).epsilon(1e-5));
    }
  }
  CHECK_THROWS_AS(Link::parse("probit"), qlc::config_error);
}

TEST_CASE("si loglik basics") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(1, 1);
  Eigen::VectorXd y(1);
  y << 1.0;
  const SiModel m =
      make_model(X, y, Family::gaussian(1.0), Link::tanh_link(), 1.0, boxd(1, -2, 2));
  CHECK(si_loglik(m, vec1(0.0)) == doctest::Approx(0.0));  // tanh(0)=0, d(0)=0
  CHECK(si_loglik_diff(m, vec1(0.7), vec1(0.7)) == doctest::Approx(0.0));
}

TEST_CASE("identity link reduces to the glm") {
  qlc::RngStream rng(99, 2);
  Eigen::MatrixXd X(6, 1);
  Eigen::VectorXd y(6);
  for (int i = 0; i < 6; ++i) {
    X(i, 0) = 2.0 * rng.uniform01() - 1.0;
    y[i] = rng.poisson(1.5);
  }
  const SiModel si =
      make_model(X, y, Family::poisson(), Link::identity(), 0.7, boxd(1, -2, 2));
  GlmModel glm;
  glm.design = X;
  glm.responses = y;
  glm.family = Family::poisson();
  glm.mu = 0.7;
  glm.theta_box = si.theta_box;

  for (double theta : {-1.0, 0.0, 0.8})
    CHECK(si_loglik(si, vec1(theta)) == doctest::Approx(quasi_loglik(glm, vec1(theta))));

  const SiFitResult f_si = si_fit(si, 1e-10, 200);
  const FitResult f_glm = fit_qmle(glm, vec1(0.0), 1e-10, 200);
  CHECK(f_si.theta[0] == doctest::Approx(f_glm.theta[0]).epsilon(1e-8));
}

TEST_CASE("si target theta0") {
  SUBCASE("well-specified interior star is stationary") {
    Eigen::MatrixXd X(4, 1);
    X << 1.0, -0.5, 0.25, 0.8;
    Eigen::VectorXd theta_star = vec1(0.5);
    const Link link = Link::tanh_link();
    Eigen::VectorXd f(4);
    for (int i = 0; i < 4; ++i) f[i] = link.g(X(i, 0) * theta_star[0]);
    const SiModel m = make_model(X, Eigen::VectorXd::Zero(4), Family::gaussian(1.0), link, 1.0,
                                 boxd(1, -2, 2), f);
    const SiFitResult t = si_target_theta0(m, 1e-10);
    CHECK(t.diag.converged);
    CHECK(t.theta[0] == doctest::Approx(0.5).epsilon(1e-8));
  }
  SUBCASE("tanh two-point design via brute force") {
    Eigen::MatrixXd X(2, 1);
    X << 1.0, -1.0;
    const Link link = Link::tanh_link();
    Eigen::VectorXd f(2);
    f << std::tanh(0.5), std::tanh(-0.5);
    const SiModel m = make_model(X, Eigen::VectorXd::Zero(2), Family::gaussian(1.0), link, 1.0,
                                 boxd(1, -2, 2), f);
    const SiFitResult t = si_target_theta0(m, 1e-10);

    // brute-force 1-D grid of the deterministic objective
    double best = -1e300, best_theta = 0.0;
    for (long j = 0; j < 20001; ++j) {
      const double theta = -2.0 + 4.0 * j / 20000.0;
      double val = 0.0;
      for (int i = 0; i < 2; ++i) {
        const double eta = link.g(X(i, 0) * theta);
        val += f[i] * eta - 0.5 * eta * eta;
      }
      if (val > best) {
        best = val;
        best_theta = theta;
      }
    }
    CHECK(std::abs(best_theta - 0.5) < 1e-3);
    CHECK(t.theta[0] == doctest::Approx(0.5).epsilon(1e-7));
  }
  SUBCASE("identity link agrees with glm target") {
    Eigen::MatrixXd X(3, 1);
    X << 1.0, 2.0, -1.0;
    Eigen::VectorXd f(3);
    f << 0.2, 0.6, -0.1;
    const SiModel m = make_model(X, Eigen::VectorXd::Zero(3), Family::gaussian(1.0),
                                 Link::identity(), 1.0, boxd(1, -2, 2), f);
    const SiFitResult t = si_target_theta0(m, 1e-11);
    Eigen::VectorXd means(3);
    for (int i = 0; i < 3; ++i) means[i] = Family::gaussian(1.0).mean_value(f[i]);
    const TargetSpec g = target_theta0(X, Family::gaussian(1.0), means, 1.0, 1e-11, m.theta_box);
    CHECK(t.theta[0] == doctest::Approx(g.theta0[0]).epsilon(1e-9));
  }
}

TEST_CASE("si V matrix") {
  Eigen::MatrixXd X(3, 1);
  X << 1.0, -2.0, 0.5;
  Eigen::VectorXd f(3);
  f << 0.1, -0.2, 0.0;

  SUBCASE("identity link gives the glm geometry") {
    const SiModel m = make_model(X, Eigen::VectorXd::Zero(3), Family::gaussian(1.0),
                                 Link::identity(), 0.5, boxd(1, -1, 1), f);
    const Eigen::MatrixXd V = si_v_matrix(m, vec1(0.3), 1.0);
    CHECK(V(0, 0) == doctest::Approx(0.25 * (1.0 + 4.0 + 0.25)));
  }
  SUBCASE("saturated tanh flattens V") {
    const SiModel m = make_model(X, Eigen::VectorXd::Zero(3), Family::gaussian(1.0),
                                 Link::tanh_link(), 1.0, boxd(1, -12, 12), f);
    const Eigen::MatrixXd V = si_v_matrix(m, vec1(10.0), 1.0);
    CHECK(std::abs(V(0, 0)) < 1e-6);
  }
  SUBCASE("design scaling is quadratic") {
    const SiModel m1 = make_model(X, Eigen::VectorXd::Zero(3), Family::gaussian(1.0),
                                  Link::identity(), 1.0, boxd(1, -1, 1), f);
    const SiModel m2 = make_model(2.0 * X, Eigen::VectorXd::Zero(3), Family::gaussian(1.0),
                                  Link::identity(), 1.0, boxd(1, -0.5, 0.5), f);
    const double v1 = si_v_matrix(m1, vec1(0.2), 1.0)(0, 0);
    const double v2 = si_v_matrix(m2, vec1(0.1), 1.0)(0, 0);
    CHECK(v2 == doctest::Approx(4.0 * v1));
  }
}

TEST_CASE("si rate function and derivatives") {
  Eigen::MatrixXd X(5, 2);
  X << 1.0, 0.3, -0.6, 1.1, 0.4, -0.8, 0.9, 0.2, -0.3, 0.5;
  Eigen::VectorXd theta_star(2);
  theta_star << 0.4, -0.2;
  const Link link = Link::logistic();
  Eigen::VectorXd f(5);
  for (int i = 0; i < 5; ++i) f[i] = link.g(X.row(i).dot(theta_star));
  const SiModel m = make_model(X, Eigen::VectorXd::Zero(5), Family::poisson(), link, 0.5,
                               boxd(2, -2, 2), f);
  const Eigen::VectorXd theta0 = theta_star;

  SUBCASE("value and gradient vanish at theta0") {
    CHECK(si_rate_function(m, theta0, theta0) == doctest::Approx(0.0));
    const double h = 1e-5;
    for (int j = 0; j < 2; ++j) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(2);
      e[j] = h;
      const double g =
          (si_rate_function(m, theta0 + e, theta0) - si_rate_function(m, theta0 - e, theta0)) /
          (2.0 * h);
      CHECK(std::abs(g) < 1e-5);
    }
  }
  SUBCASE("analytic gradient matches finite differences away from theta0") {
    Eigen::VectorXd theta(2);
    theta << -0.3, 0.6;
    const Eigen::VectorXd g = si_rate_gradient(m, theta, theta0);
    const double h = 1e-6;
    for (int j = 0; j < 2; ++j) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(2);
      e[j] = h;
      const double fd =
          (si_rate_function(m, theta + e, theta0) - si_rate_function(m, theta - e, theta0)) /
          (2.0 * h);
      CHECK(g[j] == doctest::Approx(fd).epsilon(1e-6));
    }
  }
  SUBCASE("analytic hessian matches central differences") {
    qlc::RngStream rng(2024, 3);
    for (int trial = 0; trial < 4; ++trial) {
      Eigen::VectorXd theta(2), t0(2);
      for (int j = 0; j < 2; ++j) {
        theta[j] = 1.2 * (2.0 * rng.uniform01() - 1.0);
        t0[j] = 0.5 * (2.0 * rng.uniform01() - 1.0);
      }
      const Eigen::MatrixXd H = si_rate_hessian(m, theta, t0);
      const double h = 1e-4;
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          Eigen::VectorXd ea = Eigen::VectorXd::Zero(2), eb = Eigen::VectorXd::Zero(2);
          ea[a] = h;
          eb[b] = h;
          const double fd = (si_rate_function(m, theta + ea + eb, t0) -
                             si_rate_function(m, theta + ea - eb, t0) -
                             si_rate_function(m, theta - ea + eb, t0) +
                             si_rate_function(m, theta - ea - eb, t0)) /
                            (4.0 * h * h);
          CHECK(H(a, b) == doctest::Approx(fd).epsilon(1e-4));
        }
      }
    }
  }
  SUBCASE("identity link reduces to the glm closed form") {
    Eigen::MatrixXd Xi = Eigen::MatrixXd::Ones(4, 1);
    Eigen::VectorXd fi = Eigen::VectorXd::Zero(4);
    const SiModel mi = make_model(Xi, Eigen::VectorXd::Zero(4), Family::gaussian(1.0),
                                  Link::identity(), 0.5, boxd(1, -3, 3), fi);
    CHECK(si_rate_function(mi, vec1(1.0), vec1(0.0)) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("domain error cites the membership condition") {
    const qlc::Interval dom{-1.1, 1.1};
    // custom family with a tight natural domain around the link range
    const Family tight("tight", dom, [](double u) { return u * u; },
                       [](double u) { return 2.0 * u; }, [](double) { return 2.0; });
    Eigen::MatrixXd Xt(1, 1);
    Xt << 1.0;
    SiModel mt;
    mt.X = Xt;
    mt.responses = Eigen::VectorXd::Zero(1);
    mt.family = tight;
    mt.link = Link::tanh_link();
    mt.mu = 1.0;
    mt.theta_box = boxd(1, -2, 2);
    mt.true_f = Eigen::VectorXd::Constant(1, 0.9);
    mt.validate();
    // delta = tanh(2)-tanh(-2) ~ 1.93, so f + mu*delta leaves (-1.1, 1.1)
    CHECK_THROWS_AS(si_rate_function(mt, vec1(2.0), vec1(-2.0)), qlc::domain_error);
  }
}

TEST_CASE("gaussian identifiability display at the mu->0 limit") {
  Eigen::MatrixXd X(6, 2);
  X << 1.0, 0.2, -0.4, 0.9, 0.7, -0.5, 0.1, 0.3, -0.9, -0.2, 0.5, 0.6;
  const Link link = Link::sine();
  Eigen::VectorXd f(6);
  for (int i = 0; i < 6; ++i) f[i] = 0.3 * X(i, 0) - 0.1 * X(i, 1);
  const double sigma = 1.0;
  const SiModel m = make_model(X, Eigen::VectorXd::Zero(6), Family::gaussian(sigma),
                               Link::sine(), 0.5, boxd(2, -2, 2), f);
  Eigen::VectorXd theta(2);
  theta << 0.4, -0.3;

  // route A: the generic EFC limit of Hess M / mu
  const Eigen::MatrixXd A = si_rate_hessian_mu_limit(m, theta);
  // route B: the literal Gaussian display (n sigma^2)^-1 sum {g'^2 + (g-f)g''} X X'
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(2, 2);
  for (int i = 0; i < 6; ++i) {
    const double u = X.row(i).dot(theta);
    const double w = link.g_dot(u) * link.g_dot(u) +
                     (link.g(u) - f[i]) * link.g_ddot(u);
    B += w * X.row(i).transpose() * X.row(i);
  }
  B /= (6.0 * sigma * sigma);
  // A = sigma^4 * sum{...}, so A / (n sigma^4) should equal B at sigma = 1
  const Eigen::MatrixXd A_scaled = A / 6.0;
  CHECK((A_scaled - B).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("si fit") {
  SUBCASE("noiseless gaussian recovers theta_star") {
    Eigen::MatrixXd X(8, 1);
    X << 1.0, -0.5, 0.25, 0.8, -1.2, 0.4, 1.5, -0.9;
    const Link link = Link::tanh_link();
    const double theta_star = 0.6;
    Eigen::VectorXd y(8);
    for (int i = 0; i < 8; ++i)
      y[i] = Family::gaussian(1.0).mean_value(link.g(X(i, 0) * theta_star));
    const SiModel m = make_model(X, y, Family::gaussian(1.0), link, 1.0, boxd(1, -2, 2));
    const SiFitResult f = si_fit(m, 1e-11, 300);
    CHECK(f.theta[0] == doctest::Approx(theta_star).epsilon(1e-8));
  }
  SUBCASE("p=1 fit matches a brute-force grid within one cell") {
    qlc::RngStream rng(55, 7);
    Eigen::MatrixXd X(10, 1);
    Eigen::VectorXd y(10);
    const Link link = Link::logistic();
    for (int i = 0; i < 10; ++i) {
      X(i, 0) = 2.0 * rng.uniform01() - 1.0;
      y[i] = rng.poisson(1.0);
    }
    const SiModel m = make_model(X, y, Family::poisson(), link, 1.0, boxd(1, -2, 2));
    const SiFitResult f = si_fit(m, 1e-10, 300);
    const long n_grid = 10000;
    double best = -1e300, best_theta = 0.0;
    for (long j = 0; j < n_grid; ++j) {
      const double theta = -2.0 + 4.0 * j / (n_grid - 1);
      const double val = si_loglik(m, vec1(theta));
      if (val > best) {
        best = val;
        best_theta = theta;
      }
    }
    CHECK(std::abs(f.theta[0] - best_theta) <= 4.0 / (n_grid - 1));
  }
  SUBCASE("periodic link ties flag multimodality") {
    // L(theta) = 0.8 sin(theta) - sin^2(theta)/2 has tied maxima wherever
    // sin(theta) = 0.8; the wide box holds several of them
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(1, 1);
    Eigen::VectorXd y(1);
    y << 0.8;
    const SiModel m = make_model(X, y, Family::gaussian(1.0), Link::sine(), 1.0,
                                 boxd(1, -6.0, 6.0));
    const SiFitResult f = si_fit(m, 1e-10, 300);
    CHECK(f.multistart.multimodal);
    CHECK(f.multistart.maxima.size() >= 2);
    CHECK(f.multistart.tied_maxima);
    // deterministic merge: ties broken by lexicographically smaller theta
    CHECK(f.theta[0] < 0.0);
    CHECK(std::sin(f.theta[0]) == doctest::Approx(0.8).epsilon(1e-7));
  }
}
