#include "qlc/penalty.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

namespace qlc {

PenaltyKind penalty_kind_from_string(const std::string& token) {
  if (token == "quadratic") return PenaltyKind::quadratic;
  if (token == "logarithmic") return PenaltyKind::logarithmic;
  if (token == "hybrid") return PenaltyKind::hybrid;
  throw config_error("unknown penalty kind: " + token);
}

std::string to_string(PenaltyKind kind) {
  switch (kind) {
    case PenaltyKind::quadratic: return "quadratic";
    case PenaltyKind::logarithmic: return "logarithmic";
    case PenaltyKind::hybrid: return "hybrid";
  }
  return "?";
}

namespace {

double log_kappa1(double delta1, double t) {
  const double excess = std::max(t - 1.0, 0.0);
  return -delta1 * excess * excess;
}

double log_kappa2(double delta2, int p, double t) { return -(p + delta2) * std::log(t + 1.0); }

}  // namespace

void PenaltySpec::validate() const {
  if (!(rho > 0.0 && rho < 1.0)) throw config_error("penalty: rho must lie in (0,1)");
  if (!(eps > 0.0)) throw config_error("penalty: eps must be positive");
  if (kind == PenaltyKind::quadratic || kind == PenaltyKind::hybrid)
    if (!(delta1 > 0.0)) throw config_error("penalty: delta1 must be positive");
  if (kind == PenaltyKind::logarithmic || kind == PenaltyKind::hybrid)
    if (!(delta2 > 0.0)) throw config_error("penalty: delta2 must be positive");
  if (kind == PenaltyKind::hybrid) {
    if (!(r_threshold > 0.0)) throw config_error("penalty: hybrid needs r_threshold > 0");
    // the switch radius must keep kappa non-increasing across the seam
    const double k1 = std::exp(log_kappa1(delta1, r_threshold));
    const double k2 = std::exp(log_kappa2(delta2, p(), r_threshold));
    if (k1 > k2 + 1e-12)
      throw config_error("penalty: hybrid r_threshold makes kappa jump upward; "
                         "pick r with kappa1(r) <= kappa2(r)");
  }
  if (kappa_shift != 1 && kappa_shift != 2)
    throw config_error("penalty: kappa_shift must be 1 or 2");
  if (anchor.size() == 0) throw config_error("penalty: anchor must be set");
  if (vstar.rows() != anchor.size() || vstar.cols() != anchor.size())
    throw config_error("penalty: vstar must be p x p");
  if (!vstar.isApprox(vstar.transpose(), 1e-10))
    throw config_error("penalty: vstar must be symmetric");
}

double log_kappa(const PenaltySpec& spec, int p, double t) {
  if (!(t >= 0.0)) throw config_error("kappa: t must be nonnegative");
  switch (spec.kind) {
    case PenaltyKind::quadratic:
      return log_kappa1(spec.delta1, t);
    case PenaltyKind::logarithmic:
      return log_kappa2(spec.delta2, p, t);
    case PenaltyKind::hybrid:
      return t >= spec.r_threshold ? log_kappa1(spec.delta1, t) : log_kappa2(spec.delta2, p, t);
  }
  throw config_error("kappa: bad kind");
}

double kappa(const PenaltySpec& spec, int p, double t) { return std::exp(log_kappa(spec, p, t)); }

namespace {

// Adaptive Simpson on [a,b].
double simpson_rec(const std::function<double(double)>& f, double a, double m, double b, double fa,
                   double fm, double fb, double whole, double tol, int depth) {
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return simpson_rec(f, a, lm, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_rec(f, m, rm, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
  if (!(b > a)) return 0.0;
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson_rec(f, a, m, b, fa, fm, fb, whole, tol, 48);
}

// Exact tail p * int_T^inf (t+1)^(-p-delta) t^(p-1) dt via u = t+1.
double kappa2_tail(double delta2, int p, double T) {
  double acc = 0.0;
  double binom = 1.0;  // C(p-1, j) built incrementally
  for (int j = 0; j <= p - 1; ++j) {
    if (j > 0) binom = binom * (p - j) / j;
    const double sign = ((p - 1 - j) % 2 == 0) ? 1.0 : -1.0;
    const double expo = p + delta2 - j - 1.0;  // > 0 when delta2 > 0
    acc += sign * binom * std::pow(T + 1.0, -expo) / expo;
  }
  return p * acc;
}

}  // namespace

double pstar(const PenaltySpec& spec, int p, double quadrature_tol) {
  if (p < 1) throw config_error("pstar: p must be >= 1");

  auto integrand = [&](double t) {
    return p * kappa(spec, p, t) * (p == 1 ? 1.0 : std::pow(t, p - 1));
  };

  // Tail majorant check: kappa(t) t^p must decay, otherwise the integral
  // cannot converge.
  {
    const double t1 = 1e4, t2 = 2e4;
    const double m1 = kappa(spec, p, t1) * std::pow(t1, p);
    const double m2 = kappa(spec, p, t2) * std::pow(t2, p);
    const bool decayed_out = m1 == 0.0 && m2 == 0.0;
    if ((!decayed_out && !(m2 < m1)) || !std::isfinite(m1)) {
      std::ostringstream msg;
      msg << "pstar: tail test failed (kappa(t) t^p is " << m1 << " at t=" << t1 << " and " << m2
          << " at t=" << t2 << "); integral diverges";
      throw numeric_error(msg.str());
    }
  }

  // Panel boundaries at the kinks of kappa.
  std::vector<double> knots = {0.0, 1.0};
  if (spec.kind == PenaltyKind::hybrid) knots.push_back(spec.r_threshold);
  std::sort(knots.begin(), knots.end());

  double total = 0.0;
  double prev = 0.0;
  for (double k : knots) {
    if (k > prev) total += integrate(integrand, prev, k, quadrature_tol);
    prev = std::max(prev, k);
  }

  const bool gaussian_tail =
      spec.kind == PenaltyKind::quadratic ||
      (spec.kind == PenaltyKind::hybrid);  // hybrid tail is kappa1 beyond r_threshold
  if (gaussian_tail) {
    // kappa1 decays like exp(-delta1 (t-1)^2); integrate to where it underflows.
    const double cut = std::max({prev, spec.r_threshold, 1.0 + std::sqrt(745.0 / spec.delta1)});
    double a = prev;
    double width = std::max(1.0, (cut - prev) / 8.0);
    while (a < cut) {
      const double b = std::min(a + width, cut);
      total += integrate(integrand, a, b, quadrature_tol);
      a = b;
    }
    return total;
  }

  // Logarithmic kind: quadrature to a modest cutoff, exact remainder beyond.
  const double cut = std::max(prev, 8.0);
  total += integrate(integrand, prev, cut, quadrature_tol);
  total += kappa2_tail(spec.delta2, p, cut);
  return total;
}

double pstar_reference_closed_form(const PenaltySpec& spec, int p) {
  switch (spec.kind) {
    case PenaltyKind::quadratic:
      return 1.0 + std::pow(M_PI / spec.delta1, 0.5 * p) / unit_ball_volume(p);
    case PenaltyKind::logarithmic:
      return static_cast<double>(p) / spec.delta2;
    case PenaltyKind::hybrid:
      return std::pow(M_PI / spec.delta1, 0.5 * p) / unit_ball_volume(p) +
             p * std::pow(spec.r_threshold, -spec.delta2) / spec.delta2;
  }
  throw config_error("pstar_reference_closed_form: bad kind");
}

double penalty(const PenaltySpec& spec, const Eigen::VectorXd& theta) {
  if (theta.size() != spec.anchor.size())
    throw config_error("penalty: theta dimension mismatch");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(spec.vstar);
  if (es.info() != Eigen::Success) throw numeric_error("penalty: eigendecomposition failed");
  if (es.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, es.eigenvalues().maxCoeff()))
    throw config_error("penalty: vstar must be positive semidefinite");
  const Eigen::VectorXd diff = theta - spec.anchor;
  const Eigen::VectorXd rotated = es.eigenvectors().transpose() * diff;
  double qf = 0.0;
  for (Eigen::Index i = 0; i < rotated.size(); ++i)
    qf += std::max(es.eigenvalues()[i], 0.0) * rotated[i] * rotated[i];
  const double t = std::sqrt(qf) / spec.eps + spec.kappa_shift;
  return -log_kappa(spec, spec.p(), t) / spec.rho;
}

double unit_ball_volume(int p) {
  if (p < 1) throw config_error("unit_ball_volume: p must be >= 1");
  return std::pow(M_PI, 0.5 * p) / std::tgamma(0.5 * p + 1.0);
}

double entropy_number(int p) {
  if (p < 1) throw config_error("entropy_number: p must be >= 1");
  // dyadic chaining sum with the covering bound N(delta) <= (1 + 2/delta)^p
  double acc = 0.0;
  for (int k = 1; k < 128; ++k) {
    const double inc = std::ldexp(p * std::log(1.0 + std::ldexp(2.0, k)), -k);
    acc += inc;
    if (inc < 1e-12) break;
  }
  return acc;
}

std::pair<double, double> entropy_and_volume(int p) {
  return {unit_ball_volume(p), entropy_number(p)};
}

double bound_Q_main(double rho, double eps, int p, double nu1, double H_eps) {
  if (!(rho > 0.0 && rho < 1.0)) throw config_error("bound_Q_main: rho must lie in (0,1)");
  if (!(nu1 >= 1.0)) throw config_error("bound_Q_main: nu1 must be >= 1");
  return 2.0 * eps * eps * rho * rho / (1.0 - rho) + (1.0 - rho) * entropy_number(p) + H_eps +
         p * std::log(nu1);
}

double bound_Q_ranking(double rho, double eps, int p, double Pstar) {
  if (!(rho > 0.0 && rho < 1.0)) throw config_error("bound_Q_ranking: rho must lie in (0,1)");
  if (!(Pstar > 0.0)) throw config_error("bound_Q_ranking: Pstar must be positive");
  return 2.0 * eps * eps * rho * rho / (1.0 - rho) + (1.0 - rho) * entropy_number(p) +
         std::log(Pstar);
}

double bound_Q_quadratic(double rho, double s, double a, double a1, int p) {
  if (!(rho > 0.0 && rho < 1.0)) throw config_error("bound_Q_quadratic: rho must lie in (0,1)");
  if (!(a1 > 0.0 && a1 <= a * (1.0 + 1e-12)))
    throw config_error("bound_Q_quadratic: need 0 < a1 <= a");
  if (!(s >= 0.0 && s < 1.0)) throw config_error("bound_Q_quadratic: s must lie in [0,1)");
  const double s_implied = 1.0 - (a1 * a1) / (a * a);
  if (std::abs(s - s_implied) > 1e-8 * (1.0 + std::abs(s)))
    throw config_error("bound_Q_quadratic: s inconsistent with (a, a1)");
  const double last =
      1.0 + std::pow(M_PI, 0.5 * p) /
                (unit_ball_volume(p) * std::pow(1.0 - rho, 0.5 * p) * std::pow(a1, p));
  return 2.0 * rho + (1.0 - rho) * entropy_number(p) + std::log(last);
}

RhoEpsCheck check_rho_eps(double rho, double eps, double lambda_star) {
  if (!(rho > 0.0 && rho < 1.0)) throw config_error("check_rho_eps: rho must lie in (0,1)");
  RhoEpsCheck out;
  out.margin = lambda_star - rho * eps / (1.0 - rho);
  out.ok = out.margin >= 0.0;
  return out;
}

double h_eps(const std::function<double(const Eigen::VectorXd&)>& pen, const MatrixField& vfield,
             const GridDomain& grid, double eps, double rho, const HepsOptions& opts) {
  if (!(eps > 0.0)) throw config_error("h_eps: eps must be positive");
  const long G = grid.size();
  const int p = grid.dim();

  std::vector<Eigen::VectorXd> pts(G);
  std::vector<double> pen_vals(G), sqrt_det(G);
  for (long j = 0; j < G; ++j) {
    pts[j] = grid.point(j);
    pen_vals[j] = pen(pts[j]);
    const double det = vfield.eval(pts[j]).determinant();
    sqrt_det[j] = std::sqrt(std::max(det, 0.0));
  }

  // pen_eps(center) = min pen over the metric ball of radius eps.
  auto dist = [&](long i, long j) {
    if (vfield.constant) {
      const Eigen::VectorXd d = pts[i] - pts[j];
      return std::sqrt(std::max(0.0, d.dot(vfield.eval(pts[0]) * d)));
    }
    return path_metric(vfield, pts[i], pts[j], opts.quadrature_steps);
  };

  std::vector<double> contrib(G);
  for (long j = 0; j < G; ++j) {
    double pen_eps = pen_vals[j];
    for (long k = 0; k < G; ++k) {
      if (k == j || pen_vals[k] >= pen_eps) continue;
      if (dist(j, k) <= eps) pen_eps = pen_vals[k];
    }
    contrib[j] = grid.weight(j) * sqrt_det[j] * std::exp(-rho * pen_eps);
  }

  if (opts.check_tail) {
    // Shell test: contributions must decay toward the box boundary, else the
    // large-box surrogate is hiding a divergent integral.
    const Eigen::VectorXd mid = grid.box().center();
    const Eigen::VectorXd half = 0.5 * (grid.box().upper - grid.box().lower);
    double shells[4] = {0.0, 0.0, 0.0, 0.0};
    for (long j = 0; j < G; ++j) {
      double frac = 0.0;
      for (int a = 0; a < p; ++a)
        frac = std::max(frac, std::abs(pts[j][a] - mid[a]) / half[a]);
      const int shell = std::min(3, static_cast<int>(frac * 4.0));
      shells[shell] += contrib[j];
    }
    if (shells[3] > shells[2])
      throw numeric_error("h_eps: outermost shell contribution grows; penalty not integrable over "
                          "the large-box surrogate");
  }

  double integral = 0.0;
  for (long j = 0; j < G; ++j) integral += contrib[j];
  if (!(integral > 0.0)) throw numeric_error("h_eps: integral vanished");
  return std::log(integral / (unit_ball_volume(p) * std::pow(eps, p)));
}

}  // namespace qlc
