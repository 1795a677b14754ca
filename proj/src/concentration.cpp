#include "qlc/concentration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qlc/penalty.hpp"

namespace qlc {

double z_of_set(const SetPred& in_set, const RateFn& rate, const PenFn& pen,
                const GridDomain& grid) {
  if (grid.size() == 0) throw config_error("z_of_set: empty grid");
  double best = std::numeric_limits<double>::infinity();
  for (long j = 0; j < grid.size(); ++j) {
    const Eigen::VectorXd theta = grid.point(j);
    if (in_set(theta)) continue;
    best = std::min(best, rate(theta) - pen(theta));
  }
  return best;
}

double b_of_r(double r, const RateFn& rate, const PenFn& pen, const GridDomain& grid) {
  double sup = -std::numeric_limits<double>::infinity();
  bool nonempty = false;
  for (long j = 0; j < grid.size(); ++j) {
    const Eigen::VectorXd theta = grid.point(j);
    const double m = rate(theta);
    if (m <= r) continue;
    nonempty = true;
    sup = std::max(sup, r + pen(theta) - m);
  }
  if (!nonempty) return 0.0;
  return std::max(0.0, sup);
}

double b_zero(const RateFn& rate, const PenFn& pen, const GridDomain& grid) {
  double sup = 0.0;
  for (long j = 0; j < grid.size(); ++j) {
    const Eigen::VectorXd theta = grid.point(j);
    sup = std::max(sup, pen(theta) - rate(theta));
  }
  return sup;
}

double tail_bound(double r, double rho, double logQ, double b_r) {
  return std::exp(logQ - rho * (r - b_r));
}

double coverage_bound(double z, double rho, double logQ, double b0) {
  return std::exp(logQ - rho * z + rho * b0);
}

MinorantReport quadratic_minorant(const RateFn& rate, const Eigen::MatrixXd& vstar,
                                  const Eigen::VectorXd& theta0, const GridDomain& grid,
                                  double region_radius) {
  MinorantReport rep;
  double best = std::numeric_limits<double>::infinity();
  for (long j = 0; j < grid.size(); ++j) {
    const Eigen::VectorXd theta = grid.point(j);
    const Eigen::VectorXd diff = theta - theta0;
    const double qf = diff.dot(vstar * diff);
    if (qf <= 0.0) continue;  // exclude theta0 itself
    if (std::isfinite(region_radius) && qf > region_radius * region_radius) continue;
    const double m = rate(theta);
    if (m < 0.0) {
      rep.rate_negative = true;
      rep.negative_at = theta;
      continue;
    }
    ++rep.points_checked;
    const double ratio = m / qf;
    if (ratio < best) {
      best = ratio;
      rep.argmin = theta;
    }
  }
  if (rep.points_checked == 0)
    throw config_error("quadratic_minorant: no admissible grid points in the region");
  rep.a2 = best;
  return rep;
}

QuadraticBoundReport quadratic_bound_report(double rho, double a, double a1, const RateFn& rate,
                              const PenFn& pen, const GridDomain& grid,
                              const std::vector<double>& z_grid) {
  if (!(a1 > 0.0 && a1 <= a * (1.0 + 1e-12)))
    throw config_error("quadratic_bound_report: need 0 < a1 <= a");
  QuadraticBoundReport rep;
  rep.rho = rho;
  rep.a = a;
  rep.a1 = std::min(a1, a);
  rep.s = 1.0 - (rep.a1 * rep.a1) / (rep.a * rep.a);
  rep.logQ_s = bound_Q_quadratic(rho, rep.s, rep.a, rep.a1, grid.dim());
  rep.logQ_0 = bound_Q_quadratic(rho, 0.0, rep.a, rep.a, grid.dim());
  rep.z_grid = z_grid;
  rep.b_tolerance = 1e-9;

  rep.b_all_zero = true;
  rep.b_envelope_ok = true;
  for (double z : z_grid) {
    const double t_raw = std::exp(rep.logQ_s - rho * rep.s * z);
    const double c_raw = std::exp(rep.logQ_0 - rho * z);
    rep.tail_bound_raw.push_back(t_raw);
    rep.tail_bound_clamped.push_back(std::min(t_raw, 1.0));
    rep.coverage_bound_raw.push_back(c_raw);
    rep.coverage_bound_clamped.push_back(std::min(c_raw, 1.0));
    const double br = b_of_r(z, rate, pen, grid);
    rep.b_r_values.push_back(br);
    if (br > rep.b_tolerance) rep.b_all_zero = false;
    if (br > (1.0 - rep.s) * z + rep.b_tolerance) rep.b_envelope_ok = false;
  }
  return rep;
}

ConcentrationReport concentration_report(double rho, double logQ, const RateFn& rate,
                                         const PenFn& pen, const GridDomain& grid,
                                         const std::vector<double>& r_grid,
                                         const std::vector<double>& z_grid) {
  ConcentrationReport rep;
  rep.rho = rho;
  rep.logQ = logQ;
  rep.r_grid = r_grid;
  rep.z_grid = z_grid;
  rep.b0 = b_zero(rate, pen, grid);
  for (double r : r_grid) {
    const double br = b_of_r(r, rate, pen, grid);
    rep.b_r.push_back(br);
    const double raw = tail_bound(r, rho, logQ, br);
    rep.tail_raw.push_back(raw);
    rep.tail_clamped.push_back(std::min(raw, 1.0));
  }
  for (double z : z_grid) {
    const double raw = coverage_bound(z, rho, logQ, rep.b0);
    rep.coverage_raw.push_back(raw);
    rep.coverage_clamped.push_back(std::min(raw, 1.0));
  }
  if (!r_grid.empty()) {
    const double r_max = r_grid.back();
    rep.z_of_complement = z_of_set(
        [&](const Eigen::VectorXd& theta) { return rate(theta) - pen(theta) <= r_max; }, rate,
        pen, grid);
  }
  return rep;
}

Ellipsoid root_n_neighborhood(const Eigen::MatrixXd& D1, double r, double n,
                              const Eigen::VectorXd& center) {
  if (!(r > 0.0) || !(n > 0.0))
    throw config_error("root_n_neighborhood: r and n must be positive");
  if (D1.rows() != D1.cols() || D1.rows() != center.size())
    throw config_error("root_n_neighborhood: D1 must be square and match the center");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(D1);
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0)
    throw config_error("root_n_neighborhood: D1 must be symmetric positive definite");
  Ellipsoid e;
  e.D1 = D1;
  e.center = center;
  e.radius_sq = r / n;
  e.principal_radii = std::sqrt(e.radius_sq) * es.eigenvalues().cwiseInverse();
  return e;
}

double refine_until(const std::function<double(const GridDomain&)>& eval, GridDomain grid,
                    double rel_tol, int max_refinements, GridDomain* final_grid,
                    double* last_change) {
  double value = eval(grid);
  double change = std::numeric_limits<double>::infinity();
  for (int k = 0; k < max_refinements; ++k) {
    if (!grid.can_refine()) break;
    GridDomain next = grid.refined();
    const double refined = eval(next);
    change = std::abs(refined - value) / std::max(1e-12, std::abs(refined));
    grid = std::move(next);
    value = refined;
    if (change < rel_tol) break;
  }
  if (final_grid) *final_grid = grid;
  if (last_change) *last_change = change;
  return value;
}

}  // namespace qlc
