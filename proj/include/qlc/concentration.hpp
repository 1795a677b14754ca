#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "qlc/grid.hpp"

namespace qlc {

using RateFn = std::function<double(const Eigen::VectorXd&)>;
using PenFn = std::function<double(const Eigen::VectorXd&)>;
using SetPred = std::function<bool(const Eigen::VectorXd&)>;

// z(A) = inf over grid points outside A of { M(theta) - pen(theta) }; +inf when
// A covers the grid.
double z_of_set(const SetPred& in_set, const RateFn& rate, const PenFn& pen,
                const GridDomain& grid);

// b(r) = max(0, sup over grid points with M > r of { r + pen - M }).
double b_of_r(double r, const RateFn& rate, const PenFn& pen, const GridDomain& grid);

// b = b(0) = sup over the grid of [pen - M]_+.
double b_zero(const RateFn& rate, const PenFn& pen, const GridDomain& grid);

// Raw bounds; clamping to [0,1] happens at the report layer.
double tail_bound(double r, double rho, double logQ, double b_r);
double coverage_bound(double z, double rho, double logQ, double b0);

struct MinorantReport {
  double a2 = 0.0;  // largest a^2 with M >= a^2 (theta-theta0)'V*(theta-theta0)
  Eigen::VectorXd argmin;
  bool rate_negative = false;        // a negative M was encountered
  Eigen::VectorXd negative_at;
  long points_checked = 0;
};

MinorantReport quadratic_minorant(const RateFn& rate, const Eigen::MatrixXd& vstar,
                                  const Eigen::VectorXd& theta0, const GridDomain& grid,
                                  double region_radius);

struct QuadraticBoundReport {
  double rho = 0.0, a = 0.0, a1 = 0.0, s = 0.0;
  double logQ_s = 0.0;  // constant with the configured a1
  double logQ_0 = 0.0;  // constant at a1 = a (used for coverage)
  std::vector<double> z_grid;
  std::vector<double> tail_bound_raw, tail_bound_clamped;          // Q(rho,s) e^{-rho s z}
  std::vector<double> coverage_bound_raw, coverage_bound_clamped;  // Q(rho,0) e^{-rho z}
  std::vector<double> b_r_values;  // numeric b(r) at the z grid
  bool b_all_zero = false;         // measured: b(r) vanishes on the grid
  bool b_envelope_ok = false;      // measured: b(r) <= (1-s) r everywhere
  double b_tolerance = 0.0;
};

// Constants and bound curves for the quadratic penalty; b(r) is evaluated
// numerically and both the zero and the (1-s)r readings are surfaced.
QuadraticBoundReport quadratic_bound_report(double rho, double a, double a1, const RateFn& rate,
                              const PenFn& pen, const GridDomain& grid,
                              const std::vector<double>& z_grid);

// Tail/coverage bound curves over r and z grids, with everything needed to
// recompute each bound from the stored fields.
struct ConcentrationReport {
  double rho = 0.0;
  double logQ = 0.0;
  std::vector<double> r_grid, z_grid;
  std::vector<double> b_r;         // b(r) per r
  std::vector<double> tail_raw, tail_clamped;
  std::vector<double> coverage_raw, coverage_clamped;
  double b0 = 0.0;                 // b(0)
  double z_of_complement = 0.0;    // z(A'(r_max)) for the largest r queried
};

ConcentrationReport concentration_report(double rho, double logQ, const RateFn& rate,
                                         const PenFn& pen, const GridDomain& grid,
                                         const std::vector<double>& r_grid,
                                         const std::vector<double>& z_grid);

struct Ellipsoid {
  Eigen::MatrixXd D1;
  Eigen::VectorXd center;
  double radius_sq = 0.0;             // (theta-c)'D1^2(theta-c) <= radius_sq
  Eigen::VectorXd principal_radii;    // sqrt(radius_sq) / eigenvalues of D1

  bool contains(const Eigen::VectorXd& theta) const {
    const Eigen::VectorXd d = D1 * (theta - center);
    return d.squaredNorm() <= radius_sq;
  }
};

Ellipsoid root_n_neighborhood(const Eigen::MatrixXd& D1, double r, double n,
                              const Eigen::VectorXd& center);

// Doubles the grid until the functional changes by less than rel_tol.
double refine_until(const std::function<double(const GridDomain&)>& eval, GridDomain grid,
                    double rel_tol, int max_refinements, GridDomain* final_grid = nullptr,
                    double* last_change = nullptr);

}  // namespace qlc
