#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "qlc/grid.hpp"

namespace qlc {

// Symmetric PSD matrix field on the grid domain.
struct MatrixField {
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> eval;
  bool constant = false;

  static MatrixField constant_field(Eigen::MatrixXd H0) {
    MatrixField f;
    f.constant = true;
    f.eval = [H = std::move(H0)](const Eigen::VectorXd&) { return H; };
    return f;
  }
};

struct RandomFieldSpec {
  GridDomain domain;
  MatrixField field;       // H(u)
  int quadrature_steps = 64;  // trapezoid panels for the path integral
};

// D^2(u,u') = ||u-u'||^2 * int_0^1 gamma' H^2(u + t*d*gamma) gamma dt.
double semimetric(const RandomFieldSpec& spec, const Eigen::VectorXd& a,
                  const Eigen::VectorXd& b);

// Same path-quadrature metric for an already-squared field M (= H^2 or V).
double path_metric(const MatrixField& m_field, const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                   int panels);

// Greedy cover (farthest-point traversal) of the grid trace of B(eps, center)
// by balls B(eps0, .) centered at grid points. Upper bound on the minimal cover.
long covering_number(const RandomFieldSpec& spec, double eps0, double eps,
                     const Eigen::VectorXd& center);

struct CoveringReport {
  Eigen::VectorXd center;
  double eps = 0.0;
  std::vector<long> counts;   // N(2^-k eps, eps, center), k = 1..K
  int K = 0;
  double entropy = 0.0;       // Q(eps, center)
  long ball_points = 0;
};

// Q(eps, u0) = sum_k 2^-k log N(2^-k eps, eps, u0), truncated once the count
// saturates at the ball cardinality (tail added in closed form).
CoveringReport local_entropy(const RandomFieldSpec& spec, double eps,
                             const Eigen::VectorXd& center);

// Q*(Upsilon): maximum of the local entropies over grid centers.
double local_entropy_max(const RandomFieldSpec& spec, double eps, long center_stride = 1);

// Continuity constant of H^2 over eps-balls; >= 1, exact supremum over
// directions via generalized eigenvalues on every admissible grid pair.
double nu1_estimate(const RandomFieldSpec& spec, double eps);

struct MaxIntegralCheck {
  double lhs = 0.0;  // sup f
  double rhs = 0.0;  // nu * int f*(u) / pi(B(eps,u)) dpi(u)
  double nu = 1.0;
  bool ok = false;
};

// Verifies sup f <= nu * int f* / pi(B) dpi on the grid, f* the local sup.
MaxIntegralCheck local_max_integral_check(const std::vector<double>& f_values,
                                          const RandomFieldSpec& spec, double eps, double nu);

// log Q(rho, eps) = 2 eps^2 rho^2/(1-rho) + (1-rho) Q* + log nu + H_eps.
double global_bound_constants(double rho, double eps, double Qstar, double nu, double H_eps);

}  // namespace qlc
