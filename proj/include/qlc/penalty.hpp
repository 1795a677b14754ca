#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>

#include "qlc/chaining.hpp"
#include "qlc/grid.hpp"

namespace qlc {

enum class PenaltyKind { quadratic, logarithmic, hybrid };

PenaltyKind penalty_kind_from_string(const std::string& token);
std::string to_string(PenaltyKind kind);

// Weight kappa and the penalty pen(theta) = -rho^-1 log kappa( eps^-1 ||sqrtV* (theta-theta0)|| + shift ).
//   quadratic:   kappa1(t) = exp(-delta1 (t-1)_+^2)
//   logarithmic: kappa2(t) = (t+1)^(-p-delta2)
//   hybrid:      kappa1 for t >= r_threshold, kappa2 below
struct PenaltySpec {
  PenaltyKind kind = PenaltyKind::quadratic;
  double delta1 = 1.0;
  double delta2 = 1.0;
  double r_threshold = 1.0;  // hybrid switch radius
  double eps = 1.0;
  double rho = 0.5;
  int kappa_shift = 1;  // argument shift inside kappa; 1 is the definition
  Eigen::VectorXd anchor;
  Eigen::MatrixXd vstar;

  int p() const { return static_cast<int>(anchor.size()); }
  void validate() const;
};

double log_kappa(const PenaltySpec& spec, int p, double t);
double kappa(const PenaltySpec& spec, int p, double t);

// P* = p * int_0^inf kappa(t) t^(p-1) dt by adaptive quadrature; the numeric
// value is authoritative. Throws numeric_error when the tail test detects a
// divergent integral.
double pstar(const PenaltySpec& spec, int p, double quadrature_tol = 1e-12);

// The closed-form / displayed reference values (known to be loose for p >= 2).
double pstar_reference_closed_form(const PenaltySpec& spec, int p);

double penalty(const PenaltySpec& spec, const Eigen::VectorXd& theta);

double unit_ball_volume(int p);  // omega_p
double entropy_number(int p);    // Q_p, dyadic covering sum for the unit ball
std::pair<double, double> entropy_and_volume(int p);  // (omega_p, Q_p)

// log Q(rho) assemblies.
double bound_Q_main(double rho, double eps, int p, double nu1, double H_eps);
double bound_Q_ranking(double rho, double eps, int p, double Pstar);
double bound_Q_quadratic(double rho, double s, double a, double a1, int p);

struct RhoEpsCheck {
  bool ok = false;
  double margin = 0.0;  // lambda_star - rho*eps/(1-rho)
};
RhoEpsCheck check_rho_eps(double rho, double eps, double lambda_star);

struct HepsOptions {
  int quadrature_steps = 32;  // panels for the path metric when V varies
  bool check_tail = false;    // require shell contributions to decay outward
};

// H_eps(rho) = log{ omega_p^-1 eps^-p int sqrt(det V(theta)) exp(-rho pen_eps(theta)) dtheta }
// on the grid, with pen_eps the infimum of pen over the metric ball of radius eps.
double h_eps(const std::function<double(const Eigen::VectorXd&)>& pen, const MatrixField& vfield,
             const GridDomain& grid, double eps, double rho, const HepsOptions& opts = {});

// Serialized with every report for reproducibility.
struct BoundConstants {
  double rho = 0.0;
  double eps = 0.0;
  int p = 0;
  double entropy_Qp = 0.0;
  double omega_p = 0.0;
  double nu1 = 1.0;
  double Pstar = 0.0;
  double H_eps = 0.0;
  double s = 0.0;
  double a = 0.0;
  double a1 = 0.0;
  double log_Q = 0.0;
  std::string C_mode;  // "main" | "ranking" | "quadratic"
};

}  // namespace qlc
