#pragma once

#include <Eigen/Dense>
#include <vector>

#include "qlc/efc.hpp"
#include "qlc/glm.hpp"
#include "qlc/link.hpp"

namespace qlc {

// Single-index quasi-likelihood: L(theta) = mu * sum_i { Y_i g(X_i'theta) - d(g(X_i'theta)) }.
struct SiModel {
  Eigen::MatrixXd X;          // n x d explanatory vectors
  Eigen::VectorXd responses;
  Family family = Family::gaussian(1.0);
  Link link = Link::identity();
  double mu = 1.0;
  Box theta_box;
  Eigen::VectorXd true_f;     // per-observation natural parameters of the data law

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index d() const { return X.cols(); }
  void validate() const;
};

struct MultistartDiagnostics {
  int starts = 0;
  int converged_starts = 0;
  // distinct local maxima, best first (objective, point)
  std::vector<std::pair<double, Eigen::VectorXd>> maxima;
  bool multimodal = false;   // more than one distinct local maximum
  bool tied_maxima = false;  // top maxima within tol of each other
};

struct SiFitResult {
  Eigen::VectorXd theta;
  MaxDiagnostics diag;
  MultistartDiagnostics multistart;
};

double si_loglik(const SiModel& model, const Eigen::VectorXd& theta);
double si_loglik_diff(const SiModel& model, const Eigen::VectorXd& theta,
                      const Eigen::VectorXd& theta0);

// Maximizes sum { d'(f_i) g(X_i'theta) - d(g(X_i'theta)) } over the box by
// multistart local ascent on a deterministic start lattice.
SiFitResult si_target_theta0(const SiModel& model, double tol, int max_iter = 200);

// V(theta) = mu^2 sum n^2(f_i) |g'(X_i'theta)|^2 X_i X_i'
Eigen::MatrixXd si_v_matrix(const SiModel& model, const Eigen::VectorXd& theta,
                            double lambda1_star, const SubgaussianOptions& opts = {});

double si_rate_function(const SiModel& model, const Eigen::VectorXd& theta,
                        const Eigen::VectorXd& theta0);
Eigen::VectorXd si_rate_gradient(const SiModel& model, const Eigen::VectorXd& theta,
                                 const Eigen::VectorXd& theta0);
Eigen::MatrixXd si_rate_hessian(const SiModel& model, const Eigen::VectorXd& theta,
                                const Eigen::VectorXd& theta0);

// Limit of Hess M / mu as mu -> 0 (the identifiability curvature).
Eigen::MatrixXd si_rate_hessian_mu_limit(const SiModel& model, const Eigen::VectorXd& theta);

SiFitResult si_fit(const SiModel& model, double tol, int max_iter,
                   const std::vector<Eigen::VectorXd>& extra_starts = {});

}  // namespace qlc
