#pragma once

#include <Eigen/Dense>
#include <vector>

#include "qlc/efc.hpp"
#include "qlc/grid.hpp"
#include "qlc/optimize.hpp"
#include "qlc/truth.hpp"

namespace qlc {

// Generalized linear quasi-likelihood: L(theta) = mu * sum_i { Y_i Psi_i'theta - d(Psi_i'theta) }.
struct GlmModel {
  Eigen::MatrixXd design;    // n x p, rows Psi_i
  Eigen::VectorXd responses; // Y
  Family family = Family::gaussian(1.0);
  double mu = 1.0;
  Box theta_box;

  Eigen::Index n() const { return design.rows(); }
  Eigen::Index p() const { return design.cols(); }
  void validate(bool check_support = true) const;
};

struct GlmGeometry {
  Eigen::VectorXd n_scales;  // per-observation subgaussian scales
  Eigen::MatrixXd V1;        // sum n_i^2 Psi_i Psi_i'
  Eigen::MatrixXd V;         // mu^2 V1
  double lambda1_star = 0.0;
};

struct TargetSpec {
  Eigen::VectorXd true_means;
  Eigen::VectorXd theta0;
  double grad_residual = 0.0;
};

struct IdentifiabilityReport {
  double a1 = 0.0;           // largest a1 with (1/2) sum dd" PsiPsi' >= 2 a1 V1 on the grid
  double a = 0.0;            // smallest a with (1/2) sum s_i^2 PsiPsi' <= a^2 V1
  double s = 0.0;            // 1 - a1^2 / a^2
  double mu_max = 0.0;       // admissible scaling a1 / a^2
  bool mu_admissible = false;
  bool rank_deficient = false;
  std::vector<Eigen::VectorXd> region;  // grid points checked
};

struct GlmConditionReport {
  // (i) mu * n_i * |Psi_i'(theta - theta0)| <= lambda1* at the box corners
  double worst_theta_term = 0.0;
  bool theta_condition_ok = false;
  // (ii) lambda* * n_i |gamma'Psi_i| / sqrt(gamma'V1 gamma) <= lambda1*
  double worst_direction_ratio = 0.0;       // sup over i and directions (exact)
  double worst_sampled_ratio = 0.0;         // same, on the sphere sample
  double lambda_star_max = 0.0;             // largest admissible lambda*
  bool direction_condition_ok = false;
  double lambda_star = 0.0;
  double lambda1_star = 0.0;
};

struct FitResult {
  Eigen::VectorXd theta;
  MaxDiagnostics diag;
};

double quasi_loglik(const GlmModel& model, const Eigen::VectorXd& theta);
Eigen::VectorXd quasi_loglik_grad(const GlmModel& model, const Eigen::VectorXd& theta);
Eigen::MatrixXd quasi_loglik_hess(const GlmModel& model, const Eigen::VectorXd& theta);

// L(theta, theta0) = L(theta) - L(theta0)
double loglik_diff(const GlmModel& model, const Eigen::VectorXd& theta,
                   const Eigen::VectorXd& theta0);

FitResult fit_qmle(const GlmModel& model, const Eigen::VectorXd& init, double tol, int max_iter);

// theta0 solves sum { b_i - d'(Psi_i'theta) } Psi_i = 0; mu cancels.
TargetSpec target_theta0(const Eigen::MatrixXd& design, const Family& family,
                         const Eigen::VectorXd& true_means, double mu, double tol,
                         const Box& box, int max_iter = 200);

// Rate function M(theta, theta0); the log-moment term is computed under the
// true response law.
double rate_function(const GlmModel& model, const TrueLaw& truth, const Eigen::VectorXd& theta,
                     const Eigen::VectorXd& theta0);

GlmGeometry glm_geometry(const GlmModel& model, const TrueLaw& truth, double lambda1_star,
                         const SubgaussianOptions& opts = {});

IdentifiabilityReport identifiability_constants(const GlmModel& model, const TrueLaw& truth,
                                                const Eigen::VectorXd& theta0,
                                                const GlmGeometry& geometry,
                                                const std::vector<Eigen::VectorXd>& grid);

GlmConditionReport check_glm_conditions(const GlmModel& model, const GlmGeometry& geometry,
                                        const Eigen::VectorXd& theta0, double lambda_star,
                                        double lambda1_star, int sphere_samples = 256);

}  // namespace qlc
