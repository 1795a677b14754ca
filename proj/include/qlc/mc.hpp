#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "qlc/glm.hpp"
#include "qlc/penalty.hpp"
#include "qlc/single_index.hpp"

namespace qlc {

struct GlmScenario {
  GlmModel model;
  TrueLaw truth;
  Eigen::VectorXd theta0;
};

struct SiScenario {
  SiModel model;  // true_f carries the data law
  Eigen::VectorXd theta0;
};

// Penalty used inside the penalized supremum. "direct_quadratic" is the quadratic
// quadratic a1^2 (theta-anchor)'V*(theta-anchor) (rho-free); "kappa" resolves a
// PenaltySpec at each rho of the grid; "none" disables the penalty.
struct PenaltyChoice {
  enum class Kind { none, direct_quadratic, kappa };
  Kind kind = Kind::none;
  double a1 = 0.0;
  PenaltySpec spec;  // kappa only; rho is overwritten per evaluation
};

struct SimConfig {
  std::variant<GlmScenario, SiScenario> scenario;
  long reps = 1000;
  std::uint64_t master_seed = 1;
  std::vector<double> rho_grid;
  std::vector<double> r_grid;
  std::vector<double> z_grid;
  PenaltyChoice penalty;
  Eigen::MatrixXd vstar;       // direct-quadratic form (and kappa default)
  int theta_grid_points = 201;
  double grid_refine_tol = 0.01;
  int grid_max_refinements = 3;
  double fit_tol = 1e-9;
  int fit_max_iter = 100;
  double widen_factor = 4.0;   // theta-grid widening for the divergence check
  double divergence_tol = 0.01;
  double max_failure_rate = 0.01;

  const Eigen::VectorXd& theta0() const;
  int p() const;
  const Box& theta_box() const;
  void validate() const;
};

struct ExpMomentEstimate {
  double rho = 0.0;
  double estimate = 0.0;
  double stderr_jackknife = 0.0;
  double log_estimate = 0.0;
  double widened_estimate = 0.0;
  bool diverged = false;  // grid widening moved the estimate beyond tolerance
};

struct SimResult {
  long reps_requested = 0;
  long reps_used = 0;
  long fit_failures = 0;

  std::vector<double> rho_grid, r_grid, z_grid;

  // per-replication records (fit failures excluded)
  std::vector<Eigen::VectorXd> theta_hat;
  std::vector<double> L_hat;  // L(theta_hat, theta0)
  std::vector<double> M_hat;  // M(theta_hat, theta0)
  std::vector<std::vector<double>> sup_penalized;       // [rho and theta grid][rep]
  std::vector<std::vector<double>> sup_penalized_wide;  // widened theta grid

  std::vector<double> empirical_tail;         // per r: P(M_hat > r)
  std::vector<double> empirical_tail_se;      // binomial stderr
  std::vector<double> empirical_noncoverage;  // per z: P(L_hat > z)
  std::vector<double> empirical_noncoverage_se;

  std::vector<ExpMomentEstimate> exp_moments;  // one per rho

  int grid_points_used = 0;
  double grid_refine_change = 0.0;
  bool widened_grid_available = true;
};

// Deterministic given (config, master_seed) regardless of the worker count.
SimResult simulate(const SimConfig& config, int workers = 1);

// Estimate of E exp{rho * sup_grid [L(theta,theta0) + M(theta,theta0) - pen(theta)]}.
ExpMomentEstimate empirical_exp_moment(const SimResult& result, double rho);
ExpMomentEstimate empirical_exp_moment(const SimConfig& config, double rho, int workers = 1);

struct CoverageRow {
  double z = 0.0;
  double empirical = 0.0;
  double stderr_binomial = 0.0;
};
std::vector<CoverageRow> coverage_experiment(const SimResult& result);
std::vector<CoverageRow> coverage_experiment(const SimConfig& config, int workers = 1);

}  // namespace qlc
