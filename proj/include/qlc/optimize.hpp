#pragma once

#include <Eigen/Dense>
#include <functional>

#include "qlc/grid.hpp"

namespace qlc {

struct MaxDiagnostics {
  int iterations = 0;
  double grad_norm = std::numeric_limits<double>::infinity();  // projected, at exit
  double objective = -std::numeric_limits<double>::infinity();
  bool converged = false;
  bool used_fallback = false;  // switched to gradient ascent
  bool on_boundary = false;    // an active bound carries outward gradient
};

struct MaxResult {
  Eigen::VectorXd x;
  MaxDiagnostics diag;
};

using ObjectiveFn = std::function<double(const Eigen::VectorXd&)>;
using GradientFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using HessianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

// Damped Newton ascent with backtracking line search, projected onto the box.
// Falls back to gradient ascent when the (negated) Hessian is not usable.
// Convergence = projected gradient norm <= tol; monotone in the objective.
MaxResult maximize_box(const ObjectiveFn& obj, const GradientFn& grad, const HessianFn& hess,
                       const Box& box, const Eigen::VectorXd& init, double tol, int max_iter);

}  // namespace qlc
