#include "qlc/optimize.hpp"

#include <cmath>

namespace qlc {

namespace {

// Zero out gradient components that point outside an active bound.
Eigen::VectorXd projected_gradient(const Eigen::VectorXd& g, const Eigen::VectorXd& x,
                                   const Box& box) {
  Eigen::VectorXd pg = g;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (x[i] <= box.lower[i] && g[i] < 0.0) pg[i] = 0.0;
    if (x[i] >= box.upper[i] && g[i] > 0.0) pg[i] = 0.0;
  }
  return pg;
}

}  // namespace

MaxResult maximize_box(const ObjectiveFn& obj, const GradientFn& grad, const HessianFn& hess,
                       const Box& box, const Eigen::VectorXd& init, double tol, int max_iter) {
  MaxResult res;
  res.x = box.project(init);
  double f = obj(res.x);

  for (int it = 0; it <= max_iter; ++it) {
    const Eigen::VectorXd g = grad(res.x);
    const Eigen::VectorXd pg = projected_gradient(g, res.x, box);
    res.diag.iterations = it;
    res.diag.grad_norm = pg.norm();
    res.diag.objective = f;
    res.diag.on_boundary = (pg - g).norm() > 0.0;
    if (res.diag.grad_norm <= tol) {
      res.diag.converged = true;
      return res;
    }
    if (it == max_iter) break;

    // Newton direction on the negated Hessian, ridged until it is an
    // ascent direction; plain gradient as the last resort.
    Eigen::VectorXd dir;
    bool have_newton = false;
    Eigen::MatrixXd negH = -hess(res.x);
    const double scale = std::max(1.0, negH.cwiseAbs().maxCoeff());
    for (double ridge = 0.0; ridge <= 1e6 * scale; ridge = (ridge == 0.0 ? 1e-10 * scale : 10 * ridge)) {
      Eigen::MatrixXd H = negH;
      H.diagonal().array() += ridge;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
      if (ldlt.info() != Eigen::Success) continue;
      Eigen::VectorXd cand = ldlt.solve(g);
      if (!cand.allFinite()) continue;
      if (cand.dot(g) > 1e-14 * cand.norm() * g.norm()) {
        dir = std::move(cand);
        have_newton = true;
        break;
      }
    }
    if (!have_newton) {
      dir = g;
      res.diag.used_fallback = true;
    }

    // Backtracking on the projected path. Near the optimum the objective is
    // numerically flat along the step, so sub-ulp decreases are accepted;
    // otherwise Newton stalls just above the gradient tolerance.
    const double flat_tol =
        32.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f));
    double t = 1.0;
    bool improved = false;
    while (t >= 1e-14) {
      const Eigen::VectorXd xn = box.project(res.x + t * dir);
      const double fn = obj(xn);
      if (std::isfinite(fn) && fn >= f - flat_tol &&
          fn >= f + 1e-4 * g.dot(xn - res.x) - flat_tol) {
        res.x = xn;
        f = std::max(f, fn);  // report the best objective seen
        improved = true;
        break;
      }
      t *= 0.5;
    }
    if (!improved) {
      // Line search stagnated (projection blocks every direction).
      res.diag.converged = false;
      return res;
    }
  }
  return res;
}

}  // namespace qlc
