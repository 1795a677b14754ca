#include "qlc/glm.hpp"

#include <cmath>
#include <sstream>

namespace qlc {

namespace {

// Orthonormal basis W of range(V1) scaled so that W' V1 W = I; flags rank loss.
Eigen::MatrixXd whitener(const Eigen::MatrixXd& V1, bool* rank_deficient) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(V1);
  if (es.info() != Eigen::Success) throw numeric_error("eigendecomposition of V1 failed");
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double cutoff = std::max(ev.maxCoeff(), 0.0) * 1e-12;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev[i] > cutoff) keep.push_back(i);
  if (rank_deficient) *rank_deficient = keep.size() < static_cast<std::size_t>(ev.size());
  if (keep.empty()) throw numeric_error("V1 is zero; no geometry to work with");
  Eigen::MatrixXd W(V1.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j)
    W.col(static_cast<Eigen::Index>(j)) =
        es.eigenvectors().col(keep[j]) / std::sqrt(ev[keep[j]]);
  return W;
}

// Deterministic direction sample on the unit sphere.
std::vector<Eigen::VectorXd> sphere_sample(int dim, int count) {
  std::vector<Eigen::VectorXd> dirs;
  dirs.reserve(count);
  if (dim == 1) {
    dirs.push_back(Eigen::VectorXd::Constant(1, 1.0));
    dirs.push_back(Eigen::VectorXd::Constant(1, -1.0));
    return dirs;
  }
  std::uint64_t state = 0x2545f4914f6cdd1dULL;
  for (int k = 0; k < count; ++k) {
    Eigen::VectorXd g(dim);
    for (int a = 0; a < dim; ++a) {
      // low-cost deterministic pseudo-normals via splitmix + Box-Muller
      const double u1 = (splitmix64_next(state) >> 11) * 0x1.0p-53 + 1e-16;
      const double u2 = (splitmix64_next(state) >> 11) * 0x1.0p-53;
      g[a] = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }
    const double nrm = g.norm();
    if (nrm > 1e-12) dirs.push_back(g / nrm);
  }
  return dirs;
}

}  // namespace

void GlmModel::validate(bool check_support) const {
  if (design.rows() < 1 || design.cols() < 1)
    throw config_error("glm: design must be nonempty");
  if (design.rows() < design.cols())
    throw config_error("glm: need n >= p");
  if (responses.size() != design.rows())
    throw config_error("glm: responses length must equal the number of design rows");
  if (!design.allFinite() || !responses.allFinite())
    throw config_error("glm: design and responses must be finite");
  if (!(mu > 0.0)) throw config_error("glm: mu must be positive");
  theta_box.validate();
  if (theta_box.dim() != design.cols())
    throw config_error("glm: theta box dimension must equal p");
  if (!check_support) return;
  for (Eigen::Index i = 0; i < responses.size(); ++i)
    if (!family.supports_response(responses[i])) {
      std::ostringstream msg;
      msg << "glm: response " << responses[i] << " at row " << i << " outside the "
          << family.name() << " support";
      throw config_error(msg.str());
    }
}

double quasi_loglik(const GlmModel& model, const Eigen::VectorXd& theta) {
  const Eigen::VectorXd eta = model.design * theta;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i)
    acc += model.responses[i] * eta[i] - model.family.log_partition(eta[i]);
  return model.mu * acc;
}

Eigen::VectorXd quasi_loglik_grad(const GlmModel& model, const Eigen::VectorXd& theta) {
  const Eigen::VectorXd eta = model.design * theta;
  Eigen::VectorXd resid(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i)
    resid[i] = model.responses[i] - model.family.mean_value(eta[i]);
  return model.mu * (model.design.transpose() * resid);
}

Eigen::MatrixXd quasi_loglik_hess(const GlmModel& model, const Eigen::VectorXd& theta) {
  const Eigen::VectorXd eta = model.design * theta;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(model.p(), model.p());
  for (Eigen::Index i = 0; i < eta.size(); ++i)
    H -= model.family.variance(eta[i]) * model.design.row(i).transpose() * model.design.row(i);
  return model.mu * H;
}

double loglik_diff(const GlmModel& model, const Eigen::VectorXd& theta,
                   const Eigen::VectorXd& theta0) {
  return quasi_loglik(model, theta) - quasi_loglik(model, theta0);
}

FitResult fit_qmle(const GlmModel& model, const Eigen::VectorXd& init, double tol, int max_iter) {
  if (!(tol > 0.0)) throw config_error("fit_qmle: tol must be positive");
  auto obj = [&](const Eigen::VectorXd& th) { return quasi_loglik(model, th); };
  auto grad = [&](const Eigen::VectorXd& th) { return quasi_loglik_grad(model, th); };
  auto hess = [&](const Eigen::VectorXd& th) { return quasi_loglik_hess(model, th); };
  MaxResult r = maximize_box(obj, grad, hess, model.theta_box, init, tol, max_iter);
  return FitResult{r.x, r.diag};
}

TargetSpec target_theta0(const Eigen::MatrixXd& design, const Family& family,
                         const Eigen::VectorXd& true_means, double mu, double tol,
                         const Box& box, int max_iter) {
  if (true_means.size() != design.rows())
    throw config_error("target_theta0: true_means length must equal design rows");
  (void)mu;  // cancels in the score equation

  GlmModel deterministic;
  deterministic.design = design;
  deterministic.responses = true_means;  // b_i in place of Y_i
  deterministic.family = family;
  deterministic.mu = 1.0;
  deterministic.theta_box = box;
  deterministic.validate(/*check_support=*/false);
  for (Eigen::Index i = 0; i < true_means.size(); ++i)
    if (!family.mean_in_closure(true_means[i]))
      throw domain_error("target_theta0: mean " + std::to_string(true_means[i]) +
                         " outside the achievable range of " + family.name());

  FitResult fit = fit_qmle(deterministic, box.center(), tol, max_iter);
  if (!fit.diag.converged) {
    std::ostringstream msg;
    msg << "target_theta0 did not converge: gradient norm " << fit.diag.grad_norm << " after "
        << fit.diag.iterations << " iterations";
    throw numeric_error(msg.str());
  }
  TargetSpec spec;
  spec.true_means = true_means;
  spec.theta0 = fit.theta;
  spec.grad_residual = quasi_loglik_grad(deterministic, fit.theta).norm();
  return spec;
}

double rate_function(const GlmModel& model, const TrueLaw& truth, const Eigen::VectorXd& theta,
                     const Eigen::VectorXd& theta0) {
  const Eigen::VectorXd eta = model.design * theta;
  const Eigen::VectorXd eta0 = model.design * theta0;
  double deterministic = 0.0;
  double moment = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double b = truth.mean(i);
    deterministic += model.family.log_partition(eta[i]) - model.family.log_partition(eta0[i]) -
                     (eta[i] - eta0[i]) * b;
    moment += truth.cumulant(i, model.mu * (eta[i] - eta0[i]));
  }
  return model.mu * deterministic - moment;
}

GlmGeometry glm_geometry(const GlmModel& model, const TrueLaw& truth, double lambda1_star,
                         const SubgaussianOptions& opts) {
  GlmGeometry geo;
  geo.lambda1_star = lambda1_star;
  geo.n_scales.resize(model.n());
  for (Eigen::Index i = 0; i < model.n(); ++i)
    geo.n_scales[i] = truth.subgaussian_scale(i, lambda1_star, opts);
  geo.V1 = Eigen::MatrixXd::Zero(model.p(), model.p());
  for (Eigen::Index i = 0; i < model.n(); ++i)
    geo.V1 += geo.n_scales[i] * geo.n_scales[i] * model.design.row(i).transpose() *
              model.design.row(i);
  geo.V = model.mu * model.mu * geo.V1;
  return geo;
}

IdentifiabilityReport identifiability_constants(const GlmModel& model, const TrueLaw& truth,
                                                const Eigen::VectorXd& theta0,
                                                const GlmGeometry& geometry,
                                                const std::vector<Eigen::VectorXd>& grid) {
  if (grid.empty()) throw config_error("identifiability_constants: empty grid");
  IdentifiabilityReport rep;
  const Eigen::MatrixXd W = whitener(geometry.V1, &rep.rank_deficient);

  double lam_min = std::numeric_limits<double>::infinity();
  double lam_max = 0.0;
  for (const Eigen::VectorXd& theta : grid) {
    const Eigen::VectorXd eta = model.design * theta;
    const Eigen::VectorXd eta0 = model.design * theta0;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(model.p(), model.p());
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(model.p(), model.p());
    for (Eigen::Index i = 0; i < model.n(); ++i) {
      const Eigen::MatrixXd outer = model.design.row(i).transpose() * model.design.row(i);
      A += 0.5 * model.family.variance(eta[i]) * outer;
      B += 0.5 * truth.tilted_variance(i, model.mu * (eta[i] - eta0[i])) * outer;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esA(W.transpose() * A * W);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esB(W.transpose() * B * W);
    lam_min = std::min(lam_min, esA.eigenvalues().minCoeff());
    lam_max = std::max(lam_max, esB.eigenvalues().maxCoeff());
  }
  if (!(lam_min > 0.0)) throw numeric_error("identifiability: curvature bound a1 is not positive");
  rep.a1 = 0.5 * lam_min;
  rep.a = std::sqrt(lam_max);
  if (rep.a1 > rep.a) rep.a1 = rep.a;  // keep 0 < a1 <= a on near-degenerate grids
  rep.s = 1.0 - (rep.a1 * rep.a1) / (rep.a * rep.a);
  rep.mu_max = rep.a1 / (rep.a * rep.a);
  rep.mu_admissible = model.mu <= rep.mu_max + 1e-12;
  rep.region = grid;
  return rep;
}

GlmConditionReport check_glm_conditions(const GlmModel& model, const GlmGeometry& geometry,
                                        const Eigen::VectorXd& theta0, double lambda_star,
                                        double lambda1_star, int sphere_samples) {
  GlmConditionReport rep;
  rep.lambda_star = lambda_star;
  rep.lambda1_star = lambda1_star;

  // (i): linear in theta, so the corners of the box are the worst case.
  double worst = 0.0;
  for (const Eigen::VectorXd& corner : model.theta_box.corners()) {
    const Eigen::VectorXd shift = model.design * (corner - theta0);
    for (Eigen::Index i = 0; i < model.n(); ++i)
      worst = std::max(worst, model.mu * geometry.n_scales[i] * std::abs(shift[i]));
  }
  rep.worst_theta_term = worst;
  rep.theta_condition_ok = worst <= lambda1_star;

  // (ii): sup over directions of n_i |gamma'Psi_i| / sqrt(gamma'V1 gamma)
  // equals n_i || V1^{-1/2} Psi_i || on the range of V1.
  bool rank_deficient = false;
  const Eigen::MatrixXd W = whitener(geometry.V1, &rank_deficient);
  double coef = 0.0;
  for (Eigen::Index i = 0; i < model.n(); ++i) {
    const Eigen::VectorXd wpsi = W.transpose() * model.design.row(i).transpose();
    coef = std::max(coef, geometry.n_scales[i] * wpsi.norm());
  }
  rep.worst_direction_ratio = coef;
  rep.lambda_star_max = coef > 0.0 ? lambda1_star / coef : std::numeric_limits<double>::infinity();
  rep.direction_condition_ok = lambda_star * coef <= lambda1_star * (1.0 + 1e-12);

  double sampled = 0.0;
  for (const Eigen::VectorXd& gamma : sphere_sample(static_cast<int>(model.p()), sphere_samples)) {
    const double denom = std::sqrt(gamma.dot(geometry.V1 * gamma));
    if (denom <= 0.0) continue;
    for (Eigen::Index i = 0; i < model.n(); ++i) {
      const double num = geometry.n_scales[i] * std::abs(gamma.dot(model.design.row(i)));
      sampled = std::max(sampled, num / denom);
    }
  }
  rep.worst_sampled_ratio = sampled;
  return rep;
}

}  // namespace qlc
