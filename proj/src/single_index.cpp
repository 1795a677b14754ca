#include "qlc/single_index.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace qlc {

namespace {

// 3^d lattice over the box (quarter points per axis) for multistart ascent.
std::vector<Eigen::VectorXd> start_lattice(const Box& box) {
  const int d = box.dim();
  std::vector<Eigen::VectorXd> starts;
  long total = 1;
  for (int a = 0; a < d; ++a) total *= 3;
  starts.reserve(total);
  for (long code = 0; code < total; ++code) {
    Eigen::VectorXd s(d);
    long c = code;
    for (int a = 0; a < d; ++a) {
      const int which = static_cast<int>(c % 3);
      c /= 3;
      const double w = box.upper[a] - box.lower[a];
      s[a] = box.lower[a] + w * (0.25 + 0.25 * which);
    }
    starts.push_back(std::move(s));
  }
  return starts;
}

bool lex_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) return true;
    if (a[i] > b[i]) return false;
  }
  return false;
}

SiFitResult multistart_maximize(const ObjectiveFn& obj, const GradientFn& grad,
                                const HessianFn& hess, const Box& box, double tol, int max_iter,
                                const std::vector<Eigen::VectorXd>& extra_starts) {
  std::vector<Eigen::VectorXd> starts = start_lattice(box);
  for (const auto& s : extra_starts) starts.push_back(box.project(s));

  SiFitResult out;
  out.multistart.starts = static_cast<int>(starts.size());
  std::vector<std::pair<double, Eigen::VectorXd>> maxima;
  MaxResult best;
  bool have_best = false;

  for (const Eigen::VectorXd& s : starts) {
    MaxResult r = maximize_box(obj, grad, hess, box, s, tol, max_iter);
    if (r.diag.converged) ++out.multistart.converged_starts;
    // cluster local maxima; points within the merge radius are one maximum
    const double merge_radius = std::max(1e-6, 10.0 * tol);
    bool merged = false;
    for (auto& m : maxima) {
      if ((m.second - r.x).lpNorm<Eigen::Infinity>() <= merge_radius) {
        if (r.diag.objective > m.first) m = {r.diag.objective, r.x};
        merged = true;
        break;
      }
    }
    if (!merged) maxima.emplace_back(r.diag.objective, r.x);

    const bool better = !have_best || r.diag.objective > best.diag.objective + 1e-12 ||
                        (std::abs(r.diag.objective - best.diag.objective) <= 1e-12 &&
                         lex_less(r.x, best.x));
    if (better) {
      best = std::move(r);
      have_best = true;
    }
  }

  std::sort(maxima.begin(), maxima.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return lex_less(a.second, b.second);
  });
  out.multistart.maxima = std::move(maxima);
  out.multistart.multimodal = out.multistart.maxima.size() > 1;
  if (out.multistart.maxima.size() > 1)
    out.multistart.tied_maxima =
        out.multistart.maxima[0].first - out.multistart.maxima[1].first <= tol;
  out.theta = best.x;
  out.diag = best.diag;
  return out;
}

}  // namespace

void SiModel::validate() const {
  if (X.rows() < 1 || X.cols() < 1) throw config_error("single_index: X must be nonempty");
  if (responses.size() != X.rows())
    throw config_error("single_index: responses length must equal the number of rows of X");
  if (!X.allFinite() || !responses.allFinite())
    throw config_error("single_index: X and responses must be finite");
  if (!(mu > 0.0)) throw config_error("single_index: mu must be positive");
  theta_box.validate();
  if (theta_box.dim() != X.cols())
    throw config_error("single_index: theta box dimension must equal d");
  if (true_f.size() != 0 && true_f.size() != X.rows())
    throw config_error("single_index: true_f length must equal the number of rows of X");
  // link values must stay inside the natural domain over the box corners
  for (const Eigen::VectorXd& corner : theta_box.corners()) {
    const Eigen::VectorXd u = X * corner;
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      const double eta = link.g(u[i]);
      if (!family.natural_domain().contains(eta)) {
        std::ostringstream msg;
        msg << "single_index: g(X_" << i << "'theta) = " << eta
            << " leaves the natural domain at a box corner";
        throw config_error(msg.str());
      }
    }
  }
}

double si_loglik(const SiModel& model, const Eigen::VectorXd& theta) {
  const Eigen::VectorXd u = model.X * theta;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const double eta = model.link.g(u[i]);
    acc += model.responses[i] * eta - model.family.log_partition(eta);
  }
  return model.mu * acc;
}

double si_loglik_diff(const SiModel& model, const Eigen::VectorXd& theta,
                      const Eigen::VectorXd& theta0) {
  return si_loglik(model, theta) - si_loglik(model, theta0);
}

namespace {

// Gradient/Hessian of mu^-1 * sum { c_i g(u) - d(g(u)) } for c_i either the
// responses (fit) or d'(f_i) (target); shared by both ascent problems.
struct SiObjective {
  const SiModel* model;
  Eigen::VectorXd coef;

  double value(const Eigen::VectorXd& theta) const {
    const Eigen::VectorXd u = model->X * theta;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      const double eta = model->link.g(u[i]);
      acc += coef[i] * eta - model->family.log_partition(eta);
    }
    return acc;
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& theta) const {
    const Eigen::VectorXd u = model->X * theta;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(model->d());
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      const double eta = model->link.g(u[i]);
      const double w = (coef[i] - model->family.mean_value(eta)) * model->link.g_dot(u[i]);
      g += w * model->X.row(i).transpose();
    }
    return g;
  }

  Eigen::MatrixXd hessian(const Eigen::VectorXd& theta) const {
    const Eigen::VectorXd u = model->X * theta;
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(model->d(), model->d());
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      const double eta = model->link.g(u[i]);
      const double gd = model->link.g_dot(u[i]);
      const double w = (coef[i] - model->family.mean_value(eta)) * model->link.g_ddot(u[i]) -
                       model->family.variance(eta) * gd * gd;
      H += w * model->X.row(i).transpose() * model->X.row(i);
    }
    return H;
  }
};

}  // namespace

SiFitResult si_target_theta0(const SiModel& model, double tol, int max_iter) {
  if (model.true_f.size() == 0)
    throw config_error("si_target_theta0: model.true_f must be supplied");
  SiObjective obj;
  obj.model = &model;
  obj.coef.resize(model.n());
  for (Eigen::Index i = 0; i < model.n(); ++i)
    obj.coef[i] = model.family.mean_value(model.true_f[i]);
  return multistart_maximize([&](const Eigen::VectorXd& th) { return obj.value(th); },
                             [&](const Eigen::VectorXd& th) { return obj.gradient(th); },
                             [&](const Eigen::VectorXd& th) { return obj.hessian(th); },
                             model.theta_box, tol, max_iter, {});
}

Eigen::MatrixXd si_v_matrix(const SiModel& model, const Eigen::VectorXd& theta,
                            double lambda1_star, const SubgaussianOptions& opts) {
  if (model.true_f.size() == 0)
    throw config_error("si_v_matrix: model.true_f must be supplied");
  const Eigen::VectorXd u = model.X * theta;
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(model.d(), model.d());
  for (Eigen::Index i = 0; i < model.n(); ++i) {
    const double n_i = model.family.subgaussian_scale(model.true_f[i], lambda1_star, opts);
    const double gd = model.link.g_dot(u[i]);
    V += n_i * n_i * gd * gd * model.X.row(i).transpose() * model.X.row(i);
  }
  return model.mu * model.mu * V;
}

namespace {

double tilted_param(const SiModel& model, Eigen::Index i, double delta) {
  const double v = model.true_f[i] + model.mu * delta;
  if (!model.family.natural_domain().contains(v)) {
    std::ostringstream msg;
    msg << "single_index rate: f_" << i << " + mu*{g(X'theta) - g(X'theta0)} = " << v
        << " leaves the natural domain (membership condition violated)";
    throw domain_error(msg.str());
  }
  return v;
}

}  // namespace

double si_rate_function(const SiModel& model, const Eigen::VectorXd& theta,
                        const Eigen::VectorXd& theta0) {
  if (model.true_f.size() == 0)
    throw config_error("si_rate_function: model.true_f must be supplied");
  const Eigen::VectorXd u = model.X * theta;
  const Eigen::VectorXd u0 = model.X * theta0;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < model.n(); ++i) {
    const double eta = model.link.g(u[i]);
    const double eta0 = model.link.g(u0[i]);
    const double tilted = tilted_param(model, i, eta - eta0);
    acc += model.family.log_partition(model.true_f[i]) - model.family.log_partition(tilted) +
           model.mu * (model.family.log_partition(eta) - model.family.log_partition(eta0));
  }
  return acc;
}

Eigen::VectorXd si_rate_gradient(const SiModel& model, const Eigen::VectorXd& theta,
                                 const Eigen::VectorXd& theta0) {
  const Eigen::VectorXd u = model.X * theta;
  const Eigen::VectorXd u0 = model.X * theta0;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(model.d());
  for (Eigen::Index i = 0; i < model.n(); ++i) {
    const double eta = model.link.g(u[i]);
    const double eta0 = model.link.g(u0[i]);
    const double tilted = tilted_param(model, i, eta - eta0);
    const double w = model.mu *
                     (model.family.mean_value(eta) - model.family.mean_value(tilted)) *
                     model.link.g_dot(u[i]);
    g += w * model.X.row(i).transpose();
  }
  return g;
}

Eigen::MatrixXd si_rate_hessian(const SiModel& model, const Eigen::VectorXd& theta,
                                const Eigen::VectorXd& theta0) {
  const Eigen::VectorXd u = model.X * theta;
  const Eigen::VectorXd u0 = model.X * theta0;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(model.d(), model.d());
  for (Eigen::Index i = 0; i < model.n(); ++i) {
    const double eta = model.link.g(u[i]);
    const double eta0 = model.link.g(u0[i]);
    const double tilted = tilted_param(model, i, eta - eta0);
    const double gd = model.link.g_dot(u[i]);
    const double w =
        model.mu * (model.family.variance(eta) * gd * gd +
                    (model.family.mean_value(eta) - model.family.mean_value(tilted)) *
                        model.link.g_ddot(u[i])) -
        model.mu * model.mu * model.family.variance(tilted) * gd * gd;
    H += w * model.X.row(i).transpose() * model.X.row(i);
  }
  return H;
}

Eigen::MatrixXd si_rate_hessian_mu_limit(const SiModel& model, const Eigen::VectorXd& theta) {
  const Eigen::VectorXd u = model.X * theta;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(model.d(), model.d());
  for (Eigen::Index i = 0; i < model.n(); ++i) {
    const double eta = model.link.g(u[i]);
    const double gd = model.link.g_dot(u[i]);
    const double w = model.family.variance(eta) * gd * gd +
                     (model.family.mean_value(eta) - model.family.mean_value(model.true_f[i])) *
                         model.link.g_ddot(u[i]);
    H += w * model.X.row(i).transpose() * model.X.row(i);
  }
  return H;
}

SiFitResult si_fit(const SiModel& model, double tol, int max_iter,
                   const std::vector<Eigen::VectorXd>& extra_starts) {
  SiObjective obj;
  obj.model = &model;
  obj.coef = model.responses;
  SiFitResult r = multistart_maximize([&](const Eigen::VectorXd& th) { return obj.value(th); },
                                      [&](const Eigen::VectorXd& th) { return obj.gradient(th); },
                                      [&](const Eigen::VectorXd& th) { return obj.hessian(th); },
                                      model.theta_box, tol, max_iter, extra_starts);
  // diagnostics carry the raw objective; rescale to the mu convention of L
  r.diag.objective *= model.mu;
  for (auto& m : r.multistart.maxima) m.first *= model.mu;
  return r;
}

}  // namespace qlc
