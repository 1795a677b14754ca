#include "qlc/chaining.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qlc/penalty.hpp"

namespace qlc {

double path_metric(const MatrixField& m_field, const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                   int panels) {
  const Eigen::VectorXd diff = b - a;
  const double d = diff.norm();
  if (d == 0.0) return 0.0;
  const Eigen::VectorXd gamma = diff / d;
  if (m_field.constant) return d * std::sqrt(std::max(0.0, gamma.dot(m_field.eval(a) * gamma)));
  double acc = 0.0;
  for (int j = 0; j <= panels; ++j) {
    const double t = static_cast<double>(j) / panels;
    const double w = (j == 0 || j == panels) ? 0.5 : 1.0;
    acc += w * gamma.dot(m_field.eval(a + (t * d) * gamma) * gamma);
  }
  acc /= panels;
  return d * std::sqrt(std::max(acc, 0.0));
}

double semimetric(const RandomFieldSpec& spec, const Eigen::VectorXd& a,
                  const Eigen::VectorXd& b) {
  MatrixField squared;
  squared.constant = spec.field.constant;
  squared.eval = [&field = spec.field](const Eigen::VectorXd& u) {
    const Eigen::MatrixXd H = field.eval(u);
    return Eigen::MatrixXd(H * H);
  };
  return path_metric(squared, a, b, spec.quadrature_steps);
}

namespace {

struct BallTrace {
  std::vector<long> members;            // grid indices with D(point, center) <= eps
  std::vector<Eigen::VectorXd> points;  // their coordinates
};

BallTrace ball_trace(const RandomFieldSpec& spec, double eps, const Eigen::VectorXd& center) {
  BallTrace out;
  const long G = spec.domain.size();
  for (long j = 0; j < G; ++j) {
    Eigen::VectorXd pt = spec.domain.point(j);
    if (semimetric(spec, center, pt) <= eps) {
      out.members.push_back(j);
      out.points.push_back(std::move(pt));
    }
  }
  return out;
}

// Farthest-point traversal: insertion distances D_k are non-increasing, so a
// single traversal yields the greedy covering count for every radius at once:
// N(r) = #{k : D_k > r} (with D_1 = +inf for the first center).
std::vector<double> farthest_point_insertion_distances(const RandomFieldSpec& spec,
                                                       const BallTrace& ball,
                                                       const Eigen::VectorXd& center) {
  const std::size_t m = ball.members.size();
  std::vector<double> insert_dist;
  if (m == 0) return insert_dist;
  insert_dist.reserve(m);

  // first center: the member closest to the ball center (ties by index)
  std::size_t first = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m; ++i) {
    const double d = semimetric(spec, center, ball.points[i]);
    if (d < best) {
      best = d;
      first = i;
    }
  }
  std::vector<double> nearest(m);
  for (std::size_t i = 0; i < m; ++i) nearest[i] = semimetric(spec, ball.points[first], ball.points[i]);
  insert_dist.push_back(std::numeric_limits<double>::infinity());

  std::vector<bool> chosen(m, false);
  chosen[first] = true;
  for (std::size_t step = 1; step < m; ++step) {
    std::size_t next = m;
    double far = -1.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (chosen[i]) continue;
      if (nearest[i] > far) {
        far = nearest[i];
        next = i;
      }
    }
    if (next == m || far <= 0.0) break;  // remaining points coincide with centers
    chosen[next] = true;
    insert_dist.push_back(far);
    for (std::size_t i = 0; i < m; ++i) {
      if (chosen[i]) continue;
      nearest[i] = std::min(nearest[i], semimetric(spec, ball.points[next], ball.points[i]));
    }
  }
  return insert_dist;
}

long count_for_radius(const std::vector<double>& insert_dist, double radius) {
  long n = 0;
  for (double d : insert_dist)
    if (d > radius) ++n;
  return std::max<long>(n, 1);
}

}  // namespace

long covering_number(const RandomFieldSpec& spec, double eps0, double eps,
                     const Eigen::VectorXd& center) {
  if (!(eps0 > 0.0)) throw config_error("covering_number: eps0 must be positive");
  const BallTrace ball = ball_trace(spec, eps, center);
  if (ball.members.empty()) return 0;
  return count_for_radius(farthest_point_insertion_distances(spec, ball, center), eps0);
}

CoveringReport local_entropy(const RandomFieldSpec& spec, double eps,
                             const Eigen::VectorXd& center) {
  if (!(eps > 0.0)) throw config_error("local_entropy: eps must be positive");
  CoveringReport rep;
  rep.center = center;
  rep.eps = eps;

  const BallTrace ball = ball_trace(spec, eps, center);
  rep.ball_points = static_cast<long>(ball.members.size());
  if (ball.members.size() <= 1) return rep;  // single point: entropy 0

  const std::vector<double> ins = farthest_point_insertion_distances(spec, ball, center);
  const long saturation = static_cast<long>(ins.size());  // count at radius -> 0

  const int k_cap = 60;
  double entropy = 0.0;
  for (int k = 1; k <= k_cap; ++k) {
    const long n = count_for_radius(ins, std::ldexp(eps, -k));
    rep.counts.push_back(n);
    rep.K = k;
    entropy += std::ldexp(std::log(static_cast<double>(n)), -k);
    if (n >= saturation) {
      // every later level repeats the saturated count; geometric tail is exact
      entropy += std::ldexp(std::log(static_cast<double>(n)), -k);
      break;
    }
    if (std::ldexp(std::log(static_cast<double>(saturation)), -k) < 1e-9) break;
  }
  rep.entropy = entropy;
  return rep;
}

double local_entropy_max(const RandomFieldSpec& spec, double eps, long center_stride) {
  if (center_stride < 1) throw config_error("local_entropy_max: stride must be >= 1");
  double best = 0.0;
  for (long j = 0; j < spec.domain.size(); j += center_stride)
    best = std::max(best, local_entropy(spec, eps, spec.domain.point(j)).entropy);
  return best;
}

double nu1_estimate(const RandomFieldSpec& spec, double eps) {
  const long G = spec.domain.size();
  std::vector<Eigen::VectorXd> pts(G);
  std::vector<Eigen::MatrixXd> H2(G);
  for (long j = 0; j < G; ++j) {
    pts[j] = spec.domain.point(j);
    const Eigen::MatrixXd H = spec.field.eval(pts[j]);
    H2[j] = H * H;
  }
  double nu1 = 1.0;
  for (long i = 0; i < G; ++i) {
    for (long j = i + 1; j < G; ++j) {
      if (semimetric(spec, pts[i], pts[j]) > eps) continue;
      if (spec.domain.dim() == 1) {
        const double a = H2[i](0, 0), b = H2[j](0, 0);
        if (!(a > 0.0 && b > 0.0)) throw numeric_error("nu1_estimate: H^2 must be positive");
        nu1 = std::max({nu1, a / b, b / a});
      } else {
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ab(H2[i], H2[j]);
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ba(H2[j], H2[i]);
        if (ab.info() != Eigen::Success || ba.info() != Eigen::Success)
          throw numeric_error("nu1_estimate: generalized eigensolve failed (H^2 singular?)");
        nu1 = std::max({nu1, ab.eigenvalues().maxCoeff(), ba.eigenvalues().maxCoeff()});
      }
    }
  }
  return nu1;
}

MaxIntegralCheck local_max_integral_check(const std::vector<double>& f_values,
                                          const RandomFieldSpec& spec, double eps, double nu) {
  const long G = spec.domain.size();
  if (static_cast<long>(f_values.size()) != G)
    throw config_error("local_max_integral_check: f must have one value per grid point");
  for (double v : f_values)
    if (!(v >= 0.0)) throw config_error("local_max_integral_check: f must be nonnegative");

  std::vector<Eigen::VectorXd> pts(G);
  for (long j = 0; j < G; ++j) pts[j] = spec.domain.point(j);

  MaxIntegralCheck out;
  out.nu = nu;
  out.lhs = *std::max_element(f_values.begin(), f_values.end());

  double integral = 0.0;
  for (long j = 0; j < G; ++j) {
    double fstar = 0.0;
    double ball_mass = 0.0;
    for (long k = 0; k < G; ++k) {
      if (semimetric(spec, pts[j], pts[k]) <= eps) {
        fstar = std::max(fstar, f_values[k]);
        ball_mass += spec.domain.weight(k);
      }
    }
    integral += fstar / ball_mass * spec.domain.weight(j);
  }
  out.rhs = nu * integral;
  out.ok = out.lhs <= out.rhs + 1e-9 * std::max(1.0, std::abs(out.rhs));
  return out;
}

double global_bound_constants(double rho, double eps, double Qstar, double nu, double H_eps) {
  if (!(rho > 0.0 && rho < 1.0))
    throw config_error("global_bound_constants: rho must lie in (0,1)");
  if (!(nu >= 1.0)) throw config_error("global_bound_constants: nu must be >= 1");
  return 2.0 * eps * eps * rho * rho / (1.0 - rho) + (1.0 - rho) * Qstar + std::log(nu) + H_eps;
}

}  // namespace qlc
