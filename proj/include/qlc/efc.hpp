#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>

#include "qlc/errors.hpp"
#include "qlc/rng.hpp"

namespace qlc {

// Open interval; endpoints are excluded, +-inf allowed.
struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool contains(double x) const { return std::isfinite(x) && x > lo && x < hi; }
};

struct SubgaussianOptions {
  double scale_min = 1e-6;  // bisection bracket for the scale
  double scale_max = 1e6;
  int lambda_grid = 200;  // sample points on [-lambda1_star, lambda1_star]
  double rel_tol = 1e-10;
};

// Exponential family with canonical parametrization: log-density
// y*u - d(u) + l(y), d convex on the natural domain. The l(y) term cancels
// in every likelihood ratio and is never needed.
//
// Built-ins:
//   gaussian(sigma): d(u) = sigma^2 u^2 / 2, law N(sigma^2 u, sigma^2)
//   poisson:         d(u) = exp(u)
//   bernoulli:       d(u) = log(1 + exp(u))
class Family {
 public:
  using Fn = std::function<double(double)>;

  static Family gaussian(double sigma);
  static Family poisson();
  static Family bernoulli();

  // Config tokens: "gaussian:SIGMA", "poisson", "bernoulli".
  static Family parse(const std::string& token);

  // Custom family: d and its two derivatives on a domain. Sampling and
  // mean inversion stay unavailable unless hooks are supplied.
  Family(std::string name, Interval domain, Fn d, Fn d_dot, Fn d_ddot);

  const std::string& name() const { return name_; }
  const Interval& natural_domain() const { return domain_; }

  double log_partition(double u) const;  // d(u)
  double mean_value(double u) const;     // d'(u) = E_u Y
  double variance(double u) const;       // d''(u) = Var_u Y

  // c(u,t) = d(u+t) - d(u) - t d'(u) = log E_u exp{t (Y - d'(u))}
  double centered_cumulant(double u, double t) const;

  // Inverse of the mean map; throws domain_error outside the mean range.
  double natural_from_mean(double m) const;

  // Smallest scale n on a bisection bracket such that
  //   c(u, 2*lambda/n) <= 2*lambda^2   for all |lambda| <= lambda1_star
  // on a dense lambda grid. Exact (= sigma) for the Gaussian family.
  double subgaussian_scale(double u, double lambda1_star,
                           const SubgaussianOptions& opts = {}) const;

  double sample(double u, RngStream& rng) const;
  bool supports_response(double y) const;
  bool mean_in_closure(double m) const;

  bool is_gaussian() const { return kind_ == Kind::gaussian; }
  double sigma() const { return sigma_; }

 private:
  enum class Kind { gaussian, poisson, bernoulli, custom };
  Family() = default;

  Kind kind_ = Kind::custom;
  std::string name_;
  Interval domain_;
  Fn d_, d_dot_, d_ddot_;
  double sigma_ = 0.0;  // gaussian only

  void check_domain(double u, const char* where) const;
};

}  // namespace qlc
