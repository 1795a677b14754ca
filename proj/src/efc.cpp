#include "qlc/efc.hpp"

#include <cmath>
#include <sstream>
#include <utility>
#include <vector>

namespace qlc {

namespace {

double softplus(double u) {
  if (u > 0.0) return u + std::log1p(std::exp(-u));
  return std::log1p(std::exp(u));
}

double logistic(double u) { return 1.0 / (1.0 + std::exp(-u)); }

}  // namespace

Family::Family(std::string name, Interval domain, Fn d, Fn d_dot, Fn d_ddot) {
  kind_ = Kind::custom;
  name_ = std::move(name);
  domain_ = domain;
  d_ = std::move(d);
  d_dot_ = std::move(d_dot);
  d_ddot_ = std::move(d_ddot);
}

Family Family::gaussian(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw config_error("gaussian family needs sigma > 0");
  Family f;
  f.kind_ = Kind::gaussian;
  f.sigma_ = sigma;
  std::ostringstream name;
  name << "gaussian:" << sigma;
  f.name_ = name.str();
  const double s2 = sigma * sigma;
  f.d_ = [s2](double u) { return 0.5 * s2 * u * u; };
  f.d_dot_ = [s2](double u) { return s2 * u; };
  f.d_ddot_ = [s2](double) { return s2; };
  return f;
}

Family Family::poisson() {
  Family f;
  f.kind_ = Kind::poisson;
  f.name_ = "poisson";
  f.d_ = [](double u) { return std::exp(u); };
  f.d_dot_ = [](double u) { return std::exp(u); };
  f.d_ddot_ = [](double u) { return std::exp(u); };
  return f;
}

Family Family::bernoulli() {
  Family f;
  f.kind_ = Kind::bernoulli;
  f.name_ = "bernoulli";
  f.d_ = softplus;
  f.d_dot_ = logistic;
  f.d_ddot_ = [](double u) {
    const double p = logistic(u);
    return p * (1.0 - p);
  };
  return f;
}

Family Family::parse(const std::string& token) {
  if (token == "poisson") return poisson();
  if (token == "bernoulli") return bernoulli();
  const std::string prefix = "gaussian";
  if (token.rfind(prefix, 0) == 0) {
    double sigma = 1.0;
    if (token.size() > prefix.size()) {
      if (token[prefix.size()] != ':') throw config_error("bad family token: " + token);
      try {
        sigma = std::stod(token.substr(prefix.size() + 1));
      } catch (const std::exception&) {
        throw config_error("bad sigma in family token: " + token);
      }
    }
    return gaussian(sigma);
  }
  throw config_error("unknown family token: " + token);
}

void Family::check_domain(double u, const char* where) const {
  if (!domain_.contains(u)) {
    std::ostringstream msg;
    msg << name_ << ": " << where << ": canonical value " << u << " outside the natural domain ("
        << domain_.lo << ", " << domain_.hi << ")";
    throw domain_error(msg.str());
  }
}

double Family::log_partition(double u) const {
  check_domain(u, "log_partition");
  return d_(u);
}

double Family::mean_value(double u) const {
  check_domain(u, "mean_value");
  return d_dot_(u);
}

double Family::variance(double u) const {
  check_domain(u, "variance");
  return d_ddot_(u);
}

double Family::centered_cumulant(double u, double t) const {
  check_domain(u, "centered_cumulant");
  check_domain(u + t, "centered_cumulant (tilted)");
  return d_(u + t) - d_(u) - t * d_dot_(u);
}

double Family::natural_from_mean(double m) const {
  switch (kind_) {
    case Kind::gaussian:
      return m / (sigma_ * sigma_);
    case Kind::poisson:
      if (!(m > 0.0)) throw domain_error("poisson mean must be positive");
      return std::log(m);
    case Kind::bernoulli:
      if (!(m > 0.0 && m < 1.0)) throw domain_error("bernoulli mean must lie in (0,1)");
      return std::log(m / (1.0 - m));
    case Kind::custom:
      break;
  }
  throw numeric_error(name_ + ": no mean inverse available");
}

double Family::subgaussian_scale(double u, double lambda1_star,
                                 const SubgaussianOptions& opts) const {
  if (!(lambda1_star > 0.0)) throw config_error("subgaussian_scale: lambda1_star must be > 0");
  check_domain(u, "subgaussian_scale");
  if (kind_ == Kind::gaussian) return sigma_;

  std::vector<double> lambdas(opts.lambda_grid);
  for (int i = 0; i < opts.lambda_grid; ++i)
    lambdas[i] = -lambda1_star + 2.0 * lambda1_star * i / (opts.lambda_grid - 1);

  // c(u, 2*lambda/n) is non-increasing in n for each lambda (c convex with
  // minimum 0 at t=0), so feasibility is monotone and bisection applies.
  auto feasible = [&](double n) {
    for (double lam : lambdas) {
      const double t = 2.0 * lam / n;
      if (!domain_.contains(u + t)) return std::make_pair(false, lam);
      if (centered_cumulant(u, t) > 2.0 * lam * lam + 1e-15) return std::make_pair(false, lam);
    }
    return std::make_pair(true, 0.0);
  };

  double lo = opts.scale_min, hi = opts.scale_max;
  auto top = feasible(hi);
  if (!top.first) {
    std::ostringstream msg;
    msg << name_ << ": no subgaussian scale up to " << hi << " satisfies the moment condition"
        << " (violated at lambda = " << top.second << ")";
    throw numeric_error(msg.str());
  }
  if (feasible(lo).first) return lo;
  while ((hi - lo) > opts.rel_tol * hi) {
    const double mid = 0.5 * (lo + hi);
    if (feasible(mid).first)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

double Family::sample(double u, RngStream& rng) const {
  check_domain(u, "sample");
  switch (kind_) {
    case Kind::gaussian:
      return sigma_ * sigma_ * u + sigma_ * rng.normal();
    case Kind::poisson:
      return static_cast<double>(rng.poisson(std::exp(u)));
    case Kind::bernoulli:
      return static_cast<double>(rng.bernoulli(logistic(u)));
    case Kind::custom:
      break;
  }
  throw numeric_error(name_ + ": no sampler available");
}

bool Family::mean_in_closure(double m) const {
  if (!std::isfinite(m)) return false;
  switch (kind_) {
    case Kind::gaussian:
      return true;
    case Kind::poisson:
      return m >= 0.0;
    case Kind::bernoulli:
      return m >= 0.0 && m <= 1.0;
    case Kind::custom:
      return true;
  }
  return true;
}

bool Family::supports_response(double y) const {
  if (!std::isfinite(y)) return false;
  switch (kind_) {
    case Kind::gaussian:
      return true;
    case Kind::poisson:
      return y >= 0.0 && std::abs(y - std::round(y)) < 1e-9;
    case Kind::bernoulli:
      return y == 0.0 || y == 1.0;
    case Kind::custom:
      return true;
  }
  return true;
}

}  // namespace qlc
