#pragma once

#include <Eigen/Dense>
#include <optional>
#include <utility>

#include "qlc/efc.hpp"

namespace qlc {

// Law of the observations, as used by rate functions, geometry and the
// simulation harness. Default is the fitted family at per-observation
// natural parameters f_i (well-specified); "point" is the degenerate law
// Y_i = b_i (zero noise). Misspecification = an EFC law from a different
// family than the one being fitted.
class TrueLaw {
 public:
  TrueLaw() = default;  // empty point law; fill via the factories

  static TrueLaw efc(Family family, Eigen::VectorXd f) {
    TrueLaw law;
    law.family_ = std::move(family);
    law.f_ = std::move(f);
    return law;
  }

  static TrueLaw point(Eigen::VectorXd means) {
    TrueLaw law;
    law.means_ = std::move(means);
    return law;
  }

  bool is_point() const { return !family_.has_value(); }
  Eigen::Index size() const { return is_point() ? means_.size() : f_.size(); }

  double mean(Eigen::Index i) const {
    return is_point() ? means_[i] : family_->mean_value(f_[i]);
  }

  Eigen::VectorXd means() const {
    if (is_point()) return means_;
    Eigen::VectorXd b(f_.size());
    for (Eigen::Index i = 0; i < f_.size(); ++i) b[i] = family_->mean_value(f_[i]);
    return b;
  }

  // log E exp{t (Y_i - b_i)}
  double cumulant(Eigen::Index i, double t) const {
    return is_point() ? 0.0 : family_->centered_cumulant(f_[i], t);
  }

  // Var of Y_i under the exponentially tilted law at tilt t.
  double tilted_variance(Eigen::Index i, double t) const {
    return is_point() ? 0.0 : family_->variance(f_[i] + t);
  }

  double subgaussian_scale(Eigen::Index i, double lambda1_star,
                           const SubgaussianOptions& opts = {}) const {
    return is_point() ? opts.scale_min : family_->subgaussian_scale(f_[i], lambda1_star, opts);
  }

  double sample(Eigen::Index i, RngStream& rng) const {
    return is_point() ? means_[i] : family_->sample(f_[i], rng);
  }

  const Family& family() const {
    if (is_point()) throw numeric_error("point law has no family");
    return *family_;
  }
  const Eigen::VectorXd& natural_params() const { return f_; }

 private:
  std::optional<Family> family_;
  Eigen::VectorXd f_;
  Eigen::VectorXd means_;
};

}  // namespace qlc
