#pragma once

#include <Eigen/Dense>
#include <vector>

#include "qlc/errors.hpp"

namespace qlc {

// Axis-aligned box with finite bounds.
struct Box {
  Eigen::VectorXd lower, upper;

  int dim() const { return static_cast<int>(lower.size()); }

  void validate() const {
    if (lower.size() == 0 || lower.size() != upper.size())
      throw config_error("box: bounds must be nonempty and of equal dimension");
    for (Eigen::Index i = 0; i < lower.size(); ++i) {
      if (!std::isfinite(lower[i]) || !std::isfinite(upper[i]) || !(lower[i] < upper[i]))
        throw config_error("box: need finite lower < upper on every axis");
    }
  }

  bool contains(const Eigen::VectorXd& x, double tol = 0.0) const {
    for (Eigen::Index i = 0; i < lower.size(); ++i)
      if (x[i] < lower[i] - tol || x[i] > upper[i] + tol) return false;
    return true;
  }

  Eigen::VectorXd project(Eigen::VectorXd x) const {
    return x.cwiseMax(lower).cwiseMin(upper);
  }

  Eigen::VectorXd center() const { return 0.5 * (lower + upper); }

  std::vector<Eigen::VectorXd> corners() const {
    const int d = dim();
    if (d > 20) throw config_error("box: corner enumeration capped at 20 dimensions");
    std::vector<Eigen::VectorXd> out;
    out.reserve(static_cast<std::size_t>(1) << d);
    for (long mask = 0; mask < (1L << d); ++mask) {
      Eigen::VectorXd c(d);
      for (int a = 0; a < d; ++a) c[a] = (mask >> a) & 1 ? upper[a] : lower[a];
      out.push_back(std::move(c));
    }
    return out;
  }

  Box widened(double factor) const {
    const Eigen::VectorXd mid = center();
    Box out;
    out.lower = mid + factor * (lower - mid);
    out.upper = mid + factor * (upper - mid);
    return out;
  }
};

// Regular grid over a box. Flat enumeration is row-major (last axis fastest).
// weight() is the trapezoid cell volume, so sums against it recover the
// Lebesgue integral in the refinement limit.
class GridDomain {
 public:
  static constexpr long kMaxPoints = 1L << 22;

  GridDomain(Box box, std::vector<int> points_per_axis)
      : box_(std::move(box)), npts_(std::move(points_per_axis)) {
    box_.validate();
    if (static_cast<int>(npts_.size()) != box_.dim())
      throw config_error("grid: points_per_axis size must match box dimension");
    long total = 1;
    for (int n : npts_) {
      if (n < 2) throw config_error("grid: need at least 2 points per axis");
      total *= n;
      if (total > kMaxPoints) throw config_error("grid: total point budget exceeded");
    }
    size_ = total;
  }

  static GridDomain uniform(const Box& box, int per_axis) {
    return GridDomain(box, std::vector<int>(static_cast<std::size_t>(box.dim()), per_axis));
  }

  const Box& box() const { return box_; }
  int dim() const { return box_.dim(); }
  long size() const { return size_; }
  const std::vector<int>& points_per_axis() const { return npts_; }

  double step(int axis) const {
    return (box_.upper[axis] - box_.lower[axis]) / (npts_[axis] - 1);
  }

  Eigen::VectorXd point(long flat) const {
    Eigen::VectorXd x(dim());
    for (int a = dim() - 1; a >= 0; --a) {
      const long i = flat % npts_[a];
      flat /= npts_[a];
      x[a] = box_.lower[a] + i * step(a);
    }
    return x;
  }

  double weight(long flat) const {
    double w = 1.0;
    for (int a = dim() - 1; a >= 0; --a) {
      const long i = flat % npts_[a];
      flat /= npts_[a];
      w *= (i == 0 || i == npts_[a] - 1) ? 0.5 * step(a) : step(a);
    }
    return w;
  }

  // Doubled resolution (2n-1 per axis) keeping existing nodes.
  GridDomain refined() const {
    std::vector<int> n2(npts_.size());
    for (std::size_t a = 0; a < npts_.size(); ++a) n2[a] = 2 * npts_[a] - 1;
    return GridDomain(box_, n2);
  }

  bool can_refine() const {
    long total = 1;
    for (int n : npts_) {
      total *= 2L * n - 1;
      if (total > kMaxPoints) return false;
    }
    return true;
  }

 private:
  Box box_;
  std::vector<int> npts_;
  long size_ = 0;
};

}  // namespace qlc
