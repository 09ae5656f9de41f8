#pragma once

#include <functional>

#include <Eigen/Core>

namespace wgmm {

/// Axis-aligned box in parameter space.
struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Eigen::Index dim() const { return lower.size(); }
  bool contains(const Eigen::VectorXd& x) const;
  Eigen::VectorXd clamp(const Eigen::VectorXd& x) const;
  Eigen::VectorXd width() const { return upper - lower; }
  double volume() const;
  void validate() const;
};

struct NelderMeadConfig {
  int max_evals = 400;
  double initial_step = 0.05;  // fraction of each box side (absolute step when unbounded)
  double size_tol = 1e-9;      // simplex size at convergence
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evals = 0;
};

/// Derivative-free minimization. With a box, the objective is evaluated at
/// the projection of each trial point onto the box and the returned point is
/// projected as well.
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& start, const NelderMeadConfig& cfg,
                             const Box* box = nullptr);

}  // namespace wgmm
