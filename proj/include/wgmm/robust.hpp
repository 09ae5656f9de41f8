#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "wgmm/moments.hpp"

namespace wgmm {

/// Moments and covariance blocks on a finite grid, organized around the null
/// point theta_0 = points[null_index].
struct GridProcess {
  Eigen::MatrixXd g;                   // k x G, column j = g(theta_j)
  std::vector<Eigen::MatrixXd> sigma;  // Sigma(theta_j, theta_j)
  std::vector<Eigen::MatrixXd> cross;  // Sigma(theta_j, theta_0)
  Eigen::Index null_index = 0;

  Eigen::Index size() const { return g.cols(); }
  Eigen::Index moment_dim() const { return g.rows(); }
  void validate() const;
};

GridProcess build_grid_process(const Dataset& data, const MomentModel& model,
                               std::span<const ParamPoint> points, Eigen::Index null_index);

/// h(theta_j) = g(theta_j) - Sigma(theta_j, theta_0) Sigma(theta_0, theta_0)^{-1} g(theta_0),
/// with h(theta_0) = 0 exactly.
Eigen::MatrixXd residual_process(const GridProcess& gp, double ridge = kDefaultRidge);

/// log T with T = sum_j w_j exp(-Q_j/2) / exp(-Q_0/2).
double log_wap_statistic(const GridProcess& gp, std::span<const double> weights,
                         double ridge = kDefaultRidge);
double wap_statistic(const GridProcess& gp, std::span<const double> weights,
                     double ridge = kDefaultRidge);

struct CriticalValue {
  double log_c = 0.0;
  bool tie = false;               // all simulated statistics equal within 1e-12
  std::vector<double> log_draws;  // log T*_b, b = 1..B
};

/// Simulates T* under xi* ~ N(0, Sigma(theta_0, theta_0)) holding h fixed and
/// returns the type-7 (1 - alpha) quantile. alpha <= 0 gives c = +inf.
CriticalValue conditional_critical_value(const GridProcess& gp, std::span<const double> weights,
                                         double alpha, std::size_t draws, std::uint64_t seed,
                                         double ridge = kDefaultRidge);

struct TestOutcome {
  double T = 0.0;
  double log_T = 0.0;
  double c_alpha = 0.0;
  double log_c = 0.0;
  bool reject = false;
  bool tie = false;
  std::size_t B = 0;
  std::uint64_t seed = 0;
};

struct RobustConfig {
  double alpha = 0.05;
  std::size_t draws = 1000;
  double ridge = kDefaultRidge;
};

/// Conditional test of theta_0 = points[null_index] inside a grid process.
TestOutcome conditional_test(const GridProcess& gp, std::span<const double> weights,
                             const RobustConfig& cfg, std::uint64_t seed);

/// Test of H0: theta = theta0 with the prior integral taken over `grid` with
/// `weights` (uniform when empty). theta0 is added with zero weight if absent.
TestOutcome robust_test(const Dataset& data, const MomentModel& model,
                        std::span<const ParamPoint> grid, std::span<const double> weights,
                        const ParamPoint& theta0, const RobustConfig& cfg, std::uint64_t seed);

struct ConfidenceSetResult {
  std::vector<ParamPoint> grid;
  std::vector<TestOutcome> outcomes;
  double fraction = 0.0;
  std::size_t distinct_patterns = 0;  // grid points with distinct moment matrices

  std::vector<bool> member() const;
};

/// Inverts robust_test over every grid point; point j uses the stream
/// derive_seed(seed, j), so point j matches robust_test(seed = derive_seed(seed, j)).
ConfidenceSetResult confidence_set(const Dataset& data, const MomentModel& model,
                                   std::span<const ParamPoint> grid, std::span<const double> weights,
                                   const RobustConfig& cfg, std::uint64_t seed,
                                   std::size_t workers = 1);

/// Same as confidence_set restricted to the grid points listed in `targets`.
std::vector<TestOutcome> test_grid_points(const Dataset& data, const MomentModel& model,
                                          std::span<const ParamPoint> grid,
                                          std::span<const double> weights,
                                          std::span<const std::size_t> targets,
                                          const RobustConfig& cfg, std::uint64_t seed,
                                          std::size_t workers = 1,
                                          std::size_t* distinct_patterns = nullptr);

}  // namespace wgmm
