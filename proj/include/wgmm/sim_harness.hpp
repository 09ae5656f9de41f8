#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "wgmm/cue.hpp"
#include "wgmm/quasi_bayes.hpp"
#include "wgmm/rng.hpp"

namespace wgmm {

/// omega_i proportional to exp(t' phi_i) with sum_i omega_i phi_i = 0.
struct TiltWeights {
  Eigen::VectorXd omega;
  Eigen::VectorXd t;
  int iterations = 0;
  double residual = 0.0;  // || sum_i omega_i phi_i ||
};

/// Damped Newton on the dual t -> log sum_i exp(t' phi_i). Throws
/// NumericalError when 0 is not inside the convex hull of the rows.
TiltWeights tilt_weights(const RowMatrix& phi, int max_iter = 200, double tol = 1e-10);

/// Y* = Y + e with e ~ N(0, Var(Y)/divisor), Var with /n centering.
Dataset jitter_outcomes(const Dataset& data, std::uint64_t seed, double divisor = 100.0);

/// P*: omega-weighted resampling of the base rows with fresh normal noise on
/// Y; P0: P* with every non-constant instrument multiplied by one Rademacher
/// sign per observation.
struct CalibratedDesign {
  Dataset base;
  double tau = 0.75;
  ParamPoint theta_hat;
  TiltWeights tilt;
  double jitter_sd = 0.0;
  Eigen::Index n0 = 0;
  int constant_column = 0;

  double mixture_weight(Eigen::Index n) const;
};

struct DesignConfig {
  double tau = 0.75;
  Box box;                       // parameter box for the calibration estimate
  CueSearchConfig cue;
  std::uint64_t seed = 0;
  double jitter_divisor = 100.0;
  int constant_column = 0;
  std::optional<ParamPoint> theta_hat;  // skips the calibration estimate
};

/// Steps: CUE estimate on the base data, jitter scale, tilting of the
/// noise-averaged moments so that they hold exactly at theta_hat under P*.
CalibratedDesign build_design(const Dataset& base, const DesignConfig& cfg);

/// Draws of one observation at a time; each sampler owns its streams.
class P0Sampler {
 public:
  P0Sampler(const CalibratedDesign& design, std::uint64_t seed);
  /// One P0 observation written to row `row` of out.
  void draw(Dataset& out, Eigen::Index row);

 private:
  const CalibratedDesign* design_;
  std::discrete_distribution<std::size_t> pick_;
  Rng obs_;
  Rng sign_;
};

Dataset draw_pstar_sample(const CalibratedDesign& design, Eigen::Index n, std::uint64_t seed);
Dataset draw_p0_sample(const CalibratedDesign& design, Eigen::Index n, std::uint64_t seed);

/// Mixture with weight sqrt(n0/n) on P*. from_pstar (optional) records the
/// component of each row. At n = n0 this equals draw_pstar_sample bit-for-bit.
Dataset draw_calibrated_sample(const CalibratedDesign& design, Eigen::Index n, std::uint64_t seed,
                               std::vector<char>* from_pstar = nullptr);

/// Exact population moments and covariances (noise integrated analytically).
Eigen::VectorXd pstar_moment(const CalibratedDesign& design, const ParamPoint& theta);
Eigen::VectorXd p0_moment(const CalibratedDesign& design, const ParamPoint& theta);
Eigen::MatrixXd pstar_covariance(const CalibratedDesign& design, const ParamPoint& theta);
Eigen::MatrixXd p0_covariance(const CalibratedDesign& design, const ParamPoint& theta);
/// d pstar_moment / d theta (k x p).
Eigen::MatrixXd pstar_jacobian(const CalibratedDesign& design, const ParamPoint& theta);

struct CoordinateSummary {
  double mean = 0.0;
  double sd = 0.0;
  std::vector<double> quantiles;  // 0.05, 0.25, 0.5, 0.75, 0.95
  double skewness = 0.0;
  double ks_normal = 0.0;         // KS distance to N(mean, sd^2)
};

CoordinateSummary summarize(std::span<const double> x);

struct EstimatorDistribution {
  std::vector<ParamPoint> theta;  // NaN rows for failed replications
  std::vector<double> q_min;
  std::vector<char> failed;
  std::size_t failures = 0;
  std::vector<CoordinateSummary> summary;

  std::vector<double> coordinate(Eigen::Index j) const;  // successful reps only
};

EstimatorDistribution estimator_distribution(const CalibratedDesign& design, Eigen::Index n,
                                             std::size_t reps, const Box& box,
                                             const CueSearchConfig& cue, std::uint64_t seed,
                                             std::size_t workers = 1);

/// Fixed-DGP normal approximation N(theta_hat, (G' Sigma^{-1} G)^{-1} / n) under P*.
struct NormalApprox {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};
NormalApprox strong_asymptotic(const CalibratedDesign& design, Eigen::Index n);

/// Theta_0 = {(q(beta), beta)} under P0 with gamma = alpha - q(beta).
struct BvmSpec {
  std::vector<double> beta;
  std::vector<double> alpha;           // q(beta)
  std::vector<Eigen::MatrixXd> nabla;  // k x 1
  std::vector<Eigen::MatrixXd> sigma;  // Sigma_{P0}(beta)
  std::vector<Eigen::MatrixXd> J;      // 1 x 1
  std::vector<Eigen::MatrixXd> M;      // k x k
  std::vector<double> pi0;             // unnormalized, zero when q(beta) leaves the box
  bool half_j = false;

  /// Piecewise-linear q between grid points (constant beyond the ends).
  double q_of(double beta) const;
};

struct BvmConfig {
  double beta_min = -10.0;
  double beta_max = 30.0;
  int beta_count = 201;
  double fd_step = 0.05;
  bool half_j = false;  // J = nabla' Sigma^{-1} nabla / 2
  Box box;              // parameter box (alpha, beta)
};

/// J = nabla' Sigma^{-1} nabla (halved when half_j) and the residual projector
/// M = Sigma^{-1} - Sigma^{-1} nabla J^{-1} nabla' Sigma^{-1}.
struct ReducedProjection {
  Eigen::MatrixXd J;
  Eigen::MatrixXd M;
};
ReducedProjection reduced_projection(const Eigen::MatrixXd& nabla, const Eigen::MatrixXd& sigma,
                                     bool half_j = false);

/// alpha with E_{P0}[1{Y* <= alpha + W beta}] = tau.
double identified_alpha(const CalibratedDesign& design, double beta);

BvmSpec build_bvm_spec(const CalibratedDesign& design, const BvmConfig& cfg);

/// Normalized weights exp(-Q^beta/2) pi0 over the beta grid.
std::vector<double> infeasible_posterior(const BvmSpec& spec, const Dataset& data,
                                         const MomentModel& model);

/// Flat-prior quasi-posterior on the box, sampled in (beta, gamma) coordinates
/// (unit Jacobian) so the chain moves along Theta_0.
PosteriorDraws feasible_posterior(const BvmSpec& spec, const Dataset& data,
                                  const MomentModel& model, const Box& box, const ChainConfig& cfg,
                                  std::uint64_t seed, std::size_t workers = 1);

struct BvmGapReport {
  std::vector<double> radii;          // c values
  std::vector<double> mass_outside;   // feasible mass with Phi' Sigma^{-1} Phi >= c/n
  std::vector<double> feasible;       // E[c_m] under the feasible posterior
  std::vector<double> infeasible;     // E[c_m] under the infeasible posterior
  std::vector<double> gaps;           // |feasible - infeasible|
};

using TestFunction = std::function<double(const ParamPoint&)>;

BvmGapReport bvm_gap(const PosteriorDraws& feasible, const BvmSpec& spec,
                     std::span<const double> infeasible_weights,
                     std::span<const TestFunction> tests, const CalibratedDesign& design,
                     Eigen::Index n, std::span<const double> radii = {});

/// Deterministic Graddy-like stand-in (n = 111): y = log quantity, w = log
/// price, z = (1, mixed, stormy).
Dataset synthetic_fish_data(std::uint64_t seed = 1995);

}  // namespace wgmm
