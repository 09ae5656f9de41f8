#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "wgmm/moments.hpp"
#include "wgmm/optimize.hpp"

namespace wgmm {

using LogDensity = std::function<double(const Eigen::VectorXd&)>;

/// Prior on the structural parameter: a support box and an unnormalized log
/// density (flat when empty).
struct Prior {
  Box support;
  std::function<double(const ParamPoint&)> log_density;

  static Prior flat(Box support) { return Prior{std::move(support), {}}; }
  double operator()(const ParamPoint& theta) const;
};

/// log pi(theta) - Q_n(theta)/2 on the support, -inf elsewhere.
double log_quasi_posterior(const Dataset& data, const MomentModel& model, const Prior& prior,
                           const ParamPoint& theta, double ridge = kDefaultRidge);

struct PosteriorDraws {
  std::vector<ParamPoint> draws;
  std::vector<double> logdens;
  std::uint64_t seed = 0;
  std::size_t burn_in = 0;
  std::size_t thin = 1;
  std::size_t chain_length = 0;  // post-burn-in iterations per chain
  std::size_t chains = 1;

  std::size_t size() const { return draws.size(); }
  Eigen::Index dim() const { return draws.empty() ? 0 : draws.front().size(); }
  Eigen::VectorXd mean() const;
  std::vector<double> coordinate(Eigen::Index j) const;
};

struct SliceConfig {
  std::size_t n_draws = 60000;  // iterations after burn-in
  std::size_t burn_in = 10000;
  std::size_t thin = 5;
  Eigen::VectorXd widths;       // initial interval width per coordinate
  int max_step_out = 1000;      // stepping-out limit per side, in widths
};

/// Coordinate-wise slice sampler with stepping out and shrinkage.
/// Throws std::invalid_argument when log_density(init) is not finite.
PosteriorDraws slice_sample(const LogDensity& log_density, const Eigen::VectorXd& init,
                            const SliceConfig& cfg, std::uint64_t seed);

struct ChainConfig {
  SliceConfig slice;
  std::size_t chains = 4;
  double rhat_threshold = 1.05;
  std::size_t init_attempts = 10000;
};

struct MultiChainResult {
  PosteriorDraws pooled;           // chains concatenated in index order
  std::vector<PosteriorDraws> per_chain;
  Eigen::VectorXd rhat;            // split R-hat per coordinate
  bool converged = false;          // all rhat below the threshold
};

/// Split R-hat per coordinate across chains.
Eigen::VectorXd split_rhat(const std::vector<PosteriorDraws>& chains);

/// Runs `chains` chains from over-dispersed starting points (uniform on the
/// box, conditioned on a finite log density). Chain c uses the stream
/// derive_seed(seed, c). Widths default to 1/20 of each box side.
MultiChainResult sample_chains(const LogDensity& log_density, const Box& box, ChainConfig cfg,
                               std::uint64_t seed, std::size_t workers = 1);

/// Convenience wrapper for the quasi-posterior of a moment model.
MultiChainResult sample_quasi_posterior(const Dataset& data, const MomentModel& model,
                                        const Prior& prior, const ChainConfig& cfg,
                                        std::uint64_t seed, std::size_t workers = 1,
                                        double ridge = kDefaultRidge);

/// Loss L(a, theta) >= 0 over a box or finite action space.
struct LossSpec {
  enum class Kind { custom, squared_error, check };
  using ActionSpace = std::variant<Box, std::vector<Eigen::VectorXd>>;

  ActionSpace actions;
  std::function<double(const Eigen::VectorXd& action, const ParamPoint& theta)> loss;
  Kind kind = Kind::custom;
  double tau = 0.5;  // check loss level

  static LossSpec squared_error(Box actions);
  /// Scalar check loss (tau - 1{theta <= a})(theta - a) on coordinate 0.
  static LossSpec check(Box actions, double tau);
};

struct DecisionConfig {
  NelderMeadConfig optimizer{4000, 0.05, 1e-12};
  bool use_closed_form = true;  // posterior mean / type-7 quantile for known losses
};

/// argmin over actions of the sample-average loss over draws.
Eigen::VectorXd decision_rule(const PosteriorDraws& draws, const LossSpec& loss,
                              const DecisionConfig& cfg = {});

/// argmin over actions of sum_j weights_j L(a, points_j).
Eigen::VectorXd weighted_decision_rule(std::span<const ParamPoint> points,
                                       std::span<const double> weights, const LossSpec& loss,
                                       const DecisionConfig& cfg = {});

struct HpdResult {
  double log_threshold = 0.0;  // log of the alpha-quantile of draw densities
  std::vector<bool> member;
  double fraction = 0.0;
};

/// Highest-posterior-density region at level 1 - alpha evaluated on a grid.
/// grid_logdens holds the (unnormalized) log posterior at each grid point,
/// on the same scale as draws.logdens. Ties at the threshold are members.
HpdResult hpd_region(const PosteriorDraws& draws, double level, std::span<const double> grid_logdens);

}  // namespace wgmm
