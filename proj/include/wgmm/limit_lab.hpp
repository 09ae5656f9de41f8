#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "wgmm/quasi_bayes.hpp"
#include "wgmm/robust.hpp"

namespace wgmm {

/// Finite-Theta Gaussian experiment: g ~ N(m, Sigma) with g stacked as r
/// blocks of length k, one per label.
struct FiniteExperiment {
  int r = 0;
  int k = 0;
  std::vector<Eigen::VectorXd> labels;  // Theta_0
  Eigen::VectorXd m;                    // rk
  Eigen::MatrixXd sigma;                // rk x rk
  Eigen::MatrixXd anchor;               // k x rk

  /// Point evaluation at label j.
  static Eigen::MatrixXd point_anchor(int r, int k, int j = 0);
  Eigen::MatrixXd block(Eigen::Index i, Eigen::Index j) const;
  void validate() const;
};

/// Draws g = m + Sigma^{1/2} e with Sigma^{1/2} the Cholesky factor.
Eigen::VectorXd simulate_draw(const FiniteExperiment& exp, std::uint64_t seed);

struct ReparamResult {
  Eigen::MatrixXd psi;         // rk x k
  Eigen::MatrixXd sigma_xi;    // k x k
  Eigen::MatrixXd sigma_tilde; // rk x rk
};

/// psi = Sigma A'(A Sigma A')^{-1}, Sigma_xi = A Sigma A', Sigma~ = Sigma - psi Sigma_xi psi'.
/// Throws NumericalError when a k x k block of A Sigma is singular.
ReparamResult reparameterize(const Eigen::MatrixXd& sigma, const Eigen::MatrixXd& anchor, int k);

/// mu = (I - psi A) m.
Eigen::VectorXd nuisance_mean(const ReparamResult& rp, const Eigen::MatrixXd& anchor,
                              const Eigen::VectorXd& m);

/// log l(theta_j; g, Sigma, lambda) under the proportional prior mu ~ N(0, lambda Sigma~).
double log_integrated_likelihood(Eigen::Index j, const Eigen::VectorXd& g,
                                 const FiniteExperiment& exp, const ReparamResult& rp,
                                 double lambda);
double integrated_likelihood(Eigen::Index j, const Eigen::VectorXd& g, const FiniteExperiment& exp,
                             double lambda);

/// lambda -> infinity limit: log|det psi_j| - log|Sigma_jj|/2 - g_j' Sigma_jj^{-1} g_j / 2.
double log_quasi_likelihood_limit(Eigen::Index j, const Eigen::VectorXd& g,
                                  const FiniteExperiment& exp, const ReparamResult& rp);

/// log l(theta_j) for a general prior mu ~ N(0, Omega) supported on span(Sigma~).
double log_integrated_likelihood_general(Eigen::Index j, const Eigen::VectorXd& g,
                                         const FiniteExperiment& exp, const ReparamResult& rp,
                                         const Eigen::MatrixXd& omega);

/// True iff Omega_jj^{-1} Omega_ji = Sigma~_jj^{-1} Sigma~_ji (max abs deviation <= tol)
/// for every label j whose blocks are of full rank.
bool invariance_holds(const Eigen::MatrixXd& omega, const Eigen::MatrixXd& sigma_tilde, int k,
                      double tol = 1e-8);

/// Draws pairs of g sharing (xi, h(theta_j)) but not h elsewhere and checks that
/// l(theta_j) agrees to 1e-8 relative, at every full-rank label.
bool likelihood_locality_check(const FiniteExperiment& exp, const Eigen::MatrixXd& omega,
                               int trials, std::uint64_t seed, double rel_tol = 1e-8);
/// Proportional prior Omega = lambda Sigma~.
bool likelihood_locality_check(const FiniteExperiment& exp, double lambda, int trials,
                               std::uint64_t seed, double rel_tol = 1e-8);

/// Grid process of one draw, null at label `null_label`.
GridProcess experiment_process(const FiniteExperiment& exp, const Eigen::VectorXd& g,
                               Eigen::Index null_label);

struct RejectionRate {
  std::string case_name;
  bool null = true;
  double rate = 0.0;
  std::size_t reps = 0;
  double band = 0.0;  // 3 sqrt(alpha(1-alpha)/reps) for null cases
};

struct SimilarityCase {
  std::string name;
  Eigen::VectorXd m;  // mean of g
  bool null = true;
};

/// Rejection rate of the conditional test of theta_0 = labels[null_label] per case.
std::vector<RejectionRate> similarity_power_sim(const FiniteExperiment& exp,
                                                std::span<const SimilarityCase> cases,
                                                std::span<const double> weights,
                                                Eigen::Index null_label, const RobustConfig& cfg,
                                                std::size_t reps, std::uint64_t seed,
                                                std::size_t workers = 1);

struct LimitOfBayesResult {
  std::vector<double> lambdas;
  std::vector<Eigen::VectorXd> actions;
  Eigen::VectorXd limit_action;
  std::vector<double> gaps;  // |action(lambda) - limit_action| (max norm)
};

/// Bayes actions over the labels under l(.; g, Sigma, lambda) for each lambda,
/// and the quasi-Bayes action under the lambda -> infinity limit.
LimitOfBayesResult limit_of_bayes(const FiniteExperiment& exp, const Eigen::VectorXd& g,
                                  std::span<const double> prior, const LossSpec& loss,
                                  std::span<const double> lambdas,
                                  const DecisionConfig& cfg = {});

/// JSON experiment description: r, k, labels, m, sigma (row-major), anchor,
/// lambda, prior weights.
struct ExperimentSpec {
  FiniteExperiment exp;
  std::vector<double> lambdas;
  std::vector<double> prior;
};
ExperimentSpec load_experiment_spec(const std::filesystem::path& path);
ExperimentSpec parse_experiment_spec(const std::string& json_text);

/// Random generic experiment: Sigma = B B' + 0.1 I with standard normal B,
/// point anchor at label 0, labels 0..r-1, m = 0.
FiniteExperiment random_experiment(int r, int k, std::uint64_t seed);

}  // namespace wgmm
