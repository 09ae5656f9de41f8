#pragma once

#include <functional>
#include <memory>
#include <optional>

#include <Eigen/Core>

#include "wgmm/dataset.hpp"
#include "wgmm/linalg.hpp"

namespace wgmm {

using ParamPoint = Eigen::VectorXd;

/// Moment sums for repeated evaluation on one dataset. Holds references to
/// the model and data it was bound to.
class MomentEvaluator {
 public:
  virtual ~MomentEvaluator() = default;
  virtual void accumulate(const ParamPoint& theta, Eigen::VectorXd& sum,
                          Eigen::MatrixXd& outer) const = 0;
  virtual Eigen::Index size() const = 0;
};

/// A moment function phi(x, theta) with parameter dimension p and moment
/// dimension k.
class MomentModel {
 public:
  virtual ~MomentModel() = default;

  virtual int param_dim() const = 0;
  virtual int moment_dim() const = 0;
  virtual std::optional<double> quantile_level() const { return std::nullopt; }

  /// phi(x_row, theta) into out (length k).
  virtual void evaluate(const Dataset& data, Eigen::Index row, const ParamPoint& theta,
                        Eigen::Ref<Eigen::VectorXd> out) const = 0;

  /// n x k matrix whose rows are phi(x_i, theta).
  virtual RowMatrix moment_matrix(const Dataset& data, const ParamPoint& theta) const;

  /// sum_i phi_i and sum_i phi_i phi_i'.
  virtual void accumulate(const Dataset& data, const ParamPoint& theta, Eigen::VectorXd& sum,
                          Eigen::MatrixXd& outer) const;

  /// Evaluator specialized to one dataset; the default forwards to accumulate.
  virtual std::unique_ptr<MomentEvaluator> bind(const Dataset& data) const;

  void check_dims(const Dataset& data, const ParamPoint& theta) const;
};

/// phi = (1{y - alpha - w'beta <= 0} - tau) z, theta = (alpha, beta).
class QuantileIvModel final : public MomentModel {
 public:
  QuantileIvModel(double tau, int num_regressors, int num_instruments);

  int param_dim() const override { return num_regressors_ + 1; }
  int moment_dim() const override { return num_instruments_; }
  std::optional<double> quantile_level() const override { return tau_; }
  double tau() const { return tau_; }

  void evaluate(const Dataset& data, Eigen::Index row, const ParamPoint& theta,
                Eigen::Ref<Eigen::VectorXd> out) const override;
  RowMatrix moment_matrix(const Dataset& data, const ParamPoint& theta) const override;
  void accumulate(const Dataset& data, const ParamPoint& theta, Eigen::VectorXd& sum,
                  Eigen::MatrixXd& outer) const override;
  /// Groups rows with identical instruments so each evaluation only counts
  /// indicator hits per group.
  std::unique_ptr<MomentEvaluator> bind(const Dataset& data) const override;

 private:
  double residual(const Dataset& data, Eigen::Index row, const ParamPoint& theta) const;

  double tau_;
  int num_regressors_;
  int num_instruments_;
};

/// phi = (y - alpha - w'beta) z.
class LinearIvModel final : public MomentModel {
 public:
  LinearIvModel(int num_regressors, int num_instruments);

  int param_dim() const override { return num_regressors_ + 1; }
  int moment_dim() const override { return num_instruments_; }
  void evaluate(const Dataset& data, Eigen::Index row, const ParamPoint& theta,
                Eigen::Ref<Eigen::VectorXd> out) const override;

 private:
  int num_regressors_;
  int num_instruments_;
};

/// User-supplied moment function.
class FunctionModel final : public MomentModel {
 public:
  using Fn = std::function<void(const Dataset&, Eigen::Index, const ParamPoint&,
                                Eigen::Ref<Eigen::VectorXd>)>;
  FunctionModel(int p, int k, Fn fn) : p_(p), k_(k), fn_(std::move(fn)) {}

  int param_dim() const override { return p_; }
  int moment_dim() const override { return k_; }
  void evaluate(const Dataset& data, Eigen::Index row, const ParamPoint& theta,
                Eigen::Ref<Eigen::VectorXd> out) const override {
    fn_(data, row, theta, out);
  }

 private:
  int p_;
  int k_;
  Fn fn_;
};

struct MomentStats {
  Eigen::VectorXd g;      // g_n(theta)
  Eigen::MatrixXd sigma;  // Sigma-hat(theta, theta)
  double q = 0.0;         // Q_n(theta)
  double ridge = 0.0;     // diagonal shift actually applied
};

Eigen::VectorXd eval_moment(const MomentModel& model, const Dataset& data, Eigen::Index row,
                            const ParamPoint& theta);

/// g_n(theta) = n^{-1/2} sum_i phi(x_i, theta).
Eigen::VectorXd sample_moments(const Dataset& data, const MomentModel& model,
                               const ParamPoint& theta);

/// Centered cross-covariance (1/n) sum_i (phi_i(t1) - mean)(phi_i(t2) - mean)'.
/// covariance(t1, t2) is exactly the transpose of covariance(t2, t1).
Eigen::MatrixXd covariance(const Dataset& data, const MomentModel& model, const ParamPoint& theta1,
                           const ParamPoint& theta2);

/// Centered cross-covariance of two precomputed moment matrices.
Eigen::MatrixXd cross_covariance(const RowMatrix& phi1, const RowMatrix& phi2);

/// g and Sigma-hat(theta, theta) in one pass, plus Q_n(theta) with the ridge
/// policy applied.
MomentStats moment_stats(const Dataset& data, const MomentModel& model, const ParamPoint& theta,
                         double ridge = kDefaultRidge);

/// Q_n on a fixed dataset through a bound evaluator.
class Objective {
 public:
  Objective(const Dataset& data, const MomentModel& model, double ridge = kDefaultRidge);
  MomentStats stats(const ParamPoint& theta) const;
  double operator()(const ParamPoint& theta) const { return stats(theta).q; }
  const MomentModel& model() const { return *model_; }

 private:
  const MomentModel* model_;
  std::unique_ptr<MomentEvaluator> eval_;
  double n_;
  double ridge_;
};

/// Q_n(theta) = g' (Sigma-hat + ridge * tr/k * I)^{-1} g, the ridge being
/// added only when Sigma-hat is near-singular.
double cue_objective(const Dataset& data, const MomentModel& model, const ParamPoint& theta,
                     double ridge = kDefaultRidge);

/// g' S^{-1} g under the ridge policy; zero when g == 0.
double quadratic_form(const Eigen::VectorXd& g, const Eigen::MatrixXd& S, double ridge,
                      double* applied = nullptr);

}  // namespace wgmm
