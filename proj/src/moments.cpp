#include "wgmm/moments.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "wgmm/errors.hpp"

namespace wgmm {

void MomentModel::check_dims(const Dataset&, const ParamPoint& theta) const {
  if (theta.size() != param_dim()) {
    throw std::invalid_argument("parameter has length " + std::to_string(theta.size()) +
                                ", model expects " + std::to_string(param_dim()));
  }
}

namespace {

void check_iv_columns(const Dataset& data, int num_regressors, int num_instruments) {
  if (data.z.cols() != num_instruments || data.w.cols() != num_regressors) {
    throw std::invalid_argument("dataset has " + std::to_string(data.w.cols()) + " regressors and " +
                                std::to_string(data.z.cols()) + " instruments, model expects " +
                                std::to_string(num_regressors) + " and " +
                                std::to_string(num_instruments));
  }
}

}  // namespace

RowMatrix MomentModel::moment_matrix(const Dataset& data, const ParamPoint& theta) const {
  check_dims(data, theta);
  RowMatrix phi(data.size(), moment_dim());
  Eigen::VectorXd row(moment_dim());
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    evaluate(data, i, theta, row);
    phi.row(i) = row.transpose();
  }
  return phi;
}

void MomentModel::accumulate(const Dataset& data, const ParamPoint& theta, Eigen::VectorXd& sum,
                             Eigen::MatrixXd& outer) const {
  const RowMatrix phi = moment_matrix(data, theta);
  sum = phi.colwise().sum().transpose();
  outer = phi.transpose() * phi;
  outer = 0.5 * (outer + outer.transpose()).eval();
}

namespace {

class ForwardingEvaluator final : public MomentEvaluator {
 public:
  ForwardingEvaluator(const MomentModel& model, const Dataset& data) : model_(model), data_(data) {}
  void accumulate(const ParamPoint& theta, Eigen::VectorXd& sum,
                  Eigen::MatrixXd& outer) const override {
    model_.accumulate(data_, theta, sum, outer);
  }
  Eigen::Index size() const override { return data_.size(); }

 private:
  const MomentModel& model_;
  const Dataset& data_;
};

class QuantileIvEvaluator final : public MomentEvaluator {
 public:
  QuantileIvEvaluator(const Dataset& data, double tau) : data_(data), tau_(tau) {
    std::map<std::vector<double>, std::uint32_t> ids;
    group_.reserve(static_cast<std::size_t>(data.size()));
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      std::vector<double> key(data.z.row(i).data(), data.z.row(i).data() + data.z.cols());
      for (double& v : key) v += 0.0;
      auto [it, inserted] = ids.emplace(std::move(key), static_cast<std::uint32_t>(ids.size()));
      if (inserted) {
        zrows_.push_back(data.z.row(i).transpose());
        count_.push_back(0.0);
      }
      group_.push_back(it->second);
      count_[it->second] += 1.0;
    }
  }

  void accumulate(const ParamPoint& theta, Eigen::VectorXd& sum,
                  Eigen::MatrixXd& outer) const override {
    const Eigen::Index k = data_.z.cols();
    const Eigen::Index p1 = data_.w.cols();
    std::vector<double> hits(zrows_.size(), 0.0);
    const double* y = data_.y.data();
    const double alpha = theta(0);
    if (p1 == 1) {
      const double beta = theta(1);
      const double* w = data_.w.data();
      for (Eigen::Index i = 0; i < data_.size(); ++i) {
        const double r = (y[i] - alpha) - w[i] * beta;
        hits[group_[static_cast<std::size_t>(i)]] += r <= 0.0 ? 1.0 : 0.0;
      }
    } else {
      for (Eigen::Index i = 0; i < data_.size(); ++i) {
        double r = y[i] - alpha;
        for (Eigen::Index j = 0; j < p1; ++j) r -= data_.w(i, j) * theta(1 + j);
        hits[group_[static_cast<std::size_t>(i)]] += r <= 0.0 ? 1.0 : 0.0;
      }
    }
    sum.setZero(k);
    outer.setZero(k, k);
    const double hi2 = (1.0 - tau_) * (1.0 - tau_), lo2 = tau_ * tau_;
    for (std::size_t g = 0; g < zrows_.size(); ++g) {
      const Eigen::VectorXd& z = zrows_[g];
      sum += (hits[g] - tau_ * count_[g]) * z;
      outer += (hits[g] * hi2 + (count_[g] - hits[g]) * lo2) * (z * z.transpose());
    }
    outer = 0.5 * (outer + outer.transpose()).eval();
  }
  Eigen::Index size() const override { return data_.size(); }

 private:
  const Dataset& data_;
  double tau_;
  std::vector<Eigen::VectorXd> zrows_;
  std::vector<double> count_;
  std::vector<std::uint32_t> group_;
};

}  // namespace

std::unique_ptr<MomentEvaluator> MomentModel::bind(const Dataset& data) const {
  return std::make_unique<ForwardingEvaluator>(*this, data);
}

std::unique_ptr<MomentEvaluator> QuantileIvModel::bind(const Dataset& data) const {
  check_iv_columns(data, num_regressors_, num_instruments_);
  return std::make_unique<QuantileIvEvaluator>(data, tau_);
}

QuantileIvModel::QuantileIvModel(double tau, int num_regressors, int num_instruments)
    : tau_(tau), num_regressors_(num_regressors), num_instruments_(num_instruments) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("quantile level must lie in (0,1)");
  if (num_instruments < 1) throw std::invalid_argument("need at least one instrument");
}

double QuantileIvModel::residual(const Dataset& data, Eigen::Index row,
                                 const ParamPoint& theta) const {
  double r = data.y(row) - theta(0);
  for (int j = 0; j < num_regressors_; ++j) r -= data.w(row, j) * theta(1 + j);
  return r;
}

void QuantileIvModel::evaluate(const Dataset& data, Eigen::Index row, const ParamPoint& theta,
                               Eigen::Ref<Eigen::VectorXd> out) const {
  check_dims(data, theta);
  check_iv_columns(data, num_regressors_, num_instruments_);
  // Ties count as <= 0.
  const double c = (residual(data, row, theta) <= 0.0 ? 1.0 : 0.0) - tau_;
  out = c * data.z.row(row).transpose();
}

RowMatrix QuantileIvModel::moment_matrix(const Dataset& data, const ParamPoint& theta) const {
  check_dims(data, theta);
  check_iv_columns(data, num_regressors_, num_instruments_);
  RowMatrix phi(data.size(), num_instruments_);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const double c = (residual(data, i, theta) <= 0.0 ? 1.0 : 0.0) - tau_;
    phi.row(i) = c * data.z.row(i);
  }
  return phi;
}

void QuantileIvModel::accumulate(const Dataset& data, const ParamPoint& theta,
                                 Eigen::VectorXd& sum, Eigen::MatrixXd& outer) const {
  check_dims(data, theta);
  check_iv_columns(data, num_regressors_, num_instruments_);
  const int k = num_instruments_;
  sum.setZero(k);
  outer.setZero(k, k);
  const double lo = -tau_, hi = 1.0 - tau_;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const double c = residual(data, i, theta) <= 0.0 ? hi : lo;
    const double c2 = c * c;
    const double* z = data.z.row(i).data();
    for (int a = 0; a < k; ++a) {
      sum(a) += c * z[a];
      for (int b = a; b < k; ++b) outer(a, b) += c2 * z[a] * z[b];
    }
  }
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < a; ++b) outer(a, b) = outer(b, a);
}

LinearIvModel::LinearIvModel(int num_regressors, int num_instruments)
    : num_regressors_(num_regressors), num_instruments_(num_instruments) {}

void LinearIvModel::evaluate(const Dataset& data, Eigen::Index row, const ParamPoint& theta,
                             Eigen::Ref<Eigen::VectorXd> out) const {
  check_dims(data, theta);
  check_iv_columns(data, num_regressors_, num_instruments_);
  double r = data.y(row) - theta(0);
  for (int j = 0; j < num_regressors_; ++j) r -= data.w(row, j) * theta(1 + j);
  out = r * data.z.row(row).transpose();
}

Eigen::VectorXd eval_moment(const MomentModel& model, const Dataset& data, Eigen::Index row,
                            const ParamPoint& theta) {
  model.check_dims(data, theta);
  Eigen::VectorXd out(model.moment_dim());
  model.evaluate(data, row, theta, out);
  return out;
}

Eigen::VectorXd sample_moments(const Dataset& data, const MomentModel& model,
                               const ParamPoint& theta) {
  if (data.size() < 1) throw DataError("sample moments need at least one observation");
  const RowMatrix phi = model.moment_matrix(data, theta);
  return phi.colwise().sum().transpose() / std::sqrt(static_cast<double>(data.size()));
}

Eigen::MatrixXd cross_covariance(const RowMatrix& phi1, const RowMatrix& phi2) {
  const Eigen::Index n = phi1.rows();
  if (phi2.rows() != n) throw std::invalid_argument("moment matrices differ in length");
  const Eigen::RowVectorXd m1 = phi1.colwise().mean();
  const Eigen::RowVectorXd m2 = phi2.colwise().mean();
  const Eigen::Index k1 = phi1.cols(), k2 = phi2.cols();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(k1, k2);
  // Explicit loops keep the summation order symmetric in the two arguments.
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index a = 0; a < k1; ++a) {
      const double da = phi1(i, a) - m1(a);
      for (Eigen::Index b = 0; b < k2; ++b) out(a, b) += da * (phi2(i, b) - m2(b));
    }
  }
  return out / static_cast<double>(n);
}

Eigen::MatrixXd covariance(const Dataset& data, const MomentModel& model, const ParamPoint& theta1,
                           const ParamPoint& theta2) {
  if (data.size() < 2) throw DataError("covariance needs at least two observations");
  return cross_covariance(model.moment_matrix(data, theta1), model.moment_matrix(data, theta2));
}

double quadratic_form(const Eigen::VectorXd& g, const Eigen::MatrixXd& S, double ridge,
                      double* applied) {
  if (applied) *applied = 0.0;
  if ((g.array() == 0.0).all()) return 0.0;
  const Eigen::MatrixXd R = regularize(S, ridge, applied);
  Eigen::LLT<Eigen::MatrixXd> llt(R);
  if (llt.info() != Eigen::Success) throw DegenerateCovariance("covariance is not positive definite");
  return std::max(0.0, g.dot(llt.solve(g)));
}

namespace {

MomentStats finish_stats(const Eigen::VectorXd& sum, const Eigen::MatrixXd& outer, double n,
                         double ridge) {
  MomentStats s;
  const Eigen::VectorXd mean = sum / n;
  s.g = sum / std::sqrt(n);
  s.sigma = outer / n - mean * mean.transpose();
  s.sigma = 0.5 * (s.sigma + s.sigma.transpose()).eval();
  s.q = quadratic_form(s.g, s.sigma, ridge, &s.ridge);
  return s;
}

}  // namespace

Objective::Objective(const Dataset& data, const MomentModel& model, double ridge)
    : model_(&model), eval_(model.bind(data)), n_(static_cast<double>(data.size())), ridge_(ridge) {
  if (data.size() < 2) throw DataError("moment statistics need at least two observations");
}

MomentStats Objective::stats(const ParamPoint& theta) const {
  if (theta.size() != model_->param_dim()) {
    throw std::invalid_argument("parameter has length " + std::to_string(theta.size()) +
                                ", model expects " + std::to_string(model_->param_dim()));
  }
  Eigen::VectorXd sum;
  Eigen::MatrixXd outer;
  eval_->accumulate(theta, sum, outer);
  return finish_stats(sum, outer, n_, ridge_);
}

MomentStats moment_stats(const Dataset& data, const MomentModel& model, const ParamPoint& theta,
                         double ridge) {
  if (data.size() < 2) throw DataError("moment statistics need at least two observations");
  Eigen::VectorXd sum;
  Eigen::MatrixXd outer;
  model.accumulate(data, theta, sum, outer);
  return finish_stats(sum, outer, static_cast<double>(data.size()), ridge);
}

double cue_objective(const Dataset& data, const MomentModel& model, const ParamPoint& theta,
                     double ridge) {
  return moment_stats(data, model, theta, ridge).q;
}

}  // namespace wgmm
