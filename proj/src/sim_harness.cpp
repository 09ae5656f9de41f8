#include "wgmm/sim_harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>

#include "wgmm/errors.hpp"
#include "wgmm/parallel.hpp"
#include "wgmm/stats.hpp"

namespace wgmm {

namespace {

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double index_value(const Dataset& data, Eigen::Index i, const ParamPoint& theta) {
  double v = theta(0);
  for (Eigen::Index j = 0; j < data.w.cols(); ++j) v += data.w(i, j) * theta(1 + j);
  return v;
}

// P(Y_i + e <= alpha + w_i' beta) for the jittered outcome.
double fire_probability(const CalibratedDesign& d, Eigen::Index i, const ParamPoint& theta) {
  return normal_cdf((index_value(d.base, i, theta) - d.base.y(i)) / d.jitter_sd);
}

void check_theta(const CalibratedDesign& d, const ParamPoint& theta) {
  if (theta.size() != d.base.w.cols() + 1) throw std::invalid_argument("parameter has the wrong length");
}

// sum_i omega_i E[c_i^2] z_i z_i' under P*.
Eigen::MatrixXd pstar_second_moment(const CalibratedDesign& d, const ParamPoint& theta) {
  const Eigen::Index k = d.base.z.cols();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(k, k);
  const double hi = 1.0 - d.tau, lo = d.tau;
  for (Eigen::Index i = 0; i < d.base.size(); ++i) {
    const double p = fire_probability(d, i, theta);
    const double c2 = p * hi * hi + (1.0 - p) * lo * lo;
    const Eigen::VectorXd z = d.base.z.row(i).transpose();
    out.noalias() += d.tilt.omega(i) * c2 * (z * z.transpose());
  }
  return out;
}

void check_constant_column(const Dataset& data, int column) {
  if (column < 0 || column >= data.z.cols()) throw ConfigError("constant instrument column is out of range");
  const double c = data.z(0, column);
  if (c == 0.0 || !(data.z.col(column).array() == c).all()) {
    throw ConfigError("instrument column " + std::to_string(column + 1) + " is not a nonzero constant");
  }
}

void pstar_row(const CalibratedDesign& d, std::discrete_distribution<std::size_t>& pick, Rng& obs,
               Dataset& out, Eigen::Index row) {
  const auto idx = static_cast<Eigen::Index>(pick(obs.engine()));
  out.y(row) = d.base.y(idx) + d.jitter_sd * obs.normal();
  out.w.row(row) = d.base.w.row(idx);
  out.z.row(row) = d.base.z.row(idx);
}

void degrade_row(const CalibratedDesign& d, Rng& sign, Dataset& out, Eigen::Index row) {
  const double u = sign.rademacher();
  for (Eigen::Index c = 0; c < out.z.cols(); ++c) {
    if (c != d.constant_column) out.z(row, c) *= u;
  }
}

Dataset empty_like(const CalibratedDesign& d, Eigen::Index n) {
  Dataset out;
  out.y.resize(n);
  out.w.resize(n, d.base.w.cols());
  out.z.resize(n, d.base.z.cols());
  return out;
}

std::discrete_distribution<std::size_t> picker(const CalibratedDesign& d) {
  return std::discrete_distribution<std::size_t>(d.tilt.omega.data(),
                                                 d.tilt.omega.data() + d.tilt.omega.size());
}

}  // namespace

TiltWeights tilt_weights(const RowMatrix& phi, int max_iter, double tol) {
  const Eigen::Index n = phi.rows();
  const Eigen::Index k = phi.cols();
  if (n < 1 || k < 1) throw std::invalid_argument("tilting needs a nonempty moment matrix");
  for (Eigen::Index c = 0; c < k; ++c) {
    if ((phi.col(c).array() > 0.0).all() || (phi.col(c).array() < 0.0).all()) {
      throw NumericalError("tilting has no solution: zero is outside the convex hull of the moments");
    }
  }
  auto objective = [&](const Eigen::VectorXd& t, Eigen::VectorXd* omega) {
    const Eigen::VectorXd s = phi * t;
    const double m = s.maxCoeff();
    const Eigen::ArrayXd e = (s.array() - m).exp();
    const double total = e.sum();
    if (omega) *omega = e.matrix() / total;
    return m + std::log(total);
  };

  TiltWeights tw;
  tw.t = Eigen::VectorXd::Zero(k);
  double f = objective(tw.t, &tw.omega);
  for (int it = 0; it <= max_iter; ++it) {
    const Eigen::VectorXd grad = phi.transpose() * tw.omega;
    tw.residual = grad.norm();
    tw.iterations = it;
    if (tw.residual < tol) return tw;
    if (it == max_iter) break;
    Eigen::MatrixXd H = phi.transpose() * tw.omega.asDiagonal() * phi - grad * grad.transpose();
    H.diagonal().array() += 1e-14 * std::max(1.0, H.trace());
    const Eigen::VectorXd step = -H.ldlt().solve(grad);
    double scale = 1.0;
    Eigen::VectorXd omega;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      const Eigen::VectorXd cand = tw.t + scale * step;
      const double fc = objective(cand, &omega);
      if (std::isfinite(fc) && fc <= f + 1e-4 * scale * grad.dot(step)) {
        tw.t = cand;
        tw.omega = omega;
        f = fc;
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted || !tw.t.allFinite() || tw.t.norm() > 1e8) break;
  }
  throw NumericalError("tilting did not converge: zero may lie outside the convex hull of the moments");
}

Dataset jitter_outcomes(const Dataset& data, std::uint64_t seed, double divisor) {
  validate(data);
  const std::vector<double> y(data.y.data(), data.y.data() + data.y.size());
  const double sd = std::sqrt(variance(y) / divisor);
  Rng rng(seed);
  Dataset out = data;
  for (Eigen::Index i = 0; i < out.size(); ++i) out.y(i) += sd * rng.normal();
  return out;
}

double CalibratedDesign::mixture_weight(Eigen::Index n) const {
  if (n < n0) throw ConfigError("sample size must be at least n0");
  return std::sqrt(static_cast<double>(n0) / static_cast<double>(n));
}

CalibratedDesign build_design(const Dataset& base, const DesignConfig& cfg) {
  validate(base);
  check_constant_column(base, cfg.constant_column);
  const QuantileIvModel model(cfg.tau, static_cast<int>(base.w.cols()), static_cast<int>(base.z.cols()));

  CalibratedDesign d;
  d.base = base;
  d.tau = cfg.tau;
  d.n0 = base.size();
  d.constant_column = cfg.constant_column;
  d.theta_hat = cfg.theta_hat ? *cfg.theta_hat
                              : cue_estimate(base, model, cfg.box, cfg.cue, derive_seed(cfg.seed, 0)).theta;
  const std::vector<double> y(base.y.data(), base.y.data() + base.y.size());
  d.jitter_sd = std::sqrt(variance(y) / cfg.jitter_divisor);

  RowMatrix phi(base.size(), base.z.cols());
  for (Eigen::Index i = 0; i < base.size(); ++i) {
    const double p = normal_cdf((index_value(base, i, d.theta_hat) - base.y(i)) / d.jitter_sd);
    phi.row(i) = (p - cfg.tau) * base.z.row(i);
  }
  d.tilt = tilt_weights(phi);
  return d;
}

P0Sampler::P0Sampler(const CalibratedDesign& design, std::uint64_t seed)
    : design_(&design), pick_(picker(design)), obs_(derive_seed(seed, 1)), sign_(derive_seed(seed, 2)) {}

void P0Sampler::draw(Dataset& out, Eigen::Index row) {
  pstar_row(*design_, pick_, obs_, out, row);
  degrade_row(*design_, sign_, out, row);
}

Dataset draw_pstar_sample(const CalibratedDesign& design, Eigen::Index n, std::uint64_t seed) {
  Dataset out = empty_like(design, n);
  auto pick = picker(design);
  Rng obs(derive_seed(seed, 1));
  for (Eigen::Index i = 0; i < n; ++i) pstar_row(design, pick, obs, out, i);
  return out;
}

Dataset draw_p0_sample(const CalibratedDesign& design, Eigen::Index n, std::uint64_t seed) {
  check_constant_column(design.base, design.constant_column);
  Dataset out = empty_like(design, n);
  P0Sampler sampler(design, seed);
  for (Eigen::Index i = 0; i < n; ++i) sampler.draw(out, i);
  return out;
}

Dataset draw_calibrated_sample(const CalibratedDesign& design, Eigen::Index n, std::uint64_t seed,
                               std::vector<char>* from_pstar) {
  const double weight = design.mixture_weight(n);
  Dataset out = empty_like(design, n);
  auto pick = picker(design);
  Rng choice(derive_seed(seed, 0));
  Rng obs(derive_seed(seed, 1));
  Rng sign(derive_seed(seed, 2));
  if (from_pstar) from_pstar->assign(static_cast<std::size_t>(n), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool star = choice.uniform() < weight;
    pstar_row(design, pick, obs, out, i);
    if (!star) degrade_row(design, sign, out, i);
    if (from_pstar) (*from_pstar)[static_cast<std::size_t>(i)] = star ? 1 : 0;
  }
  return out;
}

Eigen::VectorXd pstar_moment(const CalibratedDesign& design, const ParamPoint& theta) {
  check_theta(design, theta);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(design.base.z.cols());
  for (Eigen::Index i = 0; i < design.base.size(); ++i) {
    const double c = fire_probability(design, i, theta) - design.tau;
    out += design.tilt.omega(i) * c * design.base.z.row(i).transpose();
  }
  return out;
}

Eigen::VectorXd p0_moment(const CalibratedDesign& design, const ParamPoint& theta) {
  Eigen::VectorXd m = pstar_moment(design, theta);
  for (Eigen::Index c = 0; c < m.size(); ++c) {
    if (c != design.constant_column) m(c) = 0.0;
  }
  return m;
}

Eigen::MatrixXd pstar_covariance(const CalibratedDesign& design, const ParamPoint& theta) {
  check_theta(design, theta);
  const Eigen::VectorXd m = pstar_moment(design, theta);
  Eigen::MatrixXd s = pstar_second_moment(design, theta) - m * m.transpose();
  return 0.5 * (s + s.transpose());
}

Eigen::MatrixXd p0_covariance(const CalibratedDesign& design, const ParamPoint& theta) {
  check_theta(design, theta);
  Eigen::MatrixXd s = pstar_second_moment(design, theta);
  const Eigen::Index c0 = design.constant_column;
  for (Eigen::Index c = 0; c < s.rows(); ++c) {
    if (c == c0) continue;
    s(c, c0) = 0.0;
    s(c0, c) = 0.0;
  }
  const Eigen::VectorXd m = p0_moment(design, theta);
  s -= m * m.transpose();
  return 0.5 * (s + s.transpose());
}

Eigen::MatrixXd pstar_jacobian(const CalibratedDesign& design, const ParamPoint& theta) {
  check_theta(design, theta);
  const Eigen::Index k = design.base.z.cols();
  const Eigen::Index p = theta.size();
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(k, p);
  for (Eigen::Index i = 0; i < design.base.size(); ++i) {
    const double x = (index_value(design.base, i, theta) - design.base.y(i)) / design.jitter_sd;
    const double dens = design.tilt.omega(i) * normal_pdf(x) / design.jitter_sd;
    const Eigen::VectorXd z = design.base.z.row(i).transpose();
    G.col(0) += dens * z;
    for (Eigen::Index j = 1; j < p; ++j) G.col(j) += dens * design.base.w(i, j - 1) * z;
  }
  return G;
}

CoordinateSummary summarize(std::span<const double> x) {
  CoordinateSummary s;
  if (x.empty()) return s;
  s.mean = mean(x);
  s.sd = std::sqrt(variance(x));
  for (double p : {0.05, 0.25, 0.5, 0.75, 0.95}) s.quantiles.push_back(quantile_type7(x, p));
  s.skewness = s.sd > 0.0 ? skewness(x) : 0.0;
  s.ks_normal = s.sd > 0.0 ? ks_normal(x, s.mean, s.sd) : 1.0;
  return s;
}

std::vector<double> EstimatorDistribution::coordinate(Eigen::Index j) const {
  std::vector<double> out;
  for (std::size_t r = 0; r < theta.size(); ++r) {
    if (!failed[r]) out.push_back(theta[r](j));
  }
  return out;
}

EstimatorDistribution estimator_distribution(const CalibratedDesign& design, Eigen::Index n,
                                             std::size_t reps, const Box& box,
                                             const CueSearchConfig& cue, std::uint64_t seed,
                                             std::size_t workers) {
  if (reps < 1) throw ConfigError("at least one replication is required");
  const QuantileIvModel model(design.tau, static_cast<int>(design.base.w.cols()),
                              static_cast<int>(design.base.z.cols()));
  const Eigen::Index p = design.base.w.cols() + 1;
  EstimatorDistribution out;
  out.theta.assign(reps, Eigen::VectorXd::Constant(p, std::numeric_limits<double>::quiet_NaN()));
  out.q_min.assign(reps, std::numeric_limits<double>::quiet_NaN());
  out.failed.assign(reps, 0);
  parallel_for(reps, workers, [&](std::size_t r) {
    const Dataset data = draw_calibrated_sample(design, n, derive_seed(seed, r, 0));
    try {
      const CueEstimate est = cue_estimate(data, model, box, cue, derive_seed(seed, r, 1));
      out.theta[r] = est.theta;
      out.q_min[r] = est.q;
    } catch (const NumericalError&) {
      out.failed[r] = 1;
    }
  });
  for (char f : out.failed) out.failures += f ? 1 : 0;
  for (Eigen::Index j = 0; j < p; ++j) out.summary.push_back(summarize(out.coordinate(j)));
  return out;
}

NormalApprox strong_asymptotic(const CalibratedDesign& design, Eigen::Index n) {
  const Eigen::MatrixXd G = pstar_jacobian(design, design.theta_hat);
  const Eigen::MatrixXd S = pstar_covariance(design, design.theta_hat);
  const Eigen::MatrixXd info = G.transpose() * S.ldlt().solve(G);
  NormalApprox a;
  a.mean = design.theta_hat;
  a.cov = info.inverse() / static_cast<double>(n);
  a.cov = 0.5 * (a.cov + a.cov.transpose()).eval();
  return a;
}

double identified_alpha(const CalibratedDesign& design, double beta) {
  if (design.base.w.cols() != 1) throw ConfigError("the identified set is parameterized for one regressor");
  const auto& b = design.base;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    lo = std::min(lo, b.y(i) - b.w(i, 0) * beta);
    hi = std::max(hi, b.y(i) - b.w(i, 0) * beta);
  }
  lo -= 40.0 * design.jitter_sd;
  hi += 40.0 * design.jitter_sd;
  ParamPoint theta(2);
  theta(1) = beta;
  auto excess = [&](double a) {
    theta(0) = a;
    double s = 0.0;
    for (Eigen::Index i = 0; i < b.size(); ++i) s += design.tilt.omega(i) * fire_probability(design, i, theta);
    return s - design.tau;
  };
  for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (excess(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double BvmSpec::q_of(double b) const {
  if (beta.empty()) throw std::invalid_argument("empty identified-set grid");
  if (b <= beta.front()) return alpha.front();
  if (b >= beta.back()) return alpha.back();
  const auto it = std::upper_bound(beta.begin(), beta.end(), b);
  const auto i = static_cast<std::size_t>(it - beta.begin());
  const double t = (b - beta[i - 1]) / (beta[i] - beta[i - 1]);
  return alpha[i - 1] + t * (alpha[i] - alpha[i - 1]);
}

ReducedProjection reduced_projection(const Eigen::MatrixXd& nabla, const Eigen::MatrixXd& sigma,
                                     bool half_j) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw NumericalError("Sigma(beta) is singular");
  Eigen::MatrixXd sinv = llt.solve(Eigen::MatrixXd::Identity(sigma.rows(), sigma.cols()));
  sinv = 0.5 * (sinv + sinv.transpose()).eval();
  const Eigen::MatrixXd v = sinv * nabla;
  ReducedProjection rp;
  rp.J = (half_j ? 0.5 : 1.0) * (nabla.transpose() * v);
  if (!(rp.J.determinant() > 1e-300)) throw NumericalError("J(beta) is numerically singular");
  rp.M = sinv - v * rp.J.inverse() * v.transpose();
  rp.M = 0.5 * (rp.M + rp.M.transpose()).eval();
  return rp;
}

BvmSpec build_bvm_spec(const CalibratedDesign& design, const BvmConfig& cfg) {
  if (cfg.beta_count < 2 || !(cfg.beta_max > cfg.beta_min)) throw ConfigError("beta grid needs two or more points");
  if (!(cfg.fd_step > 0.0)) throw ConfigError("finite-difference step must be positive");
  cfg.box.validate();
  BvmSpec spec;
  spec.half_j = cfg.half_j;
  for (int b = 0; b < cfg.beta_count; ++b) {
    const double beta = cfg.beta_min + (cfg.beta_max - cfg.beta_min) * b / (cfg.beta_count - 1);
    const double q = identified_alpha(design, beta);
    ParamPoint theta(2);
    theta << q, beta;
    ParamPoint up = theta, down = theta;
    up(0) += cfg.fd_step;
    down(0) -= cfg.fd_step;
    const Eigen::MatrixXd nabla = (p0_moment(design, up) - p0_moment(design, down)) / (2.0 * cfg.fd_step);
    const Eigen::MatrixXd sigma = p0_covariance(design, theta);
    const ReducedProjection rp = reduced_projection(nabla, sigma, cfg.half_j);
    const double det_j = rp.J.determinant();
    const bool inside = q >= cfg.box.lower(0) && q <= cfg.box.upper(0) && beta >= cfg.box.lower(1) &&
                        beta <= cfg.box.upper(1);
    spec.beta.push_back(beta);
    spec.alpha.push_back(q);
    spec.nabla.push_back(nabla);
    spec.sigma.push_back(sigma);
    spec.J.push_back(rp.J);
    spec.M.push_back(rp.M);
    spec.pi0.push_back(inside ? 1.0 / std::sqrt(det_j) : 0.0);
  }
  return spec;
}

std::vector<double> infeasible_posterior(const BvmSpec& spec, const Dataset& data,
                                         const MomentModel& model) {
  std::vector<double> logw(spec.beta.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t b = 0; b < spec.beta.size(); ++b) {
    if (spec.pi0[b] <= 0.0) continue;
    ParamPoint theta(2);
    theta << spec.alpha[b], spec.beta[b];
    const Eigen::VectorXd g = sample_moments(data, model, theta);
    logw[b] = std::log(spec.pi0[b]) - 0.5 * g.dot(spec.M[b] * g);
  }
  const double norm = log_sum_exp(logw);
  if (!std::isfinite(norm)) throw NumericalError("infeasible posterior has no mass");
  std::vector<double> w(logw.size());
  for (std::size_t b = 0; b < w.size(); ++b) w[b] = std::exp(logw[b] - norm);
  return w;
}

PosteriorDraws feasible_posterior(const BvmSpec& spec, const Dataset& data,
                                  const MomentModel& model, const Box& box, const ChainConfig& cfg,
                                  std::uint64_t seed, std::size_t workers) {
  box.validate();
  const auto [qmin, qmax] = std::minmax_element(spec.alpha.begin(), spec.alpha.end());
  Box bg;
  bg.lower = Eigen::Vector2d(box.lower(1), box.lower(0) - *qmax);
  bg.upper = Eigen::Vector2d(box.upper(1), box.upper(0) - *qmin);
  auto to_theta = [&](const Eigen::VectorXd& x) {
    ParamPoint theta(2);
    theta << spec.q_of(x(0)) + x(1), x(0);
    return theta;
  };
  const Objective q_n(data, model);
  auto logdens = [&](const Eigen::VectorXd& x) {
    const ParamPoint theta = to_theta(x);
    if (!box.contains(theta)) return -std::numeric_limits<double>::infinity();
    return -0.5 * q_n(theta);
  };
  MultiChainResult res = sample_chains(logdens, bg, cfg, seed, workers);
  for (auto& d : res.pooled.draws) d = to_theta(d);
  return res.pooled;
}

BvmGapReport bvm_gap(const PosteriorDraws& feasible, const BvmSpec& spec,
                     std::span<const double> infeasible_weights,
                     std::span<const TestFunction> tests, const CalibratedDesign& design,
                     Eigen::Index n, std::span<const double> radii) {
  if (feasible.draws.empty()) throw std::invalid_argument("no feasible draws");
  if (infeasible_weights.size() != spec.beta.size()) throw std::invalid_argument("weights do not match the beta grid");
  BvmGapReport rep;
  const std::vector<double> default_radii = {10.0, 50.0, 100.0};
  if (radii.empty()) radii = default_radii;
  rep.radii.assign(radii.begin(), radii.end());

  std::vector<double> stat(feasible.draws.size());
  for (std::size_t i = 0; i < stat.size(); ++i) {
    const ParamPoint& theta = feasible.draws[i];
    const Eigen::VectorXd phi = p0_moment(design, theta);
    stat[i] = phi.dot(p0_covariance(design, theta).ldlt().solve(phi));
  }
  for (double c : rep.radii) {
    std::size_t out = 0;
    for (double s : stat) out += s >= c / static_cast<double>(n) ? 1 : 0;
    rep.mass_outside.push_back(static_cast<double>(out) / static_cast<double>(stat.size()));
  }
  for (const auto& f : tests) {
    double fe = 0.0;
    for (const auto& theta : feasible.draws) fe += f(theta);
    fe /= static_cast<double>(feasible.draws.size());
    double in = 0.0;
    for (std::size_t b = 0; b < spec.beta.size(); ++b) {
      if (infeasible_weights[b] == 0.0) continue;
      ParamPoint theta(2);
      theta << spec.alpha[b], spec.beta[b];
      in += infeasible_weights[b] * f(theta);
    }
    rep.feasible.push_back(fe);
    rep.infeasible.push_back(in);
    rep.gaps.push_back(std::abs(fe - in));
  }
  return rep;
}

Dataset synthetic_fish_data(std::uint64_t seed) {
  constexpr Eigen::Index n = 111;
  Rng rng(seed);
  Dataset d;
  d.y.resize(n);
  d.w.resize(n, 1);
  d.z.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = rng.uniform();
    const double stormy = u < 0.29 ? 1.0 : 0.0;
    const double mixed = (u >= 0.29 && u < 0.62) ? 1.0 : 0.0;
    const double v = 0.33 * rng.normal();
    const double e = rng.normal();
    const double price = -0.32 + 0.22 * stormy + 0.08 * mixed + v;
    const double quantity = 8.55 - 0.9 * price - 0.7 * v + 0.55 * e * (1.0 + 0.5 * stormy);
    d.y(i) = std::round(quantity * 1e4) / 1e4;
    d.w(i, 0) = std::round(price * 1e4) / 1e4;
    d.z(i, 0) = 1.0;
    d.z(i, 1) = mixed;
    d.z(i, 2) = stormy;
  }
  return d;
}

}  // namespace wgmm
