#include "wgmm/quasi_bayes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "wgmm/errors.hpp"
#include "wgmm/parallel.hpp"
#include "wgmm/rng.hpp"
#include "wgmm/stats.hpp"

namespace wgmm {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

double Prior::operator()(const ParamPoint& theta) const {
  if (!support.contains(theta)) return kNegInf;
  return log_density ? log_density(theta) : 0.0;
}

double log_quasi_posterior(const Dataset& data, const MomentModel& model, const Prior& prior,
                           const ParamPoint& theta, double ridge) {
  const double lp = prior(theta);
  if (!std::isfinite(lp)) return kNegInf;
  return lp - 0.5 * cue_objective(data, model, theta, ridge);
}

Eigen::VectorXd PosteriorDraws::mean() const {
  if (draws.empty()) throw std::invalid_argument("no draws");
  Eigen::VectorXd m = Eigen::VectorXd::Zero(dim());
  for (const auto& d : draws) m += d;
  return m / static_cast<double>(draws.size());
}

std::vector<double> PosteriorDraws::coordinate(Eigen::Index j) const {
  std::vector<double> out;
  out.reserve(draws.size());
  for (const auto& d : draws) out.push_back(d(j));
  return out;
}

PosteriorDraws slice_sample(const LogDensity& log_density, const Eigen::VectorXd& init,
                            const SliceConfig& cfg, std::uint64_t seed) {
  const Eigen::Index p = init.size();
  if (cfg.widths.size() != p || !(cfg.widths.array() > 0.0).all()) {
    throw std::invalid_argument("slice widths must be positive, one per coordinate");
  }
  if (cfg.thin == 0) throw std::invalid_argument("thinning must be positive");
  Eigen::VectorXd x = init;
  double fx = log_density(x);
  if (!std::isfinite(fx)) throw std::invalid_argument("initial point has zero density");

  Rng rng(seed);
  PosteriorDraws out;
  out.seed = seed;
  out.burn_in = cfg.burn_in;
  out.thin = cfg.thin;
  out.chain_length = cfg.n_draws;
  out.draws.reserve(cfg.n_draws / cfg.thin);
  out.logdens.reserve(cfg.n_draws / cfg.thin);

  Eigen::VectorXd trial = x;
  auto eval_at = [&](Eigen::Index d, double v) {
    trial(d) = v;
    return log_density(trial);
  };

  const std::size_t total = cfg.burn_in + cfg.n_draws;
  for (std::size_t it = 0; it < total; ++it) {
    for (Eigen::Index d = 0; d < p; ++d) {
      trial = x;
      const double level = fx - rng.exponential();
      const double w = cfg.widths(d);
      double left = x(d) - w * rng.uniform();
      double right = left + w;
      int j = static_cast<int>(std::floor(cfg.max_step_out * rng.uniform()));
      int k = cfg.max_step_out - 1 - j;
      while (j > 0 && eval_at(d, left) > level) {
        left -= w;
        --j;
      }
      while (k > 0 && eval_at(d, right) > level) {
        right += w;
        --k;
      }
      for (;;) {
        const double v = left + (right - left) * rng.uniform();
        const double fv = eval_at(d, v);
        if (fv > level) {
          x(d) = v;
          fx = fv;
          break;
        }
        if (v < x(d)) {
          left = v;
        } else {
          right = v;
        }
        if (right - left <= 0.0) {
          break;
        }
      }
    }
    if (it >= cfg.burn_in && (it - cfg.burn_in + 1) % cfg.thin == 0) {
      out.draws.push_back(x);
      out.logdens.push_back(fx);
    }
  }
  return out;
}

Eigen::VectorXd split_rhat(const std::vector<PosteriorDraws>& chains) {
  if (chains.empty()) throw std::invalid_argument("no chains");
  const Eigen::Index p = chains.front().dim();
  std::size_t len = chains.front().size();
  for (const auto& c : chains) len = std::min(len, c.size());
  const std::size_t half = len / 2;
  Eigen::VectorXd rhat = Eigen::VectorXd::Constant(p, std::numeric_limits<double>::quiet_NaN());
  if (half < 2) return rhat;

  for (Eigen::Index j = 0; j < p; ++j) {
    std::vector<double> means;
    std::vector<double> vars;
    for (const auto& c : chains) {
      for (int s = 0; s < 2; ++s) {
        const std::size_t start = s * half;
        double m = 0.0;
        for (std::size_t i = 0; i < half; ++i) m += c.draws[start + i](j);
        m /= static_cast<double>(half);
        double v = 0.0;
        for (std::size_t i = 0; i < half; ++i) {
          const double d = c.draws[start + i](j) - m;
          v += d * d;
        }
        means.push_back(m);
        vars.push_back(v / static_cast<double>(half - 1));
      }
    }
    const double n = static_cast<double>(half);
    const double within = wgmm::mean(vars);
    const double grand = wgmm::mean(means);
    double between = 0.0;
    for (double m : means) between += (m - grand) * (m - grand);
    between *= n / static_cast<double>(means.size() - 1);
    if (within <= 0.0) {
      rhat(j) = between <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
      continue;
    }
    const double pooled = (n - 1.0) / n * within + between / n;
    rhat(j) = std::sqrt(pooled / within);
  }
  return rhat;
}

MultiChainResult sample_chains(const LogDensity& log_density, const Box& box, ChainConfig cfg,
                               std::uint64_t seed, std::size_t workers) {
  box.validate();
  if (cfg.chains == 0) throw std::invalid_argument("at least one chain is required");
  if (cfg.slice.widths.size() == 0) cfg.slice.widths = box.width() / 20.0;

  MultiChainResult result;
  result.per_chain.resize(cfg.chains);
  parallel_for(cfg.chains, workers, [&](std::size_t c) {
    Rng init_rng(derive_seed(seed, c, 1));
    Eigen::VectorXd init(box.dim());
    bool found = false;
    for (std::size_t a = 0; a < cfg.init_attempts && !found; ++a) {
      for (Eigen::Index d = 0; d < box.dim(); ++d) {
        init(d) = box.lower(d) + (box.upper(d) - box.lower(d)) * init_rng.uniform();
      }
      found = std::isfinite(log_density(init));
    }
    if (!found) throw NumericalError("sampler could not find a starting point with finite density");
    result.per_chain[c] = slice_sample(log_density, init, cfg.slice, derive_seed(seed, c));
  });

  auto& pooled = result.pooled;
  pooled.seed = seed;
  pooled.burn_in = cfg.slice.burn_in;
  pooled.thin = cfg.slice.thin;
  pooled.chain_length = cfg.slice.n_draws;
  pooled.chains = cfg.chains;
  for (const auto& c : result.per_chain) {
    pooled.draws.insert(pooled.draws.end(), c.draws.begin(), c.draws.end());
    pooled.logdens.insert(pooled.logdens.end(), c.logdens.begin(), c.logdens.end());
  }
  result.rhat = split_rhat(result.per_chain);
  result.converged = (result.rhat.array() < cfg.rhat_threshold).all();
  return result;
}

MultiChainResult sample_quasi_posterior(const Dataset& data, const MomentModel& model,
                                        const Prior& prior, const ChainConfig& cfg,
                                        std::uint64_t seed, std::size_t workers, double ridge) {
  const Objective q_n(data, model, ridge);
  auto ld = [&](const Eigen::VectorXd& theta) {
    const double lp = prior(theta);
    if (!std::isfinite(lp)) return kNegInf;
    return lp - 0.5 * q_n(theta);
  };
  return sample_chains(ld, prior.support, cfg, seed, workers);
}

namespace {

// The part of theta a scalar action is compared against.
Eigen::VectorXd target(const Eigen::VectorXd& action, const ParamPoint& theta) {
  if (action.size() == theta.size()) return theta;
  return theta.head(action.size());
}

Eigen::Index action_dim(const LossSpec& loss) {
  if (const auto* box = std::get_if<Box>(&loss.actions)) return box->dim();
  const auto& set = std::get<std::vector<Eigen::VectorXd>>(loss.actions);
  if (set.empty()) throw std::invalid_argument("empty action set");
  return set.front().size();
}

double weighted_quantile(std::vector<std::pair<double, double>> vw, double tau) {
  std::sort(vw.begin(), vw.end());
  double total = 0.0;
  for (const auto& [v, w] : vw) total += w;
  double cum = 0.0;
  for (const auto& [v, w] : vw) {
    cum += w;
    if (cum >= tau * total) return v;
  }
  return vw.back().first;
}

Eigen::VectorXd minimize_expected_loss(std::span<const ParamPoint> points,
                                       std::span<const double> weights, const LossSpec& loss,
                                       const Eigen::VectorXd& start, const DecisionConfig& cfg) {
  auto risk = [&](const Eigen::VectorXd& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double w = weights.empty() ? 1.0 : weights[i];
      if (w != 0.0) s += w * loss.loss(a, points[i]);
    }
    return s;
  };
  if (const auto* set = std::get_if<std::vector<Eigen::VectorXd>>(&loss.actions)) {
    std::size_t best = 0;
    double best_risk = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < set->size(); ++i) {
      const double r = risk((*set)[i]);
      if (r < best_risk) {
        best_risk = r;
        best = i;
      }
    }
    return (*set)[best];
  }
  const Box& box = std::get<Box>(loss.actions);
  return nelder_mead(risk, box.clamp(start), cfg.optimizer, &box).x;
}

Eigen::VectorXd decide(std::span<const ParamPoint> points, std::span<const double> weights,
                       const LossSpec& loss, const DecisionConfig& cfg) {
  if (points.empty()) throw std::invalid_argument("decision rule needs at least one draw");
  if (!weights.empty() && weights.size() != points.size()) {
    throw std::invalid_argument("weights and points differ in length");
  }
  const Eigen::Index dim = action_dim(loss);
  const Box* box = std::get_if<Box>(&loss.actions);
  auto weight = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    mean += weight(i) * target(mean, points[i]);
    total += weight(i);
  }
  if (!(total > 0.0)) throw std::invalid_argument("decision rule weights sum to zero");
  mean /= total;

  if (cfg.use_closed_form && box && loss.kind == LossSpec::Kind::squared_error) {
    return box->clamp(mean);
  }
  if (cfg.use_closed_form && box && loss.kind == LossSpec::Kind::check && dim == 1) {
    Eigen::VectorXd a(1);
    if (weights.empty()) {
      std::vector<double> v;
      v.reserve(points.size());
      for (const auto& p : points) v.push_back(p(0));
      a(0) = quantile_type7(v, loss.tau);
    } else {
      std::vector<std::pair<double, double>> vw;
      for (std::size_t i = 0; i < points.size(); ++i) vw.emplace_back(points[i](0), weights[i]);
      a(0) = weighted_quantile(std::move(vw), loss.tau);
    }
    return box->clamp(a);
  }
  if (!loss.loss) throw std::invalid_argument("loss function is not set");
  return minimize_expected_loss(points, weights, loss, mean, cfg);
}

}  // namespace

LossSpec LossSpec::squared_error(Box actions) {
  LossSpec spec;
  spec.actions = std::move(actions);
  spec.kind = Kind::squared_error;
  spec.loss = [](const Eigen::VectorXd& a, const ParamPoint& theta) {
    return (a - target(a, theta)).squaredNorm();
  };
  return spec;
}

LossSpec LossSpec::check(Box actions, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("check loss level must lie in (0,1)");
  LossSpec spec;
  spec.actions = std::move(actions);
  spec.kind = Kind::check;
  spec.tau = tau;
  spec.loss = [tau](const Eigen::VectorXd& a, const ParamPoint& theta) {
    const double u = theta(0) - a(0);
    return (tau - (u <= 0.0 ? 1.0 : 0.0)) * u;
  };
  return spec;
}

Eigen::VectorXd decision_rule(const PosteriorDraws& draws, const LossSpec& loss,
                              const DecisionConfig& cfg) {
  return decide(draws.draws, {}, loss, cfg);
}

Eigen::VectorXd weighted_decision_rule(std::span<const ParamPoint> points,
                                       std::span<const double> weights, const LossSpec& loss,
                                       const DecisionConfig& cfg) {
  if (weights.size() != points.size()) throw std::invalid_argument("weights and points differ in length");
  return decide(points, weights, loss, cfg);
}

HpdResult hpd_region(const PosteriorDraws& draws, double level,
                     std::span<const double> grid_logdens) {
  const double alpha = 1.0 - level;
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("HPD level must lie in (0,1)");
  if (draws.logdens.empty()) throw std::invalid_argument("HPD region needs draws");
  HpdResult out;
  out.log_threshold = log_quantile_type7(draws.logdens, alpha);
  out.member.resize(grid_logdens.size());
  std::size_t inside = 0;
  for (std::size_t i = 0; i < grid_logdens.size(); ++i) {
    out.member[i] = grid_logdens[i] >= out.log_threshold;
    inside += out.member[i] ? 1 : 0;
  }
  out.fraction = grid_logdens.empty() ? 0.0
                                      : static_cast<double>(inside) /
                                            static_cast<double>(grid_logdens.size());
  return out;
}

}  // namespace wgmm
