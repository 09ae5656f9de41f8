#include "wgmm/robust.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string_view>
#include <unordered_map>

#include "wgmm/errors.hpp"
#include "wgmm/parallel.hpp"
#include "wgmm/rng.hpp"
#include "wgmm/stats.hpp"

namespace wgmm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr Eigen::Index kChunk = 128;

// Per-null quantities: for xi* = L z, Q*_j(z) = a_j + coef_j . v(z) with
// v(z) = (z, upper-triangular products of z).
struct Prepared {
  Eigen::Index k = 0;
  Eigen::MatrixXd coef;      // rows: grid points kept, cols: k + k(k+1)/2
  Eigen::VectorXd a;
  Eigen::VectorXd log_w;     // -inf for zero weight
  Eigen::Index null_row = 0;
  double log_T = 0.0;
};

void check_weights(std::span<const double> weights, Eigen::Index size) {
  if (static_cast<Eigen::Index>(weights.size()) != size) {
    throw std::invalid_argument("weights must have one entry per grid point");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("weights must be nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("all prior weights are zero");
}

std::vector<double> resolve_weights(std::span<const double> weights, std::size_t size) {
  if (weights.empty()) return std::vector<double>(size, 1.0 / static_cast<double>(size));
  if (weights.size() != size) throw std::invalid_argument("weights must have one entry per grid point");
  return {weights.begin(), weights.end()};
}

double quad(const Eigen::VectorXd& g, const Eigen::MatrixXd& sinv) {
  if ((g.array() == 0.0).all()) return 0.0;
  return std::max(0.0, g.dot(sinv * g));
}

Eigen::MatrixXd inverse_of(const GridProcess& gp, Eigen::Index j, double ridge) {
  return regularized_inverse(gp.sigma[static_cast<std::size_t>(j)], ridge);
}

Prepared prepare(const GridProcess& gp, std::span<const double> given, double ridge,
                 const std::vector<Eigen::MatrixXd>* sigma_inv = nullptr) {
  gp.validate();
  const std::vector<double> weights = resolve_weights(given, static_cast<std::size_t>(gp.size()));
  check_weights(weights, gp.size());
  const Eigen::Index k = gp.moment_dim();
  const Eigen::Index j0 = gp.null_index;
  const auto uj0 = static_cast<std::size_t>(j0);
  const Eigen::MatrixXd s00_inv = sigma_inv ? (*sigma_inv)[uj0] : inverse_of(gp, j0, ridge);
  const Eigen::MatrixXd L = psd_sqrt(gp.sigma[uj0]);
  const Eigen::VectorXd g0 = gp.g.col(j0);

  std::vector<Eigen::Index> rows;
  for (Eigen::Index j = 0; j < gp.size(); ++j) {
    if (j == j0 || weights[static_cast<std::size_t>(j)] > 0.0) rows.push_back(j);
  }
  const auto m = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index nq = k + k * (k + 1) / 2;

  Prepared p;
  p.k = k;
  p.coef.resize(m, nq);
  p.a.resize(m);
  p.log_w.resize(m);
  std::vector<double> terms(static_cast<std::size_t>(m));
  double q0 = 0.0;
  for (Eigen::Index r = 0; r < m; ++r) {
    const Eigen::Index j = rows[static_cast<std::size_t>(r)];
    const auto uj = static_cast<std::size_t>(j);
    const Eigen::MatrixXd sinv = sigma_inv ? (*sigma_inv)[uj] : inverse_of(gp, j, ridge);
    Eigen::VectorXd h;
    Eigen::MatrixXd KL;
    if (j == j0) {
      h = Eigen::VectorXd::Zero(k);
      KL = L;
      p.null_row = r;
    } else {
      const Eigen::MatrixXd K = gp.cross[uj] * s00_inv;
      h = gp.g.col(j) - K * g0;
      KL = K * L;
    }
    const Eigen::MatrixXd sinv_KL = sinv * KL;
    const Eigen::VectorXd b = sinv_KL.transpose() * h;
    const Eigen::MatrixXd C = KL.transpose() * sinv_KL;
    p.a(r) = (h.array() == 0.0).all() ? 0.0 : h.dot(sinv * h);
    Eigen::Index c = 0;
    for (Eigen::Index d = 0; d < k; ++d) p.coef(r, c++) = 2.0 * b(d);
    for (Eigen::Index d = 0; d < k; ++d) {
      p.coef(r, c++) = C(d, d);
      for (Eigen::Index e = d + 1; e < k; ++e) p.coef(r, c++) = C(d, e) + C(e, d);
    }
    const double w = weights[uj];
    p.log_w(r) = w > 0.0 ? std::log(w) : kNegInf;
    const double q = quad(gp.g.col(j), sinv);
    if (j == j0) q0 = q;
    terms[static_cast<std::size_t>(r)] = p.log_w(r) - 0.5 * q;
  }
  p.log_T = log_sum_exp(terms) + 0.5 * q0;
  return p;
}

std::vector<double> simulate(const Prepared& p, std::size_t draws, std::uint64_t seed) {
  const Eigen::Index k = p.k;
  const Eigen::Index nq = p.coef.cols();
  const Eigen::Index m = p.coef.rows();
  Rng rng(seed);
  std::vector<double> out(draws);
  Eigen::MatrixXd V(nq, kChunk);
  Eigen::MatrixXd Q(m, kChunk);
  for (std::size_t start = 0; start < draws; start += kChunk) {
    const auto cols = static_cast<Eigen::Index>(std::min<std::size_t>(kChunk, draws - start));
    for (Eigen::Index b = 0; b < cols; ++b) {
      Eigen::Index c = k;
      for (Eigen::Index d = 0; d < k; ++d) V(d, b) = rng.normal();
      for (Eigen::Index d = 0; d < k; ++d) {
        for (Eigen::Index e = d; e < k; ++e) V(c++, b) = V(d, b) * V(e, b);
      }
    }
    Q.leftCols(cols).noalias() = p.coef * V.leftCols(cols);
    Q.leftCols(cols).colwise() += p.a;
    for (Eigen::Index b = 0; b < cols; ++b) {
      double mx = kNegInf;
      for (Eigen::Index r = 0; r < m; ++r) {
        if (p.log_w(r) == kNegInf) continue;
        mx = std::max(mx, p.log_w(r) - 0.5 * std::max(0.0, Q(r, b)));
      }
      double s = 0.0;
      for (Eigen::Index r = 0; r < m; ++r) {
        if (p.log_w(r) == kNegInf) continue;
        s += std::exp(p.log_w(r) - 0.5 * std::max(0.0, Q(r, b)) - mx);
      }
      out[start + static_cast<std::size_t>(b)] =
          mx + std::log(s) + 0.5 * std::max(0.0, Q(p.null_row, b));
    }
  }
  return out;
}

CriticalValue critical_value(const Prepared& p, double alpha, std::size_t draws,
                             std::uint64_t seed) {
  if (draws < 100) throw ConfigError("at least 100 conditional draws are required");
  CriticalValue cv;
  cv.log_draws = simulate(p, draws, seed);
  const auto [lo, hi] = std::minmax_element(cv.log_draws.begin(), cv.log_draws.end());
  cv.tie = *hi - *lo <= 1e-12;
  cv.log_c = alpha <= 0.0 ? std::numeric_limits<double>::infinity()
                          : log_quantile_type7(cv.log_draws, 1.0 - alpha);
  return cv;
}

TestOutcome decide(const Prepared& p, const RobustConfig& cfg, std::uint64_t seed) {
  if (cfg.alpha >= 1.0) throw ConfigError("alpha must be below 1");
  const CriticalValue cv = critical_value(p, cfg.alpha, cfg.draws, seed);
  TestOutcome t;
  t.log_T = p.log_T;
  t.T = std::exp(p.log_T);
  t.log_c = cv.log_c;
  t.c_alpha = std::exp(cv.log_c);
  t.tie = cv.tie;
  t.reject = !cv.tie && p.log_T > cv.log_c;
  t.B = cfg.draws;
  t.seed = seed;
  return t;
}

// Grid points grouped by identical moment matrices.
struct Patterns {
  std::vector<RowMatrix> phi;
  std::vector<std::size_t> of_point;
  std::vector<double> weight;
  Eigen::MatrixXd g;
  std::vector<Eigen::MatrixXd> sigma;
  std::vector<Eigen::MatrixXd> sigma_inv;
};

Patterns find_patterns(const Dataset& data, const MomentModel& model,
                       std::span<const ParamPoint> grid, std::span<const double> weights,
                       double ridge, std::size_t workers) {
  Patterns pat;
  std::unordered_multimap<std::size_t, std::size_t> index;
  pat.of_point.resize(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    RowMatrix phi = model.moment_matrix(data, grid[j]);
    phi.array() += 0.0;  // -0.0 -> +0.0 so equal values hash equally
    const std::string_view bytes(reinterpret_cast<const char*>(phi.data()),
                                 static_cast<std::size_t>(phi.size()) * sizeof(double));
    const std::size_t h = std::hash<std::string_view>{}(bytes);
    std::size_t found = pat.phi.size();
    const auto [begin, end] = index.equal_range(h);
    for (auto it = begin; it != end; ++it) {
      if (pat.phi[it->second] == phi) {
        found = it->second;
        break;
      }
    }
    if (found == pat.phi.size()) {
      index.emplace(h, found);
      pat.phi.push_back(std::move(phi));
      pat.weight.push_back(0.0);
    }
    pat.of_point[j] = found;
    pat.weight[found] += weights[j];
  }
  const std::size_t u = pat.phi.size();
  const Eigen::Index k = model.moment_dim();
  const double root_n = std::sqrt(static_cast<double>(data.size()));
  pat.g.resize(k, static_cast<Eigen::Index>(u));
  pat.sigma.resize(u);
  pat.sigma_inv.resize(u);
  parallel_for(u, workers, [&](std::size_t i) {
    pat.g.col(static_cast<Eigen::Index>(i)) = pat.phi[i].colwise().sum().transpose() / root_n;
    pat.sigma[i] = cross_covariance(pat.phi[i], pat.phi[i]);
    pat.sigma_inv[i] = regularized_inverse(pat.sigma[i], ridge);
  });
  return pat;
}

template <class SeedFn>
std::vector<TestOutcome> run_targets(const Dataset& data, const MomentModel& model,
                                     std::span<const ParamPoint> grid,
                                     std::span<const double> weights,
                                     std::span<const std::size_t> targets, const RobustConfig& cfg,
                                     SeedFn seed_of, std::size_t workers,
                                     std::size_t* distinct_patterns) {
  if (grid.empty()) throw std::invalid_argument("grid is empty");
  if (data.size() < 2) throw DataError("at least two observations are required");
  const std::vector<double> w = resolve_weights(weights, grid.size());
  check_weights(w, static_cast<Eigen::Index>(w.size()));
  const Patterns pat = find_patterns(data, model, grid, w, cfg.ridge, workers);
  if (distinct_patterns) *distinct_patterns = pat.phi.size();

  // Nulls sharing a pattern share every covariance block.
  std::vector<std::vector<std::size_t>> groups(pat.phi.size());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (targets[t] >= grid.size()) throw std::out_of_range("target index outside the grid");
    groups[pat.of_point[targets[t]]].push_back(t);
  }
  std::vector<std::size_t> active;
  for (std::size_t u = 0; u < groups.size(); ++u) {
    if (!groups[u].empty()) active.push_back(u);
  }

  std::vector<TestOutcome> out(targets.size());
  parallel_for(active.size(), workers, [&](std::size_t a) {
    const std::size_t u0 = active[a];
    GridProcess gp;
    gp.g = pat.g;
    gp.sigma = pat.sigma;
    gp.cross.resize(pat.phi.size());
    for (std::size_t u = 0; u < pat.phi.size(); ++u) {
      gp.cross[u] = cross_covariance(pat.phi[u], pat.phi[u0]);
    }
    gp.null_index = static_cast<Eigen::Index>(u0);
    const Prepared p = prepare(gp, pat.weight, cfg.ridge, &pat.sigma_inv);
    for (std::size_t t : groups[u0]) out[t] = decide(p, cfg, seed_of(targets[t]));
  });
  return out;
}

}  // namespace

void GridProcess::validate() const {
  const Eigen::Index n = size();
  const Eigen::Index k = moment_dim();
  if (n == 0 || k == 0) throw std::invalid_argument("grid process is empty");
  if (static_cast<Eigen::Index>(sigma.size()) != n || static_cast<Eigen::Index>(cross.size()) != n) {
    throw std::invalid_argument("grid process needs one covariance block per point");
  }
  if (null_index < 0 || null_index >= n) throw std::invalid_argument("null point is not on the grid");
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& s = sigma[static_cast<std::size_t>(j)];
    const auto& c = cross[static_cast<std::size_t>(j)];
    if (s.rows() != k || s.cols() != k || c.rows() != k || c.cols() != k) {
      throw std::invalid_argument("covariance block has the wrong shape");
    }
  }
}

GridProcess build_grid_process(const Dataset& data, const MomentModel& model,
                               std::span<const ParamPoint> points, Eigen::Index null_index) {
  if (null_index < 0 || null_index >= static_cast<Eigen::Index>(points.size())) {
    throw std::invalid_argument("null point is not on the grid");
  }
  if (data.size() < 2) throw DataError("at least two observations are required");
  const RowMatrix phi0 = model.moment_matrix(data, points[static_cast<std::size_t>(null_index)]);
  const double root_n = std::sqrt(static_cast<double>(data.size()));
  GridProcess gp;
  gp.null_index = null_index;
  gp.g.resize(model.moment_dim(), static_cast<Eigen::Index>(points.size()));
  for (std::size_t j = 0; j < points.size(); ++j) {
    const RowMatrix phi = model.moment_matrix(data, points[j]);
    gp.g.col(static_cast<Eigen::Index>(j)) = phi.colwise().sum().transpose() / root_n;
    gp.sigma.push_back(cross_covariance(phi, phi));
    gp.cross.push_back(cross_covariance(phi, phi0));
  }
  return gp;
}

Eigen::MatrixXd residual_process(const GridProcess& gp, double ridge) {
  gp.validate();
  const Eigen::Index j0 = gp.null_index;
  const Eigen::MatrixXd s00_inv = inverse_of(gp, j0, ridge);
  const Eigen::VectorXd coef = s00_inv * gp.g.col(j0);
  Eigen::MatrixXd h(gp.moment_dim(), gp.size());
  for (Eigen::Index j = 0; j < gp.size(); ++j) {
    h.col(j) = gp.g.col(j) - gp.cross[static_cast<std::size_t>(j)] * coef;
  }
  h.col(j0).setZero();
  return h;
}

double log_wap_statistic(const GridProcess& gp, std::span<const double> weights, double ridge) {
  return prepare(gp, weights, ridge).log_T;
}

double wap_statistic(const GridProcess& gp, std::span<const double> weights, double ridge) {
  return std::exp(log_wap_statistic(gp, weights, ridge));
}

CriticalValue conditional_critical_value(const GridProcess& gp, std::span<const double> weights,
                                         double alpha, std::size_t draws, std::uint64_t seed,
                                         double ridge) {
  return critical_value(prepare(gp, weights, ridge), alpha, draws, seed);
}

TestOutcome conditional_test(const GridProcess& gp, std::span<const double> weights,
                             const RobustConfig& cfg, std::uint64_t seed) {
  return decide(prepare(gp, weights, cfg.ridge), cfg, seed);
}

TestOutcome robust_test(const Dataset& data, const MomentModel& model,
                        std::span<const ParamPoint> grid, std::span<const double> weights,
                        const ParamPoint& theta0, const RobustConfig& cfg, std::uint64_t seed) {
  std::vector<ParamPoint> points(grid.begin(), grid.end());
  std::vector<double> w = resolve_weights(weights, grid.size());
  auto it = std::find(points.begin(), points.end(), theta0);
  std::size_t target = static_cast<std::size_t>(it - points.begin());
  if (it == points.end()) {
    points.push_back(theta0);
    w.push_back(0.0);
  }
  const std::size_t targets[] = {target};
  return run_targets(data, model, points, w, targets, cfg, [seed](std::size_t) { return seed; }, 1,
                     nullptr)
      .front();
}

std::vector<TestOutcome> test_grid_points(const Dataset& data, const MomentModel& model,
                                          std::span<const ParamPoint> grid,
                                          std::span<const double> weights,
                                          std::span<const std::size_t> targets,
                                          const RobustConfig& cfg, std::uint64_t seed,
                                          std::size_t workers, std::size_t* distinct_patterns) {
  return run_targets(
      data, model, grid, weights, targets, cfg,
      [seed](std::size_t j) { return derive_seed(seed, j); }, workers, distinct_patterns);
}

ConfidenceSetResult confidence_set(const Dataset& data, const MomentModel& model,
                                   std::span<const ParamPoint> grid, std::span<const double> weights,
                                   const RobustConfig& cfg, std::uint64_t seed,
                                   std::size_t workers) {
  std::vector<std::size_t> targets(grid.size());
  std::iota(targets.begin(), targets.end(), 0);
  ConfidenceSetResult res;
  res.grid.assign(grid.begin(), grid.end());
  res.outcomes = test_grid_points(data, model, grid, weights, targets, cfg, seed, workers,
                                  &res.distinct_patterns);
  std::size_t kept = 0;
  for (const auto& o : res.outcomes) kept += o.reject ? 0 : 1;
  res.fraction = static_cast<double>(kept) / static_cast<double>(grid.size());
  return res;
}

std::vector<bool> ConfidenceSetResult::member() const {
  std::vector<bool> m;
  m.reserve(outcomes.size());
  for (const auto& o : outcomes) m.push_back(!o.reject);
  return m;
}

}  // namespace wgmm
