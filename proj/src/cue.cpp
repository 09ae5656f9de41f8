#include "wgmm/cue.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "wgmm/errors.hpp"
#include "wgmm/quasi_bayes.hpp"
#include "wgmm/rng.hpp"

namespace wgmm {

namespace {

struct Visit {
  Eigen::VectorXd theta;
  double q;
};

}  // namespace

CueEstimate cue_estimate(const Dataset& data, const MomentModel& model, const Box& box,
                         const CueSearchConfig& cfg, std::uint64_t seed) {
  box.validate();
  const Objective q_n(data, model, cfg.ridge);
  std::vector<Visit> visits;
  auto objective = [&](const Eigen::VectorXd& theta) {
    double q;
    try {
      q = q_n(theta);
    } catch (const DegenerateCovariance&) {
      q = std::numeric_limits<double>::infinity();
    }
    visits.push_back({theta, q});
    return q;
  };
  auto log_density = [&](const Eigen::VectorXd& theta) {
    if (!box.contains(theta)) return -std::numeric_limits<double>::infinity();
    return -0.5 * objective(theta);
  };

  SliceConfig slice;
  slice.n_draws = cfg.sampler_draws;
  slice.burn_in = cfg.burn_in;
  slice.thin = 1;
  slice.widths = box.width() / 20.0;
  const std::size_t chains = std::max<std::size_t>(1, cfg.chains);
  bool any_start = false;
  for (std::size_t c = 0; c < chains; ++c) {
    Rng init_rng(derive_seed(seed, c, 1));
    Eigen::VectorXd init(box.dim());
    bool found = false;
    for (int a = 0; a < 10000 && !found; ++a) {
      for (Eigen::Index d = 0; d < box.dim(); ++d) {
        init(d) = box.lower(d) + (box.upper(d) - box.lower(d)) * init_rng.uniform();
      }
      found = std::isfinite(log_density(init));
    }
    if (!found) continue;
    any_start = true;
    if (cfg.sampler_draws + cfg.burn_in > 0) slice_sample(log_density, init, slice, derive_seed(seed, c));
  }
  if (!any_start) throw NumericalError("CUE search found no point with a finite objective");

  std::vector<std::size_t> order(visits.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return visits[a].q < visits[b].q; });

  // distinct starting points only
  std::vector<Eigen::VectorXd> starts;
  for (std::size_t i : order) {
    if (starts.size() >= cfg.nm_starts || !std::isfinite(visits[i].q)) break;
    const auto& t = visits[i].theta;
    if (std::none_of(starts.begin(), starts.end(), [&](const Eigen::VectorXd& s) { return s == t; })) {
      starts.push_back(t);
    }
  }
  for (const auto& s : starts) {
    auto f = [&](const Eigen::VectorXd& theta) { return objective(box.clamp(theta)); };
    nelder_mead(f, s, cfg.optimizer, &box);
  }

  CueEstimate best;
  best.q = std::numeric_limits<double>::infinity();
  for (const auto& v : visits) {
    if (v.q < best.q && box.contains(v.theta)) {
      best.q = v.q;
      best.theta = v.theta;
    }
  }
  best.evaluations = visits.size();
  return best;
}

}  // namespace wgmm
