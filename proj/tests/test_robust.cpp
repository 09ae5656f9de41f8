#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "wgmm/grid.hpp"
#include "wgmm/moments.hpp"
#include "wgmm/rng.hpp"
#include "wgmm/robust.hpp"
#include "wgmm/stats.hpp"

using namespace wgmm;

namespace {

// Scalar-moment grid process with Sigma(theta_j, theta_j) = s_j and cross blocks c_j.
GridProcess scalar_process(std::vector<double> g, std::vector<double> s, std::vector<double> c,
                           Eigen::Index null_index = 0) {
  GridProcess gp;
  gp.g = Eigen::Map<const Eigen::RowVectorXd>(g.data(), g.size());
  for (std::size_t j = 0; j < g.size(); ++j) {
    gp.sigma.push_back(Eigen::MatrixXd::Constant(1, 1, s[j]));
    gp.cross.push_back(Eigen::MatrixXd::Constant(1, 1, c[j]));
  }
  gp.null_index = null_index;
  return gp;
}

Dataset weak_data(int n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.y.resize(n);
  d.w.resize(n, 1);
  d.z.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    const double z1 = rng.uniform() < 0.4 ? 1.0 : 0.0, z2 = rng.uniform() < 0.3 ? 1.0 : 0.0;
    d.z.row(i) << 1.0, z1, z2;
    const double v = rng.normal();
    d.w(i, 0) = 0.1 * z1 + 0.05 * z2 + v;
    d.y(i) = 2.0 + d.w(i, 0) + 0.5 * v + rng.normal();
  }
  return d;
}

}  // namespace

TEST_CASE("residual process") {
  SUBCASE("h at the null is exactly zero") {
    QuantileIvModel m(0.75, 1, 3);
    for (std::uint64_t s = 1; s <= 5; ++s) {
      const Dataset d = weak_data(60, s);
      const GridSpec grid{{{0, 4, 5}, {-1, 3, 5}}};
      const auto pts = grid.points();
      for (Eigen::Index null : {0, 7, 24}) {
        const Eigen::MatrixXd h = residual_process(build_grid_process(d, m, pts, null));
        CHECK(h.col(null).cwiseAbs().maxCoeff() == 0.0);
      }
    }
  }
  SUBCASE("zero cross covariance leaves g unchanged") {
    const GridProcess gp = scalar_process({2, 3, -1}, {4, 1, 2}, {4, 0, 0});
    const Eigen::MatrixXd h = residual_process(gp);
    CHECK(h(0, 1) == 3.0);
    CHECK(h(0, 2) == -1.0);
  }
  SUBCASE("two-point hand numbers") {
    const GridProcess gp = scalar_process({2, 3}, {4, 1}, {4, 1});
    CHECK(residual_process(gp)(0, 1) == doctest::Approx(2.5).epsilon(1e-15));
  }
}

TEST_CASE("WAP statistic") {
  SUBCASE("point mass at the null gives 1") {
    const GridProcess gp = scalar_process({1, 2, 3}, {1, 1, 1}, {1, 0.5, 0.2});
    const std::vector<double> w{1, 0, 0};
    CHECK(wap_statistic(gp, w) == 1.0);
  }
  SUBCASE("two equal-weight points, one tied with the null") {
    // Q = g^2 / s: Q0 = 1, Q1 = 1, Q2 = 4.
    const GridProcess gp = scalar_process({1, -1, 2}, {1, 1, 1}, {1, 0, 0});
    const std::vector<double> w{0, 0.5, 0.5};
    CHECK(wap_statistic(gp, w) == doctest::Approx(0.5 * (1 + std::exp(-1.5))).epsilon(1e-14));
  }
  SUBCASE("three points with Q = 2, 4, 6") {
    const GridProcess gp = scalar_process({std::sqrt(2.0), 2, std::sqrt(6.0)}, {1, 1, 1}, {1, 0, 0});
    const double expect = (std::exp(-1) + std::exp(-2) + std::exp(-3)) / (3 * std::exp(-1));
    CHECK(wap_statistic(gp, {}) == doctest::Approx(expect).epsilon(1e-14));
  }
}

TEST_CASE("conditional critical value") {
  SUBCASE("point mass gives c = 1 with a tie") {
    const GridProcess gp = scalar_process({1, 2, 3}, {1, 1, 1}, {1, 0.5, 0.2});
    const std::vector<double> w{1, 0, 0};
    const CriticalValue cv = conditional_critical_value(gp, w, 0.05, 500, 3);
    CHECK(cv.log_c == 0.0);
    CHECK(cv.tie);
  }
  SUBCASE("agrees with the exact conditional quantile") {
    const GridProcess gp = scalar_process({0.3, 1.1, -0.7}, {1.0, 2.0, 1.5}, {1.0, 0.8, -0.6});
    // T* depends on the scalar xi ~ N(0, s_0) only: g*_j = h_j + c_j xi / s_0.
    const double s0 = gp.sigma[0](0, 0);
    std::vector<double> h(3);
    for (int j = 0; j < 3; ++j) h[j] = gp.g(0, j) - gp.cross[j](0, 0) / s0 * gp.g(0, 0);
    auto T = [&](double xi) {
      double num = 0.0;
      for (int j = 0; j < 3; ++j) {
        const double gj = h[j] + gp.cross[j](0, 0) / s0 * xi;
        num += std::exp(-0.5 * gj * gj / gp.sigma[j](0, 0)) / 3.0;
      }
      return num / std::exp(-0.5 * xi * xi / s0);
    };
    // P(T* <= c) by midpoint quadrature over xi in +-12 sd, then bisection.
    const int cells = 400000;
    const double lo = -12.0 * std::sqrt(s0), dx = -2.0 * lo / cells;
    std::vector<double> tv(cells), mass(cells);
    for (int i = 0; i < cells; ++i) {
      const double xi = lo + (i + 0.5) * dx;
      tv[i] = T(xi);
      mass[i] = std::exp(-0.5 * xi * xi / s0) / std::sqrt(2.0 * M_PI * s0) * dx;
    }
    auto cdf = [&](double c) {
      double f = 0.0;
      for (int i = 0; i < cells; ++i) f += tv[i] <= c ? mass[i] : 0.0;
      return f;
    };
    double a = 0.0, b = 1e6;
    for (int it = 0; it < 100; ++it) {
      const double mid = 0.5 * (a + b);
      (cdf(mid) < 0.95 ? a : b) = mid;
    }
    const double exact = 0.5 * (a + b);

    const std::size_t B = 100000;
    const CriticalValue cv = conditional_critical_value(gp, {}, 0.05, B, 17);
    std::size_t below = 0;
    for (double lt : cv.log_draws) below += lt <= std::log(exact) ? 1 : 0;
    const double share = static_cast<double>(below) / B;
    CHECK(std::abs(share - 0.95) < 4.0 * std::sqrt(0.95 * 0.05 / B));
    CHECK(std::abs(std::exp(cv.log_c) - exact) < 0.1 * exact);
  }
  SUBCASE("same seed twice is identical") {
    const GridProcess gp = scalar_process({0.3, 1.1, -0.7}, {1.0, 2.0, 1.5}, {1.0, 0.8, -0.6});
    CHECK(conditional_critical_value(gp, {}, 0.05, 1000, 5).log_c ==
          conditional_critical_value(gp, {}, 0.05, 1000, 5).log_c);
  }
  SUBCASE("alpha = 0 never rejects") {
    const GridProcess gp = scalar_process({0.3, 9, -0.7}, {1.0, 2.0, 1.5}, {1.0, 0.8, -0.6});
    const TestOutcome o = conditional_test(gp, {}, RobustConfig{0.0, 200}, 1);
    CHECK(std::isinf(o.log_c));
    CHECK_FALSE(o.reject);
  }
}

TEST_CASE("robust test and confidence set") {
  QuantileIvModel m(0.75, 1, 3);
  const Dataset d = weak_data(111, 31);
  const GridSpec grid{{{0, 6, 7}, {-2, 4, 7}}};
  const auto pts = grid.points();
  RobustConfig cfg;
  cfg.draws = 300;

  SUBCASE("point-mass prior never rejects") {
    const std::vector<ParamPoint> one{Eigen::Vector2d(1, 1)};
    const TestOutcome o = robust_test(d, m, one, {}, one[0], cfg, 4);
    CHECK(o.T == 1.0);
    CHECK(o.c_alpha == 1.0);
    CHECK(o.tie);
    CHECK_FALSE(o.reject);
  }
  SUBCASE("single-point grid: member iff not rejected") {
    const std::vector<ParamPoint> one{Eigen::Vector2d(40, -30)};
    const ConfidenceSetResult cs = confidence_set(d, m, one, {}, cfg, 4);
    CHECK(cs.member()[0] == !cs.outcomes[0].reject);
  }
  SUBCASE("grid point j uses the stream derive_seed(seed, j)") {
    const ConfidenceSetResult cs = confidence_set(d, m, pts, {}, cfg, 8);
    for (std::size_t j : {0, 10, 33, 48}) {
      const TestOutcome o = robust_test(d, m, pts, {}, pts[j], cfg, derive_seed(8, j));
      CHECK(o.log_T == cs.outcomes[j].log_T);
      CHECK(o.log_c == cs.outcomes[j].log_c);
      CHECK(o.reject == cs.outcomes[j].reject);
    }
  }
  SUBCASE("worker count does not change the set") {
    const ConfidenceSetResult a = confidence_set(d, m, pts, {}, cfg, 8, 1);
    const ConfidenceSetResult b = confidence_set(d, m, pts, {}, cfg, 8, 4);
    for (std::size_t j = 0; j < pts.size(); ++j) {
      CHECK(a.outcomes[j].log_c == b.outcomes[j].log_c);
      CHECK(a.outcomes[j].reject == b.outcomes[j].reject);
    }
    CHECK(a.fraction == b.fraction);
  }
  SUBCASE("B below 100 is a config error") {
    cfg.draws = 50;
    CHECK_THROWS(robust_test(d, m, pts, {}, pts[0], cfg, 1));
  }
}
