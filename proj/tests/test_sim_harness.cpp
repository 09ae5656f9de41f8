#include <doctest.h>

#include <cmath>
#include <vector>

#include <Eigen/Eigenvalues>

#include "wgmm/cue.hpp"
#include "wgmm/errors.hpp"
#include "wgmm/moments.hpp"
#include "wgmm/rng.hpp"
#include "wgmm/sim_harness.hpp"
#include "wgmm/stats.hpp"

using namespace wgmm;

namespace {

const Box kBox{Eigen::Vector2d(0, -10), Eigen::Vector2d(30, 30)};

const CalibratedDesign& fish_design() {
  static const CalibratedDesign d = [] {
    DesignConfig cfg;
    cfg.tau = 0.75;
    cfg.box = kBox;
    cfg.seed = 7;
    return build_design(synthetic_fish_data(), cfg);
  }();
  return d;
}

}  // namespace

TEST_CASE("exponential tilting") {
  SUBCASE("zero column means give uniform weights") {
    RowMatrix phi(4, 2);
    phi << 1, 2, -1, -2, 3, -1, -3, 1;
    const TiltWeights t = tilt_weights(phi);
    CHECK(t.t.cwiseAbs().maxCoeff() < 1e-12);
    CHECK((t.omega.array() - 0.25).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("two points") {
    RowMatrix phi(2, 1);
    phi << -1, 2;
    const TiltWeights t = tilt_weights(phi);
    CHECK(t.omega(0) == doctest::Approx(2.0 / 3).epsilon(1e-10));
    CHECK(t.omega(1) == doctest::Approx(1.0 / 3).epsilon(1e-10));
  }
  SUBCASE("zero outside the hull is an error") {
    RowMatrix phi(3, 2);
    phi << 1, -1, 2, 0.5, 0.5, 1;
    CHECK_THROWS_AS(tilt_weights(phi), NumericalError);
  }
  SUBCASE("exponential-family form and moment constraint") {
    Rng rng(3);
    RowMatrix phi(200, 3);
    for (int i = 0; i < 200; ++i) phi.row(i) << rng.normal() + 0.3, rng.normal() - 0.2, rng.exponential() - 0.8;
    const TiltWeights t = tilt_weights(phi);
    CHECK((phi.transpose() * t.omega).norm() < 1e-8);
    const Eigen::ArrayXd e = (phi * t.t).array().exp();
    CHECK((t.omega.array() - e / e.sum()).abs().maxCoeff() < 1e-14);
    CHECK(t.omega.sum() == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("outcome jitter") {
  Dataset d;
  const int n = 100000;
  d.y.resize(n);
  d.w = RowMatrix::Zero(n, 1);
  d.z = RowMatrix::Ones(n, 1);
  for (int i = 0; i < n; ++i) d.y(i) = i % 2 ? 10.0 : -10.0;
  SUBCASE("Var(Y) = 100 gives noise sd 1 and the right noise variance") {
    const Dataset j = jitter_outcomes(d, 4);
    const Eigen::VectorXd e = j.y - d.y;
    const std::vector<double> ev(e.data(), e.data() + n);
    CHECK(std::abs(variance(ev) - 1.0) < 0.05);
    DesignConfig cfg;
    cfg.theta_hat = Eigen::Vector2d(0, 0);
    cfg.tau = 0.5;
    const Dataset small = d.subset({0, 1, 2, 3});
    CHECK(build_design(small, cfg).jitter_sd == doctest::Approx(1.0).epsilon(1e-14));
  }
  SUBCASE("seed replay") { CHECK(jitter_outcomes(d, 9).y == jitter_outcomes(d, 9).y); }
}

TEST_CASE("calibrated design") {
  const CalibratedDesign& des = fish_design();
  const QuantileIvModel model(0.75, 1, 3);

  SUBCASE("tilted moments hold at the calibration point") {
    CHECK(des.tilt.residual < 1e-8);
    CHECK(pstar_moment(des, des.theta_hat).norm() < 1e-8);
    CHECK(p0_moment(des, des.theta_hat).norm() < 1e-8);
  }
  SUBCASE("constant column survives degradation") {
    const Dataset s = draw_p0_sample(des, 500, 3);
    CHECK((s.z.col(0).array() == 1.0).all());
  }
  SUBCASE("degraded non-constant instruments have mean zero") {
    const int n = 100000;
    const Dataset s = draw_p0_sample(des, n, 4);
    for (int c : {1, 2}) {
      std::vector<double> z(n);
      for (int i = 0; i < n; ++i) z[i] = s.z(i, c);
      CHECK(std::abs(mean(z)) < 3.0 * std::sqrt(variance(z) / n));
    }
  }
  SUBCASE("degraded sample moments average to zero in the non-constant coordinates") {
    const int reps = 400;
    Eigen::MatrixXd g(reps, 3);
    const ParamPoint theta = Eigen::Vector2d(9.0, 3.0);
    for (int r = 0; r < reps; ++r) {
      g.row(r) = sample_moments(draw_p0_sample(des, 111, derive_seed(5, r)), model, theta).transpose();
    }
    for (int c : {1, 2}) {
      std::vector<double> col(reps);
      for (int r = 0; r < reps; ++r) col[r] = g(r, c);
      CHECK(std::abs(mean(col)) < 3.0 * std::sqrt(variance(col) / reps));
    }
  }
  SUBCASE("mixture weight") {
    CHECK(des.mixture_weight(des.n0) == 1.0);
    CHECK(des.mixture_weight(4 * des.n0) == 0.5);
    CHECK(des.mixture_weight(9 * des.n0) == std::sqrt(1.0 / 9.0));
  }
  SUBCASE("n = n0 reproduces P* draws bit-for-bit") {
    std::vector<char> star;
    const Dataset a = draw_calibrated_sample(des, des.n0, 11, &star);
    const Dataset b = draw_pstar_sample(des, des.n0, 11);
    CHECK(a.y == b.y);
    CHECK(a.w == b.w);
    CHECK(a.z == b.z);
    for (char s : star) CHECK(s == 1);
  }
  SUBCASE("P* share at n = 9 n0 is about one third") {
    const Eigen::Index n = 9 * des.n0;
    std::size_t total = 0, star_count = 0;
    for (int r = 0; r < 100; ++r) {
      std::vector<char> star;
      draw_calibrated_sample(des, n, derive_seed(12, r), &star);
      for (char s : star) star_count += s;
      total += star.size();
    }
    const double share = double(star_count) / total;
    CHECK(std::abs(share - 1.0 / 3) < 3.0 * std::sqrt((1.0 / 3) * (2.0 / 3) / total));
  }
  SUBCASE("exact P* moments match a large simulated sample") {
    const ParamPoint theta = Eigen::Vector2d(10.0, 2.0);
    const Dataset s = draw_pstar_sample(des, 400000, 13);
    const Eigen::VectorXd sim = sample_moments(s, model, theta) / std::sqrt(400000.0);
    const Eigen::MatrixXd cov = pstar_covariance(des, theta);
    for (int c = 0; c < 3; ++c) {
      CHECK(std::abs(sim(c) - pstar_moment(des, theta)(c)) < 4.0 * std::sqrt(cov(c, c) / 400000.0));
    }
  }
}

TEST_CASE("estimator distribution") {
  const CalibratedDesign& des = fish_design();
  SUBCASE("finite-sample beta-hat is right-skewed at n = n0") {
    const auto ed = estimator_distribution(des, des.n0, 200, kBox, CueSearchConfig{}, 21);
    CHECK(ed.summary[1].skewness > 0.0);
  }
  SUBCASE("seed replay and worker count give identical tables") {
    const auto a = estimator_distribution(des, des.n0, 12, kBox, CueSearchConfig{}, 22, 1);
    const auto b = estimator_distribution(des, des.n0, 12, kBox, CueSearchConfig{}, 22, 4);
    for (std::size_t r = 0; r < 12; ++r) {
      CHECK(a.theta[r] == b.theta[r]);
      CHECK(a.q_min[r] == b.q_min[r]);
    }
    CHECK(a.summary[0].mean == b.summary[0].mean);
  }
  SUBCASE("strong linear IV: CUE is close to normal") {
    LinearIvModel lin(1, 2);
    const CueSearchConfig cue;
    const Box box{Eigen::Vector2d(-3, -3), Eigen::Vector2d(5, 5)};
    std::vector<double> beta;
    for (int r = 0; r < 1000; ++r) {
      Rng rng(derive_seed(23, r));
      Dataset d;
      const int n = 200;
      d.y.resize(n);
      d.w.resize(n, 1);
      d.z.resize(n, 2);
      for (int i = 0; i < n; ++i) {
        const double z = rng.normal(), v = rng.normal();
        d.z.row(i) << 1.0, z;
        d.w(i, 0) = 2.0 * z + v;
        d.y(i) = 1.0 + d.w(i, 0) + 0.5 * v + rng.normal();
      }
      beta.push_back(cue_estimate(d, lin, box, cue, derive_seed(24, r)).theta(1));
    }
    CHECK(summarize(beta).ks_normal < 0.05);
  }
}

TEST_CASE("reduced projection") {
  SUBCASE("hand example") {
    const ReducedProjection rp = reduced_projection(Eigen::Vector2d(1, 0), Eigen::Matrix2d::Identity());
    CHECK(rp.J(0, 0) == doctest::Approx(1.0));
    CHECK(rp.M.isApprox(Eigen::Vector2d(0, 1).asDiagonal().toDenseMatrix()));
    const ReducedProjection half = reduced_projection(Eigen::Vector2d(1, 0), Eigen::Matrix2d::Identity(), true);
    CHECK(half.J(0, 0) == doctest::Approx(0.5));
  }
  SUBCASE("identified-set grid: M annihilates nabla, is symmetric PSD with rank k - 1") {
    BvmConfig cfg;
    cfg.box = kBox;
    const BvmSpec spec = build_bvm_spec(fish_design(), cfg);
    REQUIRE(spec.beta.size() == 201);
    for (std::size_t b = 0; b < spec.beta.size(); ++b) {
      const Eigen::MatrixXd& M = spec.M[b];
      const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
      CHECK((M * spec.nabla[b]).cwiseAbs().maxCoeff() < 1e-8 * scale);
      CHECK((M - M.transpose()).cwiseAbs().maxCoeff() < 1e-8 * scale);
      const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(M).eigenvalues();
      CHECK(ev.minCoeff() > -1e-8 * scale);
      CHECK((ev.array() > 1e-8 * scale).count() == 2);
    }
  }
}

TEST_CASE("BvM gap for the constant test function") {
  const CalibratedDesign& des = fish_design();
  BvmConfig cfg;
  cfg.box = kBox;
  const BvmSpec spec = build_bvm_spec(des, cfg);
  const QuantileIvModel model(0.75, 1, 3);
  const Dataset data = draw_p0_sample(des, 500, 31);
  const std::vector<double> w = infeasible_posterior(spec, data, model);
  ChainConfig cc;
  cc.slice.n_draws = 2000;
  cc.slice.burn_in = 200;
  const PosteriorDraws fe = feasible_posterior(spec, data, model, kBox, cc, 32);
  const std::vector<TestFunction> tests{[](const ParamPoint&) { return 1.0; }};
  const BvmGapReport rep = bvm_gap(fe, spec, w, tests, des, 500);
  CHECK(rep.feasible[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep.infeasible[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep.gaps[0] < 1e-12);
}
