#include "wgmm/limit_lab.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <Eigen/Dense>
#include <json.hpp>

#include "wgmm/errors.hpp"
#include "wgmm/linalg.hpp"
#include "wgmm/parallel.hpp"
#include "wgmm/rng.hpp"

namespace wgmm {

namespace {

Eigen::MatrixXd psi_block(const ReparamResult& rp, Eigen::Index j, int k) {
  return rp.psi.block(j * k, 0, k, k);
}

double gaussian_log_kernel(const Eigen::VectorXd& u, const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("integrated likelihood covariance is singular");
  const Eigen::MatrixXd Lm = llt.matrixL();
  const double log_det = 2.0 * Lm.diagonal().array().log().sum();
  return -0.5 * log_det - 0.5 * u.dot(llt.solve(u));
}

bool full_rank(const Eigen::MatrixXd& block) {
  return numerical_rank(0.5 * (block + block.transpose())) == block.rows();
}

// Orthonormal basis of the null space of M (columns).
Eigen::MatrixXd null_space(const Eigen::MatrixXd& M) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double cut = (s.size() ? s(0) : 0.0) * 1e-10;
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) rank += s(i) > cut ? 1 : 0;
  return svd.matrixV().rightCols(M.cols() - rank);
}

}  // namespace

Eigen::MatrixXd FiniteExperiment::point_anchor(int r, int k, int j) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(k, static_cast<Eigen::Index>(r) * k);
  A.block(0, static_cast<Eigen::Index>(j) * k, k, k).setIdentity();
  return A;
}

Eigen::MatrixXd FiniteExperiment::block(Eigen::Index i, Eigen::Index j) const {
  return sigma.block(i * k, j * k, k, k);
}

void FiniteExperiment::validate() const {
  const Eigen::Index rk = static_cast<Eigen::Index>(r) * k;
  if (r < 1 || k < 1) throw ConfigError("experiment needs r >= 1 and k >= 1");
  if (static_cast<int>(labels.size()) != r) throw ConfigError("experiment needs r labels");
  if (m.size() != rk) throw ConfigError("experiment mean must have length r*k");
  if (sigma.rows() != rk || sigma.cols() != rk) throw ConfigError("experiment covariance must be rk x rk");
  if (anchor.rows() != k || anchor.cols() != rk) throw ConfigError("anchor must be k x rk");
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10 * sigma.cwiseAbs().maxCoeff()) {
    throw ConfigError("experiment covariance is not symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw ConfigError("experiment covariance is not positive definite");
}

Eigen::VectorXd simulate_draw(const FiniteExperiment& exp, std::uint64_t seed) {
  Eigen::LLT<Eigen::MatrixXd> llt(exp.sigma);
  if (llt.info() != Eigen::Success) throw NumericalError("experiment covariance is not positive definite");
  Rng rng(seed);
  return exp.m + llt.matrixL() * rng.normal_vector(exp.m.size());
}

ReparamResult reparameterize(const Eigen::MatrixXd& sigma, const Eigen::MatrixXd& anchor, int k) {
  const Eigen::MatrixXd AS = anchor * sigma;
  const Eigen::Index r = sigma.rows() / k;
  for (Eigen::Index j = 0; j < r; ++j) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(AS.block(0, j * k, k, k));
    const auto& s = svd.singularValues();
    if (!(s(k - 1) > 1e-12 * std::max(1.0, s(0)))) {
      throw NumericalError("anchor invalid: block " + std::to_string(j) + " of A*Sigma is singular");
    }
  }
  ReparamResult rp;
  rp.sigma_xi = AS * anchor.transpose();
  rp.sigma_xi = 0.5 * (rp.sigma_xi + rp.sigma_xi.transpose()).eval();
  Eigen::LLT<Eigen::MatrixXd> llt(rp.sigma_xi);
  if (llt.info() != Eigen::Success) throw NumericalError("A Sigma A' is singular");
  rp.psi = llt.solve(AS).transpose();
  rp.sigma_tilde = sigma - rp.psi * rp.sigma_xi * rp.psi.transpose();
  rp.sigma_tilde = 0.5 * (rp.sigma_tilde + rp.sigma_tilde.transpose()).eval();
  return rp;
}

Eigen::VectorXd nuisance_mean(const ReparamResult& rp, const Eigen::MatrixXd& anchor,
                              const Eigen::VectorXd& m) {
  return m - rp.psi * (anchor * m);
}

double log_integrated_likelihood(Eigen::Index j, const Eigen::VectorXd& g,
                                 const FiniteExperiment& exp, const ReparamResult& rp,
                                 double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be nonnegative");
  const int k = exp.k;
  const Eigen::VectorXd xi = exp.anchor * g;
  const Eigen::MatrixXd psi_inv = psi_block(rp, j, k).inverse();
  const double a = lambda / (1.0 + lambda);
  const double b = 1.0 / (1.0 + lambda);
  const Eigen::VectorXd u = a * (psi_inv * g.segment(j * k, k)) + b * xi;
  const Eigen::MatrixXd Lambda =
      a * (psi_inv * exp.block(j, j) * psi_inv.transpose()) + b * rp.sigma_xi;
  return gaussian_log_kernel(u, 0.5 * (Lambda + Lambda.transpose()));
}

double integrated_likelihood(Eigen::Index j, const Eigen::VectorXd& g, const FiniteExperiment& exp,
                             double lambda) {
  const ReparamResult rp = reparameterize(exp.sigma, exp.anchor, exp.k);
  return std::exp(log_integrated_likelihood(j, g, exp, rp, lambda));
}

double log_quasi_likelihood_limit(Eigen::Index j, const Eigen::VectorXd& g,
                                  const FiniteExperiment& exp, const ReparamResult& rp) {
  const int k = exp.k;
  const double log_det_psi = std::log(std::abs(psi_block(rp, j, k).determinant()));
  return log_det_psi + gaussian_log_kernel(g.segment(j * k, k), exp.block(j, j));
}

double log_integrated_likelihood_general(Eigen::Index j, const Eigen::VectorXd& g,
                                         const FiniteExperiment& exp, const ReparamResult& rp,
                                         const Eigen::MatrixXd& omega) {
  const int k = exp.k;
  const Eigen::VectorXd xi = exp.anchor * g;
  const Eigen::VectorXd h = g - rp.psi * xi;
  const Eigen::MatrixXd U = span_basis(rp.sigma_tilde);
  const Eigen::MatrixXd S = U.transpose() * rp.sigma_tilde * U;
  const Eigen::MatrixXd O = U.transpose() * omega * U;
  Eigen::MatrixXd SO = S + O;
  SO = 0.5 * (SO + SO.transpose()).eval();
  Eigen::LLT<Eigen::MatrixXd> llt(SO);
  if (llt.info() != Eigen::Success) throw NumericalError("prior and noise covariances are singular");
  const Eigen::MatrixXd gain = llt.solve(O).transpose();  // O (S + O)^{-1}
  const Eigen::MatrixXd Uj = U.middleRows(j * k, k);
  const Eigen::VectorXd mean_j = Uj * (gain * (U.transpose() * h));
  const Eigen::MatrixXd cov_c = O - gain * O;
  const Eigen::MatrixXd cov_j = Uj * cov_c * Uj.transpose();
  const Eigen::MatrixXd psi_inv = psi_block(rp, j, k).inverse();
  const Eigen::VectorXd u = xi + psi_inv * mean_j;
  Eigen::MatrixXd Lambda = rp.sigma_xi + psi_inv * cov_j * psi_inv.transpose();
  return gaussian_log_kernel(u, 0.5 * (Lambda + Lambda.transpose()));
}

bool invariance_holds(const Eigen::MatrixXd& omega, const Eigen::MatrixXd& sigma_tilde, int k,
                      double tol) {
  const Eigen::Index r = sigma_tilde.rows() / k;
  for (Eigen::Index j = 0; j < r; ++j) {
    const Eigen::MatrixXd sjj = sigma_tilde.block(j * k, j * k, k, k);
    const Eigen::MatrixXd ojj = omega.block(j * k, j * k, k, k);
    if (!full_rank(sjj) || !full_rank(ojj)) continue;
    const Eigen::MatrixXd lhs = ojj.lu().solve(omega.middleRows(j * k, k));
    const Eigen::MatrixXd rhs = sjj.lu().solve(sigma_tilde.middleRows(j * k, k));
    if ((lhs - rhs).cwiseAbs().maxCoeff() > tol) return false;
  }
  return true;
}

namespace {

template <class LogLik>
bool locality_check(const FiniteExperiment& exp, const ReparamResult& rp, int trials,
                    std::uint64_t seed, double rel_tol, LogLik loglik) {
  const int k = exp.k;
  const Eigen::MatrixXd U = span_basis(rp.sigma_tilde);
  for (Eigen::Index j = 0; j < exp.r; ++j) {
    if (!full_rank(rp.sigma_tilde.block(j * k, j * k, k, k))) continue;
    const Eigen::MatrixXd N = null_space(U.middleRows(j * k, k));
    if (N.cols() == 0) continue;
    for (int t = 0; t < trials; ++t) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(t)));
      const Eigen::VectorXd g1 = simulate_draw(exp, rng.engine()());
      const Eigen::VectorXd d = U * (N * rng.normal_vector(N.cols()));
      const Eigen::VectorXd g2 = g1 + d;
      const double l1 = loglik(j, g1);
      const double l2 = loglik(j, g2);
      if (!(std::abs(std::expm1(l2 - l1)) < rel_tol)) return false;
    }
  }
  return true;
}

}  // namespace

bool likelihood_locality_check(const FiniteExperiment& exp, const Eigen::MatrixXd& omega,
                               int trials, std::uint64_t seed, double rel_tol) {
  const ReparamResult rp = reparameterize(exp.sigma, exp.anchor, exp.k);
  return locality_check(exp, rp, trials, seed, rel_tol, [&](Eigen::Index j, const Eigen::VectorXd& g) {
    return log_integrated_likelihood_general(j, g, exp, rp, omega);
  });
}

bool likelihood_locality_check(const FiniteExperiment& exp, double lambda, int trials,
                               std::uint64_t seed, double rel_tol) {
  const ReparamResult rp = reparameterize(exp.sigma, exp.anchor, exp.k);
  return locality_check(exp, rp, trials, seed, rel_tol, [&](Eigen::Index j, const Eigen::VectorXd& g) {
    return log_integrated_likelihood(j, g, exp, rp, lambda);
  });
}

GridProcess experiment_process(const FiniteExperiment& exp, const Eigen::VectorXd& g,
                               Eigen::Index null_label) {
  const int k = exp.k;
  GridProcess gp;
  gp.null_index = null_label;
  gp.g = g.reshaped(k, exp.r);
  for (Eigen::Index j = 0; j < exp.r; ++j) {
    gp.sigma.push_back(exp.block(j, j));
    gp.cross.push_back(exp.block(j, null_label));
  }
  return gp;
}

std::vector<RejectionRate> similarity_power_sim(const FiniteExperiment& exp,
                                                std::span<const SimilarityCase> cases,
                                                std::span<const double> weights,
                                                Eigen::Index null_label, const RobustConfig& cfg,
                                                std::size_t reps, std::uint64_t seed,
                                                std::size_t workers) {
  exp.validate();
  if (reps < 1) throw ConfigError("at least one replication is required");
  std::vector<RejectionRate> out;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    FiniteExperiment e = exp;
    e.m = cases[c].m;
    std::vector<char> rejected(reps, 0);
    parallel_for(reps, workers, [&](std::size_t rep) {
      const Eigen::VectorXd g = simulate_draw(e, derive_seed(seed, c, rep, 0));
      const GridProcess gp = experiment_process(e, g, null_label);
      rejected[rep] = conditional_test(gp, weights, cfg, derive_seed(seed, c, rep, 1)).reject ? 1 : 0;
    });
    RejectionRate rr;
    rr.case_name = cases[c].name;
    rr.null = cases[c].null;
    rr.reps = reps;
    std::size_t count = 0;
    for (char r : rejected) count += static_cast<std::size_t>(r);
    rr.rate = static_cast<double>(count) / static_cast<double>(reps);
    rr.band = rr.null ? 3.0 * std::sqrt(cfg.alpha * (1.0 - cfg.alpha) / static_cast<double>(reps)) : 0.0;
    out.push_back(rr);
  }
  return out;
}

LimitOfBayesResult limit_of_bayes(const FiniteExperiment& exp, const Eigen::VectorXd& g,
                                  std::span<const double> prior, const LossSpec& loss,
                                  std::span<const double> lambdas, const DecisionConfig& cfg) {
  exp.validate();
  if (static_cast<int>(prior.size()) != exp.r) throw ConfigError("prior needs one weight per label");
  const ReparamResult rp = reparameterize(exp.sigma, exp.anchor, exp.k);
  auto action_for = [&](const std::vector<double>& loglik) {
    const double mx = *std::max_element(loglik.begin(), loglik.end());
    std::vector<double> w(loglik.size());
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = prior[j] * std::exp(loglik[j] - mx);
    return weighted_decision_rule(exp.labels, w, loss, cfg);
  };

  LimitOfBayesResult res;
  std::vector<double> ll(static_cast<std::size_t>(exp.r));
  for (Eigen::Index j = 0; j < exp.r; ++j) {
    ll[static_cast<std::size_t>(j)] = log_quasi_likelihood_limit(j, g, exp, rp);
  }
  res.limit_action = action_for(ll);
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (i > 0 && !(lambdas[i] > lambdas[i - 1])) throw ConfigError("lambda list must be increasing");
    for (Eigen::Index j = 0; j < exp.r; ++j) {
      ll[static_cast<std::size_t>(j)] = log_integrated_likelihood(j, g, exp, rp, lambdas[i]);
    }
    res.lambdas.push_back(lambdas[i]);
    res.actions.push_back(action_for(ll));
    res.gaps.push_back((res.actions.back() - res.limit_action).cwiseAbs().maxCoeff());
  }
  return res;
}

namespace {

Eigen::VectorXd to_vector(const nlohmann::json& j, const char* what) {
  if (!j.is_array()) throw ConfigError(std::string(what) + " must be an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(std::string(what) + " must contain numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

Eigen::MatrixXd to_matrix(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols,
                          const char* what) {
  Eigen::VectorXd flat;
  if (j.is_array() && !j.empty() && j[0].is_array()) {
    flat.resize(0);
    std::vector<double> vals;
    for (const auto& row : j) {
      const Eigen::VectorXd v = to_vector(row, what);
      vals.insert(vals.end(), v.data(), v.data() + v.size());
    }
    flat = Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  } else {
    flat = to_vector(j, what);
  }
  if (flat.size() != rows * cols) {
    throw ConfigError(std::string(what) + " must have " + std::to_string(rows * cols) + " entries");
  }
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index a = 0; a < rows; ++a) {
    for (Eigen::Index b = 0; b < cols; ++b) M(a, b) = flat(a * cols + b);
  }
  return M;
}

}  // namespace

ExperimentSpec parse_experiment_spec(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment file is not valid JSON: ") + e.what());
  }
  if (!j.contains("r") || !j.contains("k") || !j.contains("sigma")) {
    throw ConfigError("experiment file needs r, k and sigma");
  }
  ExperimentSpec spec;
  auto& e = spec.exp;
  e.r = j["r"].get<int>();
  e.k = j["k"].get<int>();
  if (e.r < 1 || e.k < 1) throw ConfigError("experiment file needs r >= 1 and k >= 1");
  const Eigen::Index rk = static_cast<Eigen::Index>(e.r) * e.k;
  e.sigma = to_matrix(j["sigma"], rk, rk, "sigma");
  e.m = j.contains("m") ? to_vector(j["m"], "m") : Eigen::VectorXd::Zero(rk);
  e.anchor = j.contains("anchor") ? to_matrix(j["anchor"], e.k, rk, "anchor")
                                  : FiniteExperiment::point_anchor(e.r, e.k, 0);
  if (j.contains("labels")) {
    for (const auto& l : j["labels"]) {
      if (l.is_number()) {
        e.labels.push_back(Eigen::VectorXd::Constant(1, l.get<double>()));
      } else {
        e.labels.push_back(to_vector(l, "labels"));
      }
    }
  } else {
    for (int i = 0; i < e.r; ++i) e.labels.push_back(Eigen::VectorXd::Constant(1, i));
  }
  if (j.contains("lambda")) {
    if (j["lambda"].is_array()) {
      for (const auto& l : j["lambda"]) spec.lambdas.push_back(l.get<double>());
    } else {
      spec.lambdas.push_back(j["lambda"].get<double>());
    }
  }
  if (j.contains("prior")) {
    for (const auto& p : j["prior"]) spec.prior.push_back(p.get<double>());
  } else {
    spec.prior.assign(static_cast<std::size_t>(e.r), 1.0 / e.r);
  }
  if (static_cast<int>(spec.prior.size()) != e.r) throw ConfigError("prior needs one weight per label");
  e.validate();
  return spec;
}

ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open experiment file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_spec(ss.str());
}

FiniteExperiment random_experiment(int r, int k, std::uint64_t seed) {
  const Eigen::Index rk = static_cast<Eigen::Index>(r) * k;
  Rng rng(seed);
  Eigen::MatrixXd B(rk, rk);
  for (Eigen::Index a = 0; a < rk; ++a) {
    for (Eigen::Index b = 0; b < rk; ++b) B(a, b) = rng.normal();
  }
  FiniteExperiment e;
  e.r = r;
  e.k = k;
  e.sigma = B * B.transpose() + 0.1 * Eigen::MatrixXd::Identity(rk, rk);
  e.sigma = 0.5 * (e.sigma + e.sigma.transpose()).eval();
  e.m = Eigen::VectorXd::Zero(rk);
  e.anchor = FiniteExperiment::point_anchor(r, k, 0);
  for (int i = 0; i < r; ++i) e.labels.push_back(Eigen::VectorXd::Constant(1, i));
  return e;
}

}  // namespace wgmm
