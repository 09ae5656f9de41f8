#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wgmm/cue.hpp"
#include "wgmm/dataset.hpp"
#include "wgmm/errors.hpp"
#include "wgmm/grid.hpp"
#include "wgmm/limit_lab.hpp"
#include "wgmm/moments.hpp"
#include "wgmm/quasi_bayes.hpp"
#include "wgmm/rng.hpp"
#include "wgmm/robust.hpp"
#include "wgmm/sim_harness.hpp"
#include "wgmm/stats.hpp"
#include "wgmm/svg.hpp"

#ifndef WGMM_VERSION
#define WGMM_VERSION "unknown"
#endif

namespace wgmm::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

const std::vector<std::string> kSubcommands = {"fit",      "posterior", "test", "confset",
                                               "limitlab", "simulate",  "plot"};
const std::map<std::string, std::string> kAbout = {
    {"fit", "CUE estimate and objective on the grid"},
    {"posterior", "quasi-posterior draws, summaries and HPD set"},
    {"test", "robust conditional test of theta = theta0"},
    {"confset", "robust confidence set on the grid"},
    {"limitlab", "finite Gaussian experiment: similarity, power, limit of Bayes"},
    {"simulate", "estimator distribution in the calibrated design"},
    {"plot", "SVG figures from earlier outputs"},
};

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::vector<std::string> grid;
  std::optional<double> tau;
  std::optional<std::string> out;
  std::optional<std::size_t> workers;
  std::optional<std::size_t> draws;
  std::optional<std::size_t> cond_draws;
  std::optional<std::string> theta0;
  std::optional<std::string> data;
  std::optional<std::string> experiment;
  std::optional<std::string> input;
  std::optional<std::size_t> reps;
  std::optional<long> n;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(std::string("cannot parse ") + what + " entry '" + item + "'");
    }
  }
  if (v.empty()) throw ConfigError(std::string(what) + " is empty");
  return v;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

template <class T>
T get_or(const json& cfg, const char* key, T fallback) {
  if (!cfg.contains(key) || cfg[key].is_null()) return fallback;
  try {
    return cfg[key].get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

/// Config file, then flags on top.
json resolve_config(const std::string& sub, const Flags& f) {
  json cfg = f.config.empty() ? json::object() : read_json_file(f.config);
  if (!cfg.is_object()) throw ConfigError("config must be a JSON object");
  cfg.erase("version");
  if (cfg.contains("subcommand") && cfg["subcommand"] != sub) {
    throw ConfigError("config is for subcommand '" + cfg["subcommand"].get<std::string>() +
                      "', not '" + sub + "'");
  }
  cfg["subcommand"] = sub;
  if (f.seed) cfg["seed"] = *f.seed;
  if (f.alpha) cfg["alpha"] = *f.alpha;
  if (f.tau) {
    if (!cfg.contains("model")) cfg["model"] = json::object();
    cfg["model"]["tau"] = *f.tau;
  }
  if (f.out) cfg["out"] = *f.out;
  if (f.workers) cfg["workers"] = *f.workers;
  if (f.draws) {
    if (!cfg.contains("mcmc")) cfg["mcmc"] = json::object();
    cfg["mcmc"]["draws"] = *f.draws;
  }
  if (f.cond_draws) cfg["cond_draws"] = *f.cond_draws;
  if (f.theta0) cfg["theta0"] = parse_list(*f.theta0, "theta0");
  if (f.data) cfg["dataset"] = *f.data;
  if (f.experiment) cfg["experiment"] = *f.experiment;
  if (f.input) cfg["input"] = *f.input;
  if (f.reps) cfg["reps"] = *f.reps;
  if (f.n) cfg["n"] = *f.n;
  if (!f.grid.empty()) {
    json axes = cfg.contains("grid") ? cfg["grid"] : json::array();
    for (const auto& text : f.grid) {
      const auto [ax, axis] = GridSpec::parse_axis(text);
      while (axes.size() < static_cast<std::size_t>(ax)) axes.push_back(nullptr);
      axes[ax - 1] = {{"min", axis.min}, {"max", axis.max}, {"count", axis.count}};
    }
    for (const auto& a : axes) {
      if (a.is_null()) throw ConfigError("--grid leaves an axis unspecified");
    }
    cfg["grid"] = axes;
  }

  if (!cfg.contains("seed")) throw ConfigError("seed is required (--seed or config field 'seed')");
  if (!cfg["seed"].is_number_unsigned()) throw ConfigError("seed must be a non-negative integer");
  if (!cfg.contains("out")) throw ConfigError("output directory is required (--out)");
  if (cfg.contains("alpha")) {
    const double a = get_or(cfg, "alpha", 0.05);
    if (!(a > 0.0 && a < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  }
  return cfg;
}

std::uint64_t seed_of(const json& cfg) { return cfg["seed"].get<std::uint64_t>(); }
std::size_t workers_of(const json& cfg) {
  return std::max<std::size_t>(1, get_or<std::size_t>(cfg, "workers", 1));
}

void write_manifest(const fs::path& dir, json cfg) {
  cfg["version"] = WGMM_VERSION;
  std::ofstream m(dir / "manifest.json");
  m << cfg.dump(2) << '\n';
}

fs::path prepare_out(const json& cfg) {
  const fs::path dir = cfg["out"].get<std::string>();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
  write_manifest(dir, cfg);
  return dir;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path.string());
  return f;
}

// ---- model, data, grid ----

struct ModelSetup {
  std::unique_ptr<MomentModel> model;
  ColumnMapping mapping;
};

ModelSetup make_model(const json& cfg) {
  const json m = cfg.contains("model") ? cfg["model"] : json::object();
  const std::string type = get_or<std::string>(m, "type", "quantile_iv");
  const int regressors = get_or(m, "regressors", 1);
  const int instruments = get_or(m, "instruments", 3);
  if (regressors < 0 || instruments < 1) throw ConfigError("model dimensions must be positive");
  ModelSetup s;
  s.mapping = ColumnMapping::standard(regressors, instruments);
  if (m.contains("columns")) {
    const json& c = m["columns"];
    s.mapping.outcome = get_or<std::string>(c, "outcome", s.mapping.outcome);
    s.mapping.regressors = get_or(c, "regressors", s.mapping.regressors);
    s.mapping.instruments = get_or(c, "instruments", s.mapping.instruments);
    if (static_cast<int>(s.mapping.regressors.size()) != regressors ||
        static_cast<int>(s.mapping.instruments.size()) != instruments) {
      throw ConfigError("column mapping does not match the model dimensions");
    }
  }
  if (type == "quantile_iv") {
    const double tau = get_or(m, "tau", 0.75);
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0, 1)");
    s.model = std::make_unique<QuantileIvModel>(tau, regressors, instruments);
  } else if (type == "linear_iv") {
    s.model = std::make_unique<LinearIvModel>(regressors, instruments);
  } else {
    throw ConfigError("unknown model type '" + type + "'");
  }
  return s;
}

/// A CSV path, or "synthetic" / "synthetic:SEED" for the built-in stand-in.
Dataset load_data(const json& cfg, const ModelSetup& ms) {
  if (!cfg.contains("dataset")) throw ConfigError("dataset is required (--data or config field 'dataset')");
  const std::string path = cfg["dataset"].get<std::string>();
  Dataset d;
  if (path.rfind("synthetic", 0) == 0) {
    std::uint64_t s = 1995;
    if (path.size() > 9) {
      if (path[9] != ':') throw ConfigError("synthetic dataset must be 'synthetic' or 'synthetic:SEED'");
      s = std::stoull(path.substr(10));
    }
    d = synthetic_fish_data(s);
    if (ms.mapping.regressors.size() != 1 || ms.mapping.instruments.size() != 3) {
      throw ConfigError("synthetic dataset has 1 regressor and 3 instruments");
    }
  } else {
    d = load_dataset_csv(path, ms.mapping);
  }
  validate(d);
  return d;
}

GridSpec grid_of(const json& cfg, int p) {
  GridSpec g;
  if (cfg.contains("grid")) {
    for (const auto& a : cfg["grid"]) {
      g.axes.push_back({get_or(a, "min", 0.0), get_or(a, "max", 0.0), get_or(a, "count", 1)});
    }
  } else if (p == 2) {
    g.axes = {{0.0, 30.0, 151}, {-10.0, 30.0, 201}};
  } else {
    throw ConfigError("grid is required for a " + std::to_string(p) + "-parameter model");
  }
  if (static_cast<int>(g.axes.size()) != p) {
    throw ConfigError("grid has " + std::to_string(g.axes.size()) + " axes, model has " +
                      std::to_string(p) + " parameters");
  }
  g.validate();
  return g;
}

Box box_of(const json& cfg, int p) {
  if (cfg.contains("prior") && cfg["prior"].contains("lower")) {
    const auto lo = cfg["prior"]["lower"].get<std::vector<double>>();
    const auto hi = cfg["prior"]["upper"].get<std::vector<double>>();
    if (static_cast<int>(lo.size()) != p || static_cast<int>(hi.size()) != p) {
      throw ConfigError("prior box has the wrong dimension");
    }
    Box b{Eigen::Map<const Eigen::VectorXd>(lo.data(), p), Eigen::Map<const Eigen::VectorXd>(hi.data(), p)};
    b.validate();
    return b;
  }
  return grid_of(cfg, p).bounds();
}

Prior prior_of(const json& cfg, int p) {
  const json pr = cfg.contains("prior") ? cfg["prior"] : json::object();
  const std::string density = get_or<std::string>(pr, "density", "flat");
  if (density != "flat") throw ConfigError("unknown prior density '" + density + "'");
  return Prior::flat(box_of(cfg, p));
}

ChainConfig chains_of(const json& cfg) {
  const json m = cfg.contains("mcmc") ? cfg["mcmc"] : json::object();
  ChainConfig c;
  c.slice.n_draws = get_or(m, "draws", c.slice.n_draws);
  c.slice.burn_in = get_or(m, "burn_in", c.slice.burn_in);
  c.slice.thin = get_or(m, "thin", c.slice.thin);
  c.chains = get_or(m, "chains", c.chains);
  if (c.slice.thin == 0 || c.chains == 0 || c.slice.n_draws == 0) {
    throw ConfigError("mcmc draws, thin and chains must be positive");
  }
  return c;
}

RobustConfig robust_of(const json& cfg) {
  RobustConfig r;
  r.alpha = get_or(cfg, "alpha", r.alpha);
  r.draws = get_or(cfg, "cond_draws", r.draws);
  if (r.draws < 100) throw ConfigError("cond_draws must be at least 100");
  return r;
}

void write_point(std::ostream& o, const ParamPoint& t) {
  for (Eigen::Index j = 0; j < t.size(); ++j) o << fmt(t(j)) << ',';
}

std::string theta_header(Eigen::Index p, const char* prefix = "theta_") {
  std::string h;
  for (Eigen::Index j = 1; j <= p; ++j) h += prefix + std::to_string(j) + ",";
  return h;
}

void write_coordinate_summary(std::ostream& s, const std::string& name, std::span<const double> x) {
  const CoordinateSummary c = summarize(x);
  s << name << ".mean " << fmt(c.mean) << '\n' << name << ".sd " << fmt(c.sd) << '\n';
  const char* labels[] = {"q05", "q25", "q50", "q75", "q95"};
  for (int i = 0; i < 5; ++i) s << name << '.' << labels[i] << ' ' << fmt(c.quantiles[i]) << '\n';
  s << name << ".skewness " << fmt(c.skewness) << '\n';
}

// ---- subcommands ----

void run_fit(const json& cfg, std::ostream& out) {
  const ModelSetup ms = make_model(cfg);
  const Dataset data = load_data(cfg, ms);
  const int p = ms.model->param_dim();
  const Box box = box_of(cfg, p);
  const fs::path dir = prepare_out(cfg);

  const CueEstimate est = cue_estimate(data, *ms.model, box, CueSearchConfig{}, seed_of(cfg));
  {
    auto s = open_out(dir / "summary.txt");
    s << "n " << data.size() << '\n';
    for (int j = 0; j < p; ++j) s << "theta_" << j + 1 << ' ' << fmt(est.theta(j)) << '\n';
    s << "Q_min " << fmt(est.q) << '\n' << "evaluations " << est.evaluations << '\n';
    s << "seed " << seed_of(cfg) << '\n';
  }
  const GridSpec grid = grid_of(cfg, p);
  const Objective q_n(data, *ms.model);
  auto o = open_out(dir / "objective.csv");
  o << theta_header(p) << "Q\n";
  for (const auto& t : grid.points()) {
    double q;
    try {
      q = q_n(t);
    } catch (const DegenerateCovariance&) {
      q = std::numeric_limits<double>::infinity();
    }
    write_point(o, t);
    o << fmt(q) << '\n';
  }
  out << "fit: Q_min " << fmt(est.q) << " at (" << est.theta.transpose() << ")\n";
}

void run_posterior(const json& cfg, std::ostream& out) {
  const ModelSetup ms = make_model(cfg);
  const Dataset data = load_data(cfg, ms);
  const int p = ms.model->param_dim();
  const Prior prior = prior_of(cfg, p);
  const ChainConfig cc = chains_of(cfg);
  const double alpha = get_or(cfg, "alpha", 0.05);
  const fs::path dir = prepare_out(cfg);

  const MultiChainResult res =
      sample_quasi_posterior(data, *ms.model, prior, cc, seed_of(cfg), workers_of(cfg));
  const PosteriorDraws& d = res.pooled;
  {
    auto f = open_out(dir / "draws.csv");
    f << "draw_index," << theta_header(p) << "log_density\n";
    for (std::size_t i = 0; i < d.size(); ++i) {
      f << i << ',';
      write_point(f, d.draws[i]);
      f << fmt(d.logdens[i]) << '\n';
    }
  }

  const GridSpec grid = grid_of(cfg, p);
  const auto points = grid.points();
  const Objective q_n(data, *ms.model);
  std::vector<double> grid_ld(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double lp = prior(points[i]);
    grid_ld[i] = std::isfinite(lp) ? lp - 0.5 * q_n(points[i]) : lp;
  }
  const HpdResult hpd = hpd_region(d, 1.0 - alpha, grid_ld);
  {
    auto f = open_out(dir / "hpd.csv");
    f << theta_header(p) << "log_posterior,member\n";
    for (std::size_t i = 0; i < points.size(); ++i) {
      write_point(f, points[i]);
      f << fmt(grid_ld[i]) << ',' << (hpd.member[i] ? 1 : 0) << '\n';
    }
  }

  auto s = open_out(dir / "summary.txt");
  s << "draws " << d.size() << '\n' << "chains " << cc.chains << '\n';
  s << "burn_in " << cc.slice.burn_in << '\n' << "thin " << cc.slice.thin << '\n';
  for (int j = 0; j < p; ++j) {
    const auto x = d.coordinate(j);
    write_coordinate_summary(s, "theta_" + std::to_string(j + 1), x);
    s << "theta_" << j + 1 << ".rhat " << fmt(res.rhat(j)) << '\n';
  }
  s << "converged " << (res.converged ? "true" : "false") << '\n';
  s << "hpd_level " << fmt(1.0 - alpha) << '\n' << "hpd_fraction " << fmt(hpd.fraction) << '\n';
  s << "seed " << seed_of(cfg) << '\n';
  out << "posterior: " << d.size() << " draws, HPD covers " << fmt(100.0 * hpd.fraction)
      << "% of the grid" << (res.converged ? "" : " (R-hat above threshold)") << '\n';
}

void write_outcome_row(std::ostream& f, const ParamPoint& t, const TestOutcome& o) {
  write_point(f, t);
  f << fmt(o.T) << ',' << fmt(o.c_alpha) << ',' << (o.reject ? 1 : 0) << ',' << (o.tie ? 1 : 0)
    << '\n';
}

void run_test(const json& cfg, std::ostream& out) {
  const ModelSetup ms = make_model(cfg);
  const Dataset data = load_data(cfg, ms);
  const int p = ms.model->param_dim();
  if (!cfg.contains("theta0")) throw ConfigError("theta0 is required (--theta0 a,b,...)");
  const auto t0v = cfg["theta0"].get<std::vector<double>>();
  if (static_cast<int>(t0v.size()) != p) throw ConfigError("theta0 has the wrong dimension");
  const ParamPoint theta0 = Eigen::Map<const Eigen::VectorXd>(t0v.data(), p);
  const GridSpec grid = grid_of(cfg, p);
  const RobustConfig rc = robust_of(cfg);
  const fs::path dir = prepare_out(cfg);

  const auto points = grid.points();
  const TestOutcome o = robust_test(data, *ms.model, points, {}, theta0, rc, seed_of(cfg));
  {
    auto f = open_out(dir / "test.csv");
    f << theta_header(p) << "T,c_alpha,reject,tie_flag\n";
    write_outcome_row(f, theta0, o);
  }
  auto s = open_out(dir / "summary.txt");
  s << "T " << fmt(o.T) << "\nlog_T " << fmt(o.log_T) << "\nc_alpha " << fmt(o.c_alpha)
    << "\nlog_c " << fmt(o.log_c) << "\nreject " << (o.reject ? "true" : "false") << "\ntie_flag "
    << (o.tie ? "true" : "false") << "\nalpha " << fmt(rc.alpha) << "\nB " << o.B << "\nseed "
    << o.seed << '\n';
  out << "test: " << (o.reject ? "reject" : "accept") << " (log T " << fmt(o.log_T) << ", log c "
      << fmt(o.log_c) << ")\n";
}

void run_confset(const json& cfg, std::ostream& out) {
  const ModelSetup ms = make_model(cfg);
  const Dataset data = load_data(cfg, ms);
  const int p = ms.model->param_dim();
  const GridSpec grid = grid_of(cfg, p);
  const RobustConfig rc = robust_of(cfg);
  const fs::path dir = prepare_out(cfg);

  const auto points = grid.points();
  const ConfidenceSetResult cs =
      confidence_set(data, *ms.model, points, {}, rc, seed_of(cfg), workers_of(cfg));
  {
    auto f = open_out(dir / "confset.csv");
    f << theta_header(p) << "T,c_alpha,reject,tie_flag\n";
    for (std::size_t i = 0; i < points.size(); ++i) write_outcome_row(f, points[i], cs.outcomes[i]);
  }
  auto s = open_out(dir / "summary.txt");
  s << "fraction " << fmt(cs.fraction) << '\n';
  for (std::size_t a = 0; a < grid.axes.size(); ++a) {
    s << "grid." << a + 1 << ' ' << fmt(grid.axes[a].min) << ' ' << fmt(grid.axes[a].max) << ' '
      << grid.axes[a].count << '\n';
  }
  s << "alpha " << fmt(rc.alpha) << "\nB " << rc.draws << "\nseed " << seed_of(cfg)
    << "\ndistinct_patterns " << cs.distinct_patterns << '\n';
  out << "confset: covers " << fmt(100.0 * cs.fraction) << "% of " << points.size()
      << " grid points\n";
}

ExperimentSpec experiment_of(const json& cfg) {
  if (!cfg.contains("experiment")) {
    throw ConfigError("experiment file is required (--experiment PATH or inline 'experiment')");
  }
  const json& e = cfg["experiment"];
  if (e.is_string()) return load_experiment_spec(e.get<std::string>());
  return parse_experiment_spec(e.dump());
}

void run_limitlab(const json& cfg, std::ostream& out) {
  const ExperimentSpec spec = experiment_of(cfg);
  const FiniteExperiment& exp = spec.exp;
  const std::uint64_t seed = seed_of(cfg);
  const Eigen::Index null_label = get_or<Eigen::Index>(cfg, "null_label", 0);
  if (null_label < 0 || null_label >= exp.r) throw ConfigError("null_label out of range");
  const std::size_t reps = get_or<std::size_t>(cfg, "reps", 2000);
  if (reps == 0) throw ConfigError("reps must be positive");
  const RobustConfig rc = robust_of(cfg);
  const fs::path dir = prepare_out(cfg);

  // Cases: the mean from the spec, two random nuisance means under the null,
  // and one alternative where another label is the truth.
  const Eigen::Index k = exp.k;
  std::vector<SimilarityCase> cases;
  cases.push_back({"spec_mean", exp.m, exp.m.segment(null_label * k, k).isZero(0.0)});
  for (int c = 0; c < 2; ++c) {
    Rng rng(derive_seed(seed, 7, c));
    Eigen::VectorXd m = 2.0 * rng.normal_vector(exp.r * k);
    m.segment(null_label * k, k).setZero();
    cases.push_back({"null_random_" + std::to_string(c + 1), m, true});
  }
  if (exp.r > 1) {
    Rng rng(derive_seed(seed, 7, 2));
    Eigen::VectorXd m = 2.0 * rng.normal_vector(exp.r * k);
    m.segment(((null_label + 1) % exp.r) * k, k).setZero();
    m.segment(null_label * k, k).setConstant(3.0);
    cases.push_back({"alternative", m, false});
  }
  const auto rates = similarity_power_sim(exp, cases, spec.prior, null_label, rc, reps,
                                          derive_seed(seed, 0), workers_of(cfg));
  {
    auto f = open_out(dir / "rejection_rates.csv");
    f << "case,null,rate,reps,band\n";
    for (const auto& r : rates) {
      f << r.case_name << ',' << (r.null ? 1 : 0) << ',' << fmt(r.rate) << ',' << r.reps << ','
        << fmt(r.band) << '\n';
    }
  }

  Box actions;
  const Eigen::Index q = exp.labels.front().size();
  actions.lower = exp.labels.front();
  actions.upper = exp.labels.front();
  for (const auto& l : exp.labels) {
    actions.lower = actions.lower.cwiseMin(l);
    actions.upper = actions.upper.cwiseMax(l);
  }
  const Eigen::VectorXd g = simulate_draw(exp, derive_seed(seed, 1));
  std::vector<double> lambdas = spec.lambdas;
  if (lambdas.empty()) lambdas = {1, 10, 100, 1e4, 1e6, 1e8};
  const LimitOfBayesResult lb =
      limit_of_bayes(exp, g, spec.prior, LossSpec::squared_error(actions), lambdas);
  {
    auto f = open_out(dir / "gaps.csv");
    f << "lambda," << theta_header(q, "action_") << "gap\n";
    for (std::size_t i = 0; i < lb.lambdas.size(); ++i) {
      f << fmt(lb.lambdas[i]) << ',';
      write_point(f, lb.actions[i]);
      f << fmt(lb.gaps[i]) << '\n';
    }
  }
  auto s = open_out(dir / "summary.txt");
  for (const auto& r : rates) s << "rate." << r.case_name << ' ' << fmt(r.rate) << '\n';
  s << "reps " << reps << "\nalpha " << fmt(rc.alpha) << "\nB " << rc.draws << "\nseed " << seed
    << '\n';
  for (Eigen::Index j = 0; j < q; ++j) s << "limit_action_" << j + 1 << ' ' << fmt(lb.limit_action(j)) << '\n';
  out << "limitlab:";
  for (const auto& r : rates) out << ' ' << r.case_name << '=' << fmt(r.rate);
  out << '\n';
}

void run_simulate(const json& cfg, std::ostream& out) {
  const ModelSetup ms = make_model(cfg);
  const auto* qiv = dynamic_cast<const QuantileIvModel*>(ms.model.get());
  if (qiv == nullptr || ms.model->param_dim() != 2) {
    throw ConfigError("simulate supports the quantile IV model with one regressor");
  }
  const Dataset data = load_data(cfg, ms);
  const Box box = box_of(cfg, 2);
  const std::uint64_t seed = seed_of(cfg);
  const json d = cfg.contains("design") ? cfg["design"] : json::object();
  DesignConfig dc;
  dc.tau = qiv->tau();
  dc.box = box;
  dc.seed = derive_seed(seed, 0);
  dc.jitter_divisor = get_or(d, "jitter_divisor", dc.jitter_divisor);
  dc.constant_column = get_or(d, "constant_column", dc.constant_column);
  if (d.contains("theta_hat")) {
    const auto th = d["theta_hat"].get<std::vector<double>>();
    if (th.size() != 2) throw ConfigError("design.theta_hat must have 2 entries");
    dc.theta_hat = Eigen::Vector2d(th[0], th[1]);
  }
  const Eigen::Index n = get_or<Eigen::Index>(cfg, "n", data.size());
  const std::size_t reps = get_or<std::size_t>(cfg, "reps", 1000);
  if (n < 2 || reps == 0) throw ConfigError("n must be at least 2 and reps positive");
  const fs::path dir = prepare_out(cfg);

  const CalibratedDesign design = build_design(data, dc);
  const EstimatorDistribution ed = estimator_distribution(design, n, reps, box, CueSearchConfig{},
                                                          derive_seed(seed, 1), workers_of(cfg));
  {
    auto f = open_out(dir / "replications.csv");
    f << "rep," << theta_header(2, "theta_hat_") << "Q_min,failed\n";
    for (std::size_t r = 0; r < reps; ++r) {
      f << r << ',';
      write_point(f, ed.theta[r]);
      f << fmt(ed.q_min[r]) << ',' << (ed.failed[r] ? 1 : 0) << '\n';
    }
  }
  const NormalApprox sa = strong_asymptotic(design, n);
  auto s = open_out(dir / "summary.txt");
  s << "n " << n << "\nn0 " << design.n0 << "\nmixture_weight " << fmt(design.mixture_weight(n))
    << "\nreps " << reps << "\nfailures " << ed.failures << '\n';
  s << "theta_hat_calibration " << fmt(design.theta_hat(0)) << ' ' << fmt(design.theta_hat(1)) << '\n';
  s << "tilt_residual " << fmt(design.tilt.residual) << '\n';
  for (int j = 0; j < 2; ++j) {
    const std::string name = "theta_hat_" + std::to_string(j + 1);
    const auto x = ed.coordinate(j);
    write_coordinate_summary(s, name, x);
    const double sd = std::sqrt(sa.cov(j, j));
    s << name << ".strong_mean " << fmt(sa.mean(j)) << '\n' << name << ".strong_sd " << fmt(sd)
      << '\n' << name << ".ks_strong " << fmt(ks_normal(x, sa.mean(j), sd)) << '\n';
  }
  s << "seed " << seed << '\n';
  out << "simulate: " << reps << " replications at n=" << n << ", " << ed.failures
      << " failures\n";
}

// ---- plot ----

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<double> column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("column '" + name + "' missing");
    const auto c = static_cast<std::size_t>(it - header.begin());
    std::vector<double> v;
    v.reserve(rows.size());
    for (const auto& r : rows) v.push_back(r[c]);
    return v;
  }
};

Table read_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + " is empty");
  std::stringstream hs(line);
  for (std::string c; std::getline(hs, c, ',');) t.header.push_back(c);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) {
      char* end = nullptr;
      const double v = std::strtod(c.c_str(), &end);
      if (c.empty() || *end != '\0') {
        throw DataError(path.string() + " line " + std::to_string(lineno) + ": bad cell '" + c + "'");
      }
      row.push_back(v);
    }
    if (row.size() != t.header.size()) {
      throw DataError(path.string() + " line " + std::to_string(lineno) + ": wrong field count");
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::vector<double> distinct_sorted(const std::vector<double>& v) {
  std::set<double> s(v.begin(), v.end());
  return {s.begin(), s.end()};
}

std::size_t index_of(const std::vector<double>& axis, double v) {
  return static_cast<std::size_t>(std::lower_bound(axis.begin(), axis.end(), v) - axis.begin());
}

void write_text(const fs::path& path, const std::string& text) {
  auto f = open_out(path);
  f << text;
}

void run_plot(const json& cfg, std::ostream& out) {
  const fs::path in_dir = get_or<std::string>(cfg, "input", cfg["out"].get<std::string>());
  const fs::path dir = prepare_out(cfg);
  std::vector<std::string> made;

  if (fs::exists(in_dir / "draws.csv")) {
    const Table t = read_table(in_dir / "draws.csv");
    svg::Axes ax{"Quasi-posterior draws"};
    write_text(dir / "posterior.svg", svg::posterior_plot(t.column("theta_1"), t.column("theta_2"), ax));
    made.push_back("posterior.svg");
  }
  if (fs::exists(in_dir / "objective.csv")) {
    const Table t = read_table(in_dir / "objective.csv");
    const auto x = t.column("theta_1"), y = t.column("theta_2"), q = t.column("Q");
    const auto xs = distinct_sorted(x), ys = distinct_sorted(y);
    Eigen::MatrixXd z = Eigen::MatrixXd::Constant(xs.size(), ys.size(),
                                                  std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < q.size(); ++i) z(index_of(xs, x[i]), index_of(ys, y[i])) = q[i];
    svg::Axes ax{"CUE objective"};
    write_text(dir / "objective.svg", svg::contour_plot(xs, ys, z, {1, 2, 4, 6, 10, 20, 50}, ax));
    made.push_back("objective.svg");
  }
  if (fs::exists(in_dir / "confset.csv") || fs::exists(in_dir / "hpd.csv")) {
    std::vector<std::vector<bool>> members;
    std::vector<std::string> names;
    std::vector<double> xs, ys;
    auto add = [&](const Table& t, const std::string& name, const std::string& col, bool invert) {
      const auto x = t.column("theta_1"), y = t.column("theta_2"), v = t.column(col);
      if (xs.empty()) {
        xs = distinct_sorted(x);
        ys = distinct_sorted(y);
      }
      std::vector<bool> m(xs.size() * ys.size(), false);
      for (std::size_t i = 0; i < v.size(); ++i) {
        const std::size_t a = index_of(xs, x[i]), b = index_of(ys, y[i]);
        if (a >= xs.size() || b >= ys.size() || xs[a] != x[i] || ys[b] != y[i]) {
          throw DataError(name + " grid does not match the other set's grid");
        }
        m[a * ys.size() + b] = invert ? v[i] == 0.0 : v[i] != 0.0;
      }
      members.push_back(std::move(m));
      names.push_back(name);
    };
    if (fs::exists(in_dir / "confset.csv")) add(read_table(in_dir / "confset.csv"), "confidence set", "reject", true);
    if (fs::exists(in_dir / "hpd.csv")) add(read_table(in_dir / "hpd.csv"), "HPD set", "member", false);
    svg::Axes ax{"Set estimates"};
    write_text(dir / "sets.svg", svg::set_map(xs, ys, members, names, ax));
    made.push_back("sets.svg");
  }
  if (made.empty()) throw DataError("no plottable CSV in " + in_dir.string());
  out << "plot:";
  for (const auto& m : made) out << ' ' << m;
  out << '\n';
}

int report(std::ostream& err, const char* kind, int code, const std::string& msg) {
  err << "error kind=" << kind << " code=" << code << " message=" << one_line(msg) << '\n';
  return code;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Weak-identification robust GMM toolkit", "wgmm"};
  app.require_subcommand(1, 1);
  Flags f;
  std::uint64_t seed = 0;
  double alpha = 0, tau = 0;
  std::size_t workers = 0, draws = 0, cond_draws = 0, reps = 0;
  long n = 0;
  std::string out_dir, theta0, data, experiment, input;

  for (const auto& name : kSubcommands) {
    auto* sub = app.add_subcommand(name, kAbout.at(name));
    sub->add_option("--config", f.config, "JSON config file; flags override its fields");
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--alpha", alpha, "test / credible level alpha");
    sub->add_option("--grid", f.grid, "grid axis AX:MIN:MAX:COUNT (repeatable)");
    sub->add_option("--tau", tau, "quantile level");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--workers", workers, "worker threads");
    sub->add_option("--draws", draws, "MCMC draws per chain");
    sub->add_option("--cond-draws", cond_draws, "conditional critical value draws B");
    sub->add_option("--theta0", theta0, "null value a,b,...");
    sub->add_option("--data", data, "dataset CSV, or synthetic[:SEED]");
    sub->add_option("--experiment", experiment, "experiment JSON file (limitlab)");
    sub->add_option("--input", input, "directory of CSVs to plot");
    sub->add_option("--reps", reps, "replications");
    sub->add_option("--n", n, "sample size (simulate)");
  }

  if (argc > 1 && argv[1][0] != '-' &&
      std::find(kSubcommands.begin(), kSubcommands.end(), argv[1]) == kSubcommands.end()) {
    err << app.help();
    return report(err, "config", 2, std::string("unknown subcommand '") + argv[1] + "'");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << app.help();
    return report(err, "config", 2, e.what());
  }

  CLI::App* sub = app.get_subcommands().front();
  auto given = [&](const char* opt) { return sub->count(opt) > 0; };
  if (given("--seed")) f.seed = seed;
  if (given("--alpha")) f.alpha = alpha;
  if (given("--tau")) f.tau = tau;
  if (given("--out")) f.out = out_dir;
  if (given("--workers")) f.workers = workers;
  if (given("--draws")) f.draws = draws;
  if (given("--cond-draws")) f.cond_draws = cond_draws;
  if (given("--theta0")) f.theta0 = theta0;
  if (given("--data")) f.data = data;
  if (given("--experiment")) f.experiment = experiment;
  if (given("--input")) f.input = input;
  if (given("--reps")) f.reps = reps;
  if (given("--n")) f.n = n;

  try {
    const std::string name = sub->get_name();
    const json cfg = resolve_config(name, f);
    if (name == "fit") run_fit(cfg, out);
    else if (name == "posterior") run_posterior(cfg, out);
    else if (name == "test") run_test(cfg, out);
    else if (name == "confset") run_confset(cfg, out);
    else if (name == "limitlab") run_limitlab(cfg, out);
    else if (name == "simulate") run_simulate(cfg, out);
    else run_plot(cfg, out);
    return 0;
  } catch (const ConfigError& e) {
    return report(err, "config", 2, e.what());
  } catch (const DataError& e) {
    return report(err, "data", 3, e.what());
  } catch (const NumericalError& e) {
    return report(err, "numerical", 4, e.what());
  } catch (const json::exception& e) {
    return report(err, "config", 2, e.what());
  } catch (const std::invalid_argument& e) {
    return report(err, "config", 2, e.what());
  } catch (const std::exception& e) {
    return report(err, "numerical", 4, e.what());
  }
}

}  // namespace wgmm::cli
