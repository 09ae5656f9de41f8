#include "wgmm/optimize.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

namespace wgmm {

bool Box::contains(const Eigen::VectorXd& x) const {
  if (x.size() != lower.size()) return false;
  return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
}

Eigen::VectorXd Box::clamp(const Eigen::VectorXd& x) const {
  return x.cwiseMax(lower).cwiseMin(upper);
}

double Box::volume() const { return (upper - lower).prod(); }

void Box::validate() const {
  if (lower.size() != upper.size() || lower.size() == 0) {
    throw std::invalid_argument("box bounds have mismatched or zero length");
  }
  if (!((upper.array() > lower.array()).all())) throw std::invalid_argument("box is empty");
}

namespace {

struct Problem {
  const std::function<double(const Eigen::VectorXd&)>* f;
  const Box* box;
  int evals = 0;
};

double trampoline(const gsl_vector* v, void* params) {
  auto* p = static_cast<Problem*>(params);
  Eigen::VectorXd x(static_cast<Eigen::Index>(v->size));
  for (std::size_t i = 0; i < v->size; ++i) x(static_cast<Eigen::Index>(i)) = gsl_vector_get(v, i);
  if (p->box) x = p->box->clamp(x);
  ++p->evals;
  const double value = (*p->f)(x);
  return std::isfinite(value) ? value : std::numeric_limits<double>::max();
}

}  // namespace

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& start, const NelderMeadConfig& cfg,
                             const Box* box) {
  const auto n = static_cast<std::size_t>(start.size());
  Problem problem{&f, box};
  gsl_set_error_handler_off();

  gsl_multimin_function fn;
  fn.n = n;
  fn.f = &trampoline;
  fn.params = &problem;

  gsl_vector* x = gsl_vector_alloc(n);
  gsl_vector* step = gsl_vector_alloc(n);
  const Eigen::VectorXd x0 = box ? box->clamp(start) : start;
  for (std::size_t i = 0; i < n; ++i) {
    const auto ei = static_cast<Eigen::Index>(i);
    gsl_vector_set(x, i, x0(ei));
    gsl_vector_set(step, i, box ? cfg.initial_step * (box->upper(ei) - box->lower(ei)) : cfg.initial_step);
  }
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n);
  gsl_multimin_fminimizer_set(s, &fn, x, step);

  while (problem.evals < cfg.max_evals) {
    if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), cfg.size_tol) == GSL_SUCCESS) break;
  }

  NelderMeadResult result;
  result.x.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) result.x(static_cast<Eigen::Index>(i)) = gsl_vector_get(s->x, i);
  if (box) result.x = box->clamp(result.x);
  result.value = f(result.x);
  result.evals = problem.evals + 1;

  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(step);
  gsl_vector_free(x);
  return result;
}

}  // namespace wgmm
