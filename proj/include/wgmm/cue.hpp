#pragma once

#include <cstdint>

#include "wgmm/moments.hpp"
#include "wgmm/optimize.hpp"

namespace wgmm {

struct CueSearchConfig {
  std::size_t chains = 4;            // exploration chains from over-dispersed starts
  std::size_t sampler_draws = 1000;  // slice-sampler iterations per chain
  std::size_t burn_in = 0;
  std::size_t nm_starts = 5;         // Nelder-Mead restarts from the best visited points
  NelderMeadConfig optimizer{400, 0.02, 1e-9};
  double ridge = kDefaultRidge;
};

struct CueEstimate {
  ParamPoint theta;
  double q = 0.0;
  std::size_t evaluations = 0;
};

/// Minimal CUE objective over the box: explores the flat-prior quasi-posterior
/// with the slice sampler, then refines from the best visited points.
/// Throws NumericalError if no point in the box has a finite objective.
CueEstimate cue_estimate(const Dataset& data, const MomentModel& model, const Box& box,
                         const CueSearchConfig& cfg, std::uint64_t seed);

}  // namespace wgmm
