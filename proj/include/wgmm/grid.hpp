#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "wgmm/optimize.hpp"

namespace wgmm {

struct GridAxis {
  double min = 0.0;
  double max = 0.0;
  int count = 1;
};

/// Uniform tensor grid; the last axis varies fastest.
struct GridSpec {
  std::vector<GridAxis> axes;

  std::size_t size() const;
  std::vector<Eigen::VectorXd> points() const;
  Box bounds() const;
  void validate() const;

  /// Parses "AX:MIN:MAX:COUNT" with AX the 1-based axis index.
  static std::pair<int, GridAxis> parse_axis(const std::string& text);
};

}  // namespace wgmm
