#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace wgmm::svg {

struct Axes {
  std::string title;
  std::string xlabel = "alpha";
  std::string ylabel = "beta";
};

/// Joint scatter with marginal histograms of each coordinate.
std::string posterior_plot(const std::vector<double>& x, const std::vector<double>& y,
                           const Axes& axes, int bins = 40);

/// Contour lines (marching squares) of z over a tensor grid; z(i, j) sits at (xs[i], ys[j]).
std::string contour_plot(const std::vector<double>& xs, const std::vector<double>& ys,
                         const Eigen::MatrixXd& z, const std::vector<double>& levels,
                         const Axes& axes);

/// Overlay of up to two grid membership maps (e.g. a confidence set and an HPD set).
std::string set_map(const std::vector<double>& xs, const std::vector<double>& ys,
                    const std::vector<std::vector<bool>>& members,
                    const std::vector<std::string>& names, const Axes& axes);

}  // namespace wgmm::svg
