#include "wgmm/grid.hpp"

#include <charconv>
#include <sstream>

#include "wgmm/errors.hpp"

namespace wgmm {

std::size_t GridSpec::size() const {
  std::size_t n = axes.empty() ? 0 : 1;
  for (const auto& a : axes) n *= static_cast<std::size_t>(a.count);
  return n;
}

void GridSpec::validate() const {
  if (axes.empty()) throw ConfigError("grid has no axes");
  for (std::size_t i = 0; i < axes.size(); ++i) {
    const auto& a = axes[i];
    if (a.count < 1) throw ConfigError("grid axis " + std::to_string(i + 1) + " needs count >= 1");
    if (!(a.max >= a.min)) throw ConfigError("grid axis " + std::to_string(i + 1) + " has max < min");
    if (a.count > 1 && a.max == a.min) {
      throw ConfigError("grid axis " + std::to_string(i + 1) + " has zero width");
    }
  }
}

std::vector<Eigen::VectorXd> GridSpec::points() const {
  validate();
  const auto p = static_cast<Eigen::Index>(axes.size());
  std::vector<Eigen::VectorXd> out;
  out.reserve(size());
  std::vector<int> idx(axes.size(), 0);
  for (std::size_t n = 0; n < size(); ++n) {
    Eigen::VectorXd x(p);
    for (Eigen::Index d = 0; d < p; ++d) {
      const auto& a = axes[static_cast<std::size_t>(d)];
      x(d) = a.count == 1 ? a.min
                          : a.min + (a.max - a.min) * idx[static_cast<std::size_t>(d)] / (a.count - 1);
    }
    out.push_back(std::move(x));
    for (auto d = static_cast<std::ptrdiff_t>(axes.size()) - 1; d >= 0; --d) {
      if (++idx[static_cast<std::size_t>(d)] < axes[static_cast<std::size_t>(d)].count) break;
      idx[static_cast<std::size_t>(d)] = 0;
    }
  }
  return out;
}

Box GridSpec::bounds() const {
  Box box;
  box.lower.resize(static_cast<Eigen::Index>(axes.size()));
  box.upper.resize(static_cast<Eigen::Index>(axes.size()));
  for (std::size_t d = 0; d < axes.size(); ++d) {
    box.lower(static_cast<Eigen::Index>(d)) = axes[d].min;
    box.upper(static_cast<Eigen::Index>(d)) = axes[d].max;
  }
  return box;
}

std::pair<int, GridAxis> GridSpec::parse_axis(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  if (parts.size() != 4) throw ConfigError("grid axis '" + text + "' is not AX:MIN:MAX:COUNT");
  auto number = [&](const std::string& s, auto& out) {
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw ConfigError("grid axis '" + text + "' has a malformed field '" + s + "'");
    }
  };
  int ax = 0;
  GridAxis axis;
  number(parts[0], ax);
  number(parts[1], axis.min);
  number(parts[2], axis.max);
  number(parts[3], axis.count);
  if (ax < 1) throw ConfigError("grid axis index must be >= 1");
  if (axis.count < 1) throw ConfigError("grid axis count must be >= 1");
  if (axis.max < axis.min) throw ConfigError("grid axis max must be >= min");
  return {ax, axis};
}

}  // namespace wgmm
