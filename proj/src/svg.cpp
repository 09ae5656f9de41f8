#include "wgmm/svg.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace wgmm::svg {

namespace {

struct Frame {
  double x0, y0, w, h;              // pixel rectangle
  double xmin, xmax, ymin, ymax;    // data range

  double px(double x) const { return x0 + (x - xmin) / (xmax - xmin) * w; }
  double py(double y) const { return y0 + h - (y - ymin) / (ymax - ymin) * h; }
};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::pair<double, double> range_of(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 1.0};
  auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  double a = *lo, b = *hi;
  if (a == b) {
    a -= 0.5;
    b += 0.5;
  }
  return {a, b};
}

class Doc {
 public:
  Doc(int width, int height) {
    os_ << std::setprecision(6);
    os_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    os_ << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  }
  std::ostringstream& os() { return os_; }

  void text(double x, double y, const std::string& s, int size = 12, const char* anchor = "middle",
            double rotate = 0.0) {
    os_ << "<text x=\"" << x << "\" y=\"" << y << "\" font-size=\"" << size
        << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\"";
    if (rotate != 0.0) os_ << " transform=\"rotate(" << rotate << ' ' << x << ' ' << y << ")\"";
    os_ << ">" << escape(s) << "</text>\n";
  }

  void frame(const Frame& f, const std::string& xlabel, const std::string& ylabel, bool ticks = true) {
    os_ << "<g class=\"axes\">\n";
    os_ << "<rect x=\"" << f.x0 << "\" y=\"" << f.y0 << "\" width=\"" << f.w << "\" height=\"" << f.h
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    if (ticks) {
      for (int i = 0; i <= 4; ++i) {
        const double xv = f.xmin + (f.xmax - f.xmin) * i / 4.0;
        const double yv = f.ymin + (f.ymax - f.ymin) * i / 4.0;
        std::ostringstream a, b;
        a << std::setprecision(3) << xv;
        b << std::setprecision(3) << yv;
        text(f.px(xv), f.y0 + f.h + 14, a.str(), 10);
        text(f.x0 - 4, f.py(yv) + 3, b.str(), 10, "end");
      }
    }
    if (!xlabel.empty()) text(f.x0 + f.w / 2, f.y0 + f.h + 30, xlabel);
    if (!ylabel.empty()) text(f.x0 - 34, f.y0 + f.h / 2, ylabel, 12, "middle", -90.0);
    os_ << "</g>\n";
  }

  std::string finish() {
    os_ << "</svg>\n";
    return os_.str();
  }

 private:
  std::ostringstream os_;
};

void histogram(Doc& doc, const Frame& f, const std::vector<double>& v, int bins, bool vertical,
               const char* cls) {
  std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
  const double lo = vertical ? f.ymin : f.xmin;
  const double hi = vertical ? f.ymax : f.xmax;
  for (double x : v) {
    auto b = static_cast<long>(std::floor((x - lo) / (hi - lo) * bins));
    b = std::clamp<long>(b, 0, bins - 1);
    counts[static_cast<std::size_t>(b)] += 1.0;
  }
  const double top = std::max(1.0, *std::max_element(counts.begin(), counts.end()));
  auto& os = doc.os();
  os << "<g class=\"" << cls << "\">\n";
  for (int b = 0; b < bins; ++b) {
    const double frac = counts[static_cast<std::size_t>(b)] / top;
    if (!vertical) {
      const double bw = f.w / bins;
      os << "<rect x=\"" << f.x0 + b * bw << "\" y=\"" << f.y0 + f.h * (1 - frac) << "\" width=\"" << bw
         << "\" height=\"" << f.h * frac << "\" fill=\"steelblue\" stroke=\"white\" stroke-width=\"0.5\"/>\n";
    } else {
      const double bh = f.h / bins;
      os << "<rect x=\"" << f.x0 << "\" y=\"" << f.y0 + f.h - (b + 1) * bh << "\" width=\"" << f.w * frac
         << "\" height=\"" << bh << "\" fill=\"steelblue\" stroke=\"white\" stroke-width=\"0.5\"/>\n";
    }
  }
  os << "</g>\n";
}

}  // namespace

std::string posterior_plot(const std::vector<double>& x, const std::vector<double>& y,
                           const Axes& axes, int bins) {
  if (x.size() != y.size()) throw std::invalid_argument("scatter coordinates differ in length");
  const auto [xmin, xmax] = range_of(x);
  const auto [ymin, ymax] = range_of(y);
  Doc doc(720, 620);
  doc.text(360, 22, axes.title, 15);
  const Frame joint{70, 170, 440, 380, xmin, xmax, ymin, ymax};
  const Frame top{70, 50, 440, 100, xmin, xmax, 0, 1};
  const Frame side{530, 170, 160, 380, 0, 1, ymin, ymax};
  auto& os = doc.os();
  os << "<g class=\"scatter\">\n";
  const std::size_t stride = std::max<std::size_t>(1, x.size() / 5000);
  for (std::size_t i = 0; i < x.size(); i += stride) {
    os << "<circle cx=\"" << joint.px(x[i]) << "\" cy=\"" << joint.py(y[i])
       << "\" r=\"1.2\" fill=\"black\" fill-opacity=\"0.35\"/>\n";
  }
  os << "</g>\n";
  doc.frame(joint, axes.xlabel, axes.ylabel);
  histogram(doc, top, x, bins, false, "marginal-x");
  doc.frame(top, "", "", false);
  histogram(doc, side, y, bins, true, "marginal-y");
  doc.frame(side, "", "", false);
  return doc.finish();
}

std::string contour_plot(const std::vector<double>& xs, const std::vector<double>& ys,
                         const Eigen::MatrixXd& z, const std::vector<double>& levels,
                         const Axes& axes) {
  const auto nx = static_cast<Eigen::Index>(xs.size());
  const auto ny = static_cast<Eigen::Index>(ys.size());
  if (z.rows() != nx || z.cols() != ny || nx < 2 || ny < 2) {
    throw std::invalid_argument("contour values must match a grid with at least 2 x 2 points");
  }
  Doc doc(620, 560);
  doc.text(310, 22, axes.title, 15);
  const Frame f{70, 40, 500, 450, xs.front(), xs.back(), ys.front(), ys.back()};
  auto& os = doc.os();
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const double lev = levels[l];
    const double shade = levels.size() > 1 ? static_cast<double>(l) / (levels.size() - 1) : 0.0;
    os << "<path class=\"contour\" data-level=\"" << lev << "\" fill=\"none\" stroke=\"rgb("
       << static_cast<int>(40 + 180 * shade) << ",60," << static_cast<int>(200 - 160 * shade)
       << ")\" stroke-width=\"1\" d=\"";
    for (Eigen::Index i = 0; i + 1 < nx; ++i) {
      for (Eigen::Index j = 0; j + 1 < ny; ++j) {
        // Corners counter-clockwise from (i, j).
        const double v[4] = {z(i, j), z(i + 1, j), z(i + 1, j + 1), z(i, j + 1)};
        const double cx[4] = {xs[i], xs[i + 1], xs[i + 1], xs[i]};
        const double cy[4] = {ys[j], ys[j], ys[j + 1], ys[j + 1]};
        std::vector<std::pair<double, double>> pts;
        for (int e = 0; e < 4; ++e) {
          const int a = e, b = (e + 1) % 4;
          if (!std::isfinite(v[a]) || !std::isfinite(v[b])) continue;
          if ((v[a] < lev) != (v[b] < lev)) {
            const double t = (lev - v[a]) / (v[b] - v[a]);
            pts.emplace_back(cx[a] + t * (cx[b] - cx[a]), cy[a] + t * (cy[b] - cy[a]));
          }
        }
        for (std::size_t s = 0; s + 1 < pts.size(); s += 2) {
          os << 'M' << f.px(pts[s].first) << ',' << f.py(pts[s].second) << 'L'
             << f.px(pts[s + 1].first) << ',' << f.py(pts[s + 1].second);
        }
      }
    }
    os << "\"/>\n";
  }
  doc.frame(f, axes.xlabel, axes.ylabel);
  return doc.finish();
}

std::string set_map(const std::vector<double>& xs, const std::vector<double>& ys,
                    const std::vector<std::vector<bool>>& members,
                    const std::vector<std::string>& names, const Axes& axes) {
  const std::size_t nx = xs.size(), ny = ys.size();
  if (nx < 1 || ny < 1) throw std::invalid_argument("set map needs a grid");
  for (const auto& m : members) {
    if (m.size() != nx * ny) throw std::invalid_argument("membership does not match the grid");
  }
  const auto [xmin, xmax] = range_of(xs);
  const auto [ymin, ymax] = range_of(ys);
  const double dx = nx > 1 ? (xmax - xmin) / (nx - 1) : 1.0;
  const double dy = ny > 1 ? (ymax - ymin) / (ny - 1) : 1.0;
  Doc doc(620, 580);
  doc.text(310, 22, axes.title, 15);
  const Frame f{70, 40, 500, 450, xmin - dx / 2, xmax + dx / 2, ymin - dy / 2, ymax + dy / 2};
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c"};
  auto& os = doc.os();
  for (std::size_t s = 0; s < members.size(); ++s) {
    const char* color = colors[s % 3];
    os << "<g class=\"set\" data-name=\"" << escape(s < names.size() ? names[s] : "") << "\" fill=\""
       << color << "\" fill-opacity=\"0.45\">\n";
    for (std::size_t i = 0; i < nx; ++i) {
      for (std::size_t j = 0; j < ny; ++j) {
        if (!members[s][i * ny + j]) continue;
        os << "<rect x=\"" << f.px(xs[i] - dx / 2) << "\" y=\"" << f.py(ys[j] + dy / 2) << "\" width=\""
           << f.w * dx / (f.xmax - f.xmin) << "\" height=\"" << f.h * dy / (f.ymax - f.ymin) << "\"/>\n";
      }
    }
    os << "</g>\n";
    const double ly = 520 + 16.0 * static_cast<double>(s);
    os << "<rect x=\"80\" y=\"" << ly - 9 << "\" width=\"10\" height=\"10\" fill=\"" << color << "\"/>\n";
    doc.text(96, ly, s < names.size() ? names[s] : "", 11, "start");
  }
  doc.frame(f, axes.xlabel, axes.ylabel);
  return doc.finish();
}

}  // namespace wgmm::svg
