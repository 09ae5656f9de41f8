#include "wgmm/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_map>

#include "wgmm/errors.hpp"

namespace wgmm {

Dataset Dataset::subset(const std::vector<Eigen::Index>& rows) const {
  Dataset out;
  const auto m = static_cast<Eigen::Index>(rows.size());
  out.y.resize(m);
  out.w.resize(m, w.cols());
  out.z.resize(m, z.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    out.y(i) = y(rows[i]);
    out.w.row(i) = w.row(rows[i]);
    out.z.row(i) = z.row(rows[i]);
  }
  return out;
}

void validate(const Dataset& data, Eigen::Index min_rows) {
  const Eigen::Index n = data.size();
  if (data.w.rows() != n || data.z.rows() != n) throw DataError("column lengths disagree");
  if (n < min_rows) {
    throw DataError("dataset has " + std::to_string(n) + " rows; at least " +
                    std::to_string(min_rows) + " required");
  }
  if (!data.y.allFinite() || !data.w.allFinite() || !data.z.allFinite()) {
    throw DataError("dataset contains non-finite entries");
  }
}

ColumnMapping ColumnMapping::standard(int num_regressors, int num_instruments) {
  ColumnMapping m;
  for (int j = 1; j <= num_regressors; ++j) m.regressors.push_back("w" + std::to_string(j));
  for (int j = 1; j <= num_instruments; ++j) m.instruments.push_back("z" + std::to_string(j));
  return m;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

Dataset load_dataset_csv(const std::filesystem::path& path, const ColumnMapping& mapping) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("dataset " + path.string() + " is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_line(line);
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t j = 0; j < header.size(); ++j) index.emplace(header[j], j);
  auto column = [&](const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw DataError("missing column '" + name + "'");
    return it->second;
  };
  const std::size_t iy = column(mapping.outcome);
  std::vector<std::size_t> iw, iz;
  for (const auto& c : mapping.regressors) iw.push_back(column(c));
  for (const auto& c : mapping.instruments) iz.push_back(column(c));

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_line(line);
    auto value = [&](std::size_t j) {
      if (j >= cells.size()) {
        throw DataError("row " + std::to_string(line_no) + ": missing cell for column '" +
                        header[j] + "'");
      }
      const std::string& s = cells[j];
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw DataError("row " + std::to_string(line_no) + ", column '" + header[j] +
                        "': not a finite number: '" + s + "'");
      }
      return v;
    };
    std::vector<double> r;
    r.push_back(value(iy));
    for (auto j : iw) r.push_back(value(j));
    for (auto j : iz) r.push_back(value(j));
    rows.push_back(std::move(r));
  }

  Dataset data;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto pw = static_cast<Eigen::Index>(iw.size());
  const auto kz = static_cast<Eigen::Index>(iz.size());
  data.y.resize(n);
  data.w.resize(n, pw);
  data.z.resize(n, kz);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    data.y(i) = r[0];
    for (Eigen::Index j = 0; j < pw; ++j) data.w(i, j) = r[static_cast<std::size_t>(1 + j)];
    for (Eigen::Index j = 0; j < kz; ++j) data.z(i, j) = r[static_cast<std::size_t>(1 + pw + j)];
  }
  validate(data);
  return data;
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "y";
  for (Eigen::Index j = 0; j < data.w.cols(); ++j) out << ",w" << j + 1;
  for (Eigen::Index j = 0; j < data.z.cols(); ++j) out << ",z" << j + 1;
  out << '\n' << std::setprecision(17);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    out << data.y(i);
    for (Eigen::Index j = 0; j < data.w.cols(); ++j) out << ',' << data.w(i, j);
    for (Eigen::Index j = 0; j < data.z.cols(); ++j) out << ',' << data.z(i, j);
    out << '\n';
  }
}

}  // namespace wgmm
