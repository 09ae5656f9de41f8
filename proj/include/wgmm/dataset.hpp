#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "wgmm/linalg.hpp"

namespace wgmm {

/// Observations X = (Y, W, Z): one outcome, p-1 regressors and k instruments
/// per row.
struct Dataset {
  Eigen::VectorXd y;
  RowMatrix w;  // n x (p-1)
  RowMatrix z;  // n x k

  Eigen::Index size() const { return y.size(); }
  Eigen::Index num_regressors() const { return w.cols(); }
  Eigen::Index num_instruments() const { return z.cols(); }

  Dataset subset(const std::vector<Eigen::Index>& rows) const;
};

/// Throws DataError unless n >= min_rows, shapes agree and all entries are finite.
void validate(const Dataset& data, Eigen::Index min_rows = 2);

struct ColumnMapping {
  std::string outcome = "y";
  std::vector<std::string> regressors;
  std::vector<std::string> instruments;

  /// y, w1..w{p-1}, z1..zk.
  static ColumnMapping standard(int num_regressors, int num_instruments);
};

/// Reads a comma-separated file with a header row. Throws DataError naming
/// the missing column or the offending cell.
Dataset load_dataset_csv(const std::filesystem::path& path, const ColumnMapping& mapping);

void write_dataset_csv(const std::filesystem::path& path, const Dataset& data);

}  // namespace wgmm
