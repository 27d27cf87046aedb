#pragma once

#include <vector>

#include "matenv/tensorlin.hpp"

namespace matenv {

/// One experimental unit: response Y (r×m) and predictor X (p1×p2).
/// Vector predictors are p×1, scalar predictors 1×1.
struct Unit {
  Matrix y;
  Matrix x;
};

struct MatrixDataset {
  std::vector<Unit> units;
  Eigen::Index r = 0, m = 0, p1 = 0, p2 = 0;
  bool centered = false;
  Matrix x_mean;  // predictor mean removed by center_predictors (p1×p2)

  MatrixDataset() = default;
  /// Infers dimensions from the first unit and checks the rest against them.
  explicit MatrixDataset(std::vector<Unit> units_in);

  std::size_t n() const noexcept { return units.size(); }
  Matrix y_mean() const;
  std::vector<Matrix> responses() const;
};

/// Subtracts the predictor mean. Y is untouched; the removed mean is kept in x_mean.
MatrixDataset center_predictors(const MatrixDataset& data);

}  // namespace matenv
