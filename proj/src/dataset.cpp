#include "matenv/dataset.hpp"

#include <string>

#include "matenv/errors.hpp"

namespace matenv {

MatrixDataset::MatrixDataset(std::vector<Unit> units_in) : units(std::move(units_in)) {
  if (units.empty()) return;
  r = units.front().y.rows();
  m = units.front().y.cols();
  p1 = units.front().x.rows();
  p2 = units.front().x.cols();
  for (std::size_t i = 0; i < units.size(); ++i) {
    const Unit& u = units[i];
    if (u.y.rows() != r || u.y.cols() != m || u.x.rows() != p1 || u.x.cols() != p2) {
      throw DimensionError("unit " + std::to_string(i) + " does not share the dataset dimensions");
    }
  }
  x_mean = Matrix::Zero(p1, p2);
}

Matrix MatrixDataset::y_mean() const {
  Matrix mean = Matrix::Zero(r, m);
  for (const auto& u : units) mean += u.y;
  return units.empty() ? mean : Matrix(mean / static_cast<double>(units.size()));
}

std::vector<Matrix> MatrixDataset::responses() const {
  std::vector<Matrix> out;
  out.reserve(units.size());
  for (const auto& u : units) out.push_back(u.y);
  return out;
}

MatrixDataset center_predictors(const MatrixDataset& data) {
  if (data.units.empty()) throw InvalidArgument("center_predictors needs at least one unit");
  MatrixDataset out = data;
  Matrix mean = Matrix::Zero(data.p1, data.p2);
  for (const auto& u : data.units) mean += u.x;
  mean /= static_cast<double>(data.n());
  for (auto& u : out.units) u.x -= mean;
  out.x_mean = (data.x_mean.size() == mean.size() ? data.x_mean : Matrix::Zero(data.p1, data.p2)) + mean;
  out.centered = true;
  return out;
}

}  // namespace matenv
