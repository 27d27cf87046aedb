#pragma once

// Long-format dataset files: header `unit,block,row,col,value`, one line per matrix cell,
// 1-based indices, block ∈ {Y, X}, decimal-point reals.

#include <filesystem>
#include <istream>
#include <ostream>
#include <string>

#include "matenv/dataset.hpp"

namespace matenv {

/// Parses a long-format table. Units must be numbered 1..n; every unit must carry the same
/// Y and X shapes with each cell present exactly once.
/// Throws ParseError, MissingCellError, DuplicateCellError or RaggedDimensionError.
MatrixDataset parse_dataset(std::istream& in, const std::string& source = "<stream>");

MatrixDataset read_dataset(const std::filesystem::path& path);

/// Writes every cell with the shortest round-trip representation, so reading it back is exact.
void write_dataset(const MatrixDataset& data, std::ostream& out);
void write_dataset(const MatrixDataset& data, const std::filesystem::path& path);

}  // namespace matenv
