#include "matenv/dataset_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string_view>
#include <vector>

#include "matenv/errors.hpp"

namespace matenv {

namespace {

struct CellKey {
  long unit;
  char block;
  long row, col;
};

std::string describe(const CellKey& k) {
  std::ostringstream os;
  os << "(unit " << k.unit << ", block " << k.block << ", row " << k.row << ", col " << k.col << ")";
  return os.str();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string where(const std::string& source, std::size_t line_no) {
  return source + ":" + std::to_string(line_no) + ": ";
}

long parse_index(std::string_view field, const char* name, const std::string& loc) {
  long v = 0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size() || v < 1) {
    throw ParseError(loc + "invalid " + std::string(name) + " '" + std::string(field) +
                     "' (expected a positive integer)");
  }
  return v;
}

double parse_value(std::string_view field, const std::string& loc) {
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size() || !std::isfinite(v)) {
    throw ParseError(loc + "invalid value '" + std::string(field) + "' (expected a finite real)");
  }
  return v;
}

// Cells of one block of one unit, keyed by (row, col).
using BlockCells = std::map<std::pair<long, long>, double>;

std::pair<long, long> extent(const BlockCells& cells) {
  long rows = 0, cols = 0;
  for (const auto& [rc, v] : cells) {
    rows = std::max(rows, rc.first);
    cols = std::max(cols, rc.second);
  }
  return {rows, cols};
}

Matrix assemble(const BlockCells& cells, long unit, char block, long rows, long cols) {
  Matrix out(rows, cols);
  for (long j = 1; j <= cols; ++j) {
    for (long i = 1; i <= rows; ++i) {
      const auto it = cells.find({i, j});
      if (it == cells.end()) throw MissingCellError("missing cell " + describe({unit, block, i, j}));
      out(i - 1, j - 1) = it->second;
    }
  }
  return out;
}

void write_block(std::ostream& out, std::size_t unit, char block, const Matrix& m) {
  char buf[64];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const auto res = std::to_chars(buf, buf + sizeof buf, m(i, j));
      out << unit << ',' << block << ',' << (i + 1) << ',' << (j + 1) << ','
          << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf)) << '\n';
    }
  }
}

}  // namespace

MatrixDataset parse_dataset(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::map<long, std::pair<BlockCells, BlockCells>> units;  // unit -> (Y, X)

  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view body = trim(line);
    if (body.empty()) continue;
    const std::string loc = where(source, line_no);
    const auto fields = split(body);
    if (!header_seen) {
      if (fields.size() != 5 || fields[0] != "unit" || fields[1] != "block" || fields[2] != "row" ||
          fields[3] != "col" || fields[4] != "value") {
        throw ParseError(loc + "expected header 'unit,block,row,col,value'");
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != 5) {
      throw ParseError(loc + "expected 5 fields, found " + std::to_string(fields.size()));
    }
    const long unit = parse_index(fields[0], "unit", loc);
    if (fields[1] != "Y" && fields[1] != "X") {
      throw ParseError(loc + "invalid block '" + std::string(fields[1]) + "' (expected Y or X)");
    }
    const char block = fields[1][0];
    const long row = parse_index(fields[2], "row", loc);
    const long col = parse_index(fields[3], "col", loc);
    const double value = parse_value(fields[4], loc);
    auto& slot = units[unit];
    BlockCells& cells = block == 'Y' ? slot.first : slot.second;
    if (!cells.emplace(std::make_pair(row, col), value).second) {
      throw DuplicateCellError("duplicate cell " + describe({unit, block, row, col}) + " at " + loc.substr(0, loc.size() - 2));
    }
  }
  if (!header_seen) throw ParseError(source + ": empty input (no header)");
  if (units.empty()) throw DataError("EmptyDataset", source + ": no data rows");

  const long n = units.rbegin()->first;
  for (long u = 1; u <= n; ++u) {
    if (!units.count(u)) throw MissingCellError("missing cell " + describe({u, 'Y', 1, 1}) + " (unit absent)");
  }

  const auto& first = units.begin()->second;
  const auto [r, m] = extent(first.first);
  const auto [p1, p2] = extent(first.second);
  if (r == 0) throw MissingCellError("missing cell " + describe({1, 'Y', 1, 1}));
  if (p1 == 0) throw MissingCellError("missing cell " + describe({1, 'X', 1, 1}));

  std::vector<Unit> out;
  out.reserve(static_cast<std::size_t>(n));
  for (const auto& [u, blocks] : units) {
    const auto check = [&, u = u](const BlockCells& cells, char block, long rows, long cols) {
      for (const auto& [rc, v] : cells) {
        if (rc.first > rows || rc.second > cols) {
          throw RaggedDimensionError("cell " + describe({u, block, rc.first, rc.second}) +
                                     " lies outside the " + std::to_string(rows) + "x" +
                                     std::to_string(cols) + " shape set by unit 1");
        }
      }
    };
    check(blocks.first, 'Y', r, m);
    check(blocks.second, 'X', p1, p2);
    out.push_back({assemble(blocks.first, u, 'Y', r, m), assemble(blocks.second, u, 'X', p1, p2)});
  }
  return MatrixDataset(std::move(out));
}

MatrixDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("IoError", "cannot open dataset file '" + path.string() + "'");
  return parse_dataset(in, path.string());
}

void write_dataset(const MatrixDataset& data, std::ostream& out) {
  out << "unit,block,row,col,value\n";
  for (std::size_t i = 0; i < data.units.size(); ++i) {
    write_block(out, i + 1, 'Y', data.units[i].y);
    write_block(out, i + 1, 'X', data.units[i].x);
  }
}

void write_dataset(const MatrixDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("IoError", "cannot write dataset file '" + path.string() + "'");
  write_dataset(data, out);
  if (!out) throw DataError("IoError", "failed writing dataset file '" + path.string() + "'");
}

}  // namespace matenv
