#include <cmath>
#include <limits>

#include "matenv/envelope.hpp"
#include "matenv/errors.hpp"
#include "matenv/parallel.hpp"

namespace matenv {

namespace {

double penalty_factor(Criterion c, std::size_t n) {
  return c == Criterion::aic ? 2.0 : std::log(static_cast<double>(n));
}

bool better(const DimensionCell& a, const DimensionCell& b) {
  if (a.value != b.value) return a.value < b.value;
  if (a.u1 + a.u2 != b.u1 + b.u2) return a.u1 + a.u2 < b.u1 + b.u2;
  return a.u1 < b.u1;
}

}  // namespace

DimensionSelection select_dims_ic(const MatrixDataset& data, Criterion criterion,
                                  std::vector<std::pair<int, int>> grid,
                                  const EnvelopeOptions& opts, unsigned workers) {
  const int r = static_cast<int>(data.r), m = static_cast<int>(data.m);
  if (grid.empty()) {
    for (int a = 0; a <= r; ++a) {
      for (int b = 0; b <= m; ++b) grid.emplace_back(a, b);
    }
  }
  for (const auto& [a, b] : grid) {
    if (a < 0 || a > r || b < 0 || b > m) throw InvalidArgument("select_dims_ic: grid cell out of range");
  }
  const MatrixDataset centered = data.centered ? data : center_predictors(data);
  const BilinearFit bil = fit_bilinear(centered, opts.bilinear);
  const double h = penalty_factor(criterion, data.n());

  DimensionSelection out;
  out.table.resize(grid.size());
  parallel_for(grid.size(), workers, [&](std::size_t k) {
    DimensionCell& cell = out.table[k];
    cell.u1 = grid[k].first;
    cell.u2 = grid[k].second;
    cell.num_params = count_params(ModelKind::envelope, r, m, static_cast<int>(data.p1),
                                   static_cast<int>(data.p2), cell.u1, cell.u2, Convention::raw);
    try {
      cell.loglik = fit_envelope(centered, cell.u1, cell.u2, opts, &bil).loglik;
      cell.value = -2.0 * cell.loglik + h * cell.num_params;
      cell.ok = std::isfinite(cell.value);
      if (!cell.ok) cell.error = "non-finite criterion";
    } catch (const Error& e) {
      cell.error = e.kind() + ": " + e.what();
    }
  });

  const DimensionCell* best = nullptr;
  for (const auto& cell : out.table) {
    if (cell.ok && (!best || better(cell, *best))) best = &cell;
  }
  if (!best) throw FitFailure("select_dims_ic: every grid cell failed");
  out.u1 = best->u1;
  out.u2 = best->u2;
  return out;
}

std::pair<int, int> select_dims_stepwise(int r, int m,
                                         const std::function<double(int, int)>& score) {
  if (r < 1 || m < 1) throw InvalidArgument("select_dims_stepwise: dimensions must be positive");
  int u1 = 1, u2 = 1;
  double current = score(u1, u2);
  for (;;) {
    double best = current;
    int next1 = u1, next2 = u2;
    if (u1 < r) {
      const double v = score(u1 + 1, u2);
      if (v < best) {
        best = v;
        next1 = u1 + 1;
        next2 = u2;
      }
    }
    if (u2 < m) {
      const double v = score(u1, u2 + 1);
      if (v < best) {
        best = v;
        next1 = u1;
        next2 = u2 + 1;
      }
    }
    if (next1 == u1 && next2 == u2) return {u1, u2};
    u1 = next1;
    u2 = next2;
    current = best;
  }
}

std::pair<int, int> select_dims_stepwise(const MatrixDataset& data, Criterion criterion,
                                         const EnvelopeOptions& opts) {
  const MatrixDataset centered = data.centered ? data : center_predictors(data);
  const BilinearFit bil = fit_bilinear(centered, opts.bilinear);
  const double h = penalty_factor(criterion, data.n());
  const int r = static_cast<int>(data.r), m = static_cast<int>(data.m);
  return select_dims_stepwise(r, m, [&](int a, int b) {
    try {
      const double ll = fit_envelope(centered, a, b, opts, &bil).loglik;
      const int t = count_params(ModelKind::envelope, r, m, static_cast<int>(data.p1),
                                 static_cast<int>(data.p2), a, b, Convention::raw);
      return -2.0 * ll + h * t;
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  });
}

}  // namespace matenv
