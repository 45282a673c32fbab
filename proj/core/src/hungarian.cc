#include "vidseg/hungarian.h"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace vidseg {

CostMatrix::CostMatrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw std::invalid_argument("CostMatrix: value count does not match shape");
  }
}

std::size_t Assignment::matched_count() const {
  std::size_t n = 0;
  for (int c : row_to_col) n += c != kUnassigned;
  return n;
}

std::vector<int> Assignment::ColumnToRow(std::size_t cols) const {
  std::vector<int> inv(cols, kUnassigned);
  for (std::size_t r = 0; r < row_to_col.size(); ++r) {
    if (row_to_col[r] != kUnassigned) inv[row_to_col[r]] = static_cast<int>(r);
  }
  return inv;
}

namespace {

// Shortest augmenting paths with potentials; requires n <= m. Returns the
// column for each row.
std::vector<int> SolveWide(std::size_t n, std::size_t m,
                           const std::vector<double>& a) {
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; column 0 is the virtual source.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a[(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, Assignment::kUnassigned);
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] != 0) row_to_col[p[j] - 1] = static_cast<int>(j - 1);
  }
  return row_to_col;
}

}  // namespace

Assignment Hungarian(const CostMatrix& cost) {
  Assignment result;
  result.row_to_col.assign(cost.rows(), Assignment::kUnassigned);
  if (cost.empty()) return result;
  for (double c : cost.values()) {
    if (!std::isfinite(c)) throw std::invalid_argument("hungarian: non-finite cost");
  }
  const std::size_t n = cost.rows(), m = cost.cols();
  if (n <= m) {
    result.row_to_col = SolveWide(n, m, cost.values());
  } else {
    std::vector<double> t(n * m);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < m; ++c) t[c * n + r] = cost(r, c);
    const std::vector<int> col_to_row = SolveWide(m, n, t);
    for (std::size_t c = 0; c < m; ++c) result.row_to_col[col_to_row[c]] = static_cast<int>(c);
  }
  for (std::size_t r = 0; r < n; ++r) {
    if (result.row_to_col[r] != Assignment::kUnassigned) {
      result.total_cost += cost(r, result.row_to_col[r]);
    }
  }
  return result;
}

}  // namespace vidseg
