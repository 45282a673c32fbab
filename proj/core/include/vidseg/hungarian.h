// Minimum-cost bipartite assignment.

#ifndef VIDSEG_HUNGARIAN_H_
#define VIDSEG_HUNGARIAN_H_

#include <cstddef>
#include <vector>

namespace vidseg {

// Row-major costs; rows are predictions, columns are ground truths.
class CostMatrix {
 public:
  CostMatrix() = default;
  CostMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  CostMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0 || cols_ == 0; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

struct Assignment {
  static constexpr int kUnassigned = -1;
  // row_to_col[r] is the column matched to row r, or kUnassigned (background).
  std::vector<int> row_to_col;
  double total_cost = 0.0;

  std::size_t matched_count() const;
  // Inverse map: col_to_row[c] or kUnassigned.
  std::vector<int> ColumnToRow(std::size_t cols) const;
};

// Globally optimal injective assignment of min(rows, cols) pairs. Throws
// std::invalid_argument on non-finite costs.
Assignment Hungarian(const CostMatrix& cost);

}  // namespace vidseg

#endif  // VIDSEG_HUNGARIAN_H_
