#pragma once

#include <vector>

namespace dada {

struct AssignmentResult {
  std::vector<int> pred_for_gt;  // pred_for_gt[i] is the prediction assigned to GT i
  double total_cost = 0.0;
};

/// Minimum-cost injective assignment of rows (GT) to columns (predictions).
/// `cost` is row-major n_gt x n_pred with n_pred >= n_gt and finite entries.
AssignmentResult hungarian_assign(const std::vector<std::vector<double>>& cost);

}  // namespace dada
