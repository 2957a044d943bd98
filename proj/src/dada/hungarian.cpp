#include "dada/hungarian.hpp"

#include <cmath>
#include <limits>

#include "dada/error.hpp"

namespace dada {

// Shortest augmenting path with row/column potentials, O(n_gt^2 * n_pred).
AssignmentResult hungarian_assign(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  AssignmentResult result;
  if (n == 0) return result;
  const int m = static_cast<int>(cost.front().size());
  require(m >= n, "hungarian_assign needs at least as many predictions as GT boxes");
  for (const auto& row : cost) {
    require(static_cast<int>(row.size()) == m, "hungarian_assign: ragged cost matrix");
    for (double c : row) require(std::isfinite(c), "hungarian_assign: non-finite cost");
  }

  const double inf = std::numeric_limits<double>::infinity();
  // 1-based; column 0 is the virtual source.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> owner(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    owner[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = owner[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const int j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  result.pred_for_gt.assign(n, -1);
  for (int j = 1; j <= m; ++j)
    if (owner[j] != 0) result.pred_for_gt[owner[j] - 1] = j - 1;
  for (int i = 0; i < n; ++i) result.total_cost += cost[i][result.pred_for_gt[i]];
  return result;
}

}  // namespace dada
