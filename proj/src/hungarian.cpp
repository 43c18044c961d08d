#include "hgseg/hungarian.hpp"

#include <limits>
#include <stdexcept>

namespace hgseg {

std::vector<int> hungarian_min_assignment(const std::vector<double>& cost,
                                          size_t rows, size_t cols) {
  if (rows > cols)
    throw std::invalid_argument("hungarian: more rows than columns");
  if (cost.size() != rows * cols)
    throw std::invalid_argument("hungarian: cost size mismatch");
  const double inf = std::numeric_limits<double>::infinity();

  // 1-indexed potentials formulation
  std::vector<double> u(rows + 1, 0), v(cols + 1, 0);
  std::vector<int> p(cols + 1, 0), way(cols + 1, 0);
  for (size_t i = 1; i <= rows; ++i) {
    p[0] = int(i);
    int j0 = 0;
    std::vector<double> minv(cols + 1, inf);
    std::vector<char> used(cols + 1, false);
    do {
      used[j0] = true;
      int i0 = p[j0], j1 = -1;
      double delta = inf;
      for (size_t j = 1; j <= cols; ++j) {
        if (used[j]) continue;
        double cur = cost[(i0 - 1) * cols + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = int(j);
        }
      }
      for (size_t j = 0; j <= cols; ++j) {
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
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }

  std::vector<int> row_to_col(rows, -1);
  for (size_t j = 1; j <= cols; ++j)
    if (p[j] > 0) row_to_col[p[j] - 1] = int(j) - 1;
  return row_to_col;
}

}  // namespace hgseg
