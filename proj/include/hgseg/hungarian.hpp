#pragma once

#include <cstddef>
#include <vector>

namespace hgseg {

// Minimum-cost one-to-one assignment of `rows` to distinct columns
// (rows <= cols). cost is row-major [rows x cols]. Returns, per row, the
// assigned column. Exact optimum (potentials / shortest augmenting paths).
std::vector<int> hungarian_min_assignment(const std::vector<double>& cost,
                                          size_t rows, size_t cols);

}  // namespace hgseg
