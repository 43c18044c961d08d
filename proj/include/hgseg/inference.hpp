#pragma once

#include <vector>

#include "hgseg/part_group.hpp"
#include "hgseg/tensor.hpp"
#include "hgseg/whole_group.hpp"

namespace hgseg {

// O1: [(h8*w8) x K], per-pixel class distribution from part-level
// classification (rows sum to 1). Differentiable.
Tensor assemble_part_output(const Tensor& part_class_probs,
                            const AssignmentMatrix& A, const GridSpec& grid);

// O2 on the mask grid: [(h4*w4) x K]; the no-object column is dropped before
// aggregation.
Tensor assemble_whole_output(const Tensor& class_probs, const Tensor& masks);

// Nearest-resample a score field between grids (row-major spatial layout).
Tensor resample_scores(const Tensor& scores, size_t src_h, size_t src_w,
                       size_t dst_h, size_t dst_w);

// argmax per row; ties broken by lowest class id
std::vector<int64_t> argmax_labels(const Tensor& scores);

// Nearest-upsample a label grid to the output resolution.
std::vector<int64_t> upsample_labels(const std::vector<int64_t>& labels,
                                     size_t src_h, size_t src_w, size_t dst_h,
                                     size_t dst_w);

}  // namespace hgseg
