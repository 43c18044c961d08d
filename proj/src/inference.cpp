#include "hgseg/inference.hpp"

#include <stdexcept>

#include "hgseg/backbone.hpp"

namespace hgseg {

Tensor assemble_part_output(const Tensor& part_class_probs,
                            const AssignmentMatrix& A, const GridSpec& grid) {
  Tensor flatA = reshape(A.weights, {grid.num_pixels() * 9});
  Tensor gathered = gather_rows(part_class_probs, grid.window_clamped);
  // invalid slots carry weight exactly 0, so the clamped row is inert
  Tensor contrib = mul_colvec(gathered, flatA);
  return scatter_add_rows(contrib, grid.pixel_rep, grid.num_pixels());
}

Tensor assemble_whole_output(const Tensor& class_probs, const Tensor& masks) {
  if (class_probs.rows() != masks.rows())
    throw std::invalid_argument("assemble_whole_output: query count mismatch");
  size_t K = class_probs.cols() - 1;  // drop the no-object column
  Tensor real_probs = slice_cols(class_probs, 0, K);
  return matmul(transpose(masks), real_probs);  // [(h4*w4) x K]
}

Tensor resample_scores(const Tensor& scores, size_t src_h, size_t src_w,
                       size_t dst_h, size_t dst_w) {
  if (scores.rows() != src_h * src_w)
    throw std::invalid_argument("resample_scores: grid size mismatch");
  return gather_rows(scores, upsample_indices(src_h, src_w, dst_h, dst_w));
}

std::vector<int64_t> argmax_labels(const Tensor& scores) {
  size_t n = scores.rows(), k = scores.cols();
  const auto& d = scores.data();
  std::vector<int64_t> out(n);
  for (size_t i = 0; i < n; ++i) {
    size_t best = 0;
    for (size_t c = 1; c < k; ++c)
      if (d[i * k + c] > d[i * k + best]) best = c;
    out[i] = int64_t(best);
  }
  return out;
}

std::vector<int64_t> upsample_labels(const std::vector<int64_t>& labels,
                                     size_t src_h, size_t src_w, size_t dst_h,
                                     size_t dst_w) {
  auto idx = upsample_indices(src_h, src_w, dst_h, dst_w);
  std::vector<int64_t> out(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) out[i] = labels[size_t(idx[i])];
  return out;
}

}  // namespace hgseg
