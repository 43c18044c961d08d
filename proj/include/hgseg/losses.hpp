#pragma once

#include <cstdint>
#include <vector>

#include "hgseg/config.hpp"
#include "hgseg/tensor.hpp"

namespace hgseg {

constexpr int64_t kIgnoreLabel = -1;

// Per-image supervision targets on the decoder grids. Masks are built per
// semantic class present in the image; ignored pixels belong to no mask.
struct GroundTruth {
  std::vector<int64_t> labels8;  // stride-8 grid, kIgnoreLabel allowed
  std::vector<int64_t> labels4;  // stride-4 grid (the K0 / mask grid)
  std::vector<int64_t> mask_classes;          // g class ids
  std::vector<std::vector<real>> masks8;      // g x (h8*w8) binary
  std::vector<std::vector<real>> masks4;      // g x (h4*w4) binary
  size_t h8 = 0, w8 = 0, h4 = 0, w4 = 0;
};

// Nearest-sample the label image onto the two decoder grids and split it
// into per-class binary masks.
GroundTruth make_ground_truth(const std::vector<int64_t>& labels, size_t H,
                              size_t W, size_t h8, size_t w8, size_t h4,
                              size_t w4, int num_classes);

struct Matching {
  // (query index, ground-truth index), one-to-one, covers every ground truth
  std::vector<std::pair<int, int>> pairs;
};

// --- individual losses ------------------------------------------------------

// O1_probs: [(h8*w8) x K], rows are per-pixel class distributions.
Tensor part_cls_loss(const Tensor& O1_probs, const std::vector<int64_t>& labels);

// Pixel-cluster contrastive loss over the grouping feature map K
// ([(h8*w8) x d]). Zero when g == 1; zero (with a warning) when g == 0.
Tensor contrastive_loss(const Tensor& K, const GroundTruth& gt, real tau);

// 1 - (2 sum(p*g) + s) / (sum p + sum g + s), smoothing s = 1.
Tensor dice_loss(const Tensor& pred, const std::vector<real>& gt);

// mean per-pixel binary cross-entropy, computed from logits for stability
Tensor mask_bce_loss(const Tensor& logits, const std::vector<real>& gt);

// Cross-entropy over query class predictions; matched queries target their
// class, unmatched target the no-object column K, down-weighted by
// `no_object_weight`. Weighted mean.
Tensor mask_cls_loss(const Tensor& class_logits, const Matching& matching,
                     const std::vector<int64_t>& mask_classes,
                     real no_object_weight);

// Optimal one-to-one matching minimizing
//   w_cls * (-P_h[q, class]) + w_mask * BCE(M_q, M_G) + w_dice * dice(M_q, M_G)
// over the stride-4 mask grid; plain numeric, no gradients.
Matching hungarian_match(const Tensor& class_probs, const Tensor& masks,
                         const GroundTruth& gt, double w_cls, double w_mask,
                         double w_dice);

// Brute-force reference (g! permutations); for tests and oracles.
Matching brute_force_match(const std::vector<double>& cost, size_t num_queries,
                           size_t num_gt);
double matching_cost(const std::vector<double>& cost, size_t num_queries,
                     const Matching& m);
std::vector<double> matching_cost_matrix(const Tensor& class_probs,
                                         const Tensor& masks,
                                         const GroundTruth& gt, double w_cls,
                                         double w_mask, double w_dice);

}  // namespace hgseg
