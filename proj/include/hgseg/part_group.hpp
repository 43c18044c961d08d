#pragma once

#include <vector>

#include "hgseg/config.hpp"
#include "hgseg/nn.hpp"
#include "hgseg/tensor.hpp"

namespace hgseg {

// Regular r x r grid of cluster centers over an h x w feature map, plus the
// per-pixel 3x3 candidate window.
struct GridSpec {
  size_t feat_h = 0, feat_w = 0;
  size_t r = 0;
  size_t grid_h = 0, grid_w = 0;

  std::vector<int64_t> home;        // pixel -> home cell id
  std::vector<int64_t> window;      // (h*w*9): center id per slot, -1 invalid
  std::vector<int64_t> pixel_rep;   // (h*w*9): slot -> owning pixel id
  std::vector<int64_t> window_clamped;  // like window, -1 replaced by 0
  std::vector<int64_t> scatter_idx;     // like window, -1 replaced by num_parts()

  size_t num_parts() const { return grid_h * grid_w; }
  size_t num_pixels() const { return feat_h * feat_w; }

  static GridSpec make(size_t feat_h, size_t feat_w, size_t r);
};

struct AssignmentMatrix {
  Tensor weights;  // [(h*w) x 9], zeros at invalid slots, rows sum to 1
};

struct PartIteration {
  AssignmentMatrix A;
  Tensor class_probs;  // P_m: [N_p x K]
};

struct PartState {
  Tensor centers;          // Q after the final update
  Tensor tokens;           // Z of the final iteration
  Tensor refined_tokens;   // Z' of the final iteration (feeds whole grouping)
  std::vector<PartIteration> history;  // length L
};

void init_part_params(ParamStore& ps, const ModelConfig& cfg, Rng& rng);

Tensor init_centers(const Tensor& K, const GridSpec& grid);

// Windowed affinity D: [(h*w) x 9]; -inf at out-of-border slots.
Tensor local_affinity(const Tensor& Q, const Tensor& K, const GridSpec& grid,
                      real tau);

AssignmentMatrix soft_assign(const Tensor& D);

// Mass-normalized weighted mean when `normalize` (the default); the literal
// unnormalized A x K sum otherwise. A center with no assignment mass keeps
// its previous feature (logged).
Tensor update_centers(const AssignmentMatrix& A, const Tensor& K,
                      const GridSpec& grid, bool normalize,
                      const Tensor& prev_centers);

Tensor extract_part_tokens(const AssignmentMatrix& A, const Tensor& V,
                           const GridSpec& grid, bool normalize);

Tensor refine_tokens(const Tensor& Z, const ParamStore& ps, size_t heads);

Tensor classify_parts(const Tensor& refined, const ParamStore& ps);

PartState run_part_grouping(const Tensor& K, const Tensor& V,
                            const GridSpec& grid, const ModelConfig& cfg,
                            const ParamStore& ps);

// Argmax center per pixel (window slot ids resolved to center ids).
std::vector<int64_t> harden_assignment(const AssignmentMatrix& A,
                                       const GridSpec& grid);

}  // namespace hgseg
