#pragma once

#include <vector>

#include "hgseg/backbone.hpp"
#include "hgseg/config.hpp"
#include "hgseg/losses.hpp"
#include "hgseg/nn.hpp"
#include "hgseg/part_group.hpp"
#include "hgseg/whole_group.hpp"

namespace hgseg {

struct ForwardOutputs {
  DecoderFeatures feats;
  GridSpec grid;        // hierarchical mode only
  PartState part;       // hierarchical mode only
  WholeState whole;
  size_t orig_h = 0, orig_w = 0;  // input size before padding
};

struct LossBreakdown {
  Tensor part_cls, contrast, dice, mask, mask_cls, total;
};

struct Prediction {
  std::vector<int64_t> ensemble;    // input-resolution label maps
  std::vector<int64_t> part_only;   // empty in flat mode
  std::vector<int64_t> whole_only;
  std::vector<std::vector<int64_t>> per_iteration_part;  // filled on request
};

class Model {
 public:
  explicit Model(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  ForwardOutputs forward(const Tensor& image, size_t H, size_t W) const;
  LossBreakdown compute_loss(const ForwardOutputs& out,
                             const GroundTruth& gt) const;

  // Supervision targets on this model's decoder grids for an H x W label map.
  GroundTruth ground_truth_for(const std::vector<int64_t>& labels, size_t H,
                               size_t W) const;

  // Inference without gradient tracking.
  Prediction predict(const std::vector<real>& image, size_t H, size_t W,
                     bool per_iteration = false) const;

 private:
  ModelConfig cfg_;
  ParamStore params_;
};

}  // namespace hgseg
