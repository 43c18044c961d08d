#pragma once

#include <vector>

#include "hgseg/config.hpp"
#include "hgseg/nn.hpp"
#include "hgseg/tensor.hpp"

namespace hgseg {

// One feature map: rows are pixels of an h x w grid in row-major order.
struct FeatureMap {
  Tensor feat;  // [(h*w) x c]
  size_t h = 0, w = 0;
};

// Levels at strides 4, 8, 16, 32 relative to the (padded) input.
struct FeaturePyramid {
  std::vector<FeatureMap> levels;
  size_t input_h = 0, input_w = 0;  // padded size
  size_t orig_h = 0, orig_w = 0;    // before padding
};

struct DecoderFeatures {
  FeatureMap K0;  // stride 4, width d
  FeatureMap K;   // stride 8, width d
  FeatureMap V;   // stride 8, width d
  size_t orig_h = 0, orig_w = 0;
};

// Registers every backbone parameter (deterministic given rng state).
void init_backbone_params(ParamStore& ps, const ModelConfig& cfg, Rng& rng);

// image: [(H*W) x 3], values in [0,1]. Sizes not divisible by 32 are
// zero-padded on the bottom/right; the original size is recorded so outputs
// can be cropped.
FeaturePyramid extract_features(const Tensor& image, size_t H, size_t W,
                                const ParamStore& ps, const ModelConfig& cfg);

DecoderFeatures fuse_to_decoder_features(const FeaturePyramid& pyr,
                                         const ParamStore& ps,
                                         const ModelConfig& cfg);

// Nearest-neighbor index map from a dst grid onto a src grid scaled by
// `factor` (src cell covers factor x factor dst cells).
std::vector<int64_t> upsample_indices(size_t src_h, size_t src_w, size_t dst_h,
                                      size_t dst_w);

}  // namespace hgseg
