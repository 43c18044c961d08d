#include "hgseg/backbone.hpp"

#include <cmath>
#include <stdexcept>

namespace hgseg {

namespace {

// Gather indices that flatten a (bh x bw) block of the src grid into one row
// of the dst grid, one offset at a time.
std::vector<int64_t> block_indices(size_t src_h, size_t src_w, size_t block,
                                   size_t dy, size_t dx) {
  size_t dh = src_h / block, dw = src_w / block;
  std::vector<int64_t> idx(dh * dw);
  for (size_t y = 0; y < dh; ++y)
    for (size_t x = 0; x < dw; ++x)
      idx[y * dw + x] = int64_t((y * block + dy) * src_w + (x * block + dx));
  return idx;
}

// Space-to-depth: [(h*w) x c] -> [(h/b * w/b) x (b*b*c)]
Tensor space_to_depth(const Tensor& x, size_t h, size_t w, size_t block) {
  std::vector<Tensor> parts;
  parts.reserve(block * block);
  for (size_t dy = 0; dy < block; ++dy)
    for (size_t dx = 0; dx < block; ++dx)
      parts.push_back(gather_rows(x, block_indices(h, w, block, dy, dx)));
  return concat_cols(parts);
}

std::vector<int64_t> neighbor_indices(size_t h, size_t w, int dy, int dx) {
  std::vector<int64_t> idx(h * w);
  for (size_t y = 0; y < h; ++y)
    for (size_t x = 0; x < w; ++x) {
      // replicate border
      int64_t ny = std::clamp<int64_t>(int64_t(y) + dy, 0, int64_t(h) - 1);
      int64_t nx = std::clamp<int64_t>(int64_t(x) + dx, 0, int64_t(w) - 1);
      idx[y * w + x] = ny * int64_t(w) + nx;
    }
  return idx;
}

// 3x3 depthwise mixing: y = sum_k gather(x, nbr_k) * w_k + b
Tensor depthwise3x3(const Tensor& x, size_t h, size_t w, const ParamStore& ps,
                    const std::string& prefix) {
  Tensor dw = ps.get(prefix + ".dw");  // [9 x c]
  Tensor acc;
  int64_t k = 0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx, ++k) {
      Tensor wk = reshape(gather_rows(dw, {k}), Shape{x.cols()});
      Tensor term =
          mul_rowvec(gather_rows(x, neighbor_indices(h, w, dy, dx)), wk);
      acc = acc.defined() ? add(acc, term) : term;
    }
  return add_rowvec(acc, ps.get(prefix + ".dwb"));
}

Tensor stage_mix(const Tensor& x, size_t h, size_t w, const ParamStore& ps,
                 const std::string& prefix) {
  Tensor mixed = depthwise3x3(x, h, w, ps, prefix);
  Tensor pw = linear(mixed, ps.get(prefix + ".pw"), ps.get(prefix + ".pwb"));
  return relu(pw);
}

}  // namespace

void init_backbone_params(ParamStore& ps, const ModelConfig& cfg, Rng& rng) {
  auto ch = cfg.backbone_channels;
  size_t d = size_t(cfg.d);
  auto lin = [&](const std::string& name, size_t in, size_t out) {
    ps.param("backbone." + name, {in, out}, rng, real(std::sqrt(2.0 / double(in))));
    ps.zeros_param("backbone." + name + "b", {out});
  };
  auto mix = [&](const std::string& name, size_t c) {
    ps.param("backbone." + name + ".dw", {9, c}, rng, real(0.2));
    ps.zeros_param("backbone." + name + ".dwb", {c});
    ps.param("backbone." + name + ".pw", {c, c}, rng,
             real(std::sqrt(2.0 / double(c))));
    ps.zeros_param("backbone." + name + ".pwb", {c});
  };
  lin("stem", 48, size_t(ch[0]));  // 4x4 patches of rgb
  mix("mix0", size_t(ch[0]));
  for (int i = 1; i < 4; ++i) {
    lin("down" + std::to_string(i), size_t(4 * ch[i - 1]), size_t(ch[i]));
    mix("mix" + std::to_string(i), size_t(ch[i]));
  }
  // fusion / projections
  ps.param("fuse.projK0", {size_t(ch[0]), d}, rng, real(0.05));
  ps.zeros_param("fuse.projK0b", {d});
  ps.param("fuse.projK", {size_t(ch[1]), d}, rng, real(0.05));
  ps.zeros_param("fuse.projKb", {d});
  ps.param("fuse.projV8", {size_t(ch[1]), d}, rng, real(0.05));
  ps.zeros_param("fuse.projV8b", {d});
  ps.param("fuse.projV16", {size_t(ch[2]), d}, rng, real(0.05));
  ps.zeros_param("fuse.projV16b", {d});
  ps.param("fuse.projV32", {size_t(ch[3]), d}, rng, real(0.05));
  ps.zeros_param("fuse.projV32b", {d});
  ps.const_param("fuse.ln_g", {d}, real(1));
  ps.zeros_param("fuse.ln_b", {d});
}

FeaturePyramid extract_features(const Tensor& image, size_t H, size_t W,
                                const ParamStore& ps, const ModelConfig& cfg) {
  if (image.shape().size() != 2 || image.cols() != 3 || image.rows() != H * W)
    throw std::invalid_argument("extract_features: image must be [(H*W) x 3]");

  // pad to multiples of 32 (zeros, bottom/right), recorded for output crop
  size_t Hp = (H + 31) / 32 * 32;
  size_t Wp = (W + 31) / 32 * 32;
  Tensor img = image;
  if (Hp != H || Wp != W) {
    std::vector<int64_t> gidx;
    gidx.reserve(H * W);
    for (size_t y = 0; y < H; ++y)
      for (size_t x = 0; x < W; ++x) gidx.push_back(int64_t(y * Wp + x));
    img = scatter_add_rows(image, gidx, Hp * Wp);
  }

  FeaturePyramid pyr;
  pyr.input_h = Hp;
  pyr.input_w = Wp;
  pyr.orig_h = H;
  pyr.orig_w = W;

  size_t h = Hp / 4, w = Wp / 4;
  Tensor x = relu(linear(space_to_depth(img, Hp, Wp, 4), ps.get("backbone.stem"),
                         ps.get("backbone.stemb")));
  x = stage_mix(x, h, w, ps, "backbone.mix0");
  pyr.levels.push_back({x, h, w});
  for (int i = 1; i < 4; ++i) {
    Tensor down = relu(linear(space_to_depth(x, h, w, 2),
                              ps.get("backbone.down" + std::to_string(i)),
                              ps.get("backbone.down" + std::to_string(i) + "b")));
    h /= 2;
    w /= 2;
    x = stage_mix(down, h, w, ps, "backbone.mix" + std::to_string(i));
    pyr.levels.push_back({x, h, w});
  }
  return pyr;
}

std::vector<int64_t> upsample_indices(size_t src_h, size_t src_w, size_t dst_h,
                                      size_t dst_w) {
  std::vector<int64_t> idx(dst_h * dst_w);
  for (size_t y = 0; y < dst_h; ++y)
    for (size_t x = 0; x < dst_w; ++x) {
      size_t sy = std::min(y * src_h / dst_h, src_h - 1);
      size_t sx = std::min(x * src_w / dst_w, src_w - 1);
      idx[y * dst_w + x] = int64_t(sy * src_w + sx);
    }
  return idx;
}

DecoderFeatures fuse_to_decoder_features(const FeaturePyramid& pyr,
                                         const ParamStore& ps,
                                         const ModelConfig& cfg) {
  if (pyr.levels.size() != 4)
    throw std::invalid_argument("fuse_to_decoder_features: need a 4-level pyramid");
  const auto& l4 = pyr.levels[0];
  const auto& l8 = pyr.levels[1];
  const auto& l16 = pyr.levels[2];
  const auto& l32 = pyr.levels[3];

  DecoderFeatures out;
  out.orig_h = pyr.orig_h;
  out.orig_w = pyr.orig_w;

  out.K0 = {linear(l4.feat, ps.get("fuse.projK0"), ps.get("fuse.projK0b")), l4.h,
            l4.w};
  out.K = {linear(l8.feat, ps.get("fuse.projK"), ps.get("fuse.projKb")), l8.h,
           l8.w};

  Tensor v8 = linear(l8.feat, ps.get("fuse.projV8"), ps.get("fuse.projV8b"));
  Tensor v16 = gather_rows(
      linear(l16.feat, ps.get("fuse.projV16"), ps.get("fuse.projV16b")),
      upsample_indices(l16.h, l16.w, l8.h, l8.w));
  Tensor v32 = gather_rows(
      linear(l32.feat, ps.get("fuse.projV32"), ps.get("fuse.projV32b")),
      upsample_indices(l32.h, l32.w, l8.h, l8.w));
  Tensor v = layer_norm(add(add(v8, v16), v32), ps.get("fuse.ln_g"),
                        ps.get("fuse.ln_b"));
  out.V = {v, l8.h, l8.w};
  return out;
}

}  // namespace hgseg
