#include "hgseg/model.hpp"

#include <stdexcept>

#include "hgseg/inference.hpp"

namespace hgseg {

namespace {

std::vector<int64_t> pad_labels(const std::vector<int64_t>& labels, size_t H,
                                size_t W, size_t Hp, size_t Wp) {
  if (H == Hp && W == Wp) return labels;
  std::vector<int64_t> out(Hp * Wp, kIgnoreLabel);
  for (size_t y = 0; y < H; ++y)
    for (size_t x = 0; x < W; ++x) out[y * Wp + x] = labels[y * W + x];
  return out;
}

std::vector<int64_t> crop_labels(const std::vector<int64_t>& labels, size_t Hp,
                                 size_t Wp, size_t H, size_t W) {
  if (H == Hp && W == Wp) return labels;
  std::vector<int64_t> out(H * W);
  for (size_t y = 0; y < H; ++y)
    for (size_t x = 0; x < W; ++x) out[y * W + x] = labels[y * Wp + x];
  return out;
}

Tensor mean_of(const std::vector<Tensor>& xs) {
  Tensor acc = xs[0];
  for (size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
  return scale(acc, real(1) / real(xs.size()));
}

Tensor mask_row(const Tensor& masks, size_t q) {
  return reshape(gather_rows(masks, {int64_t(q)}), Shape{masks.cols()});
}

}  // namespace

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  Rng rng(mix_seed(cfg.seed, 0x6d0de1));
  init_backbone_params(params_, cfg_, rng);
  if (cfg_.grouping == GroupingMode::kHierarchical)
    init_part_params(params_, cfg_, rng);
  init_whole_params(params_, cfg_, rng);
}

ForwardOutputs Model::forward(const Tensor& image, size_t H, size_t W) const {
  ForwardOutputs out;
  out.orig_h = H;
  out.orig_w = W;
  FeaturePyramid pyr = extract_features(image, H, W, params_, cfg_);
  out.feats = fuse_to_decoder_features(pyr, params_, cfg_);
  if (cfg_.grouping == GroupingMode::kHierarchical) {
    out.grid = GridSpec::make(out.feats.K.h, out.feats.K.w, size_t(cfg_.r));
    out.part = run_part_grouping(out.feats.K.feat, out.feats.V.feat, out.grid,
                                 cfg_, params_);
    out.whole = run_whole_grouping(out.part.refined_tokens, out.feats.K0.feat,
                                   cfg_, params_);
  } else {
    // flat baseline: the decoder consumes pixel features of K directly
    out.whole =
        run_whole_grouping(out.feats.K.feat, out.feats.K0.feat, cfg_, params_);
  }
  return out;
}

GroundTruth Model::ground_truth_for(const std::vector<int64_t>& labels,
                                    size_t H, size_t W) const {
  size_t Hp = (H + 31) / 32 * 32;
  size_t Wp = (W + 31) / 32 * 32;
  auto padded = pad_labels(labels, H, W, Hp, Wp);
  return make_ground_truth(padded, Hp, Wp, Hp / 8, Wp / 8, Hp / 4, Wp / 4,
                           cfg_.num_classes);
}

LossBreakdown Model::compute_loss(const ForwardOutputs& out,
                                  const GroundTruth& gt) const {
  LossBreakdown lb;
  Tensor zero = Tensor::from_data({1}, {real(0)});
  const bool hier = cfg_.grouping == GroupingMode::kHierarchical;

  if (hier) {
    std::vector<Tensor> part_terms;
    size_t first = cfg_.deep_supervision_parts ? 0 : out.part.history.size() - 1;
    for (size_t t = first; t < out.part.history.size(); ++t) {
      Tensor O1 = assemble_part_output(out.part.history[t].class_probs,
                                       out.part.history[t].A, out.grid);
      part_terms.push_back(part_cls_loss(O1, gt.labels8));
    }
    lb.part_cls = mean_of(part_terms);
    lb.contrast = contrastive_loss(out.feats.K.feat, gt, real(cfg_.tau));
  } else {
    lb.part_cls = zero;
    lb.contrast = zero;
  }

  std::vector<Tensor> dice_terms, mask_terms, cls_terms;
  size_t first = cfg_.deep_supervision_whole ? 0 : out.whole.layers.size() - 1;
  for (size_t l = first; l < out.whole.layers.size(); ++l) {
    const auto& layer = out.whole.layers[l];
    Matching m;
    {
      NoGradGuard ng;
      m = hungarian_match(layer.class_probs.detach(), layer.masks.detach(), gt,
                          cfg_.w_mask_cls, cfg_.w_mask, cfg_.w_dice);
    }
    cls_terms.push_back(mask_cls_loss(layer.class_logits, m, gt.mask_classes,
                                      real(cfg_.no_object_weight)));
    if (!m.pairs.empty()) {
      std::vector<Tensor> d, b;
      for (auto [q, j] : m.pairs) {
        Tensor pred = mask_row(layer.masks, size_t(q));
        Tensor logits = mask_row(layer.mask_logits, size_t(q));
        d.push_back(dice_loss(pred, gt.masks4[size_t(j)]));
        b.push_back(mask_bce_loss(logits, gt.masks4[size_t(j)]));
      }
      dice_terms.push_back(mean_of(d));
      mask_terms.push_back(mean_of(b));
    } else {
      dice_terms.push_back(zero);
      mask_terms.push_back(zero);
    }
  }
  lb.dice = mean_of(dice_terms);
  lb.mask = mean_of(mask_terms);
  lb.mask_cls = mean_of(cls_terms);

  lb.total = add(add(add(scale(lb.part_cls, real(cfg_.w_part_cls)),
                         scale(lb.contrast, real(cfg_.w_contrast))),
                     add(scale(lb.dice, real(cfg_.w_dice)),
                         scale(lb.mask, real(cfg_.w_mask)))),
                 scale(lb.mask_cls, real(cfg_.w_mask_cls)));
  return lb;
}

Prediction Model::predict(const std::vector<real>& image, size_t H, size_t W,
                          bool per_iteration) const {
  NoGradGuard ng;
  Tensor img = Tensor::from_data({H * W, 3}, image);
  ForwardOutputs out = forward(img, H, W);
  size_t Hp = (H + 31) / 32 * 32, Wp = (W + 31) / 32 * 32;
  size_t h8 = out.feats.K.h, w8 = out.feats.K.w;

  Prediction pred;
  const auto& last_layer = out.whole.layers.back();
  Tensor O2_4 = assemble_whole_output(last_layer.class_probs, last_layer.masks);
  Tensor O2 = resample_scores(O2_4, out.feats.K0.h, out.feats.K0.w, h8, w8);

  auto to_full = [&](const std::vector<int64_t>& l8) {
    return crop_labels(upsample_labels(l8, h8, w8, Hp, Wp), Hp, Wp, H, W);
  };

  if (cfg_.grouping == GroupingMode::kHierarchical) {
    size_t t = cfg_.inference_iteration >= 1
                   ? size_t(cfg_.inference_iteration) - 1
                   : out.part.history.size() - 1;
    if (t >= out.part.history.size())
      throw std::invalid_argument("predict: inference_iteration out of range");
    Tensor O1 = assemble_part_output(out.part.history[t].class_probs,
                                     out.part.history[t].A, out.grid);
    Tensor O = add(O1, O2);
    pred.ensemble = to_full(argmax_labels(O));
    pred.part_only = to_full(argmax_labels(O1));
    pred.whole_only = to_full(argmax_labels(O2));
    if (per_iteration) {
      for (const auto& it : out.part.history) {
        Tensor O1t = assemble_part_output(it.class_probs, it.A, out.grid);
        pred.per_iteration_part.push_back(to_full(argmax_labels(O1t)));
      }
    }
  } else {
    pred.whole_only = to_full(argmax_labels(O2));
    pred.ensemble = pred.whole_only;
  }
  return pred;
}

}  // namespace hgseg
