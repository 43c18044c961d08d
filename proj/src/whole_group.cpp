#include "hgseg/whole_group.hpp"

#include <string>

namespace hgseg {

namespace {
std::string lp(int layer, const std::string& rest) {
  return "whole.layer" + std::to_string(layer) + "." + rest;
}

AttentionWeights attn_weights(const ParamStore& ps, const std::string& p) {
  return {ps.get(p + ".Wq"), ps.get(p + ".bq"), ps.get(p + ".Wk"),
          ps.get(p + ".bk"), ps.get(p + ".Wv"), ps.get(p + ".bv"),
          ps.get(p + ".Wo"), ps.get(p + ".bo")};
}
}  // namespace

void init_whole_params(ParamStore& ps, const ModelConfig& cfg, Rng& rng) {
  size_t d = size_t(cfg.d);
  ps.param("whole.E", {size_t(cfg.num_queries), d}, rng, real(0.02));
  auto attn = [&](const std::string& p) {
    for (const char* n : {"Wq", "Wk", "Wv", "Wo"})
      ps.param(p + "." + n, {d, d}, rng, real(0.02));
    for (const char* n : {"bq", "bk", "bv", "bo"}) ps.zeros_param(p + "." + n, {d});
  };
  for (int l = 0; l < cfg.L; ++l) {
    attn(lp(l, "cross"));
    ps.const_param(lp(l, "ln1_g"), {d}, real(1));
    ps.zeros_param(lp(l, "ln1_b"), {d});
    attn(lp(l, "self"));
    ps.const_param(lp(l, "ln2_g"), {d}, real(1));
    ps.zeros_param(lp(l, "ln2_b"), {d});
    ps.param(lp(l, "ffn.W1"), {d, 4 * d}, rng, real(0.02));
    ps.zeros_param(lp(l, "ffn.b1"), {4 * d});
    ps.param(lp(l, "ffn.W2"), {4 * d, d}, rng, real(0.02));
    ps.zeros_param(lp(l, "ffn.b2"), {d});
    ps.const_param(lp(l, "ln3_g"), {d}, real(1));
    ps.zeros_param(lp(l, "ln3_b"), {d});
  }
  // heads shared across layers, 2-layer MLPs with hidden width d
  ps.param("whole.mask_mlp.W1", {d, d}, rng, real(0.02));
  ps.zeros_param("whole.mask_mlp.b1", {d});
  ps.param("whole.mask_mlp.W2", {d, d}, rng, real(0.02));
  ps.zeros_param("whole.mask_mlp.b2", {d});
  ps.param("whole.cls_mlp.W1", {d, d}, rng, real(0.02));
  ps.zeros_param("whole.cls_mlp.b1", {d});
  ps.param("whole.cls_mlp.W2", {d, size_t(cfg.num_classes) + 1}, rng, real(0.02));
  ps.zeros_param("whole.cls_mlp.b2", {size_t(cfg.num_classes) + 1});
}

Tensor decoder_layer(const Tensor& E, const Tensor& part_tokens,
                     const ParamStore& ps, int layer, size_t heads) {
  Tensor x = layer_norm(
      add(E, multihead_attention(E, part_tokens, attn_weights(ps, lp(layer, "cross")),
                                 heads)),
      ps.get(lp(layer, "ln1_g")), ps.get(lp(layer, "ln1_b")));
  x = layer_norm(
      add(x, multihead_attention(x, x, attn_weights(ps, lp(layer, "self")), heads)),
      ps.get(lp(layer, "ln2_g")), ps.get(lp(layer, "ln2_b")));
  Tensor ff =
      linear(relu(linear(x, ps.get(lp(layer, "ffn.W1")), ps.get(lp(layer, "ffn.b1")))),
             ps.get(lp(layer, "ffn.W2")), ps.get(lp(layer, "ffn.b2")));
  return layer_norm(add(x, ff), ps.get(lp(layer, "ln3_g")), ps.get(lp(layer, "ln3_b")));
}

void emit_masks(const Tensor& E_out, const Tensor& K0, const ParamStore& ps,
                Tensor& mask_embed, Tensor& mask_logits, Tensor& masks) {
  mask_embed = linear(
      relu(linear(E_out, ps.get("whole.mask_mlp.W1"), ps.get("whole.mask_mlp.b1"))),
      ps.get("whole.mask_mlp.W2"), ps.get("whole.mask_mlp.b2"));
  mask_logits = matmul(mask_embed, transpose(K0));
  masks = sigmoid(mask_logits);
}

void classify_wholes(const Tensor& E_out, const ParamStore& ps,
                     Tensor& class_logits, Tensor& class_probs) {
  class_logits = linear(
      relu(linear(E_out, ps.get("whole.cls_mlp.W1"), ps.get("whole.cls_mlp.b1"))),
      ps.get("whole.cls_mlp.W2"), ps.get("whole.cls_mlp.b2"));
  class_probs = softmax(class_logits, 1);
}

WholeState run_whole_grouping(const Tensor& part_tokens, const Tensor& K0,
                              const ModelConfig& cfg, const ParamStore& ps) {
  WholeState st;
  Tensor E = ps.get("whole.E");
  for (int l = 0; l < cfg.L; ++l) {
    E = decoder_layer(E, part_tokens, ps, l, size_t(cfg.heads));
    WholeLayerOutput out;
    out.queries = E;
    emit_masks(E, K0, ps, out.mask_embed, out.mask_logits, out.masks);
    classify_wholes(E, ps, out.class_logits, out.class_probs);
    st.layers.push_back(std::move(out));
  }
  return st;
}

}  // namespace hgseg
