#pragma once

#include <vector>

#include "hgseg/config.hpp"
#include "hgseg/nn.hpp"
#include "hgseg/tensor.hpp"

namespace hgseg {

struct WholeLayerOutput {
  Tensor queries;       // E_out: [N_o x d]
  Tensor mask_embed;    // eps:   [N_o x d]
  Tensor mask_logits;   // [N_o x (H0*W0)]
  Tensor masks;         // sigmoid(mask_logits)
  Tensor class_logits;  // [N_o x (K+1)]
  Tensor class_probs;   // softmax rows
};

struct WholeState {
  std::vector<WholeLayerOutput> layers;  // length L; back() is the inference output
};

void init_whole_params(ParamStore& ps, const ModelConfig& cfg, Rng& rng);

// One transformer decoder layer: cross-attention (queries = E, keys/values =
// part tokens), self-attention over queries, FFN; residual + layer norm each.
Tensor decoder_layer(const Tensor& E, const Tensor& part_tokens,
                     const ParamStore& ps, int layer, size_t heads);

// eps = MLP(E_out); mask logits = eps K0^T; masks = sigmoid(...)
void emit_masks(const Tensor& E_out, const Tensor& K0, const ParamStore& ps,
                Tensor& mask_embed, Tensor& mask_logits, Tensor& masks);

void classify_wholes(const Tensor& E_out, const ParamStore& ps,
                     Tensor& class_logits, Tensor& class_probs);

WholeState run_whole_grouping(const Tensor& part_tokens, const Tensor& K0,
                              const ModelConfig& cfg, const ParamStore& ps);

}  // namespace hgseg
