#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hgseg/losses.hpp"
#include "hgseg/whole_group.hpp"
#include "helpers.hpp"

using namespace hgseg;
using namespace hgseg::test;

namespace {

ModelConfig tiny_cfg() {
  ModelConfig cfg;
  cfg.d = 8;
  cfg.heads = 2;
  cfg.num_queries = 4;
  cfg.num_classes = 3;
  cfg.L = 6;
  return cfg;
}

}  // namespace

TEST_CASE("attention over a single key broadcasts it") {
  Rng rng(3);
  AttentionWeights w;
  w.Wq = random_tensor({8, 8}, rng, false);
  w.bq = random_tensor({8}, rng, false);
  w.Wk = random_tensor({8, 8}, rng, false);
  w.bk = random_tensor({8}, rng, false);
  w.Wv = random_tensor({8, 8}, rng, false);
  w.bv = random_tensor({8}, rng, false);
  w.Wo = random_tensor({8, 8}, rng, false);
  w.bo = random_tensor({8}, rng, false);
  Tensor q = random_tensor({4, 8}, rng, false);
  Tensor kv = random_tensor({1, 8}, rng, false);
  Tensor out = multihead_attention(q, kv, w, 2);
  // softmax over one key is 1 -> every query receives the same context
  for (size_t i = 1; i < 4; ++i)
    for (size_t c = 0; c < 8; ++c)
      CHECK(double(out.at(i * 8 + c)) ==
            doctest::Approx(double(out.at(c))).epsilon(1e-9));
}

TEST_CASE("decoder layer: finite, differentiable") {
  ModelConfig cfg = tiny_cfg();
  ParamStore ps;
  Rng rng(7);
  init_whole_params(ps, cfg, rng);
  Tensor E = random_tensor({4, 8}, rng, true);
  Tensor Z = random_tensor({6, 8}, rng, true);
  Tensor out = decoder_layer(E, Z, ps, 0, 2);
  CHECK(out.rows() == 4);
  CHECK(out.cols() == 8);
  for (size_t i = 0; i < out.numel(); ++i) CHECK(std::isfinite(double(out.at(i))));

  Tensor w = random_tensor({4, 8}, rng, false);
  auto loss = [&] { return sum_all(mul(decoder_layer(E, Z, ps, 0, 2), w)); };
  CHECK(max_grad_rel_err(loss, {E, Z}) < 1e-5);
}

TEST_CASE("masks: zero embeddings give 0.5, outputs bounded") {
  ModelConfig cfg = tiny_cfg();
  ParamStore ps;
  Rng rng(11);
  init_whole_params(ps, cfg, rng);
  Tensor E = random_tensor({4, 8}, rng, false);
  Tensor K0 = random_tensor({20, 8}, rng, false);
  Tensor eps, logits, masks;
  emit_masks(E, K0, ps, eps, logits, masks);
  CHECK(masks.rows() == 4);
  CHECK(masks.cols() == 20);
  for (size_t i = 0; i < masks.numel(); ++i) {
    CHECK(masks.at(i) > 0.0);
    CHECK(masks.at(i) < 1.0);
  }
  // zero the mask MLP output layer -> eps = 0 -> masks uniformly 0.5
  for (const char* name : {"whole.mask_mlp.W2", "whole.mask_mlp.b2"}) {
    auto& d = ps.get(name).mutable_data();
    std::fill(d.begin(), d.end(), real(0));
  }
  emit_masks(E, K0, ps, eps, logits, masks);
  for (size_t i = 0; i < masks.numel(); ++i)
    CHECK(masks.at(i) == doctest::Approx(0.5));
}

TEST_CASE("classify_wholes: uniform under zero weights, K+1 columns") {
  ModelConfig cfg = tiny_cfg();
  cfg.num_classes = 19;
  ParamStore ps;
  Rng rng(13);
  init_whole_params(ps, cfg, rng);
  Tensor E = random_tensor({4, 8}, rng, false);
  Tensor logits, probs;
  classify_wholes(E, ps, logits, probs);
  CHECK(probs.cols() == 20);  // K + no-object
  for (size_t r = 0; r < 4; ++r) {
    double s = 0;
    for (size_t c = 0; c < 20; ++c) s += double(probs.at(r * 20 + c));
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
  for (const char* name : {"whole.cls_mlp.W2", "whole.cls_mlp.b2"}) {
    auto& d = ps.get(name).mutable_data();
    std::fill(d.begin(), d.end(), real(0));
  }
  classify_wholes(E, ps, logits, probs);
  for (size_t i = 0; i < probs.numel(); ++i)
    CHECK(probs.at(i) == doctest::Approx(1.0 / 20));
}

TEST_CASE("run_whole_grouping: history, permutation invariance, determinism") {
  ModelConfig cfg = tiny_cfg();
  ParamStore ps;
  Rng rng(17);
  init_whole_params(ps, cfg, rng);
  Tensor Z = random_tensor({6, 8}, rng, false);
  Tensor K0 = random_tensor({20, 8}, rng, false);
  WholeState st = run_whole_grouping(Z, K0, cfg, ps);
  CHECK(st.layers.size() == 6);  // L = 6 default

  std::vector<int64_t> perm = {5, 2, 0, 4, 1, 3};
  WholeState stp = run_whole_grouping(gather_rows(Z, perm), K0, cfg, ps);
  for (size_t i = 0; i < st.layers.back().queries.numel(); ++i)
    CHECK(double(stp.layers.back().queries.at(i)) ==
          doctest::Approx(double(st.layers.back().queries.at(i))).epsilon(1e-9));

  ParamStore ps2;
  Rng rng2(17);
  init_whole_params(ps2, cfg, rng2);
  WholeState st2 = run_whole_grouping(Z, K0, cfg, ps2);
  for (size_t i = 0; i < st.layers.back().masks.numel(); ++i)
    CHECK(st2.layers.back().masks.at(i) == st.layers.back().masks.at(i));
}

TEST_CASE("attention allocation is query x token, not query x pixel") {
  ModelConfig cfg = tiny_cfg();
  ParamStore ps;
  Rng rng(23);
  init_whole_params(ps, cfg, rng);
  size_t np = 8, pixels = 20;
  Tensor Z = random_tensor({np, 8}, rng, false);
  Tensor K0 = random_tensor({pixels, 8}, rng, false);
  AttentionStats::reset();
  run_whole_grouping(Z, K0, cfg, ps);
  size_t nq = size_t(cfg.num_queries);
  CHECK(AttentionStats::peak_score_elems.load() == nq * np);
  CHECK(AttentionStats::peak_score_elems.load() < nq * pixels);
}

TEST_CASE("single query learns a single mask (overfit smoke)") {
  ModelConfig cfg = tiny_cfg();
  cfg.num_queries = 1;
  cfg.num_classes = 1;
  cfg.L = 1;
  ParamStore ps;
  Rng rng(29);
  init_whole_params(ps, cfg, rng);
  size_t h = 8, w = 8;
  Tensor K0 = random_tensor({h * w, 8}, rng, false);
  std::vector<real> target(h * w, real(0));
  for (size_t y = 2; y < 6; ++y)
    for (size_t x = 2; x < 6; ++x) target[y * w + x] = 1;

  AdamWConfig oc;
  oc.lr = real(5e-3);
  oc.weight_decay = real(0);
  AdamW opt(oc);
  for (int it = 0; it < 300; ++it) {
    ps.zero_grads();
    WholeState st = run_whole_grouping(Tensor::zeros({1, 8}), K0, cfg, ps);
    const auto& l = st.layers.back();
    Tensor m = reshape(l.masks, {h * w});
    Tensor loss = add(dice_loss(m, target), mask_bce_loss(reshape(l.mask_logits, {h * w}), target));
    loss.backward();
    opt.step(ps);
  }
  NoGradGuard ng;
  WholeState st = run_whole_grouping(Tensor::zeros({1, 8}), K0, cfg, ps);
  size_t inter = 0, uni = 0;
  for (size_t i = 0; i < h * w; ++i) {
    bool p = st.layers.back().masks.at(i) > 0.5, g = target[i] > 0.5;
    inter += p && g;
    uni += p || g;
  }
  CHECK(double(inter) / double(uni) > 0.9);
}
