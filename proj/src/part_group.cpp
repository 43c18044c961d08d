#include "hgseg/part_group.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

namespace hgseg {

namespace {
constexpr real kNegInf = -std::numeric_limits<real>::infinity();
}

GridSpec GridSpec::make(size_t feat_h, size_t feat_w, size_t r) {
  if (r == 0) throw std::invalid_argument("GridSpec: r must be positive");
  GridSpec g;
  g.feat_h = feat_h;
  g.feat_w = feat_w;
  g.r = r;
  g.grid_h = (feat_h + r - 1) / r;
  g.grid_w = (feat_w + r - 1) / r;
  size_t n = feat_h * feat_w;
  g.home.resize(n);
  g.window.resize(n * 9);
  g.pixel_rep.resize(n * 9);
  g.window_clamped.resize(n * 9);
  g.scatter_idx.resize(n * 9);
  int64_t np = int64_t(g.num_parts());
  for (size_t y = 0; y < feat_h; ++y)
    for (size_t x = 0; x < feat_w; ++x) {
      size_t j = y * feat_w + x;
      int64_t cy = int64_t(y / r), cx = int64_t(x / r);
      g.home[j] = cy * int64_t(g.grid_w) + cx;
      size_t s = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx, ++s) {
          int64_t ny = cy + dy, nx = cx + dx;
          bool ok = ny >= 0 && nx >= 0 && ny < int64_t(g.grid_h) &&
                    nx < int64_t(g.grid_w);
          int64_t c = ok ? ny * int64_t(g.grid_w) + nx : -1;
          g.window[j * 9 + s] = c;
          g.pixel_rep[j * 9 + s] = int64_t(j);
          g.window_clamped[j * 9 + s] = ok ? c : 0;
          g.scatter_idx[j * 9 + s] = ok ? c : np;
        }
    }
  return g;
}

void init_part_params(ParamStore& ps, const ModelConfig& cfg, Rng& rng) {
  size_t d = size_t(cfg.d);
  auto attn = [&](const std::string& p) {
    for (const char* n : {"Wq", "Wk", "Wv", "Wo"})
      ps.param(p + "." + n, {d, d}, rng, real(0.02));
    for (const char* n : {"bq", "bk", "bv", "bo"}) ps.zeros_param(p + "." + n, {d});
  };
  attn("part.attn");
  ps.const_param("part.ln1_g", {d}, real(1));
  ps.zeros_param("part.ln1_b", {d});
  ps.param("part.ffn.W1", {d, 4 * d}, rng, real(0.02));
  ps.zeros_param("part.ffn.b1", {4 * d});
  ps.param("part.ffn.W2", {4 * d, d}, rng, real(0.02));
  ps.zeros_param("part.ffn.b2", {d});
  ps.const_param("part.ln2_g", {d}, real(1));
  ps.zeros_param("part.ln2_b", {d});
  ps.param("part.cls.W", {d, size_t(cfg.num_classes)}, rng, real(0.02));
  ps.zeros_param("part.cls.b", {size_t(cfg.num_classes)});
}

Tensor init_centers(const Tensor& K, const GridSpec& grid) {
  if (K.rows() != grid.num_pixels())
    throw std::invalid_argument("init_centers: feature map size mismatch");
  Tensor sums = scatter_add_rows(K, grid.home, grid.num_parts());
  std::vector<real> counts(grid.num_parts(), real(0));
  for (int64_t c : grid.home) counts[size_t(c)] += 1;
  return div_colvec(sums, Tensor::from_data({grid.num_parts()}, std::move(counts)));
}

Tensor local_affinity(const Tensor& Q, const Tensor& K, const GridSpec& grid,
                      real tau) {
  if (!(tau > 0)) throw std::invalid_argument("local_affinity: tau must be positive");
  Tensor Qn = normalize_rows(Q);
  Tensor Kn = normalize_rows(K);
  Tensor gq = gather_rows(Qn, grid.window_clamped);
  Tensor gk = gather_rows(Kn, grid.pixel_rep);
  Tensor dots = scale(row_sum(mul(gq, gk)), real(1) / tau);
  Tensor D = reshape(dots, {grid.num_pixels(), 9});
  std::vector<real> mask(grid.num_pixels() * 9, real(0));
  for (size_t i = 0; i < mask.size(); ++i)
    if (grid.window[i] < 0) mask[i] = kNegInf;
  return add(D, Tensor::from_data({grid.num_pixels(), 9}, std::move(mask)));
}

AssignmentMatrix soft_assign(const Tensor& D) {
  return AssignmentMatrix{softmax(D, 1)};
}

namespace {
Tensor aggregate(const AssignmentMatrix& A, const Tensor& feats,
                 const GridSpec& grid, bool normalize, const Tensor& prev) {
  size_t np = grid.num_parts();
  Tensor flatA = reshape(A.weights, {grid.num_pixels() * 9});
  Tensor contrib = mul_colvec(gather_rows(feats, grid.pixel_rep), flatA);
  // invalid slots (weight 0) go to a dummy extra row that is dropped
  Tensor sums = scatter_add_rows(contrib, grid.scatter_idx, np + 1);
  std::vector<int64_t> keep(np);
  for (size_t i = 0; i < np; ++i) keep[i] = int64_t(i);
  Tensor num = gather_rows(sums, keep);
  if (!normalize) return num;

  Tensor massM = scatter_add_rows(reshape(flatA, {grid.num_pixels() * 9, 1}),
                                  grid.scatter_idx, np + 1);
  Tensor mass = reshape(gather_rows(massM, keep), {np});
  Tensor out = div_colvec(num, add_scalar(mass, real(1e-8)));

  // a center with no mass keeps its previous feature
  bool any_empty = false;
  for (real m : mass.data())
    if (m < real(1e-12)) any_empty = true;
  if (any_empty && prev.defined()) {
    std::cerr << "[part-grouper] warning: center with zero assignment mass, "
                 "keeping previous feature\n";
    std::vector<real> keep_mask(np), drop_mask(np);
    const auto& md = mass.data();
    for (size_t i = 0; i < np; ++i) {
      bool empty = md[i] < real(1e-12);
      keep_mask[i] = empty ? real(1) : real(0);
      drop_mask[i] = empty ? real(0) : real(1);
    }
    out = add(mul_colvec(out, Tensor::from_data({np}, std::move(drop_mask))),
              mul_colvec(prev, Tensor::from_data({np}, std::move(keep_mask))));
  }
  return out;
}
}  // namespace

Tensor update_centers(const AssignmentMatrix& A, const Tensor& K,
                      const GridSpec& grid, bool normalize,
                      const Tensor& prev_centers) {
  return aggregate(A, K, grid, normalize, prev_centers);
}

Tensor extract_part_tokens(const AssignmentMatrix& A, const Tensor& V,
                           const GridSpec& grid, bool normalize) {
  return aggregate(A, V, grid, normalize, Tensor());
}

Tensor refine_tokens(const Tensor& Z, const ParamStore& ps, size_t heads) {
  AttentionWeights w{ps.get("part.attn.Wq"), ps.get("part.attn.bq"),
                     ps.get("part.attn.Wk"), ps.get("part.attn.bk"),
                     ps.get("part.attn.Wv"), ps.get("part.attn.bv"),
                     ps.get("part.attn.Wo"), ps.get("part.attn.bo")};
  Tensor x = layer_norm(add(Z, multihead_attention(Z, Z, w, heads)),
                        ps.get("part.ln1_g"), ps.get("part.ln1_b"));
  Tensor ff = linear(relu(linear(x, ps.get("part.ffn.W1"), ps.get("part.ffn.b1"))),
                     ps.get("part.ffn.W2"), ps.get("part.ffn.b2"));
  return layer_norm(add(x, ff), ps.get("part.ln2_g"), ps.get("part.ln2_b"));
}

Tensor classify_parts(const Tensor& refined, const ParamStore& ps) {
  return softmax(linear(refined, ps.get("part.cls.W"), ps.get("part.cls.b")), 1);
}

PartState run_part_grouping(const Tensor& K, const Tensor& V,
                            const GridSpec& grid, const ModelConfig& cfg,
                            const ParamStore& ps) {
  if (cfg.L < 1) throw std::invalid_argument("run_part_grouping: L must be >= 1");
  PartState st;
  Tensor Q = init_centers(K, grid);
  for (int t = 0; t < cfg.L; ++t) {
    Tensor D = local_affinity(Q, K, grid, real(cfg.tau));
    AssignmentMatrix A = soft_assign(D);
    Q = update_centers(A, K, grid, cfg.normalize_center_update, Q);
    Tensor Z = extract_part_tokens(A, V, grid, cfg.normalize_center_update);
    Tensor Zp = refine_tokens(Z, ps, size_t(cfg.heads));
    Tensor Pm = classify_parts(Zp, ps);
    st.history.push_back({A, Pm});
    if (t == cfg.L - 1) {
      st.centers = Q;
      st.tokens = Z;
      st.refined_tokens = Zp;
    }
  }
  return st;
}

std::vector<int64_t> harden_assignment(const AssignmentMatrix& A,
                                       const GridSpec& grid) {
  size_t n = grid.num_pixels();
  std::vector<int64_t> out(n);
  const auto& w = A.weights.data();
  for (size_t j = 0; j < n; ++j) {
    size_t best = 0;
    real bv = -1;
    for (size_t s = 0; s < 9; ++s) {
      if (grid.window[j * 9 + s] < 0) continue;
      if (w[j * 9 + s] > bv) {
        bv = w[j * 9 + s];
        best = s;
      }
    }
    out[j] = grid.window[j * 9 + best];
  }
  return out;
}

}  // namespace hgseg
