#include "hgseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "hgseg/hungarian.hpp"
#include "hgseg/nn.hpp"

namespace hgseg {

namespace {
constexpr real kNegInf = -std::numeric_limits<real>::infinity();

std::vector<int64_t> sample_grid(const std::vector<int64_t>& labels, size_t H,
                                 size_t W, size_t gh, size_t gw) {
  // nearest sample at each grid cell center
  std::vector<int64_t> out(gh * gw);
  for (size_t y = 0; y < gh; ++y)
    for (size_t x = 0; x < gw; ++x) {
      size_t sy = std::min((2 * y + 1) * H / (2 * gh), H - 1);
      size_t sx = std::min((2 * x + 1) * W / (2 * gw), W - 1);
      out[y * gw + x] = labels[sy * W + sx];
    }
  return out;
}
}  // namespace

GroundTruth make_ground_truth(const std::vector<int64_t>& labels, size_t H,
                              size_t W, size_t h8, size_t w8, size_t h4,
                              size_t w4, int num_classes) {
  if (labels.size() != H * W)
    throw std::invalid_argument("make_ground_truth: label size mismatch");
  GroundTruth gt;
  gt.h8 = h8;
  gt.w8 = w8;
  gt.h4 = h4;
  gt.w4 = w4;
  gt.labels8 = sample_grid(labels, H, W, h8, w8);
  gt.labels4 = sample_grid(labels, H, W, h4, w4);

  std::vector<char> present(size_t(num_classes), 0);
  for (int64_t l : gt.labels4)
    if (l >= 0 && l < num_classes) present[size_t(l)] = 1;
  for (int64_t l : gt.labels8)
    if (l >= 0 && l < num_classes) present[size_t(l)] = 1;
  for (int c = 0; c < num_classes; ++c) {
    if (!present[size_t(c)]) continue;
    gt.mask_classes.push_back(c);
    std::vector<real> m8(h8 * w8, real(0)), m4(h4 * w4, real(0));
    for (size_t i = 0; i < gt.labels8.size(); ++i)
      if (gt.labels8[i] == c) m8[i] = 1;
    for (size_t i = 0; i < gt.labels4.size(); ++i)
      if (gt.labels4[i] == c) m4[i] = 1;
    gt.masks8.push_back(std::move(m8));
    gt.masks4.push_back(std::move(m4));
  }
  return gt;
}

Tensor part_cls_loss(const Tensor& O1_probs, const std::vector<int64_t>& labels) {
  size_t n = O1_probs.rows();
  if (labels.size() != n)
    throw std::invalid_argument("part_cls_loss: label count mismatch");
  std::vector<int64_t> idx(n);
  std::vector<real> valid(n);
  size_t nvalid = 0;
  for (size_t i = 0; i < n; ++i) {
    bool ok = labels[i] >= 0 && size_t(labels[i]) < O1_probs.cols();
    idx[i] = ok ? labels[i] : 0;
    valid[i] = ok ? real(1) : real(0);
    nvalid += ok;
  }
  if (nvalid == 0) return Tensor::from_data({1}, {real(0)});
  Tensor picked = clamp_min(select_per_row(O1_probs, idx), real(1e-12));
  Tensor nll = mul(neg(log_t(picked)), Tensor::from_data({n}, std::move(valid)));
  return scale(sum_all(nll), real(1) / real(nvalid));
}

Tensor contrastive_loss(const Tensor& K, const GroundTruth& gt, real tau) {
  size_t g = gt.masks8.size();
  size_t n = K.rows();
  if (g == 0) {
    std::cerr << "[losses] warning: contrastive loss with no ground-truth masks\n";
    return Tensor::from_data({1}, {real(0)});
  }
  // T: per-mask mean of K features (gradients flow through the mean)
  std::vector<real> mg(g * n, real(0));
  std::vector<real> posflag(n, real(0));
  for (size_t j = 0; j < g; ++j) {
    const auto& m = gt.masks8[j];
    real cnt = std::accumulate(m.begin(), m.end(), real(0));
    if (cnt == 0) continue;
    for (size_t i = 0; i < n; ++i) {
      mg[j * n + i] = m[i] / cnt;
      if (m[i] > 0) posflag[i] = 1;
    }
  }
  Tensor T = matmul(Tensor::from_data({g, n}, std::move(mg)), K);
  Tensor S = scale(matmul(normalize_rows(K), transpose(normalize_rows(T))),
                   real(1) / tau);  // [n x g]

  // positive mask; pixels without a positive get an all-ones row (their loss
  // term is exactly 0) and weight 0
  std::vector<real> posmask(n * g, real(0));
  size_t nvalid = 0;
  for (size_t i = 0; i < n; ++i) {
    bool has_pos = posflag[i] > 0;
    if (has_pos) ++nvalid;
    for (size_t j = 0; j < g; ++j) {
      bool pos = has_pos ? gt.masks8[j][i] > 0 : true;
      posmask[i * g + j] = pos ? real(0) : kNegInf;
    }
  }
  if (nvalid == 0) return Tensor::from_data({1}, {real(0)});

  auto lse_rows = [](const Tensor& x) {
    Tensor mx = Tensor::from_data({x.rows()}, row_max_values(x));
    return add(log_t(row_sum(exp_t(sub_colvec(x, mx)))), mx);
  };
  Tensor lse_all = lse_rows(S);
  Tensor lse_pos = lse_rows(add(S, Tensor::from_data({n, g}, std::move(posmask))));
  Tensor per_pixel = sub(lse_all, lse_pos);
  Tensor weights = Tensor::from_data({n}, std::move(posflag));
  return scale(sum_all(mul(per_pixel, weights)), real(1) / real(nvalid));
}

Tensor dice_loss(const Tensor& pred, const std::vector<real>& gt) {
  if (pred.numel() != gt.size())
    throw std::invalid_argument("dice_loss: size mismatch");
  constexpr real s = 1;
  Tensor g = Tensor::from_data({gt.size()}, gt);
  Tensor inter = sum_all(mul(pred, g));
  Tensor denom = add_scalar(add(sum_all(pred), sum_all(g)), s);
  Tensor frac = divide(add_scalar(scale(inter, 2), s), denom);
  return add_scalar(neg(frac), 1);
}

Tensor mask_bce_loss(const Tensor& logits, const std::vector<real>& gt) {
  if (logits.numel() != gt.size())
    throw std::invalid_argument("mask_bce_loss: size mismatch");
  Tensor y = Tensor::from_data({gt.size()}, gt);
  // softplus(x) - x*y == -[y log sigma(x) + (1-y) log(1 - sigma(x))]
  return mean_all(sub(softplus(logits), mul(logits, y)));
}

Tensor mask_cls_loss(const Tensor& class_logits, const Matching& matching,
                     const std::vector<int64_t>& mask_classes,
                     real no_object_weight) {
  size_t nq = class_logits.rows();
  size_t no_object = class_logits.cols() - 1;
  std::vector<int64_t> target(nq, int64_t(no_object));
  std::vector<real> weight(nq, no_object_weight);
  for (auto [q, gti] : matching.pairs) {
    target[size_t(q)] = mask_classes.at(size_t(gti));
    weight[size_t(q)] = 1;
  }
  real wsum = std::accumulate(weight.begin(), weight.end(), real(0));
  Tensor lp = log_softmax_rows(class_logits);
  Tensor picked = select_per_row(lp, target);
  Tensor weighted = mul(picked, Tensor::from_data({nq}, std::move(weight)));
  return scale(neg(sum_all(weighted)), real(1) / wsum);
}

std::vector<double> matching_cost_matrix(const Tensor& class_probs,
                                         const Tensor& masks,
                                         const GroundTruth& gt, double w_cls,
                                         double w_mask, double w_dice) {
  size_t nq = class_probs.rows();
  size_t g = gt.mask_classes.size();
  size_t npx = masks.cols();
  const auto& P = class_probs.data();
  const auto& M = masks.data();
  std::vector<double> cost(nq * g, 0.0);
  for (size_t q = 0; q < nq; ++q) {
    for (size_t j = 0; j < g; ++j) {
      const auto& mg = gt.masks4[j];
      double inter = 0, psum = 0, gsum = 0, bce = 0;
      for (size_t i = 0; i < npx; ++i) {
        double p = std::clamp(double(M[q * npx + i]), 1e-12, 1.0 - 1e-12);
        double y = double(mg[i]);
        inter += p * y;
        psum += p;
        gsum += y;
        bce += -(y * std::log(p) + (1 - y) * std::log1p(-p));
      }
      double dice = 1.0 - (2 * inter + 1) / (psum + gsum + 1);
      double cls = -double(P[q * class_probs.cols() + size_t(gt.mask_classes[j])]);
      cost[q * g + j] = w_cls * cls + w_mask * bce / double(npx) + w_dice * dice;
    }
  }
  return cost;
}

Matching hungarian_match(const Tensor& class_probs, const Tensor& masks,
                         const GroundTruth& gt, double w_cls, double w_mask,
                         double w_dice) {
  size_t nq = class_probs.rows();
  size_t g = gt.mask_classes.size();
  if (nq < g)
    throw std::invalid_argument(
        "hungarian_match: fewer queries than ground-truth masks");
  Matching m;
  if (g == 0) return m;
  std::vector<double> cost =
      matching_cost_matrix(class_probs, masks, gt, w_cls, w_mask, w_dice);
  // solver rows must not exceed cols: rows = ground truths, cols = queries
  std::vector<double> costT(g * nq);
  for (size_t q = 0; q < nq; ++q)
    for (size_t j = 0; j < g; ++j) costT[j * nq + q] = cost[q * g + j];
  std::vector<int> gt_to_q = hungarian_min_assignment(costT, g, nq);
  for (size_t j = 0; j < g; ++j) m.pairs.emplace_back(gt_to_q[j], int(j));
  std::sort(m.pairs.begin(), m.pairs.end());
  return m;
}

Matching brute_force_match(const std::vector<double>& cost, size_t num_queries,
                           size_t num_gt) {
  std::vector<int> qs(num_queries);
  std::iota(qs.begin(), qs.end(), 0);
  // choose num_gt queries in order: permute and take prefix mapping
  std::vector<int> best;
  double best_cost = std::numeric_limits<double>::infinity();
  std::vector<int> sel(num_gt, -1);
  std::vector<char> used(num_queries, 0);
  std::function<void(size_t, double)> rec = [&](size_t j, double acc) {
    if (acc >= best_cost) return;
    if (j == num_gt) {
      best_cost = acc;
      best = sel;
      return;
    }
    for (size_t q = 0; q < num_queries; ++q) {
      if (used[q]) continue;
      used[q] = 1;
      sel[j] = int(q);
      rec(j + 1, acc + cost[q * num_gt + j]);
      used[q] = 0;
    }
  };
  rec(0, 0.0);
  Matching m;
  for (size_t j = 0; j < num_gt; ++j) m.pairs.emplace_back(best[j], int(j));
  std::sort(m.pairs.begin(), m.pairs.end());
  return m;
}

double matching_cost(const std::vector<double>& cost, size_t num_queries,
                     const Matching& m) {
  (void)num_queries;
  double s = 0;
  size_t g = 0;
  for (auto [q, j] : m.pairs) g = std::max(g, size_t(j) + 1);
  for (auto [q, j] : m.pairs) s += cost[size_t(q) * g + size_t(j)];
  return s;
}

}  // namespace hgseg
