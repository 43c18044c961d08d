#include "hgseg/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace hgseg {

std::atomic<size_t> AttentionStats::peak_score_elems{0};

void AttentionStats::observe(size_t n) {
  size_t cur = peak_score_elems.load(std::memory_order_relaxed);
  while (n > cur && !peak_score_elems.compare_exchange_weak(
                        cur, n, std::memory_order_relaxed)) {
  }
}

Tensor ParamStore::param(const std::string& name, const Shape& shape, Rng& rng,
                         real init_std) {
  auto it = params_.find(name);
  if (it != params_.end()) return it->second;
  std::normal_distribution<double> dist(0.0, double(init_std));
  std::vector<real> data(shape_numel(shape));
  for (auto& v : data) v = real(dist(rng));
  Tensor t = Tensor::from_data(shape, std::move(data), true);
  params_.emplace(name, t);
  return t;
}

Tensor ParamStore::zeros_param(const std::string& name, const Shape& shape) {
  auto it = params_.find(name);
  if (it != params_.end()) return it->second;
  Tensor t = Tensor::zeros(shape, true);
  params_.emplace(name, t);
  return t;
}

Tensor ParamStore::const_param(const std::string& name, const Shape& shape,
                               real value) {
  auto it = params_.find(name);
  if (it != params_.end()) return it->second;
  Tensor t = Tensor::full(shape, value, true);
  params_.emplace(name, t);
  return t;
}

Tensor ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end())
    throw std::invalid_argument("ParamStore: unknown parameter " + name);
  return it->second;
}

size_t ParamStore::count_scalars() const {
  size_t n = 0;
  for (const auto& [k, v] : params_) n += v.numel();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& [k, v] : params_) v.zero_grad();
}

Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b) {
  return add_rowvec(matmul(x, W), b);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  real eps) {
  Tensor mu = row_mean(x);
  Tensor centered = sub_colvec(x, mu);
  Tensor var = row_mean(mul(centered, centered));
  Tensor inv = divide(Tensor::full({x.rows()}, real(1)),
                      sqrt_t(add_scalar(var, eps)));
  Tensor normed = mul_colvec(centered, inv);
  return add_rowvec(mul_rowvec(normed, gamma), beta);
}

Tensor multihead_attention(const Tensor& q_in, const Tensor& kv_in,
                           const AttentionWeights& w, size_t heads) {
  size_t d = w.Wq.cols();
  if (d % heads != 0)
    throw std::invalid_argument("multihead_attention: d not divisible by heads");
  size_t dh = d / heads;
  Tensor Q = linear(q_in, w.Wq, w.bq);
  Tensor K = linear(kv_in, w.Wk, w.bk);
  Tensor V = linear(kv_in, w.Wv, w.bv);
  real sc = real(1) / std::sqrt(real(dh));
  std::vector<Tensor> head_outs;
  head_outs.reserve(heads);
  for (size_t h = 0; h < heads; ++h) {
    Tensor Qh = slice_cols(Q, h * dh, dh);
    Tensor Kh = slice_cols(K, h * dh, dh);
    Tensor Vh = slice_cols(V, h * dh, dh);
    Tensor scores = scale(matmul(Qh, transpose(Kh)), sc);
    AttentionStats::observe(scores.numel());
    Tensor attn = softmax(scores, 1);
    head_outs.push_back(matmul(attn, Vh));
  }
  Tensor cat = heads == 1 ? head_outs[0] : concat_cols(head_outs);
  return linear(cat, w.Wo, w.bo);
}

Tensor normalize_rows(const Tensor& x) {
  Tensor norms = add_scalar(sqrt_t(row_sum(mul(x, x))), real(1e-12));
  return div_colvec(x, norms);
}

Tensor log_softmax_rows(const Tensor& x) {
  // subtract the (detached) row max, then x - log(sum(exp(x)))
  Tensor mx = Tensor::from_data({x.rows()}, row_max_values(x));
  Tensor shifted = sub_colvec(x, mx);
  Tensor lse = log_t(row_sum(exp_t(shifted)));
  return sub_colvec(shifted, lse);
}

void AdamW::step(ParamStore& params) {
  t_ += 1;
  const real bc1 = 1 - std::pow(cfg_.beta1, real(t_));
  const real bc2 = 1 - std::pow(cfg_.beta2, real(t_));
  for (auto& [name, p] : params.all()) {
    auto& g = p.grad();
    if (g.size() != p.numel()) continue;  // never touched by backward
    auto& [m, v] = moments_[name];
    if (m.size() != p.numel()) {
      m.assign(p.numel(), real(0));
      v.assign(p.numel(), real(0));
    }
    auto& data = p.mutable_data();
    for (size_t i = 0; i < data.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1 - cfg_.beta2) * g[i] * g[i];
      real mhat = m[i] / bc1;
      real vhat = v[i] / bc2;
      data[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                            cfg_.weight_decay * data[i]);
    }
  }
}

}  // namespace hgseg
