#pragma once

#include <atomic>
#include <map>
#include <string>

#include "hgseg/rng.hpp"
#include "hgseg/tensor.hpp"

namespace hgseg {

// Named parameter registry. Iteration order is lexicographic, which makes
// optimizer updates and checkpoint layout deterministic.
class ParamStore {
 public:
  Tensor param(const std::string& name, const Shape& shape, Rng& rng,
               real init_std);
  Tensor zeros_param(const std::string& name, const Shape& shape);
  Tensor const_param(const std::string& name, const Shape& shape, real value);
  Tensor get(const std::string& name) const;
  bool has(const std::string& name) const { return params_.count(name) > 0; }

  std::map<std::string, Tensor>& all() { return params_; }
  const std::map<std::string, Tensor>& all() const { return params_; }
  size_t count_scalars() const;
  void zero_grads();

 private:
  std::map<std::string, Tensor> params_;
};

// y = x W + b   (x: [N x in], W: [in x out], b: [out])
Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b);

// Layer norm over the last axis of [N x d], then affine (gamma, beta: [d]).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  real eps = real(1e-5));

struct AttentionWeights {
  Tensor Wq, bq, Wk, bk, Wv, bv, Wo, bo;
};

// Peak score-matrix footprint, for the decoder complexity assertion.
struct AttentionStats {
  static std::atomic<size_t> peak_score_elems;
  static void reset() { peak_score_elems = 0; }
  static void observe(size_t n);
};

// Multi-head scaled dot-product attention; queries [Nq x d], keys/values
// [Nk x d]. No positional encodings; rows of each head's score matrix are
// softmax-normalized.
Tensor multihead_attention(const Tensor& q_in, const Tensor& kv_in,
                           const AttentionWeights& w, size_t heads);

// Rows of K normalized to unit length (norm eps 1e-12): K / (|K_i| + eps).
Tensor normalize_rows(const Tensor& x);

// log-softmax along rows of [N x K] (max-subtraction, stable).
Tensor log_softmax_rows(const Tensor& x);

struct AdamWConfig {
  real lr = real(1e-4);
  real beta1 = real(0.9);
  real beta2 = real(0.999);
  real eps = real(1e-8);
  real weight_decay = real(0.05);
};

class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  // One decoupled-weight-decay Adam step over all params with populated grads.
  void step(ParamStore& params);

  int64_t steps() const { return t_; }
  void set_steps(int64_t t) { t_ = t; }
  std::map<std::string, std::pair<std::vector<real>, std::vector<real>>>& moments() {
    return moments_;
  }
  AdamWConfig& config() { return cfg_; }

 private:
  AdamWConfig cfg_;
  int64_t t_ = 0;
  std::map<std::string, std::pair<std::vector<real>, std::vector<real>>> moments_;
};

}  // namespace hgseg
