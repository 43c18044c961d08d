#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace hgseg {

#ifdef HGSEG_F32
using real = float;
#else
using real = double;
#endif

using Shape = std::vector<size_t>;

size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct Node;
using NodePtr = std::shared_ptr<Node>;

// Gradient sink used during one backward sweep. Gradients of interior nodes
// live here; leaf gradients are flushed into Node::grad (or a caller-supplied
// map) at the end, in deterministic topological order.
class BackCtx {
 public:
  std::vector<real>& grad(Node* n);
  std::vector<real>* find(Node* n);

 private:
  // unordered_map: references stay valid across inserts (node-based buckets)
  std::unordered_map<Node*, std::vector<real>> bufs_;
  friend class Tensor;
};

struct Node {
  Shape shape;
  std::vector<real> data;
  std::vector<real> grad;  // populated for requires_grad leaves after backward
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&, BackCtx&)> backprop;  // null for leaves

  size_t numel() const { return data.size(); }
  bool is_leaf() const { return parents.empty(); }
};

// Thread-local switch: while disabled, ops do not record the graph.
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  static bool enabled();

 private:
  bool prev_;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr n) : n_(std::move(n)) {}

  static Tensor zeros(const Shape& s, bool requires_grad = false);
  static Tensor full(const Shape& s, real v, bool requires_grad = false);
  static Tensor from_data(const Shape& s, std::vector<real> data,
                          bool requires_grad = false);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  size_t numel() const { return n_->data.size(); }
  size_t rows() const { return n_->shape.at(0); }
  size_t cols() const { return n_->shape.at(1); }
  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool b) { n_->requires_grad = b; }

  const std::vector<real>& data() const { return n_->data; }
  std::vector<real>& mutable_data() { return n_->data; }
  real item() const;
  real at(size_t i) const { return n_->data.at(i); }

  std::vector<real>& grad() { return n_->grad; }
  const std::vector<real>& grad() const { return n_->grad; }
  void zero_grad();

  NodePtr node() const { return n_; }

  // Reverse-mode sweep from a scalar loss. Leaf gradients accumulate into
  // Node::grad, or into `sink` (keyed by node) when provided. The recorded
  // graph is released afterwards.
  void backward(
      std::vector<std::pair<Node*, std::vector<real>>>* sink = nullptr) const;

  Tensor detach() const;

 private:
  NodePtr n_;
};

// --- op construction helper -------------------------------------------------

Tensor make_op(Shape shape, std::vector<real> data, std::vector<Tensor> parents,
               std::function<void(Node&, BackCtx&)> backprop);

// --- elementwise ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, real c);
Tensor add_scalar(const Tensor& a, real c);
Tensor exp_t(const Tensor& a);
Tensor log_t(const Tensor& a);       // domain error on non-positive input
Tensor sqrt_t(const Tensor& a);      // domain error on negative input
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor clamp_min(const Tensor& a, real lo);

// --- linear algebra / structure --------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, const Shape& s);
Tensor concat_cols(const std::vector<Tensor>& xs);
Tensor slice_cols(const Tensor& a, size_t start, size_t len);
Tensor concat_rows(const std::vector<Tensor>& xs);

// --- reductions -------------------------------------------------------------

Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor row_sum(const Tensor& a);   // [N x d] -> [N]
Tensor row_mean(const Tensor& a);  // [N x d] -> [N]
Tensor col_sum(const Tensor& a);   // [N x d] -> [d]

// --- broadcast helpers (x: [N x d]) ----------------------------------------

Tensor add_rowvec(const Tensor& x, const Tensor& v);  // v: [d]
Tensor mul_rowvec(const Tensor& x, const Tensor& v);  // v: [d]
Tensor mul_colvec(const Tensor& x, const Tensor& v);  // v: [N]
Tensor div_colvec(const Tensor& x, const Tensor& v);  // v: [N]
Tensor sub_colvec(const Tensor& x, const Tensor& v);  // v: [N]

// --- softmax ----------------------------------------------------------------

// Softmax along `axis` of a 2D tensor (or over a 1D tensor with axis 0).
// -inf entries map to exactly 0; an all-(-inf) slice is an error.
Tensor softmax(const Tensor& a, int axis);

// --- indexed ----------------------------------------------------------------

Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& idx);
Tensor scatter_add_rows(const Tensor& x, const std::vector<int64_t>& idx,
                        size_t out_rows);
Tensor select_per_row(const Tensor& x, const std::vector<int64_t>& idx);

// --- misc -------------------------------------------------------------------

// scaled cosine similarity between two vectors: (x.y)/(|x||y|+eps)/tau
Tensor cosine_similarity(const Tensor& x, const Tensor& y, real tau);

// Non-differentiating views of data (plain numbers)
std::vector<real> row_max_values(const Tensor& x);

// Tensor binary file format: magic "HGT1", u32 rank, u64 dims, f64 payload.
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

}  // namespace hgseg
