#include "hgseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace hgseg {

namespace {
constexpr real kNegInf = -std::numeric_limits<real>::infinity();

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    fail(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
         shape_str(b.shape()));
}

thread_local bool g_grad_enabled = true;
}  // namespace

size_t shape_numel(const Shape& s) {
  size_t n = 1;
  for (size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool NoGradGuard::enabled() { return g_grad_enabled; }

// --- BackCtx ----------------------------------------------------------------

std::vector<real>& BackCtx::grad(Node* n) {
  auto it = bufs_.find(n);
  if (it != bufs_.end()) return it->second;
  return bufs_.emplace(n, std::vector<real>(n->data.size(), real(0))).first->second;
}

std::vector<real>* BackCtx::find(Node* n) {
  auto it = bufs_.find(n);
  return it == bufs_.end() ? nullptr : &it->second;
}

// --- Tensor basics ----------------------------------------------------------

Tensor Tensor::zeros(const Shape& s, bool rg) {
  return from_data(s, std::vector<real>(shape_numel(s), real(0)), rg);
}

Tensor Tensor::full(const Shape& s, real v, bool rg) {
  return from_data(s, std::vector<real>(shape_numel(s), v), rg);
}

Tensor Tensor::from_data(const Shape& s, std::vector<real> data, bool rg) {
  if (shape_numel(s) != data.size())
    fail("from_data: shape " + shape_str(s) + " does not match data length");
  auto n = std::make_shared<Node>();
  n->shape = s;
  n->data = std::move(data);
  n->requires_grad = rg;
  return Tensor(std::move(n));
}

real Tensor::item() const {
  if (numel() != 1) fail("item: tensor is not scalar, shape " + shape_str(shape()));
  return n_->data[0];
}

void Tensor::zero_grad() {
  n_->grad.assign(n_->data.size(), real(0));
}

Tensor Tensor::detach() const {
  auto n = std::make_shared<Node>();
  n->shape = n_->shape;
  n->data = n_->data;
  n->requires_grad = false;
  return Tensor(std::move(n));
}

void Tensor::backward(std::vector<std::pair<Node*, std::vector<real>>>* sink) const {
  if (numel() != 1) fail("backward: loss must be scalar, got " + shape_str(shape()));

  // Deterministic post-order DFS from the loss node.
  std::vector<Node*> topo;
  std::unordered_set<Node*> seen;
  struct Frame {
    Node* n;
    size_t next;
  };
  std::vector<Frame> stack;
  stack.push_back({n_.get(), 0});
  seen.insert(n_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      Node* p = f.n->parents[f.next++].get();
      if (seen.insert(p).second) stack.push_back({p, 0});
    } else {
      topo.push_back(f.n);
      stack.pop_back();
    }
  }
  // topo is post-order: parents before children; reverse for backward.

  BackCtx ctx;
  ctx.grad(n_.get()).assign(1, real(1));
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && ctx.find(n)) n->backprop(*n, ctx);
  }
  // Flush leaf gradients in topological order.
  for (Node* n : topo) {
    if (!n->requires_grad || !n->is_leaf()) continue;
    std::vector<real>* g = ctx.find(n);
    if (!g) continue;
    if (sink) {
      sink->emplace_back(n, std::move(*g));
    } else {
      if (n->grad.size() != n->data.size()) n->grad.assign(n->data.size(), real(0));
      for (size_t i = 0; i < n->data.size(); ++i) n->grad[i] += (*g)[i];
    }
  }
  // Release the graph (activations of interior nodes stay valid as data).
  for (Node* n : topo) {
    n->parents.clear();
    n->backprop = nullptr;
  }
}

Tensor make_op(Shape shape, std::vector<real> data, std::vector<Tensor> parents,
               std::function<void(Node&, BackCtx&)> backprop) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  bool track = g_grad_enabled;
  if (track) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    track = any;
  }
  if (track) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backprop = std::move(backprop);
  }
  return Tensor(std::move(n));
}

// --- elementwise ------------------------------------------------------------

namespace {
template <class Fwd, class Bwd>
Tensor binary_ew(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Bwd bwd) {
  check_same_shape(a, b, name);
  std::vector<real> out(a.numel());
  const auto& ad = a.data();
  const auto& bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(ad[i], bd[i]);
  return make_op(a.shape(), std::move(out), {a, b},
                 [bwd](Node& n, BackCtx& ctx) {
                   const auto& g = ctx.grad(&n);
                   auto& ga = ctx.grad(n.parents[0].get());
                   auto& gb = ctx.grad(n.parents[1].get());
                   const auto& ad = n.parents[0]->data;
                   const auto& bd = n.parents[1]->data;
                   for (size_t i = 0; i < g.size(); ++i) {
                     real da, db;
                     bwd(ad[i], bd[i], n.data[i], da, db);
                     ga[i] += g[i] * da;
                     gb[i] += g[i] * db;
                   }
                 });
}

template <class Fwd, class Bwd>
Tensor unary_ew(const Tensor& a, Fwd fwd, Bwd bwd) {
  std::vector<real> out(a.numel());
  const auto& ad = a.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(ad[i]);
  return make_op(a.shape(), std::move(out), {a},
                 [bwd](Node& n, BackCtx& ctx) {
                   const auto& g = ctx.grad(&n);
                   auto& ga = ctx.grad(n.parents[0].get());
                   const auto& ad = n.parents[0]->data;
                   for (size_t i = 0; i < g.size(); ++i)
                     ga[i] += g[i] * bwd(ad[i], n.data[i]);
                 });
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_ew(a, b, "add", [](real x, real y) { return x + y; },
                   [](real, real, real, real& da, real& db) { da = 1; db = 1; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_ew(a, b, "sub", [](real x, real y) { return x - y; },
                   [](real, real, real, real& da, real& db) { da = 1; db = -1; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_ew(a, b, "mul", [](real x, real y) { return x * y; },
                   [](real x, real y, real, real& da, real& db) { da = y; db = x; });
}

Tensor divide(const Tensor& a, const Tensor& b) {
  return binary_ew(a, b, "div", [](real x, real y) { return x / y; },
                   [](real x, real y, real, real& da, real& db) {
                     da = 1 / y;
                     db = -x / (y * y);
                   });
}

Tensor neg(const Tensor& a) {
  return unary_ew(a, [](real x) { return -x; }, [](real, real) { return real(-1); });
}

Tensor scale(const Tensor& a, real c) {
  return unary_ew(a, [c](real x) { return c * x; }, [c](real, real) { return c; });
}

Tensor add_scalar(const Tensor& a, real c) {
  return unary_ew(a, [c](real x) { return x + c; }, [](real, real) { return real(1); });
}

Tensor exp_t(const Tensor& a) {
  return unary_ew(a, [](real x) { return std::exp(x); },
                  [](real, real y) { return y; });
}

Tensor log_t(const Tensor& a) {
  for (real x : a.data())
    if (!(x > 0)) fail("log: non-positive input");
  return unary_ew(a, [](real x) { return std::log(x); },
                  [](real x, real) { return 1 / x; });
}

Tensor sqrt_t(const Tensor& a) {
  for (real x : a.data())
    if (x < 0) fail("sqrt: negative input");
  return unary_ew(a, [](real x) { return std::sqrt(x); },
                  [](real, real y) { return y > 0 ? real(0.5) / y : real(0); });
}

Tensor sigmoid(const Tensor& a) {
  return unary_ew(a,
                  [](real x) {
                    if (x >= 0) return 1 / (1 + std::exp(-x));
                    real e = std::exp(x);
                    return e / (1 + e);
                  },
                  [](real, real y) { return y * (1 - y); });
}

Tensor relu(const Tensor& a) {
  return unary_ew(a, [](real x) { return x > 0 ? x : real(0); },
                  [](real x, real) { return x > 0 ? real(1) : real(0); });
}

Tensor softplus(const Tensor& a) {
  return unary_ew(a,
                  [](real x) {
                    // log(1+e^x), stable for large |x|
                    if (x > 30) return x;
                    if (x < -30) return std::exp(x);
                    return std::log1p(std::exp(x));
                  },
                  [](real x, real) {
                    if (x >= 0) return 1 / (1 + std::exp(-x));
                    real e = std::exp(x);
                    return e / (1 + e);
                  });
}

Tensor clamp_min(const Tensor& a, real lo) {
  return unary_ew(a, [lo](real x) { return x < lo ? lo : x; },
                  [lo](real x, real) { return x < lo ? real(0) : real(1); });
}

// --- linear algebra ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2)
    fail("matmul: operands must be 2D");
  size_t m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
  if (k != k2)
    fail("matmul: inner dims mismatch " + shape_str(a.shape()) + " x " +
         shape_str(b.shape()));
  std::vector<real> out(m * n, real(0));
  const auto& ad = a.data();
  const auto& bd = b.data();
  for (size_t i = 0; i < m; ++i)
    for (size_t l = 0; l < k; ++l) {
      real av = ad[i * k + l];
      if (av == 0) continue;
      const real* brow = &bd[l * n];
      real* orow = &out[i * n];
      for (size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  return make_op({m, n}, std::move(out), {a, b},
                 [m, k, n](Node& nd, BackCtx& ctx) {
                   const auto& g = ctx.grad(&nd);
                   auto& ga = ctx.grad(nd.parents[0].get());
                   auto& gb = ctx.grad(nd.parents[1].get());
                   const auto& ad = nd.parents[0]->data;
                   const auto& bd = nd.parents[1]->data;
                   // dA = G B^T
                   for (size_t i = 0; i < m; ++i)
                     for (size_t l = 0; l < k; ++l) {
                       real s = 0;
                       const real* grow = &g[i * n];
                       const real* brow = &bd[l * n];
                       for (size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
                       ga[i * k + l] += s;
                     }
                   // dB = A^T G
                   for (size_t i = 0; i < m; ++i)
                     for (size_t l = 0; l < k; ++l) {
                       real av = ad[i * k + l];
                       if (av == 0) continue;
                       const real* grow = &g[i * n];
                       real* gbrow = &gb[l * n];
                       for (size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                     }
                 });
}

Tensor transpose(const Tensor& a) {
  if (a.shape().size() != 2) fail("transpose: 2D only");
  size_t m = a.rows(), n = a.cols();
  std::vector<real> out(m * n);
  const auto& ad = a.data();
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) out[j * m + i] = ad[i * n + j];
  return make_op({n, m}, std::move(out), {a}, [m, n](Node& nd, BackCtx& ctx) {
    const auto& g = ctx.grad(&nd);
    auto& ga = ctx.grad(nd.parents[0].get());
    for (size_t i = 0; i < m; ++i)
      for (size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
}

Tensor reshape(const Tensor& a, const Shape& s) {
  if (shape_numel(s) != a.numel())
    fail("reshape: numel mismatch " + shape_str(a.shape()) + " -> " + shape_str(s));
  std::vector<real> out = a.data();
  return make_op(s, std::move(out), {a}, [](Node& nd, BackCtx& ctx) {
    const auto& g = ctx.grad(&nd);
    auto& ga = ctx.grad(nd.parents[0].get());
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
  if (xs.empty()) fail("concat_cols: empty input");
  size_t m = xs[0].rows();
  size_t total = 0;
  for (const auto& x : xs) {
    if (x.shape().size() != 2 || x.rows() != m) fail("concat_cols: row mismatch");
    total += x.cols();
  }
  std::vector<real> out(m * total);
  std::vector<size_t> offs;
  size_t off = 0;
  for (const auto& x : xs) {
    offs.push_back(off);
    size_t c = x.cols();
    const auto& d = x.data();
    for (size_t i = 0; i < m; ++i)
      std::copy(&d[i * c], &d[i * c] + c, &out[i * total + off]);
    off += c;
  }
  return make_op({m, total}, std::move(out), xs,
                 [m, total, offs](Node& nd, BackCtx& ctx) {
                   const auto& g = ctx.grad(&nd);
                   for (size_t p = 0; p < nd.parents.size(); ++p) {
                     auto& gp = ctx.grad(nd.parents[p].get());
                     size_t c = nd.parents[p]->shape[1];
                     for (size_t i = 0; i < m; ++i)
                       for (size_t j = 0; j < c; ++j)
                         gp[i * c + j] += g[i * total + offs[p] + j];
                   }
                 });
}

Tensor slice_cols(const Tensor& a, size_t start, size_t len) {
  if (a.shape().size() != 2) fail("slice_cols: 2D only");
  size_t m = a.rows(), n = a.cols();
  if (start + len > n) fail("slice_cols: out of range");
  std::vector<real> out(m * len);
  const auto& ad = a.data();
  for (size_t i = 0; i < m; ++i)
    std::copy(&ad[i * n + start], &ad[i * n + start] + len, &out[i * len]);
  return make_op({m, len}, std::move(out), {a},
                 [m, n, start, len](Node& nd, BackCtx& ctx) {
                   const auto& g = ctx.grad(&nd);
                   auto& ga = ctx.grad(nd.parents[0].get());
                   for (size_t i = 0; i < m; ++i)
                     for (size_t j = 0; j < len; ++j)
                       ga[i * n + start + j] += g[i * len + j];
                 });
}

Tensor concat_rows(const std::vector<Tensor>& xs) {
  if (xs.empty()) fail("concat_rows: empty input");
  size_t c = xs[0].cols();
  size_t rows = 0;
  for (const auto& x : xs) {
    if (x.shape().size() != 2 || x.cols() != c) fail("concat_rows: col mismatch");
    rows += x.rows();
  }
  std::vector<real> out;
  out.reserve(rows * c);
  for (const auto& x : xs) out.insert(out.end(), x.data().begin(), x.data().end());
  return make_op({rows, c}, std::move(out), xs, [](Node& nd, BackCtx& ctx) {
    const auto& g = ctx.grad(&nd);
    size_t off = 0;
    for (auto& p : nd.parents) {
      auto& gp = ctx.grad(p.get());
      for (size_t i = 0; i < gp.size(); ++i) gp[i] += g[off + i];
      off += gp.size();
    }
  });
}

// --- reductions -------------------------------------------------------------

Tensor sum_all(const Tensor& a) {
  real s = 0;
  for (real x : a.data()) s += x;
  return make_op({1}, {s}, {a}, [](Node& nd, BackCtx& ctx) {
    real g = ctx.grad(&nd)[0];
    auto& ga = ctx.grad(nd.parents[0].get());
    for (auto& v : ga) v += g;
  });
}

Tensor mean_all(const Tensor& a) {
  return scale(sum_all(a), real(1) / real(a.numel()));
}

Tensor row_sum(const Tensor& a) {
  if (a.shape().size() != 2) fail("row_sum: 2D only");
  size_t m = a.rows(), n = a.cols();
  std::vector<real> out(m, real(0));
  const auto& ad = a.data();
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) out[i] += ad[i * n + j];
  return make_op({m}, std::move(out), {a}, [m, n](Node& nd, BackCtx& ctx) {
    const auto& g = ctx.grad(&nd);
    auto& ga = ctx.grad(nd.parents[0].get());
    for (size_t i = 0; i < m; ++i)
      for (size_t j = 0; j < n; ++j) ga[i * n + j] += g[i];
  });
}

Tensor row_mean(const Tensor& a) {
  return scale(row_sum(a), real(1) / real(a.cols()));
}

Tensor col_sum(const Tensor& a) {
  if (a.shape().size() != 2) fail("col_sum: 2D only");
  size_t m = a.rows(), n = a.cols();
  std::vector<real> out(n, real(0));
  const auto& ad = a.data();
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) out[j] += ad[i * n + j];
  return make_op({n}, std::move(out), {a}, [m, n](Node& nd, BackCtx& ctx) {
    const auto& g = ctx.grad(&nd);
    auto& ga = ctx.grad(nd.parents[0].get());
    for (size_t i = 0; i < m; ++i)
      for (size_t j = 0; j < n; ++j) ga[i * n + j] += g[j];
  });
}

// --- broadcast helpers ------------------------------------------------------

namespace {
void check_rowvec(const Tensor& x, const Tensor& v, const char* op) {
  if (x.shape().size() != 2 || v.shape().size() != 1 || v.numel() != x.cols())
    fail(std::string(op) + ": expected [NxD] and [D]");
}
void check_colvec(const Tensor& x, const Tensor& v, const char* op) {
  if (x.shape().size() != 2 || v.shape().size() != 1 || v.numel() != x.rows())
    fail(std::string(op) + ": expected [NxD] and [N]");
}
}  // namespace

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  check_rowvec(x, v, "add_rowvec");
  size_t m = x.rows(), n = x.cols();
  std::vector<real> out(m * n);
  const auto& xd = x.data();
  const auto& vd = v.data();
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) out[i * n + j] = xd[i * n + j] + vd[j];
  return make_op({m, n}, std::move(out), {x, v}, [m, n](Node& nd, BackCtx& ctx) {
    const auto& g = ctx.grad(&nd);
    auto& gx = ctx.grad(nd.parents[0].get());
    auto& gv = ctx.grad(nd.parents[1].get());
    for (size_t i = 0; i < m; ++i)
      for (size_t j = 0; j < n; ++j) {
        gx[i * n + j] += g[i * n + j];
        gv[j] += g[i * n + j];
      }
  });
}

Tensor mul_rowvec(const Tensor& x, const Tensor& v) {
  check_rowvec(x, v, "mul_rowvec");
  size_t m = x.rows(), n = x.cols();
  std::vector<real> out(m * n);
  const auto& xd = x.data();
  const auto& vd = v.data();
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) out[i * n + j] = xd[i * n + j] * vd[j];
  return make_op({m, n}, std::move(out), {x, v}, [m, n](Node& nd, BackCtx& ctx) {
    const auto& g = ctx.grad(&nd);
    auto& gx = ctx.grad(nd.parents[0].get());
    auto& gv = ctx.grad(nd.parents[1].get());
    const auto& xd = nd.parents[0]->data;
    const auto& vd = nd.parents[1]->data;
    for (size_t i = 0; i < m; ++i)
      for (size_t j = 0; j < n; ++j) {
        gx[i * n + j] += g[i * n + j] * vd[j];
        gv[j] += g[i * n + j] * xd[i * n + j];
      }
  });
}

Tensor mul_colvec(const Tensor& x, const Tensor& v) {
  check_colvec(x, v, "mul_colvec");
  size_t m = x.rows(), n = x.cols();
  std::vector<real> out(m * n);
  const auto& xd = x.data();
  const auto& vd = v.data();
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) out[i * n + j] = xd[i * n + j] * vd[i];
  return make_op({m, n}, std::move(out), {x, v}, [m, n](Node& nd, BackCtx& ctx) {
    const auto& g = ctx.grad(&nd);
    auto& gx = ctx.grad(nd.parents[0].get());
    auto& gv = ctx.grad(nd.parents[1].get());
    const auto& xd = nd.parents[0]->data;
    const auto& vd = nd.parents[1]->data;
    for (size_t i = 0; i < m; ++i)
      for (size_t j = 0; j < n; ++j) {
        gx[i * n + j] += g[i * n + j] * vd[i];
        gv[i] += g[i * n + j] * xd[i * n + j];
      }
  });
}

Tensor div_colvec(const Tensor& x, const Tensor& v) {
  check_colvec(x, v, "div_colvec");
  size_t m = x.rows(), n = x.cols();
  std::vector<real> out(m * n);
  const auto& xd = x.data();
  const auto& vd = v.data();
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) out[i * n + j] = xd[i * n + j] / vd[i];
  return make_op({m, n}, std::move(out), {x, v}, [m, n](Node& nd, BackCtx& ctx) {
    const auto& g = ctx.grad(&nd);
    auto& gx = ctx.grad(nd.parents[0].get());
    auto& gv = ctx.grad(nd.parents[1].get());
    const auto& xd = nd.parents[0]->data;
    const auto& vd = nd.parents[1]->data;
    for (size_t i = 0; i < m; ++i) {
      real inv = 1 / vd[i];
      for (size_t j = 0; j < n; ++j) {
        gx[i * n + j] += g[i * n + j] * inv;
        gv[i] -= g[i * n + j] * xd[i * n + j] * inv * inv;
      }
    }
  });
}

Tensor sub_colvec(const Tensor& x, const Tensor& v) {
  check_colvec(x, v, "sub_colvec");
  size_t m = x.rows(), n = x.cols();
  std::vector<real> out(m * n);
  const auto& xd = x.data();
  const auto& vd = v.data();
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) out[i * n + j] = xd[i * n + j] - vd[i];
  return make_op({m, n}, std::move(out), {x, v}, [m, n](Node& nd, BackCtx& ctx) {
    const auto& g = ctx.grad(&nd);
    auto& gx = ctx.grad(nd.parents[0].get());
    auto& gv = ctx.grad(nd.parents[1].get());
    for (size_t i = 0; i < m; ++i)
      for (size_t j = 0; j < n; ++j) {
        gx[i * n + j] += g[i * n + j];
        gv[i] -= g[i * n + j];
      }
  });
}

// --- softmax ----------------------------------------------------------------

Tensor softmax(const Tensor& a, int axis) {
  size_t m, n;
  bool rowwise;
  if (a.shape().size() == 1) {
    m = 1;
    n = a.numel();
    rowwise = true;
    if (axis != 0) fail("softmax: 1D tensor takes axis 0");
  } else if (a.shape().size() == 2) {
    m = a.rows();
    n = a.cols();
    rowwise = (axis == 1);
    if (axis != 0 && axis != 1) fail("softmax: axis out of range");
  } else {
    fail("softmax: 1D or 2D only");
  }

  // Treat as row-wise over [slices x len]; column-wise goes through transpose.
  if (!rowwise) return transpose(softmax(transpose(a), 1));

  std::vector<real> out(m * n);
  const auto& ad = a.data();
  for (size_t i = 0; i < m; ++i) {
    real mx = kNegInf;
    for (size_t j = 0; j < n; ++j) mx = std::max(mx, ad[i * n + j]);
    if (mx == kNegInf) fail("softmax: all entries are -inf in a slice");
    real s = 0;
    for (size_t j = 0; j < n; ++j) {
      real e = ad[i * n + j] == kNegInf ? real(0) : std::exp(ad[i * n + j] - mx);
      out[i * n + j] = e;
      s += e;
    }
    real inv = 1 / s;
    for (size_t j = 0; j < n; ++j) out[i * n + j] *= inv;
  }
  return make_op(a.shape(), std::move(out), {a}, [m, n](Node& nd, BackCtx& ctx) {
    const auto& g = ctx.grad(&nd);
    auto& ga = ctx.grad(nd.parents[0].get());
    for (size_t i = 0; i < m; ++i) {
      real dot = 0;
      for (size_t j = 0; j < n; ++j) dot += g[i * n + j] * nd.data[i * n + j];
      for (size_t j = 0; j < n; ++j) {
        real y = nd.data[i * n + j];
        if (y != 0) ga[i * n + j] += y * (g[i * n + j] - dot);
      }
    }
  });
}

// --- indexed ----------------------------------------------------------------

Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& idx) {
  if (x.shape().size() != 2) fail("gather_rows: 2D only");
  size_t n = x.cols(), rows = x.rows();
  std::vector<real> out(idx.size() * n);
  const auto& xd = x.data();
  for (size_t i = 0; i < idx.size(); ++i) {
    int64_t r = idx[i];
    if (r < 0 || size_t(r) >= rows) fail("gather_rows: index out of range");
    std::copy(&xd[r * n], &xd[r * n] + n, &out[i * n]);
  }
  auto shared = std::make_shared<std::vector<int64_t>>(idx);
  return make_op({idx.size(), n}, std::move(out), {x},
                 [n, shared](Node& nd, BackCtx& ctx) {
                   const auto& g = ctx.grad(&nd);
                   auto& gx = ctx.grad(nd.parents[0].get());
                   for (size_t i = 0; i < shared->size(); ++i) {
                     int64_t r = (*shared)[i];
                     for (size_t j = 0; j < n; ++j) gx[r * n + j] += g[i * n + j];
                   }
                 });
}

Tensor scatter_add_rows(const Tensor& x, const std::vector<int64_t>& idx,
                        size_t out_rows) {
  if (x.shape().size() != 2) fail("scatter_add_rows: 2D only");
  if (idx.size() != x.rows()) fail("scatter_add_rows: index length != rows");
  size_t n = x.cols();
  std::vector<real> out(out_rows * n, real(0));
  const auto& xd = x.data();
  for (size_t i = 0; i < idx.size(); ++i) {
    int64_t r = idx[i];
    if (r < 0 || size_t(r) >= out_rows) fail("scatter_add_rows: index out of range");
    for (size_t j = 0; j < n; ++j) out[r * n + j] += xd[i * n + j];
  }
  auto shared = std::make_shared<std::vector<int64_t>>(idx);
  return make_op({out_rows, n}, std::move(out), {x},
                 [n, shared](Node& nd, BackCtx& ctx) {
                   const auto& g = ctx.grad(&nd);
                   auto& gx = ctx.grad(nd.parents[0].get());
                   for (size_t i = 0; i < shared->size(); ++i) {
                     int64_t r = (*shared)[i];
                     for (size_t j = 0; j < n; ++j) gx[i * n + j] += g[r * n + j];
                   }
                 });
}

Tensor select_per_row(const Tensor& x, const std::vector<int64_t>& idx) {
  if (x.shape().size() != 2) fail("select_per_row: 2D only");
  if (idx.size() != x.rows()) fail("select_per_row: index length != rows");
  size_t n = x.cols();
  std::vector<real> out(idx.size());
  const auto& xd = x.data();
  for (size_t i = 0; i < idx.size(); ++i) {
    int64_t c = idx[i];
    if (c < 0 || size_t(c) >= n) fail("select_per_row: index out of range");
    out[i] = xd[i * n + c];
  }
  auto shared = std::make_shared<std::vector<int64_t>>(idx);
  return make_op({idx.size()}, std::move(out), {x},
                 [n, shared](Node& nd, BackCtx& ctx) {
                   const auto& g = ctx.grad(&nd);
                   auto& gx = ctx.grad(nd.parents[0].get());
                   for (size_t i = 0; i < shared->size(); ++i)
                     gx[i * n + (*shared)[i]] += g[i];
                 });
}

// --- misc -------------------------------------------------------------------

Tensor cosine_similarity(const Tensor& x, const Tensor& y, real tau) {
  if (x.numel() != y.numel()) fail("cosine_similarity: size mismatch");
  if (!(tau > 0)) fail("cosine_similarity: tau must be positive");
  constexpr real eps = real(1e-12);
  Tensor dot = sum_all(mul(x, y));
  Tensor nx = add_scalar(sqrt_t(sum_all(mul(x, x))), eps);
  Tensor ny = add_scalar(sqrt_t(sum_all(mul(y, y))), eps);
  return scale(divide(dot, mul(nx, ny)), 1 / tau);
}

std::vector<real> row_max_values(const Tensor& x) {
  if (x.shape().size() != 2) fail("row_max_values: 2D only");
  size_t m = x.rows(), n = x.cols();
  std::vector<real> out(m, kNegInf);
  const auto& xd = x.data();
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) out[i] = std::max(out[i], xd[i * n + j]);
  return out;
}

// --- serialization ----------------------------------------------------------

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail("save_tensor: cannot open " + path);
  f.write("HGT1", 4);
  uint32_t rank = uint32_t(t.shape().size());
  f.write(reinterpret_cast<const char*>(&rank), 4);
  for (size_t d : t.shape()) {
    uint64_t dd = d;
    f.write(reinterpret_cast<const char*>(&dd), 8);
  }
  for (real v : t.data()) {
    double dv = double(v);
    f.write(reinterpret_cast<const char*>(&dv), 8);
  }
}

Tensor load_tensor(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("load_tensor: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "HGT1", 4) != 0)
    fail("load_tensor: bad magic in " + path);
  uint32_t rank = 0;
  f.read(reinterpret_cast<char*>(&rank), 4);
  Shape s(rank);
  for (auto& d : s) {
    uint64_t dd = 0;
    f.read(reinterpret_cast<char*>(&dd), 8);
    d = size_t(dd);
  }
  std::vector<real> data(shape_numel(s));
  for (auto& v : data) {
    double dv = 0;
    f.read(reinterpret_cast<char*>(&dv), 8);
    v = real(dv);
  }
  if (!f) fail("load_tensor: truncated file " + path);
  return Tensor::from_data(s, std::move(data));
}

}  // namespace hgseg
