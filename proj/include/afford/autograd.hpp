#pragma once

#include <functional>
#include <memory>
#include <unordered_set>

#include "afford/tensor.hpp"

namespace afford {

// Reverse-mode autodiff over Tensor<T>. Graphs are built per step and freed
// by reference counting; parameters are long-lived leaf nodes. Accumulation
// order is fixed everywhere, so gradients are bit-reproducible run to run.

template <typename T>
struct Node {
  Tensor<T> val;
  Tensor<T> grad;  // allocated lazily
  bool needs_grad = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backward;

  void ensure_grad() {
    if (grad.numel() == 0) grad = Tensor<T>::zeros(val.shape);
  }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : n_(std::move(n)) {}

  static Var constant(Tensor<T> t) {
    auto n = std::make_shared<Node<T>>();
    n->val = std::move(t);
    return Var(n);
  }
  static Var param(Tensor<T> t) {
    auto n = std::make_shared<Node<T>>();
    n->val = std::move(t);
    n->needs_grad = true;
    return Var(n);
  }

  bool defined() const { return n_ != nullptr; }
  const Tensor<T>& val() const { return n_->val; }
  Tensor<T>& mutable_val() { return n_->val; }
  const Tensor<T>& grad() const { return n_->grad; }
  bool needs_grad() const { return n_ && n_->needs_grad; }
  std::shared_ptr<Node<T>> node() const { return n_; }

  void zero_grad() {
    if (n_) n_->grad = Tensor<T>();
  }

 private:
  std::shared_ptr<Node<T>> n_;
};

namespace ag {

template <typename T>
std::shared_ptr<Node<T>> make_node(Tensor<T> val, std::vector<std::shared_ptr<Node<T>>> parents,
                                   std::function<void(Node<T>&)> bw) {
  auto n = std::make_shared<Node<T>>();
  n->val = std::move(val);
  bool ng = false;
  for (auto& p : parents)
    if (p->needs_grad) ng = true;
  if (ng) {
    n->needs_grad = true;
    n->parents = std::move(parents);
    n->backward = std::move(bw);
  }
  return n;
}

// ---- elementwise ----

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check(a.val().same_shape(b.val()), "add: shape mismatch");
  Tensor<T> out = a.val();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += b.val()[i];
  auto pa = a.node(), pb = b.node();
  return Var<T>(make_node<T>(std::move(out), {pa, pb}, [pa, pb](Node<T>& n) {
    if (pa->needs_grad) {
      pa->ensure_grad();
      for (int64_t i = 0; i < n.grad.numel(); ++i) pa->grad[i] += n.grad[i];
    }
    if (pb->needs_grad) {
      pb->ensure_grad();
      for (int64_t i = 0; i < n.grad.numel(); ++i) pb->grad[i] += n.grad[i];
    }
  }));
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  check(a.val().same_shape(b.val()), "sub: shape mismatch");
  Tensor<T> out = a.val();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b.val()[i];
  auto pa = a.node(), pb = b.node();
  return Var<T>(make_node<T>(std::move(out), {pa, pb}, [pa, pb](Node<T>& n) {
    if (pa->needs_grad) {
      pa->ensure_grad();
      for (int64_t i = 0; i < n.grad.numel(); ++i) pa->grad[i] += n.grad[i];
    }
    if (pb->needs_grad) {
      pb->ensure_grad();
      for (int64_t i = 0; i < n.grad.numel(); ++i) pb->grad[i] -= n.grad[i];
    }
  }));
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check(a.val().same_shape(b.val()), "mul: shape mismatch");
  Tensor<T> out = a.val();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b.val()[i];
  auto pa = a.node(), pb = b.node();
  return Var<T>(make_node<T>(std::move(out), {pa, pb}, [pa, pb](Node<T>& n) {
    if (pa->needs_grad) {
      pa->ensure_grad();
      for (int64_t i = 0; i < n.grad.numel(); ++i) pa->grad[i] += n.grad[i] * pb->val[i];
    }
    if (pb->needs_grad) {
      pb->ensure_grad();
      for (int64_t i = 0; i < n.grad.numel(); ++i) pb->grad[i] += n.grad[i] * pa->val[i];
    }
  }));
}

template <typename T>
Var<T> scale(const Var<T>& a, T c) {
  Tensor<T> out = a.val();
  for (auto& x : out.v) x *= c;
  auto pa = a.node();
  return Var<T>(make_node<T>(std::move(out), {pa}, [pa, c](Node<T>& n) {
    pa->ensure_grad();
    for (int64_t i = 0; i < n.grad.numel(); ++i) pa->grad[i] += n.grad[i] * c;
  }));
}

template <typename T>
Var<T> exp_op(const Var<T>& a) {
  Tensor<T> out = a.val();
  for (auto& x : out.v) x = std::exp(x);
  auto pa = a.node();
  Tensor<T> saved = out;
  return Var<T>(make_node<T>(std::move(out), {pa}, [pa, saved](Node<T>& n) {
    pa->ensure_grad();
    for (int64_t i = 0; i < n.grad.numel(); ++i) pa->grad[i] += n.grad[i] * saved[i];
  }));
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> out = a.val();
  for (auto& x : out.v) x = x > T(0) ? x : T(0);
  auto pa = a.node();
  return Var<T>(make_node<T>(std::move(out), {pa}, [pa](Node<T>& n) {
    pa->ensure_grad();
    for (int64_t i = 0; i < n.grad.numel(); ++i)
      pa->grad[i] += pa->val[i] > T(0) ? n.grad[i] : T(0);
  }));
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> out = a.val();
  for (auto& x : out.v) x = T(1) / (T(1) + std::exp(-x));
  auto pa = a.node();
  Tensor<T> s = out;
  return Var<T>(make_node<T>(std::move(out), {pa}, [pa, s](Node<T>& n) {
    pa->ensure_grad();
    for (int64_t i = 0; i < n.grad.numel(); ++i)
      pa->grad[i] += n.grad[i] * s[i] * (T(1) - s[i]);
  }));
}

// Forward = q, backward copies the gradient onto e unchanged (the
// straight-through estimator across quantization).
template <typename T>
Var<T> ste_copy(const Var<T>& e, const Tensor<T>& q) {
  check(e.val().same_shape(q), "ste_copy: shape mismatch");
  auto pe = e.node();
  return Var<T>(make_node<T>(Tensor<T>(q), {pe}, [pe](Node<T>& n) {
    pe->ensure_grad();
    for (int64_t i = 0; i < n.grad.numel(); ++i) pe->grad[i] += n.grad[i];
  }));
}

template <typename T>
Var<T> detach(const Var<T>& a) {
  return Var<T>::constant(a.val());
}

// ---- shape ----

template <typename T>
Var<T> reshape(const Var<T>& a, std::vector<int> shape) {
  Tensor<T> out = a.val().reshaped(std::move(shape));
  auto pa = a.node();
  return Var<T>(make_node<T>(std::move(out), {pa}, [pa](Node<T>& n) {
    pa->ensure_grad();
    for (int64_t i = 0; i < n.grad.numel(); ++i) pa->grad[i] += n.grad[i];
  }));
}

template <typename T>
Var<T> slice_rows(const Var<T>& a, int r0, int rows) {
  int cols = a.val().cols();
  Tensor<T> out({rows, cols});
  std::memcpy(out.data(), a.val().data() + int64_t(r0) * cols, size_t(rows) * cols * sizeof(T));
  auto pa = a.node();
  return Var<T>(make_node<T>(std::move(out), {pa}, [pa, r0, cols](Node<T>& n) {
    pa->ensure_grad();
    int rows = n.val.rows();
    for (int64_t i = 0; i < int64_t(rows) * cols; ++i)
      pa->grad[int64_t(r0) * cols + i] += n.grad[i];
  }));
}

template <typename T>
Var<T> slice_cols(const Var<T>& a, int c0, int w) {
  int rows = a.val().rows(), cols = a.val().cols();
  Tensor<T> out({rows, w});
  for (int r = 0; r < rows; ++r)
    std::memcpy(out.data() + int64_t(r) * w, a.val().data() + int64_t(r) * cols + c0,
                size_t(w) * sizeof(T));
  auto pa = a.node();
  return Var<T>(make_node<T>(std::move(out), {pa}, [pa, c0, w, rows, cols](Node<T>& n) {
    pa->ensure_grad();
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < w; ++c)
        pa->grad[int64_t(r) * cols + c0 + c] += n.grad[int64_t(r) * w + c];
  }));
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  check(!parts.empty(), "concat_cols: empty");
  int rows = parts[0].val().rows();
  int total = 0;
  for (auto& p : parts) {
    check(p.val().rows() == rows, "concat_cols: row mismatch");
    total += p.val().cols();
  }
  Tensor<T> out({rows, total});
  int off = 0;
  std::vector<std::shared_ptr<Node<T>>> ps;
  std::vector<int> offs, widths;
  for (auto& p : parts) {
    int w = p.val().cols();
    for (int r = 0; r < rows; ++r)
      std::memcpy(out.data() + int64_t(r) * total + off, p.val().data() + int64_t(r) * w,
                  size_t(w) * sizeof(T));
    ps.push_back(p.node());
    offs.push_back(off);
    widths.push_back(w);
    off += w;
  }
  return Var<T>(make_node<T>(std::move(out), ps, [ps, offs, widths, rows, total](Node<T>& n) {
    for (size_t k = 0; k < ps.size(); ++k) {
      if (!ps[k]->needs_grad) continue;
      ps[k]->ensure_grad();
      int w = widths[k], off = offs[k];
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < w; ++c)
          ps[k]->grad[int64_t(r) * w + c] += n.grad[int64_t(r) * total + off + c];
    }
  }));
}

// ---- linear algebra ----

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool ta = false, bool tb = false) {
  int am = a.val().rows(), an = a.val().cols();
  int bm = b.val().rows(), bn = b.val().cols();
  int m = ta ? an : am, k = ta ? am : an;
  int kb = tb ? bn : bm, n = tb ? bm : bn;
  check(k == kb, "matmul: inner dim mismatch");
  Tensor<T> out({m, n});
  gemm<T>(ta, tb, m, n, k, T(1), a.val().data(), an, b.val().data(), bn, T(0), out.data(), n);
  auto pa = a.node(), pb = b.node();
  return Var<T>(make_node<T>(std::move(out), {pa, pb}, [pa, pb, ta, tb, m, n, k, an,
                                                        bn](Node<T>& n_) {
    const T* gy = n_.grad.data();
    if (pa->needs_grad) {
      pa->ensure_grad();
      // dA = dY * op(B)^T   (or transposed variants)
      if (!ta)
        gemm<T>(false, !tb, m, k, n, T(1), gy, n, pb->val.data(), bn, T(1), pa->grad.data(), an);
      else
        gemm<T>(tb, true, k, m, n, T(1), pb->val.data(), bn, gy, n, T(1), pa->grad.data(), an);
    }
    if (pb->needs_grad) {
      pb->ensure_grad();
      if (!tb)
        gemm<T>(!ta, false, k, n, m, T(1), pa->val.data(), an, gy, n, T(1), pb->grad.data(), bn);
      else
        gemm<T>(true, ta, n, k, m, T(1), gy, n, pa->val.data(), an, T(1), pb->grad.data(), bn);
    }
  }));
}

// y = x * W + b, x:[M,K] W:[K,N] b:[N]
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  int m = x.val().rows(), k = x.val().cols(), n = w.val().cols();
  check(w.val().rows() == k, "linear: W rows != x cols");
  check(b.val().numel() == n, "linear: bias size");
  Tensor<T> out({m, n});
  gemm<T>(false, false, m, n, k, T(1), x.val().data(), k, w.val().data(), n, T(0), out.data(), n);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < n; ++c) out[int64_t(r) * n + c] += b.val()[c];
  auto px = x.node(), pw = w.node(), pb = b.node();
  return Var<T>(make_node<T>(std::move(out), {px, pw, pb}, [px, pw, pb, m, n, k](Node<T>& n_) {
    const T* gy = n_.grad.data();
    if (px->needs_grad) {
      px->ensure_grad();
      gemm<T>(false, true, m, k, n, T(1), gy, n, pw->val.data(), n, T(1), px->grad.data(), k);
    }
    if (pw->needs_grad) {
      pw->ensure_grad();
      gemm<T>(true, false, k, n, m, T(1), px->val.data(), k, gy, n, T(1), pw->grad.data(), n);
    }
    if (pb->needs_grad) {
      pb->ensure_grad();
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < n; ++c) pb->grad[c] += gy[int64_t(r) * n + c];
    }
  }));
}

// ---- normalization / attention pieces ----

template <typename T>
Var<T> layernorm(const Var<T>& x, const Var<T>& g, const Var<T>& b, T eps = T(1e-5)) {
  int m = x.val().rows(), n = x.val().cols();
  check(g.val().numel() == n && b.val().numel() == n, "layernorm: affine size");
  Tensor<T> out({m, n});
  Tensor<T> xhat({m, n});
  Tensor<T> invstd({m});
  for (int r = 0; r < m; ++r) {
    const T* xr = x.val().data() + int64_t(r) * n;
    T mean = 0;
    for (int c = 0; c < n; ++c) mean += xr[c];
    mean /= T(n);
    T var = 0;
    for (int c = 0; c < n; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= T(n);
    T is = T(1) / std::sqrt(var + eps);
    invstd[r] = is;
    for (int c = 0; c < n; ++c) {
      T xh = (xr[c] - mean) * is;
      xhat[int64_t(r) * n + c] = xh;
      out[int64_t(r) * n + c] = xh * g.val()[c] + b.val()[c];
    }
  }
  auto px = x.node(), pg = g.node(), pb = b.node();
  return Var<T>(
      make_node<T>(std::move(out), {px, pg, pb}, [px, pg, pb, xhat, invstd, m, n](Node<T>& n_) {
        const T* gy = n_.grad.data();
        if (pg->needs_grad) {
          pg->ensure_grad();
          pb->ensure_grad();
          for (int r = 0; r < m; ++r)
            for (int c = 0; c < n; ++c) {
              pg->grad[c] += gy[int64_t(r) * n + c] * xhat[int64_t(r) * n + c];
              pb->grad[c] += gy[int64_t(r) * n + c];
            }
        }
        if (px->needs_grad) {
          px->ensure_grad();
          for (int r = 0; r < m; ++r) {
            T sum_d = 0, sum_dx = 0;
            for (int c = 0; c < n; ++c) {
              T d = gy[int64_t(r) * n + c] * pg->val[c];
              sum_d += d;
              sum_dx += d * xhat[int64_t(r) * n + c];
            }
            for (int c = 0; c < n; ++c) {
              T d = gy[int64_t(r) * n + c] * pg->val[c];
              px->grad[int64_t(r) * n + c] +=
                  invstd[r] * (d - sum_d / T(n) - xhat[int64_t(r) * n + c] * sum_dx / T(n));
            }
          }
        }
      }));
}

// Row-wise softmax with optional causal mask: row i attends to columns
// j < valid(i) where valid(i) = min(n, i + 1 + ctx). Pass ctx >= n for full
// attention. Masked entries get probability zero.
template <typename T>
Var<T> softmax_causal(const Var<T>& x, int ctx) {
  int m = x.val().rows(), n = x.val().cols();
  Tensor<T> out({m, n});
  for (int r = 0; r < m; ++r) {
    int valid = std::min(n, r + 1 + ctx);
    const T* xr = x.val().data() + int64_t(r) * n;
    T* or_ = out.data() + int64_t(r) * n;
    T mx = xr[0];
    for (int c = 1; c < valid; ++c) mx = std::max(mx, xr[c]);
    T sum = 0;
    for (int c = 0; c < valid; ++c) {
      or_[c] = std::exp(xr[c] - mx);
      sum += or_[c];
    }
    for (int c = 0; c < valid; ++c) or_[c] /= sum;
    for (int c = valid; c < n; ++c) or_[c] = T(0);
  }
  auto px = x.node();
  Tensor<T> probs = out;
  return Var<T>(make_node<T>(std::move(out), {px}, [px, probs, m, n, ctx](Node<T>& n_) {
    px->ensure_grad();
    for (int r = 0; r < m; ++r) {
      int valid = std::min(n, r + 1 + ctx);
      const T* p = probs.data() + int64_t(r) * n;
      const T* gy = n_.grad.data() + int64_t(r) * n;
      T dot = 0;
      for (int c = 0; c < valid; ++c) dot += gy[c] * p[c];
      for (int c = 0; c < valid; ++c)
        px->grad[int64_t(r) * n + c] += p[c] * (gy[c] - dot);
    }
  }));
}

template <typename T>
Var<T> embedding(const Var<T>& table, const std::vector<int>& idx) {
  int v = table.val().rows(), e = table.val().cols();
  int m = int(idx.size());
  Tensor<T> out({m, e});
  for (int r = 0; r < m; ++r) {
    check(idx[size_t(r)] >= 0 && idx[size_t(r)] < v, "embedding: index out of range");
    std::memcpy(out.data() + int64_t(r) * e, table.val().data() + int64_t(idx[size_t(r)]) * e,
                size_t(e) * sizeof(T));
  }
  auto pt = table.node();
  auto ids = idx;
  return Var<T>(make_node<T>(std::move(out), {pt}, [pt, ids, e](Node<T>& n_) {
    pt->ensure_grad();
    for (size_t r = 0; r < ids.size(); ++r)
      for (int c = 0; c < e; ++c)
        pt->grad[int64_t(ids[r]) * e + c] += n_.grad[int64_t(r) * e + c];
  }));
}

// ---- losses ----

// Per-row cross entropy of logits against integer targets; returns [M].
template <typename T>
Var<T> ce_rows(const Var<T>& logits, const std::vector<int>& targets) {
  int m = logits.val().rows(), v = logits.val().cols();
  check(int(targets.size()) == m, "ce_rows: target count");
  Tensor<T> out({m});
  Tensor<T> probs({m, v});
  for (int r = 0; r < m; ++r) {
    const T* lr = logits.val().data() + int64_t(r) * v;
    T mx = lr[0];
    for (int c = 1; c < v; ++c) mx = std::max(mx, lr[c]);
    T sum = 0;
    for (int c = 0; c < v; ++c) {
      T e = std::exp(lr[c] - mx);
      probs[int64_t(r) * v + c] = e;
      sum += e;
    }
    for (int c = 0; c < v; ++c) probs[int64_t(r) * v + c] /= sum;
    int t = targets[size_t(r)];
    check(t >= 0 && t < v, "ce_rows: target out of range");
    out[r] = std::log(sum) + mx - lr[t];
  }
  auto pl = logits.node();
  auto tg = targets;
  return Var<T>(make_node<T>(std::move(out), {pl}, [pl, probs, tg, v](Node<T>& n_) {
    pl->ensure_grad();
    int m = int(tg.size());
    for (int r = 0; r < m; ++r) {
      T g = n_.grad[r];
      for (int c = 0; c < v; ++c)
        pl->grad[int64_t(r) * v + c] += g * probs[int64_t(r) * v + c];
      pl->grad[int64_t(r) * v + tg[size_t(r)]] -= g;
    }
  }));
}

template <typename T>
Var<T> sum_all(const Var<T>& a) {
  T s = 0;
  for (T x : a.val().v) s += x;
  Tensor<T> out({1});
  out[0] = s;
  auto pa = a.node();
  return Var<T>(make_node<T>(std::move(out), {pa}, [pa](Node<T>& n_) {
    pa->ensure_grad();
    for (int64_t i = 0; i < pa->grad.numel(); ++i) pa->grad[i] += n_.grad[0];
  }));
}

template <typename T>
Var<T> mean_all(const Var<T>& a) {
  return scale(sum_all(a), T(1) / T(a.val().numel()));
}

// mean squared error against a fixed target
template <typename T>
Var<T> mse_loss(const Var<T>& pred, const Tensor<T>& target) {
  check(pred.val().same_shape(target), "mse_loss: shape mismatch");
  int64_t n = pred.val().numel();
  T s = 0;
  for (int64_t i = 0; i < n; ++i) {
    T d = pred.val()[i] - target[i];
    s += d * d;
  }
  Tensor<T> out({1});
  out[0] = s / T(n);
  auto pp = pred.node();
  Tensor<T> tgt = target;
  return Var<T>(make_node<T>(std::move(out), {pp}, [pp, tgt, n](Node<T>& n_) {
    pp->ensure_grad();
    T g = n_.grad[0] * T(2) / T(n);
    for (int64_t i = 0; i < n; ++i) pp->grad[i] += g * (pp->val[i] - tgt[i]);
  }));
}

// sum of squared error against a fixed target
template <typename T>
Var<T> sse_loss(const Var<T>& pred, const Tensor<T>& target) {
  check(pred.val().same_shape(target), "sse_loss: shape mismatch");
  int64_t n = pred.val().numel();
  T s = 0;
  for (int64_t i = 0; i < n; ++i) {
    T d = pred.val()[i] - target[i];
    s += d * d;
  }
  Tensor<T> out({1});
  out[0] = s;
  auto pp = pred.node();
  Tensor<T> tgt = target;
  return Var<T>(make_node<T>(std::move(out), {pp}, [pp, tgt, n](Node<T>& n_) {
    pp->ensure_grad();
    T g = n_.grad[0] * T(2);
    for (int64_t i = 0; i < n; ++i) pp->grad[i] += g * (pp->val[i] - tgt[i]);
  }));
}

// mean of elementwise binary cross entropy with logits; numerically stable.
template <typename T>
Var<T> bce_logits_loss(const Var<T>& logits, const Tensor<T>& targets) {
  check(logits.val().same_shape(targets), "bce_logits_loss: shape mismatch");
  int64_t n = logits.val().numel();
  T s = 0;
  for (int64_t i = 0; i < n; ++i) {
    T l = logits.val()[i], t = targets[i];
    s += std::max(l, T(0)) - l * t + std::log(T(1) + std::exp(-std::abs(l)));
  }
  Tensor<T> out({1});
  out[0] = s / T(n);
  auto pl = logits.node();
  Tensor<T> tgt = targets;
  return Var<T>(make_node<T>(std::move(out), {pl}, [pl, tgt, n](Node<T>& n_) {
    pl->ensure_grad();
    T g = n_.grad[0] / T(n);
    for (int64_t i = 0; i < n; ++i) {
      T sig = T(1) / (T(1) + std::exp(-pl->val[i]));
      pl->grad[i] += g * (sig - tgt[i]);
    }
  }));
}

// ---- convolution ----

namespace convdetail {
template <typename T>
void im2col(const T* x, int c_in, int h, int w, int kh, int kw, int stride, int pad, int oh,
            int ow, T* col) {
  // col: [c_in*kh*kw, oh*ow]
  for (int c = 0; c < c_in; ++c)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        T* dst = col + (int64_t(c) * kh * kw + ky * kw + kx) * (int64_t(oh) * ow);
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * stride + ky - pad;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * stride + kx - pad;
            dst[int64_t(oy) * ow + ox] =
                (iy >= 0 && iy < h && ix >= 0 && ix < w) ? x[(int64_t(c) * h + iy) * w + ix] : T(0);
          }
        }
      }
}

template <typename T>
void col2im_add(const T* col, int c_in, int h, int w, int kh, int kw, int stride, int pad, int oh,
                int ow, T* x) {
  for (int c = 0; c < c_in; ++c)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        const T* src = col + (int64_t(c) * kh * kw + ky * kw + kx) * (int64_t(oh) * ow);
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= w) continue;
            x[(int64_t(c) * h + iy) * w + ix] += src[int64_t(oy) * ow + ox];
          }
        }
      }
}
}  // namespace convdetail

// x:[B,C,H,W] w:[O,C,kh,kw] b:[O]
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
  const auto& xs = x.val().shape;
  const auto& ws = w.val().shape;
  check(xs.size() == 4 && ws.size() == 4, "conv2d: expects 4-D x and w");
  int bsz = xs[0], c_in = xs[1], h = xs[2], wd = xs[3];
  int c_out = ws[0], kh = ws[2], kw = ws[3];
  check(ws[1] == c_in, "conv2d: channel mismatch");
  int oh = (h + 2 * pad - kh) / stride + 1;
  int ow = (wd + 2 * pad - kw) / stride + 1;
  int ck = c_in * kh * kw;
  Tensor<T> out({bsz, c_out, oh, ow});
  std::vector<T> col(size_t(ck) * oh * ow);
  for (int bi = 0; bi < bsz; ++bi) {
    convdetail::im2col(x.val().data() + int64_t(bi) * c_in * h * wd, c_in, h, wd, kh, kw, stride,
                       pad, oh, ow, col.data());
    T* y = out.data() + int64_t(bi) * c_out * oh * ow;
    gemm<T>(false, false, c_out, oh * ow, ck, T(1), w.val().data(), ck, col.data(), oh * ow, T(0),
            y, oh * ow);
    for (int o = 0; o < c_out; ++o) {
      T bias = b.val()[o];
      for (int i = 0; i < oh * ow; ++i) y[int64_t(o) * oh * ow + i] += bias;
    }
  }
  auto px = x.node(), pw = w.node(), pb = b.node();
  return Var<T>(make_node<T>(
      std::move(out), {px, pw, pb},
      [px, pw, pb, bsz, c_in, h, wd, c_out, kh, kw, stride, pad, oh, ow, ck](Node<T>& n_) {
        std::vector<T> col(size_t(ck) * oh * ow);
        std::vector<T> dcol(size_t(ck) * oh * ow);
        if (px->needs_grad) px->ensure_grad();
        if (pw->needs_grad) {
          pw->ensure_grad();
          pb->ensure_grad();
        }
        for (int bi = 0; bi < bsz; ++bi) {
          const T* gy = n_.grad.data() + int64_t(bi) * c_out * oh * ow;
          if (pw->needs_grad) {
            convdetail::im2col(px->val.data() + int64_t(bi) * c_in * h * wd, c_in, h, wd, kh, kw,
                               stride, pad, oh, ow, col.data());
            gemm<T>(false, true, c_out, ck, oh * ow, T(1), gy, oh * ow, col.data(), oh * ow, T(1),
                    pw->grad.data(), ck);
            for (int o = 0; o < c_out; ++o)
              for (int i = 0; i < oh * ow; ++i) pb->grad[o] += gy[int64_t(o) * oh * ow + i];
          }
          if (px->needs_grad) {
            gemm<T>(true, false, ck, oh * ow, c_out, T(1), pw->val.data(), ck, gy, oh * ow, T(0),
                    dcol.data(), oh * ow);
            convdetail::col2im_add(dcol.data(), c_in, h, wd, kh, kw, stride, pad, oh, ow,
                                   px->grad.data() + int64_t(bi) * c_in * h * wd);
          }
        }
      }));
}

template <typename T>
Var<T> upsample2x(const Var<T>& x) {
  const auto& xs = x.val().shape;
  check(xs.size() == 4, "upsample2x: expects 4-D");
  int bsz = xs[0], c = xs[1], h = xs[2], w = xs[3];
  Tensor<T> out({bsz, c, 2 * h, 2 * w});
  for (int bi = 0; bi < bsz; ++bi)
    for (int ci = 0; ci < c; ++ci) {
      const T* src = x.val().data() + (int64_t(bi) * c + ci) * h * w;
      T* dst = out.data() + (int64_t(bi) * c + ci) * 4 * h * w;
      for (int y = 0; y < 2 * h; ++y)
        for (int xx = 0; xx < 2 * w; ++xx)
          dst[int64_t(y) * 2 * w + xx] = src[int64_t(y / 2) * w + xx / 2];
    }
  auto px = x.node();
  return Var<T>(make_node<T>(std::move(out), {px}, [px, bsz, c, h, w](Node<T>& n_) {
    px->ensure_grad();
    for (int bi = 0; bi < bsz; ++bi)
      for (int ci = 0; ci < c; ++ci) {
        const T* gy = n_.grad.data() + (int64_t(bi) * c + ci) * 4 * h * w;
        T* gx = px->grad.data() + (int64_t(bi) * c + ci) * h * w;
        for (int y = 0; y < 2 * h; ++y)
          for (int xx = 0; xx < 2 * w; ++xx)
            gx[int64_t(y / 2) * w + xx / 2] += gy[int64_t(y) * 2 * w + xx];
      }
  }));
}

// ---- backward driver ----

template <typename T>
void backward(const Var<T>& root) {
  auto rn = root.node();
  check(rn != nullptr, "backward: undefined var");
  if (!rn->needs_grad) return;
  // iterative post-order topological sort
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.push_back({rn.get(), 0});
  visited.insert(rn.get());
  while (!stack.empty()) {
    auto& [node, i] = stack.back();
    if (i < node->parents.size()) {
      Node<T>* p = node->parents[i].get();
      ++i;
      if (p->needs_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  rn->grad = Tensor<T>::full(rn->val.shape, T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward && node->grad.numel() > 0) node->backward(*node);
  }
}

}  // namespace ag
}  // namespace afford
