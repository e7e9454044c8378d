#pragma once

#include <map>

#include "afford/autograd.hpp"

namespace afford {

// Named parameter registry. Layers register their tensors here so the
// optimizer and checkpoint code see one flat list.
template <typename T>
struct ParamStore {
  struct Entry {
    std::string name;
    Var<T> v;
  };
  std::vector<Entry> entries;

  Var<T> add(const std::string& name, Tensor<T> init) {
    for (auto& e : entries) check(e.name != name, "duplicate parameter name: " + name);
    entries.push_back({name, Var<T>::param(std::move(init))});
    return entries.back().v;
  }

  void zero_grads() {
    for (auto& e : entries) e.v.zero_grad();
  }

  int64_t count() const {
    int64_t n = 0;
    for (auto& e : entries) n += e.v.val().numel();
    return n;
  }

  uint64_t values_hash() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (auto& e : entries) {
      h = fnv1a64(e.name.data(), e.name.size(), h);
      h = fnv1a64(e.v.val().data(), size_t(e.v.val().numel()) * sizeof(T), h);
    }
    return h;
  }

  std::map<std::string, Tensor<T>> state_dict() const {
    std::map<std::string, Tensor<T>> out;
    for (auto& e : entries) out[e.name] = e.v.val();
    return out;
  }

  void load_state(const std::map<std::string, Tensor<T>>& sd) {
    for (auto& e : entries) {
      auto it = sd.find(e.name);
      check(it != sd.end(), "checkpoint missing parameter: " + e.name);
      check(it->second.shape == e.v.val().shape, "checkpoint shape mismatch for: " + e.name);
      e.v.mutable_val() = it->second;
    }
  }
};

template <typename T>
struct Dense {
  Var<T> w, b;
  Dense() = default;
  Dense(ParamStore<T>& ps, const std::string& name, int in, int out, Rng& rng) {
    T s = T(std::sqrt(2.0 / double(in)));
    w = ps.add(name + ".w", Tensor<T>::randn({in, out}, rng, s));
    b = ps.add(name + ".b", Tensor<T>::zeros({out}));
  }
  Var<T> operator()(const Var<T>& x) const { return ag::linear(x, w, b); }
};

template <typename T>
struct Conv2dLayer {
  Var<T> w, b;
  int stride = 1, pad = 1;
  Conv2dLayer() = default;
  Conv2dLayer(ParamStore<T>& ps, const std::string& name, int c_in, int c_out, int k, int stride_,
              int pad_, Rng& rng)
      : stride(stride_), pad(pad_) {
    T s = T(std::sqrt(2.0 / double(c_in * k * k)));
    w = ps.add(name + ".w", Tensor<T>::randn({c_out, c_in, k, k}, rng, s));
    b = ps.add(name + ".b", Tensor<T>::zeros({c_out}));
  }
  Var<T> operator()(const Var<T>& x) const { return ag::conv2d(x, w, b, stride, pad); }
};

template <typename T>
struct LayerNormLayer {
  Var<T> g, b;
  LayerNormLayer() = default;
  LayerNormLayer(ParamStore<T>& ps, const std::string& name, int dim) {
    g = ps.add(name + ".g", Tensor<T>::full({dim}, T(1)));
    b = ps.add(name + ".b", Tensor<T>::zeros({dim}));
  }
  Var<T> operator()(const Var<T>& x) const { return ag::layernorm(x, g, b); }
};

template <typename T>
struct EmbeddingLayer {
  Var<T> table;
  EmbeddingLayer() = default;
  EmbeddingLayer(ParamStore<T>& ps, const std::string& name, int vocab, int dim, Rng& rng) {
    table = ps.add(name, Tensor<T>::randn({vocab, dim}, rng, T(0.02)));
  }
  Var<T> operator()(const std::vector<int>& idx) const { return ag::embedding(table, idx); }
};

// Multi-head scaled dot-product attention for a batch of equal-length
// sequences, fused into one graph node. q/k/v are the already-projected
// activations laid out as [B*Sq, E] / [B*Skv, E]; heads are column blocks.
// ctx is the causal window: row i attends to keys j < min(Skv, i+1+ctx), so
// ctx = 0 is causal self-attention and ctx >= Skv is full attention. GEMMs
// run strided over the batch buffers; softmax probabilities are saved for
// the backward pass.
template <typename T>
Var<T> attention_heads(const Var<T>& q, const Var<T>& k, const Var<T>& v, int bsz, int sq,
                       int skv, int heads, int ctx) {
  int e = q.val().cols();
  check(e % heads == 0, "attention: embed dim not divisible by heads");
  check(q.val().rows() == bsz * sq && k.val().rows() == bsz * skv &&
            v.val().rows() == bsz * skv && k.val().cols() == e && v.val().cols() == e,
        "attention: bad activation shapes");
  int dh = e / heads;
  T alpha = T(1.0 / std::sqrt(double(dh)));

  Tensor<T> out({bsz * sq, e});
  auto probs = std::make_shared<Tensor<T>>(
      Tensor<T>({bsz * heads, sq, skv}));  // saved for backward
  std::vector<T> scores(size_t(sq) * skv);
  for (int b = 0; b < bsz; ++b)
    for (int h = 0; h < heads; ++h) {
      const T* qp = q.val().data() + int64_t(b) * sq * e + h * dh;
      const T* kp = k.val().data() + int64_t(b) * skv * e + h * dh;
      const T* vp = v.val().data() + int64_t(b) * skv * e + h * dh;
      gemm<T>(false, true, sq, skv, dh, alpha, qp, e, kp, e, T(0), scores.data(), skv);
      T* pp = probs->data() + (int64_t(b) * heads + h) * sq * skv;
      for (int i = 0; i < sq; ++i) {
        int valid = std::min(skv, i + 1 + ctx);
        const T* srow = scores.data() + int64_t(i) * skv;
        T* prow = pp + int64_t(i) * skv;
        T mx = srow[0];
        for (int j = 1; j < valid; ++j) mx = std::max(mx, srow[j]);
        T sum = 0;
        for (int j = 0; j < valid; ++j) {
          prow[j] = std::exp(srow[j] - mx);
          sum += prow[j];
        }
        for (int j = 0; j < valid; ++j) prow[j] /= sum;
        for (int j = valid; j < skv; ++j) prow[j] = T(0);
      }
      gemm<T>(false, false, sq, dh, skv, T(1), pp, skv, vp, e, T(0),
              out.data() + int64_t(b) * sq * e + h * dh, e);
    }

  auto pq = q.node(), pk = k.node(), pv = v.node();
  return Var<T>(ag::make_node<T>(
      std::move(out), {pq, pk, pv},
      [pq, pk, pv, probs, bsz, sq, skv, heads, dh, e, alpha](Node<T>& n_) {
        pq->ensure_grad();
        pk->ensure_grad();
        pv->ensure_grad();
        std::vector<T> dprobs(size_t(sq) * skv), dscores(size_t(sq) * skv);
        for (int b = 0; b < bsz; ++b)
          for (int h = 0; h < heads; ++h) {
            const T* go = n_.grad.data() + int64_t(b) * sq * e + h * dh;
            const T* qp = pq->val.data() + int64_t(b) * sq * e + h * dh;
            const T* kp = pk->val.data() + int64_t(b) * skv * e + h * dh;
            const T* vp = pv->val.data() + int64_t(b) * skv * e + h * dh;
            const T* pp = probs->data() + (int64_t(b) * heads + h) * sq * skv;
            // dV += P^T dO
            gemm<T>(true, false, skv, dh, sq, T(1), pp, skv, go, e, T(1),
                    pv->grad.data() + int64_t(b) * skv * e + h * dh, e);
            // dP = dO V^T ; dS = P o (dP - rowdot(dP, P))
            gemm<T>(false, true, sq, skv, dh, T(1), go, e, vp, e, T(0), dprobs.data(), skv);
            for (int i = 0; i < sq; ++i) {
              const T* prow = pp + int64_t(i) * skv;
              const T* dprow = dprobs.data() + int64_t(i) * skv;
              T* dsrow = dscores.data() + int64_t(i) * skv;
              T dot = 0;
              for (int j = 0; j < skv; ++j) dot += dprow[j] * prow[j];
              for (int j = 0; j < skv; ++j) dsrow[j] = prow[j] * (dprow[j] - dot);
            }
            // dQ += alpha dS K ; dK += alpha dS^T Q
            gemm<T>(false, false, sq, dh, skv, alpha, dscores.data(), skv, kp, e, T(1),
                    pq->grad.data() + int64_t(b) * sq * e + h * dh, e);
            gemm<T>(true, false, skv, dh, sq, alpha, dscores.data(), skv, qp, e, T(1),
                    pk->grad.data() + int64_t(b) * skv * e + h * dh, e);
          }
      }));
}

// Adam with bias correction. step() consumes and clears gradients.
template <typename T>
class Adam {
 public:
  explicit Adam(T lr = T(1e-3), T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void set_lr(T lr) { lr_ = lr; }
  T lr() const { return lr_; }

  void step(ParamStore<T>& ps) {
    if (m_.empty()) {
      for (auto& e : ps.entries) {
        m_.push_back(Tensor<T>::zeros(e.v.val().shape));
        v_.push_back(Tensor<T>::zeros(e.v.val().shape));
      }
    }
    check(m_.size() == ps.entries.size(), "adam: param count changed");
    ++t_;
    T bc1 = T(1) - std::pow(beta1_, T(t_));
    T bc2 = T(1) - std::pow(beta2_, T(t_));
    for (size_t i = 0; i < ps.entries.size(); ++i) {
      auto& p = ps.entries[i].v;
      if (p.grad().numel() == 0) continue;  // param not touched this step
      auto& val = p.mutable_val();
      const auto& g = p.grad();
      for (int64_t j = 0; j < val.numel(); ++j) {
        m_[i][j] = beta1_ * m_[i][j] + (T(1) - beta1_) * g[j];
        v_[i][j] = beta2_ * v_[i][j] + (T(1) - beta2_) * g[j] * g[j];
        T mhat = m_[i][j] / bc1;
        T vhat = v_[i][j] / bc2;
        val[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
    ps.zero_grads();
  }

 private:
  T lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

}  // namespace afford
