#pragma once

#include <Eigen/Dense>
#include <initializer_list>
#include <numeric>

#include "afford/util.hpp"

namespace afford {

// Dense row-major tensor. Shapes are small (<=4 dims); heavy math goes
// through the gemm() wrapper below.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), v(size_t(count(shape)), T(0)) {}
  Tensor(std::vector<int> s, T fill) : shape(std::move(s)), v(size_t(count(shape)), fill) {}

  static int64_t count(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, T x) { return Tensor(std::move(s), x); }
  static Tensor randn(std::vector<int> s, Rng& rng, T scale) {
    Tensor t(std::move(s));
    for (auto& x : t.v) x = T(rng.normal()) * scale;
    return t;
  }

  int64_t numel() const { return int64_t(v.size()); }
  int ndim() const { return int(shape.size()); }
  int size(int d) const { return shape[size_t(d)]; }
  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  T& operator[](int64_t i) { return v[size_t(i)]; }
  const T& operator[](int64_t i) const { return v[size_t(i)]; }

  // 2-D accessor (row-major); rows = shape[0], cols = product of the rest.
  int rows() const { return shape.empty() ? 0 : shape[0]; }
  int cols() const {
    if (shape.empty()) return 0;
    int64_t c = 1;
    for (size_t i = 1; i < shape.size(); ++i) c *= shape[i];
    return int(c);
  }
  T& at2(int r, int c) { return v[size_t(r) * size_t(cols()) + size_t(c)]; }
  const T& at2(int r, int c) const { return v[size_t(r) * size_t(cols()) + size_t(c)]; }

  Tensor reshaped(std::vector<int> s) const {
    check(count(s) == numel(), "reshape: element count mismatch");
    Tensor t;
    t.shape = std::move(s);
    t.v = v;
    return t;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (T x : v)
      if (!std::isfinite(double(x))) return false;
    return true;
  }

  uint64_t hash() const {
    uint64_t h = fnv1a64(shape.data(), shape.size() * sizeof(int));
    return fnv1a64(v.data(), v.size() * sizeof(T), h);
  }
};

namespace detail {
template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMap = Eigen::Map<EMat<T>, Eigen::Unaligned, Eigen::OuterStride<>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>, Eigen::Unaligned, Eigen::OuterStride<>>;
}  // namespace detail

// C = alpha * op(A) * op(B) + beta * C, row-major, ld* = row strides.
template <typename T>
void gemm(bool ta, bool tb, int m, int n, int k, T alpha, const T* A, int lda, const T* B,
          int ldb, T beta, T* C, int ldc) {
  detail::ECMap<T> a(A, ta ? k : m, ta ? m : k, Eigen::OuterStride<>(lda));
  detail::ECMap<T> b(B, tb ? n : k, tb ? k : n, Eigen::OuterStride<>(ldb));
  detail::EMap<T> c(C, m, n, Eigen::OuterStride<>(ldc));
  if (beta == T(0)) {
    if (!ta && !tb)
      c.noalias() = alpha * (a * b);
    else if (ta && !tb)
      c.noalias() = alpha * (a.transpose() * b);
    else if (!ta && tb)
      c.noalias() = alpha * (a * b.transpose());
    else
      c.noalias() = alpha * (a.transpose() * b.transpose());
  } else {
    c *= beta;
    if (!ta && !tb)
      c.noalias() += alpha * (a * b);
    else if (ta && !tb)
      c.noalias() += alpha * (a.transpose() * b);
    else if (!ta && tb)
      c.noalias() += alpha * (a * b.transpose());
    else
      c.noalias() += alpha * (a.transpose() * b.transpose());
  }
}

}  // namespace afford
