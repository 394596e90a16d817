#pragma once

// Slow reference implementations built from explicit loops. Nothing here calls into the library
// apart from the shared matrix type and RNG.

#include "unitst/rng.hpp"
#include "unitst/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace oracle {

using unitst::Mat;
using Index = Eigen::Index;

inline Mat random_mat(unitst::Rng& rng, Index rows, Index cols, double scale = 1.0) {
  Mat m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  return m;
}

inline Mat matmul(const Mat& A, const Mat& B) {
  Mat C = Mat::Zero(A.rows(), B.cols());
  for (Index i = 0; i < A.rows(); ++i)
    for (Index j = 0; j < B.cols(); ++j) {
      double s = 0.0;
      for (Index t = 0; t < A.cols(); ++t) s += A(i, t) * B(t, j);
      C(i, j) = s;
    }
  return C;
}

inline Mat cols(const Mat& M, Index first, Index n) {
  Mat out(M.rows(), n);
  for (Index i = 0; i < M.rows(); ++i)
    for (Index j = 0; j < n; ++j) out(i, j) = M(i, first + j);
  return out;
}

// Single-head softmax attention, one score at a time.
inline void attention(const Mat& Q, const Mat& K, const Mat& V, Mat& O, Mat& A, const Mat* mask = nullptr) {
  const Index m = Q.rows(), n = K.rows(), dk = Q.cols();
  A.resize(m, n);
  O = Mat::Zero(m, V.cols());
  for (Index i = 0; i < m; ++i) {
    std::vector<double> s(static_cast<std::size_t>(n));
    double mx = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < n; ++j) {
      double dot = 0.0;
      for (Index t = 0; t < dk; ++t) dot += Q(i, t) * K(j, t);
      s[j] = dot / std::sqrt(static_cast<double>(dk)) + (mask ? (*mask)(i, j) : 0.0);
      if (s[j] > mx) mx = s[j];
    }
    double z = 0.0;
    for (Index j = 0; j < n; ++j) z += std::exp(s[j] - mx);
    for (Index j = 0; j < n; ++j) A(i, j) = std::exp(s[j] - mx) / z;
    for (Index j = 0; j < n; ++j)
      for (Index c = 0; c < V.cols(); ++c) O(i, c) += A(i, j) * V(j, c);
  }
}

// Multi-head attention: head h uses column block h of every projection; outputs are
// concatenated, no output projection.
inline Mat mha(const Mat& Xq, const Mat& Xkv, const Mat& Wq, const Mat& Wk, const Mat& Wv, Index heads,
               std::vector<Mat>* maps = nullptr, const Mat* mask = nullptr) {
  const Index dk = Wq.cols() / heads, dv = Wv.cols() / heads;
  const Mat Q = matmul(Xq, Wq), K = matmul(Xkv, Wk), V = matmul(Xkv, Wv);
  Mat out(Xq.rows(), Wv.cols());
  if (maps) maps->clear();
  for (Index h = 0; h < heads; ++h) {
    Mat O, A;
    attention(cols(Q, h * dk, dk), cols(K, h * dk, dk), cols(V, h * dv, dv), O, A, mask);
    for (Index i = 0; i < O.rows(); ++i)
      for (Index c = 0; c < dv; ++c) out(i, h * dv + c) = O(i, c);
    if (maps) maps->push_back(A);
  }
  return out;
}

// Textbook Pearson from raw sums, accumulated in long double.
inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  long double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  const long double n = static_cast<long double>(a.size());
  for (std::size_t t = 0; t < a.size(); ++t) {
    sa += a[t];
    sb += b[t];
    saa += static_cast<long double>(a[t]) * a[t];
    sbb += static_cast<long double>(b[t]) * b[t];
    sab += static_cast<long double>(a[t]) * b[t];
  }
  const long double num = n * sab - sa * sb;
  const long double den = std::sqrt((n * saa - sa * sa) * (n * sbb - sb * sb));
  return static_cast<double>(num / den);
}

// Token pairs (t, u) over N variates x p patches whose variates and patch indices both differ.
inline std::size_t count_cross_pairs(std::size_t N, std::size_t p) {
  std::size_t c = 0;
  for (std::size_t t = 0; t < N * p; ++t)
    for (std::size_t u = 0; u < N * p; ++u)
      if (t / p != u / p && t % p != u % p) ++c;
  return c;
}

// Number of start indices o with o + L + S <= len, stepping by stride.
inline std::size_t enumerate_windows(std::size_t len, std::size_t L, std::size_t S, std::size_t stride) {
  std::size_t c = 0;
  for (std::size_t o = 0; o + L + S <= len; o += stride) ++c;
  return c;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

// Per-column normalisation over all rows with the biased variance.
inline Mat batch_norm(const Mat& x, const Mat& gamma, const Mat& beta, double eps) {
  Mat y(x.rows(), x.cols());
  for (Index c = 0; c < x.cols(); ++c) {
    double mean = 0.0;
    for (Index r = 0; r < x.rows(); ++r) mean += x(r, c);
    mean /= static_cast<double>(x.rows());
    double var = 0.0;
    for (Index r = 0; r < x.rows(); ++r) var += (x(r, c) - mean) * (x(r, c) - mean);
    var /= static_cast<double>(x.rows());
    for (Index r = 0; r < x.rows(); ++r) y(r, c) = gamma(0, c) * (x(r, c) - mean) / std::sqrt(var + eps) + beta(0, c);
  }
  return y;
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) m = std::max(m, std::abs(a(i, j) - b(i, j)));
  return m;
}

}  // namespace oracle
