#include "unitst/attention.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace unitst {

AttentionResult scaled_dot_attention(const Mat& Q, const Mat& K, const Mat& V, const Mat* additive_mask) {
  if (Q.cols() != K.cols()) throw ShapeError("attention: Q " + shape_str(Q) + " and K " + shape_str(K) + " key dims differ");
  if (K.rows() != V.rows()) throw ShapeError("attention: K " + shape_str(K) + " and V " + shape_str(V) + " lengths differ");
  if (K.rows() == 0) throw ShapeError("attention: no keys");
  if (!Q.allFinite() || !K.allFinite() || !V.allFinite()) throw std::domain_error("attention: non-finite input");

  const double scale = 1.0 / std::sqrt(static_cast<double>(Q.cols()));
  Mat A = (Q * K.transpose()) * scale;
  if (additive_mask) {
    require_shape(*additive_mask, A.rows(), A.cols(), "attention mask");
    A += *additive_mask;
  }
  for (Eigen::Index r = 0; r < A.rows(); ++r) {
    const double mx = A.row(r).maxCoeff();
    if (!std::isfinite(mx)) throw std::domain_error("attention: row " + std::to_string(r) + " is fully masked");
    A.row(r) = (A.row(r).array() - mx).exp();
    A.row(r) /= A.row(r).sum();
  }
  // Eigen's vectorised exp clamps its argument, so exp(-inf) comes out denormal rather than 0.
  if (additive_mask) A = (additive_mask->array() == -std::numeric_limits<double>::infinity()).select(0.0, A);
  Mat O = A * V;
  return {std::move(O), std::move(A)};
}

AttentionGrads scaled_dot_attention_backward(const Mat& Q, const Mat& K, const Mat& V, const Mat& A,
                                             const Mat& dO) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(Q.cols()));
  AttentionGrads g;
  g.dV = A.transpose() * dO;
  const Mat dA = dO * V.transpose();
  // softmax Jacobian: dS = A * (dA - rowsum(dA * A))
  const Eigen::VectorXd inner = (dA.array() * A.array()).rowwise().sum();
  Mat dS = A.array() * (dA.array().colwise() - inner.array());
  g.dQ = (dS * K) * scale;
  g.dK = (dS.transpose() * Q) * scale;
  return g;
}

Mat mha_forward(const Mat& Xq, const Mat& Xkv, const Mat& Wq, const Mat& Wk, const Mat& Wv,
                std::size_t n_heads, MhaCache& cache, const Mat* additive_mask) {
  if (Xq.cols() != Wq.rows() || Xkv.cols() != Wk.rows() || Xkv.cols() != Wv.rows()) {
    throw ShapeError("mha: input width does not match projection " + shape_str(Wq));
  }
  if (Wq.cols() != Wk.cols()) throw ShapeError("mha: query/key projections differ in width");
  const auto h = static_cast<Eigen::Index>(n_heads);
  if (h <= 0 || Wq.cols() % h != 0 || Wv.cols() % h != 0) throw ShapeError("mha: head count must divide projection widths");
  const Eigen::Index dk = Wq.cols() / h;
  const Eigen::Index dv = Wv.cols() / h;

  cache.Xq = Xq;
  cache.Xkv = Xkv;
  cache.Q = Xq * Wq;
  cache.K = Xkv * Wk;
  cache.V = Xkv * Wv;
  cache.A.resize(n_heads);
  cache.concat.resize(Xq.rows(), Wv.cols());
  for (Eigen::Index j = 0; j < h; ++j) {
    auto res = scaled_dot_attention(cache.Q.middleCols(j * dk, dk), cache.K.middleCols(j * dk, dk),
                                    cache.V.middleCols(j * dv, dv), additive_mask);
    cache.concat.middleCols(j * dv, dv) = res.O;
    cache.A[static_cast<std::size_t>(j)] = std::move(res.A);
  }
  return cache.concat;
}

void mha_backward(const MhaCache& cache, const Mat& d_concat, const Mat& Wq, const Mat& Wk, const Mat& Wv,
                  std::size_t n_heads, Mat& dWq, Mat& dWk, Mat& dWv, Mat& dXq, Mat& dXkv) {
  const auto h = static_cast<Eigen::Index>(n_heads);
  const Eigen::Index dk = Wq.cols() / h;
  const Eigen::Index dv = Wv.cols() / h;
  Mat dQ(cache.Q.rows(), cache.Q.cols());
  Mat dK(cache.K.rows(), cache.K.cols());
  Mat dV(cache.V.rows(), cache.V.cols());
  for (Eigen::Index j = 0; j < h; ++j) {
    auto g = scaled_dot_attention_backward(cache.Q.middleCols(j * dk, dk), cache.K.middleCols(j * dk, dk),
                                           cache.V.middleCols(j * dv, dv), cache.A[static_cast<std::size_t>(j)],
                                           d_concat.middleCols(j * dv, dv));
    dQ.middleCols(j * dk, dk) = g.dQ;
    dK.middleCols(j * dk, dk) = g.dK;
    dV.middleCols(j * dv, dv) = g.dV;
  }
  dWq.noalias() += cache.Xq.transpose() * dQ;
  dWk.noalias() += cache.Xkv.transpose() * dK;
  dWv.noalias() += cache.Xkv.transpose() * dV;
  dXq = dQ * Wq.transpose();
  dXkv = dK * Wk.transpose() + dV * Wv.transpose();
}

Mat AttentionOutput::mean_map() const {
  Mat m = head_maps.front();
  for (std::size_t j = 1; j < head_maps.size(); ++j) m += head_maps[j];
  return m / static_cast<double>(head_maps.size());
}

AttentionOutput full_flattened_msa(const Mat& tokens, const LayerParams& layer, std::size_t n_heads,
                                   const Mat* additive_mask) {
  if (layer.W_Q.size() == 0) throw ShapeError("full attention: layer has no full-mode projections");
  MhaCache cache;
  const Mat concat = mha_forward(tokens, tokens, layer.W_Q, layer.W_K, layer.W_V, n_heads, cache, additive_mask);
  return {concat * layer.W_O, std::move(cache.A)};
}

AttentionOutput dispatcher_aggregate(const Mat& dispatchers, const Mat& tokens, const LayerParams& layer,
                                     std::size_t n_heads) {
  if (layer.W_Q1.size() == 0) throw ShapeError("dispatcher attention: layer has no dispatcher projections");
  if (dispatchers.cols() != tokens.cols()) throw ShapeError("dispatcher attention: D and X' widths differ");
  MhaCache cache;
  Mat out = mha_forward(dispatchers, tokens, layer.W_Q1, layer.W_K1, layer.W_V1, n_heads, cache);
  return {std::move(out), std::move(cache.A)};
}

AttentionOutput dispatcher_distribute(const Mat& tokens, const Mat& updated_dispatchers, const LayerParams& layer,
                                      std::size_t n_heads) {
  if (layer.W_Q2.size() == 0) throw ShapeError("dispatcher attention: layer has no dispatcher projections");
  if (updated_dispatchers.cols() != tokens.cols()) throw ShapeError("dispatcher attention: D' and X' widths differ");
  MhaCache cache;
  const Mat concat = mha_forward(tokens, updated_dispatchers, layer.W_Q2, layer.W_K2, layer.W_V2, n_heads, cache);
  return {concat * layer.W_O, std::move(cache.A)};
}

Mat within_variate_mask(std::size_t n_variates, std::size_t n_patches) {
  const auto T = static_cast<Eigen::Index>(n_variates * n_patches);
  const auto p = static_cast<Eigen::Index>(n_patches);
  Mat m = Mat::Constant(T, T, -std::numeric_limits<double>::infinity());
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n_variates); ++i) m.block(i * p, i * p, p, p).setZero();
  return m;
}

}  // namespace unitst
