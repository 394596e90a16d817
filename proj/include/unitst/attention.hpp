#pragma once

#include "unitst/tensor.hpp"

#include <cstddef>
#include <vector>

namespace unitst {

struct AttentionResult {
  Mat O;  // [m x d_v]
  Mat A;  // [m x n], rows sum to 1
};

// Row-softmax(Q K^T / sqrt(d_k)) V with per-row max subtraction. `additive_mask`, when given,
// is added to the scores before the softmax (use -inf to forbid a pair); every row must keep
// at least one finite entry.
AttentionResult scaled_dot_attention(const Mat& Q, const Mat& K, const Mat& V,
                                     const Mat* additive_mask = nullptr);

struct AttentionGrads {
  Mat dQ;
  Mat dK;
  Mat dV;
};

AttentionGrads scaled_dot_attention_backward(const Mat& Q, const Mat& K, const Mat& V, const Mat& A,
                                             const Mat& dO);

// Projections for one encoder layer. Per-head projections are stored column-concatenated:
// head h owns columns [h * d_k, (h + 1) * d_k) of W_Q1, W_K1, ..., and of the value
// matrices. Weights of the inactive attention mode are left empty.
struct LayerParams {
  // dispatcher aggregate stage (dispatchers query the tokens)
  Mat W_Q1, W_K1, W_V1;
  // dispatcher distribute stage (tokens query the updated dispatchers)
  Mat W_Q2, W_K2, W_V2;
  // full flattened self-attention
  Mat W_Q, W_K, W_V;
  Mat W_O;  // [d x d], applied after head concatenation

  Mat ffn_W1, ffn_b1;  // [d x d_ff], [1 x d_ff]
  Mat ffn_W2, ffn_b2;  // [d_ff x d], [1 x d]
  Mat bn1_gamma, bn1_beta, bn2_gamma, bn2_beta;  // [1 x d]
  Mat bn1_running_mean, bn1_running_var, bn2_running_mean, bn2_running_var;  // [1 x d], not trained

  Mat dispatchers;  // [k x d], only when dispatchers are per layer
};

// Cached intermediates of a multi-head attention call, enough for the backward pass.
struct MhaCache {
  Mat Xq, Xkv;     // inputs
  Mat Q, K, V;     // projected, all heads side by side
  std::vector<Mat> A;  // per head, [m x n]
  Mat concat;      // [m x d_v], head outputs side by side
};

// Multi-head attention of Xq over Xkv; returns the concatenated head outputs (no output projection).
Mat mha_forward(const Mat& Xq, const Mat& Xkv, const Mat& Wq, const Mat& Wk, const Mat& Wv,
                std::size_t n_heads, MhaCache& cache, const Mat* additive_mask = nullptr);

// Accumulates weight gradients into dWq/dWk/dWv and writes input gradients into dXq/dXkv.
void mha_backward(const MhaCache& cache, const Mat& d_concat, const Mat& Wq, const Mat& Wk, const Mat& Wv,
                  std::size_t n_heads, Mat& dWq, Mat& dWk, Mat& dWv, Mat& dXq, Mat& dXkv);

struct AttentionOutput {
  Mat out;
  std::vector<Mat> head_maps;
  Mat mean_map() const;
};

// Self-attention over all N*p flattened tokens, output projected through W_O.
AttentionOutput full_flattened_msa(const Mat& tokens, const LayerParams& layer, std::size_t n_heads,
                                   const Mat* additive_mask = nullptr);

// D' = Attention(D W_Q1, X' W_K1, X' W_V1); maps are [k x (N*p)].
AttentionOutput dispatcher_aggregate(const Mat& dispatchers, const Mat& tokens, const LayerParams& layer,
                                     std::size_t n_heads);

// O' = Attention(X' W_Q2, D' W_K2, D' W_V2) W_O; maps are [(N*p) x k].
AttentionOutput dispatcher_distribute(const Mat& tokens, const Mat& updated_dispatchers,
                                      const LayerParams& layer, std::size_t n_heads);

// Additive mask admitting only pairs of tokens from the same variate (token t = i * p + k).
Mat within_variate_mask(std::size_t n_variates, std::size_t n_patches);

}  // namespace unitst
