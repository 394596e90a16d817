#pragma once

#include "unitst/tensor.hpp"

#include <cstddef>

namespace unitst {

struct PatchConfig {
  std::size_t patch_len = 16;
  std::size_t stride = 8;
  bool pad_last = true;
  bool operator==(const PatchConfig&) const = default;
};

// Throws std::invalid_argument unless 1 <= stride <= patch_len <= lookback.
void validate(const PatchConfig& cfg, std::size_t lookback);

// floor((L - l) / s) + 1, plus one replication-padded patch when pad_last is set and the
// last patch does not end at L.
std::size_t num_patches(std::size_t lookback, const PatchConfig& cfg);

// Dense [n0 x n1 x n2] tensor, row-major; element (i, k, j) sits at row i * n1 + k of `flat`.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(Eigen::Index n0, Eigen::Index n1, Eigen::Index n2) : n0_(n0), n1_(n1), flat_(Mat::Zero(n0 * n1, n2)) {}
  Tensor3(Eigen::Index n0, Eigen::Index n1, Mat flat);

  Eigen::Index dim0() const { return n0_; }
  Eigen::Index dim1() const { return n1_; }
  Eigen::Index dim2() const { return flat_.cols(); }

  double& operator()(Eigen::Index i, Eigen::Index k, Eigen::Index j) { return flat_(i * n1_ + k, j); }
  double operator()(Eigen::Index i, Eigen::Index k, Eigen::Index j) const { return flat_(i * n1_ + k, j); }

  const Mat& flat() const { return flat_; }
  Mat& flat() { return flat_; }

  bool operator==(const Tensor3& o) const { return n0_ == o.n0_ && n1_ == o.n1_ && flat_ == o.flat_; }

 private:
  Eigen::Index n0_ = 0;
  Eigen::Index n1_ = 0;
  Mat flat_;
};

// x: [N x L] -> [N x p x l]; patch k of variate i is x[i, k*s : k*s + l].
Tensor3 segment_patches(const Mat& x, const PatchConfig& cfg);

// Batched form used by the model: rows of `x` are independent series ([R x L]); the result is
// [(R * p) x l] with patch k of row r at row r * p + k.
Mat segment_patches_rows(const Mat& x, const PatchConfig& cfg);

struct EmbeddingParams {
  Mat W;      // [l x d], shared by all variates
  Mat W_pos;  // [(N * p) x d], row i * p + k is the embedding of patch k of variate i
};

// H[i, k, :] = X_p[i, k, :] W + W_pos[i, k, :]
Tensor3 embed_patches(const Tensor3& patches, const EmbeddingParams& params);

// Rows of `patches` are [(B * N * p) x l]; W_pos is tiled over the batch.
Mat embed_patch_rows(const Mat& patches, const EmbeddingParams& params);

// Token t = i * p + k.
Mat flatten_tokens(const Tensor3& H);
Tensor3 unflatten_tokens(const Mat& tokens, Eigen::Index N, Eigen::Index p);

}  // namespace unitst
