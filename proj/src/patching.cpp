#include "unitst/patching.hpp"

#include <string>

namespace unitst {

void validate(const PatchConfig& cfg, std::size_t lookback) {
  if (cfg.patch_len == 0 || cfg.stride == 0) throw std::invalid_argument("patch length and stride must be >= 1");
  if (cfg.stride > cfg.patch_len) {
    throw std::invalid_argument("patch stride " + std::to_string(cfg.stride) + " exceeds patch length " +
                                std::to_string(cfg.patch_len) + "; gaps between patches are not allowed");
  }
  if (cfg.patch_len > lookback) {
    throw std::invalid_argument("patch length " + std::to_string(cfg.patch_len) + " exceeds lookback " +
                                std::to_string(lookback));
  }
}

std::size_t num_patches(std::size_t lookback, const PatchConfig& cfg) {
  validate(cfg, lookback);
  const std::size_t span = lookback - cfg.patch_len;
  std::size_t p = span / cfg.stride + 1;
  if (cfg.pad_last && span % cfg.stride != 0) ++p;
  return p;
}

Tensor3::Tensor3(Eigen::Index n0, Eigen::Index n1, Mat flat) : n0_(n0), n1_(n1), flat_(std::move(flat)) {
  if (flat_.rows() != n0 * n1) throw ShapeError("Tensor3: flat rows must equal n0 * n1");
}

Mat segment_patches_rows(const Mat& x, const PatchConfig& cfg) {
  const auto L = static_cast<std::size_t>(x.cols());
  const auto p = static_cast<Eigen::Index>(num_patches(L, cfg));
  const auto l = static_cast<Eigen::Index>(cfg.patch_len);
  const auto s = static_cast<Eigen::Index>(cfg.stride);
  const auto R = x.rows();
  Mat out(R * p, l);
  for (Eigen::Index r = 0; r < R; ++r) {
    for (Eigen::Index k = 0; k < p; ++k) {
      for (Eigen::Index j = 0; j < l; ++j) {
        // Replication padding: indices past the end read the final value.
        const Eigen::Index t = std::min<Eigen::Index>(k * s + j, static_cast<Eigen::Index>(L) - 1);
        out(r * p + k, j) = x(r, t);
      }
    }
  }
  return out;
}

Tensor3 segment_patches(const Mat& x, const PatchConfig& cfg) {
  const auto p = static_cast<Eigen::Index>(num_patches(static_cast<std::size_t>(x.cols()), cfg));
  return Tensor3(x.rows(), p, segment_patches_rows(x, cfg));
}

Mat embed_patch_rows(const Mat& patches, const EmbeddingParams& params) {
  if (patches.cols() != params.W.rows()) {
    throw ShapeError("embed: patch length " + std::to_string(patches.cols()) + " does not match W " +
                     shape_str(params.W));
  }
  if (params.W_pos.cols() != params.W.cols()) throw ShapeError("embed: W_pos width does not match W");
  const auto tokens = params.W_pos.rows();
  if (tokens == 0 || patches.rows() % tokens != 0) {
    throw ShapeError("embed: " + std::to_string(patches.rows()) + " patch rows is not a multiple of " +
                     std::to_string(tokens) + " position embeddings");
  }
  Mat H = patches * params.W;
  const auto B = patches.rows() / tokens;
  for (Eigen::Index b = 0; b < B; ++b) H.middleRows(b * tokens, tokens) += params.W_pos;
  return H;
}

Tensor3 embed_patches(const Tensor3& patches, const EmbeddingParams& params) {
  if (params.W_pos.rows() != patches.dim0() * patches.dim1()) {
    throw ShapeError("embed: W_pos rows must equal N * p");
  }
  return Tensor3(patches.dim0(), patches.dim1(), embed_patch_rows(patches.flat(), params));
}

Mat flatten_tokens(const Tensor3& H) { return H.flat(); }

Tensor3 unflatten_tokens(const Mat& tokens, Eigen::Index N, Eigen::Index p) {
  if (N <= 0 || p <= 0 || tokens.rows() != N * p) {
    throw ShapeError("unflatten: " + std::to_string(tokens.rows()) + " tokens cannot be split into N=" +
                     std::to_string(N) + " x p=" + std::to_string(p));
  }
  return Tensor3(N, p, tokens);
}

}  // namespace unitst
