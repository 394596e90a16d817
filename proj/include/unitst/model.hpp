#pragma once

#include "unitst/attention.hpp"
#include "unitst/patching.hpp"
#include "unitst/rng.hpp"
#include "unitst/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace unitst {

enum class AttentionMode { dispatcher, full };
enum class Mode { train, eval };

std::string to_string(AttentionMode m);
AttentionMode parse_attention_mode(const std::string& s);

struct ModelConfig {
  std::size_t n_variates = 7;
  std::size_t lookback = 96;
  std::size_t horizon = 96;
  PatchConfig patch;
  std::size_t d_model = 128;
  std::size_t n_heads = 8;
  std::size_t n_dispatchers = 10;
  std::size_t n_layers = 2;
  std::size_t d_ff = 256;
  double dropout = 0.1;
  AttentionMode attention_mode = AttentionMode::dispatcher;
  bool capture_attention = false;
  bool instance_norm = true;
  bool per_layer_dispatchers = false;
  // Full mode only: forbid attention between tokens of different variates (ablation).
  bool within_variate_only = false;
  double bn_eps = 1e-5;

  std::size_t num_patches() const { return unitst::num_patches(lookback, patch); }
  std::size_t num_tokens() const { return n_variates * num_patches(); }
  std::size_t d_k() const { return d_model / n_heads; }

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct ModelParams {
  ModelConfig config;
  EmbeddingParams embedding;
  Mat dispatchers;  // [k x d], shared by every layer unless per_layer_dispatchers
  std::vector<LayerParams> layers;
  Mat head_W;  // [(p * d) x S], shared across variates
  Mat head_b;  // [1 x S]
};

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);
// Same shapes as `params`, every tensor (including buffers) zero.
ModelParams zeros_like(const ModelParams& params);

struct NamedTensor {
  std::string name;
  Mat* tensor;
};
struct ConstNamedTensor {
  std::string name;
  const Mat* tensor;
};

// Learnable tensors in a fixed order; empty (inactive-mode) tensors are skipped.
std::vector<NamedTensor> named_parameters(ModelParams& params);
std::vector<ConstNamedTensor> named_parameters(const ModelParams& params);
// BatchNorm running statistics.
std::vector<NamedTensor> named_buffers(ModelParams& params);
std::vector<ConstNamedTensor> named_buffers(const ModelParams& params);

std::size_t param_count(const ModelParams& params);

struct LayerAttentionMaps {
  Mat A_agg;   // [k x (N*p)], dispatcher mode
  Mat A_dist;  // [(N*p) x k], dispatcher mode
  Mat A_full;  // [(N*p) x (N*p)], full mode
};

// Head-averaged maps of one sample, one entry per layer.
struct AttentionRecord {
  std::vector<LayerAttentionMaps> layers;
};

struct BatchNormCache {
  Mat xhat;
  RowVec inv_std;
  RowVec batch_mean;
  RowVec batch_var;  // biased
  bool train = false;
};

struct LayerCache {
  Mat input;
  std::vector<MhaCache> full;  // per sample
  std::vector<MhaCache> agg;   // per sample
  std::vector<MhaCache> dist;  // per sample
  Mat concat;  // [(B*T) x d], head outputs before W_O
  Mat dispatcher_in;  // [k x d]
  Mat r1, Y, u, g, drop_mask, gd, r2;
  BatchNormCache bn1, bn2;
};

struct ForwardCache {
  std::size_t batch = 0;
  Mode mode = Mode::eval;
  Vec norm_mean, norm_scale;  // per (sample, variate) row
  Mat patches;                // [(B*N*p) x l]
  std::vector<LayerCache> layers;
  Mat Z;                      // [(B*N) x (p*d)]
};

struct ForwardOutput {
  Mat pred;  // [(B*N) x S], sample-major, on the input scale
  std::vector<AttentionRecord> records;  // per sample; eval mode with capture_attention only
  std::size_t attn_map_elements = 0;     // attention-map entries materialised by this call
};

// x: [(B*N) x L], sample-major (rows b*N .. b*N+N-1 are sample b).
// Train mode uses batch BatchNorm statistics and dropout drawn from `dropout_rng`.
ForwardOutput forward(const ModelParams& params, const Mat& x, Mode mode, Rng* dropout_rng = nullptr,
                      ForwardCache* cache = nullptr);

// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(pred).
void backward(const ModelParams& params, const ForwardCache& cache, const Mat& d_pred, ModelParams& grads);

// Exponential moving average of the BatchNorm statistics seen by a train-mode forward.
void update_running_stats(ModelParams& params, const ForwardCache& cache, double momentum);

// One encoder layer over the stacked tokens of `batch` samples ([(B*T) x d]):
// Y = BN1(X + Attn(X)); out = BN2(Y + FFN(Y)).
Mat encoder_block(const Mat& tokens, std::size_t batch, const LayerParams& layer, const Mat& dispatchers,
                  const ModelConfig& cfg, Mode mode, Rng* dropout_rng, LayerCache& cache,
                  std::vector<AttentionRecord>* records = nullptr);

double gelu(double x);
double gelu_grad(double x);

}  // namespace unitst
