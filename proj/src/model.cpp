#include "unitst/model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace unitst {

std::string to_string(AttentionMode m) { return m == AttentionMode::dispatcher ? "dispatcher" : "full"; }

AttentionMode parse_attention_mode(const std::string& s) {
  if (s == "dispatcher") return AttentionMode::dispatcher;
  if (s == "full") return AttentionMode::full;
  throw std::invalid_argument("unknown attention mode '" + s + "' (expected dispatcher|full)");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("model config: " + msg); };
  if (n_variates == 0 || lookback == 0 || horizon == 0) fail("N, L and S must be positive");
  if (d_model == 0 || n_heads == 0 || n_layers == 0 || d_ff == 0) fail("d, heads, layers and d_ff must be positive");
  if (d_model % n_heads != 0) fail("heads (" + std::to_string(n_heads) + ") must divide d (" + std::to_string(d_model) + ")");
  if (attention_mode == AttentionMode::dispatcher && n_dispatchers == 0) fail("dispatcher mode needs k >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (within_variate_only && attention_mode != AttentionMode::full) fail("within-variate masking requires full attention");
  if (!(bn_eps > 0)) fail("bn_eps must be positive");
  unitst::validate(patch, lookback);
}

namespace {

Mat uniform_fan_in(Rng& rng, Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

Mat normal_init(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, stddev);
  return m;
}

template <typename Params, typename Named>
std::vector<Named> collect_parameters(Params& p) {
  std::vector<Named> out;
  auto add = [&out](std::string name, auto& m) {
    if (m.size() > 0) out.push_back({std::move(name), &m});
  };
  add("embedding.W", p.embedding.W);
  add("embedding.W_pos", p.embedding.W_pos);
  add("dispatchers", p.dispatchers);
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    auto& L = p.layers[i];
    const std::string pre = "layers." + std::to_string(i) + ".";
    add(pre + "dispatchers", L.dispatchers);
    add(pre + "W_Q1", L.W_Q1);
    add(pre + "W_K1", L.W_K1);
    add(pre + "W_V1", L.W_V1);
    add(pre + "W_Q2", L.W_Q2);
    add(pre + "W_K2", L.W_K2);
    add(pre + "W_V2", L.W_V2);
    add(pre + "W_Q", L.W_Q);
    add(pre + "W_K", L.W_K);
    add(pre + "W_V", L.W_V);
    add(pre + "W_O", L.W_O);
    add(pre + "ffn.W1", L.ffn_W1);
    add(pre + "ffn.b1", L.ffn_b1);
    add(pre + "ffn.W2", L.ffn_W2);
    add(pre + "ffn.b2", L.ffn_b2);
    add(pre + "bn1.gamma", L.bn1_gamma);
    add(pre + "bn1.beta", L.bn1_beta);
    add(pre + "bn2.gamma", L.bn2_gamma);
    add(pre + "bn2.beta", L.bn2_beta);
  }
  add("head.W", p.head_W);
  add("head.b", p.head_b);
  return out;
}

template <typename Params, typename Named>
std::vector<Named> collect_buffers(Params& p) {
  std::vector<Named> out;
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    auto& L = p.layers[i];
    const std::string pre = "layers." + std::to_string(i) + ".";
    out.push_back({pre + "bn1.running_mean", &L.bn1_running_mean});
    out.push_back({pre + "bn1.running_var", &L.bn1_running_var});
    out.push_back({pre + "bn2.running_mean", &L.bn2_running_mean});
    out.push_back({pre + "bn2.running_var", &L.bn2_running_var});
  }
  return out;
}

Mat batch_norm_forward(const Mat& x, const Mat& gamma, const Mat& beta, const Mat& running_mean,
                       const Mat& running_var, double eps, Mode mode, BatchNormCache& c) {
  c.train = mode == Mode::train;
  if (c.train) {
    const double M = static_cast<double>(x.rows());
    c.batch_mean = x.colwise().mean();
    c.batch_var = (x.rowwise() - c.batch_mean).array().square().colwise().sum() / M;
    c.inv_std = (c.batch_var.array() + eps).rsqrt();
    c.xhat = (x.rowwise() - c.batch_mean).array().rowwise() * c.inv_std.array();
  } else {
    c.inv_std = (running_var.array() + eps).rsqrt();
    c.xhat = (x.rowwise() - RowVec(running_mean)).array().rowwise() * c.inv_std.array();
  }
  Mat y = c.xhat.array().rowwise() * RowVec(gamma).array();
  y.rowwise() += RowVec(beta);
  return y;
}

Mat batch_norm_backward(const Mat& dy, const Mat& gamma, const BatchNormCache& c, Mat& dgamma, Mat& dbeta) {
  dgamma += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  dbeta += dy.colwise().sum();
  const Mat dxhat = dy.array().rowwise() * RowVec(gamma).array();
  if (!c.train) return dxhat.array().rowwise() * c.inv_std.array();
  const double M = static_cast<double>(dy.rows());
  const RowVec sum_dxhat = dxhat.colwise().sum();
  const RowVec sum_dxhat_xhat = (dxhat.array() * c.xhat.array()).colwise().sum();
  Mat dx = (M * dxhat.array()).rowwise() - sum_dxhat.array();
  dx -= (c.xhat.array().rowwise() * sum_dxhat_xhat.array()).matrix();
  dx = dx.array().rowwise() * (c.inv_std.array() / M);
  return dx;
}

}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

std::vector<NamedTensor> named_parameters(ModelParams& p) { return collect_parameters<ModelParams, NamedTensor>(p); }
std::vector<ConstNamedTensor> named_parameters(const ModelParams& p) {
  return collect_parameters<const ModelParams, ConstNamedTensor>(p);
}
std::vector<NamedTensor> named_buffers(ModelParams& p) { return collect_buffers<ModelParams, NamedTensor>(p); }
std::vector<ConstNamedTensor> named_buffers(const ModelParams& p) {
  return collect_buffers<const ModelParams, ConstNamedTensor>(p);
}

std::size_t param_count(const ModelParams& params) {
  std::size_t n = 0;
  for (const auto& t : named_parameters(params)) n += static_cast<std::size_t>(t.tensor->size());
  return n;
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed, "init");
  const auto d = static_cast<Eigen::Index>(cfg.d_model);
  const auto l = static_cast<Eigen::Index>(cfg.patch.patch_len);
  const auto p = static_cast<Eigen::Index>(cfg.num_patches());
  const auto T = static_cast<Eigen::Index>(cfg.num_tokens());
  const auto k = static_cast<Eigen::Index>(cfg.n_dispatchers);
  const auto ff = static_cast<Eigen::Index>(cfg.d_ff);
  const auto S = static_cast<Eigen::Index>(cfg.horizon);

  ModelParams P;
  P.config = cfg;
  P.embedding.W = uniform_fan_in(rng, l, d, l);
  P.embedding.W_pos = normal_init(rng, T, d, 0.02);
  const bool dispatcher = cfg.attention_mode == AttentionMode::dispatcher;
  if (dispatcher && !cfg.per_layer_dispatchers) P.dispatchers = normal_init(rng, k, d, 0.02);
  P.layers.resize(cfg.n_layers);
  for (auto& L : P.layers) {
    if (dispatcher) {
      if (cfg.per_layer_dispatchers) L.dispatchers = normal_init(rng, k, d, 0.02);
      L.W_Q1 = uniform_fan_in(rng, d, d, d);
      L.W_K1 = uniform_fan_in(rng, d, d, d);
      L.W_V1 = uniform_fan_in(rng, d, d, d);
      L.W_Q2 = uniform_fan_in(rng, d, d, d);
      L.W_K2 = uniform_fan_in(rng, d, d, d);
      L.W_V2 = uniform_fan_in(rng, d, d, d);
    } else {
      L.W_Q = uniform_fan_in(rng, d, d, d);
      L.W_K = uniform_fan_in(rng, d, d, d);
      L.W_V = uniform_fan_in(rng, d, d, d);
    }
    L.W_O = uniform_fan_in(rng, d, d, d);
    L.ffn_W1 = uniform_fan_in(rng, d, ff, d);
    L.ffn_b1 = uniform_fan_in(rng, 1, ff, d);
    L.ffn_W2 = uniform_fan_in(rng, ff, d, ff);
    L.ffn_b2 = uniform_fan_in(rng, 1, d, ff);
    L.bn1_gamma = Mat::Ones(1, d);
    L.bn1_beta = Mat::Zero(1, d);
    L.bn2_gamma = Mat::Ones(1, d);
    L.bn2_beta = Mat::Zero(1, d);
    L.bn1_running_mean = Mat::Zero(1, d);
    L.bn1_running_var = Mat::Ones(1, d);
    L.bn2_running_mean = Mat::Zero(1, d);
    L.bn2_running_var = Mat::Ones(1, d);
  }
  P.head_W = uniform_fan_in(rng, p * d, S, p * d);
  P.head_b = uniform_fan_in(rng, 1, S, p * d);
  return P;
}

ModelParams zeros_like(const ModelParams& params) {
  ModelParams z = params;
  for (auto& t : named_parameters(z)) t.tensor->setZero();
  for (auto& t : named_buffers(z)) t.tensor->setZero();
  return z;
}

Mat encoder_block(const Mat& tokens, std::size_t batch, const LayerParams& layer, const Mat& dispatchers,
                  const ModelConfig& cfg, Mode mode, Rng* dropout_rng, LayerCache& c,
                  std::vector<AttentionRecord>* records) {
  const auto T = static_cast<Eigen::Index>(cfg.num_tokens());
  const auto k = static_cast<Eigen::Index>(cfg.n_dispatchers);
  const auto d = static_cast<Eigen::Index>(cfg.d_model);
  const auto B = static_cast<Eigen::Index>(batch);
  require_shape(tokens, B * T, d, "encoder block input");

  c.input = tokens;
  c.concat.resize(B * T, d);
  c.full.clear();
  c.agg.clear();
  c.dist.clear();

  if (cfg.attention_mode == AttentionMode::full) {
    const Mat mask = cfg.within_variate_only ? within_variate_mask(cfg.n_variates, cfg.num_patches()) : Mat();
    c.full.resize(batch);
    for (Eigen::Index b = 0; b < B; ++b) {
      auto& mc = c.full[static_cast<std::size_t>(b)];
      c.concat.middleRows(b * T, T) = mha_forward(tokens.middleRows(b * T, T), tokens.middleRows(b * T, T), layer.W_Q,
                                                  layer.W_K, layer.W_V, cfg.n_heads, mc,
                                                  cfg.within_variate_only ? &mask : nullptr);
    }
  } else {
    require_shape(dispatchers, k, d, "dispatchers");
    c.dispatcher_in = dispatchers;
    c.agg.resize(batch);
    c.dist.resize(batch);
    for (Eigen::Index b = 0; b < B; ++b) {
      auto& ac = c.agg[static_cast<std::size_t>(b)];
      auto& dc = c.dist[static_cast<std::size_t>(b)];
      const Mat updated = mha_forward(dispatchers, tokens.middleRows(b * T, T), layer.W_Q1, layer.W_K1, layer.W_V1,
                                      cfg.n_heads, ac);
      c.concat.middleRows(b * T, T) =
          mha_forward(tokens.middleRows(b * T, T), updated, layer.W_Q2, layer.W_K2, layer.W_V2, cfg.n_heads, dc);
    }
  }

  if (records) {
    for (std::size_t b = 0; b < batch; ++b) {
      LayerAttentionMaps maps;
      auto head_mean = [](const std::vector<Mat>& heads) {
        Mat m = heads.front();
        for (std::size_t j = 1; j < heads.size(); ++j) m += heads[j];
        return Mat(m / static_cast<double>(heads.size()));
      };
      if (cfg.attention_mode == AttentionMode::full) {
        maps.A_full = head_mean(c.full[b].A);
      } else {
        maps.A_agg = head_mean(c.agg[b].A);
        maps.A_dist = head_mean(c.dist[b].A);
      }
      (*records)[b].layers.push_back(std::move(maps));
    }
  }

  c.r1 = tokens + c.concat * layer.W_O;
  c.Y = batch_norm_forward(c.r1, layer.bn1_gamma, layer.bn1_beta, layer.bn1_running_mean, layer.bn1_running_var,
                           cfg.bn_eps, mode, c.bn1);

  c.u = c.Y * layer.ffn_W1;
  c.u.rowwise() += RowVec(layer.ffn_b1);
  c.g = c.u.unaryExpr([](double v) { return gelu(v); });
  if (mode == Mode::train && cfg.dropout > 0.0) {
    if (!dropout_rng) throw std::invalid_argument("encoder block: train-mode dropout needs an RNG");
    const double keep = 1.0 - cfg.dropout;
    c.drop_mask.resize(c.g.rows(), c.g.cols());
    for (Eigen::Index i = 0; i < c.drop_mask.size(); ++i) {
      c.drop_mask.data()[i] = dropout_rng->uniform() < cfg.dropout ? 0.0 : 1.0 / keep;
    }
    c.gd = c.g.cwiseProduct(c.drop_mask);
  } else {
    c.drop_mask.resize(0, 0);
    c.gd = c.g;
  }
  c.r2 = c.Y + c.gd * layer.ffn_W2;
  c.r2.rowwise() += RowVec(layer.ffn_b2);
  return batch_norm_forward(c.r2, layer.bn2_gamma, layer.bn2_beta, layer.bn2_running_mean, layer.bn2_running_var,
                            cfg.bn_eps, mode, c.bn2);
}

namespace {

// Returns d(loss)/d(block input); accumulates parameter gradients.
Mat encoder_block_backward(const Mat& d_out, const LayerParams& layer, const ModelConfig& cfg, const LayerCache& c,
                           LayerParams& g, Mat& d_dispatchers) {
  const auto T = static_cast<Eigen::Index>(cfg.num_tokens());
  const auto B = d_out.rows() / T;

  const Mat d_r2 = batch_norm_backward(d_out, layer.bn2_gamma, c.bn2, g.bn2_gamma, g.bn2_beta);
  g.ffn_W2.noalias() += c.gd.transpose() * d_r2;
  g.ffn_b2 += d_r2.colwise().sum();
  Mat d_g = d_r2 * layer.ffn_W2.transpose();
  if (c.drop_mask.size() > 0) d_g = d_g.cwiseProduct(c.drop_mask);
  const Mat d_u = d_g.cwiseProduct(c.u.unaryExpr([](double v) { return gelu_grad(v); }));
  g.ffn_W1.noalias() += c.Y.transpose() * d_u;
  g.ffn_b1 += d_u.colwise().sum();
  const Mat d_Y = d_r2 + d_u * layer.ffn_W1.transpose();

  const Mat d_r1 = batch_norm_backward(d_Y, layer.bn1_gamma, c.bn1, g.bn1_gamma, g.bn1_beta);
  g.W_O.noalias() += c.concat.transpose() * d_r1;
  const Mat d_concat = d_r1 * layer.W_O.transpose();

  Mat d_in = d_r1;
  Mat dXq, dXkv;
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto sb = static_cast<std::size_t>(b);
    if (cfg.attention_mode == AttentionMode::full) {
      mha_backward(c.full[sb], d_concat.middleRows(b * T, T), layer.W_Q, layer.W_K, layer.W_V, cfg.n_heads, g.W_Q,
                   g.W_K, g.W_V, dXq, dXkv);
      d_in.middleRows(b * T, T) += dXq + dXkv;
    } else {
      mha_backward(c.dist[sb], d_concat.middleRows(b * T, T), layer.W_Q2, layer.W_K2, layer.W_V2, cfg.n_heads,
                   g.W_Q2, g.W_K2, g.W_V2, dXq, dXkv);
      d_in.middleRows(b * T, T) += dXq;
      const Mat d_updated = dXkv;
      mha_backward(c.agg[sb], d_updated, layer.W_Q1, layer.W_K1, layer.W_V1, cfg.n_heads, g.W_Q1, g.W_K1, g.W_V1,
                   dXq, dXkv);
      d_dispatchers += dXq;
      d_in.middleRows(b * T, T) += dXkv;
    }
  }
  return d_in;
}

}  // namespace

ForwardOutput forward(const ModelParams& params, const Mat& x, Mode mode, Rng* dropout_rng, ForwardCache* cache) {
  const ModelConfig& cfg = params.config;
  const auto N = static_cast<Eigen::Index>(cfg.n_variates);
  const auto L = static_cast<Eigen::Index>(cfg.lookback);
  const auto p = static_cast<Eigen::Index>(cfg.num_patches());
  const auto d = static_cast<Eigen::Index>(cfg.d_model);
  if (x.cols() != L || x.rows() == 0 || x.rows() % N != 0) {
    throw ShapeError("forward: input " + shape_str(x) + " is not [(B*" + std::to_string(N) + ") x " +
                     std::to_string(L) + "]");
  }
  if (params.layers.size() != cfg.n_layers) throw ShapeError("forward: layer count does not match config");
  const auto B = x.rows() / N;

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.batch = static_cast<std::size_t>(B);
  c.mode = mode;

  Mat xn = x;
  c.norm_mean = Vec::Zero(x.rows());
  c.norm_scale = Vec::Ones(x.rows());
  if (cfg.instance_norm) {
    // Same arithmetic as instance_normalize(), row by row.
    constexpr double eps = 1e-5;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double mu = x.row(r).mean();
      const double var = (x.row(r).array() - mu).square().mean();
      c.norm_mean(r) = mu;
      c.norm_scale(r) = std::sqrt(var + eps * eps);
      xn.row(r) = (x.row(r).array() - mu) / c.norm_scale(r);
    }
  }

  c.patches = segment_patches_rows(xn, cfg.patch);
  Mat h = embed_patch_rows(c.patches, params.embedding);

  ForwardOutput out;
  const bool capture = mode == Mode::eval && cfg.capture_attention;
  if (capture) out.records.resize(static_cast<std::size_t>(B));
  c.layers.resize(cfg.n_layers);
  for (std::size_t i = 0; i < cfg.n_layers; ++i) {
    const Mat& D = cfg.per_layer_dispatchers ? params.layers[i].dispatchers : params.dispatchers;
    h = encoder_block(h, static_cast<std::size_t>(B), params.layers[i], D, cfg, mode, dropout_rng, c.layers[i],
                      capture ? &out.records : nullptr);
    for (const auto* group : {&c.layers[i].full, &c.layers[i].agg, &c.layers[i].dist}) {
      for (const auto& mc : *group) {
        for (const auto& A : mc.A) out.attn_map_elements += static_cast<std::size_t>(A.size());
      }
    }
  }

  // Per-variate concatenation of the p token vectors is a reshape of the row-major token block.
  c.Z = ConstMatMap(h.data(), B * N, p * d);
  Mat pred = c.Z * params.head_W;
  pred.rowwise() += RowVec(params.head_b);
  for (Eigen::Index r = 0; r < pred.rows(); ++r) pred.row(r) = pred.row(r).array() * c.norm_scale(r) + c.norm_mean(r);
  out.pred = std::move(pred);
  return out;
}

void backward(const ModelParams& params, const ForwardCache& c, const Mat& d_pred, ModelParams& grads) {
  const ModelConfig& cfg = params.config;
  const auto N = static_cast<Eigen::Index>(cfg.n_variates);
  const auto T = static_cast<Eigen::Index>(cfg.num_tokens());
  const auto d = static_cast<Eigen::Index>(cfg.d_model);
  const auto B = static_cast<Eigen::Index>(c.batch);
  require_shape(d_pred, B * N, static_cast<Eigen::Index>(cfg.horizon), "backward: d_pred");

  Mat d_norm = d_pred;
  for (Eigen::Index r = 0; r < d_norm.rows(); ++r) d_norm.row(r) *= c.norm_scale(r);
  grads.head_W.noalias() += c.Z.transpose() * d_norm;
  grads.head_b += d_norm.colwise().sum();
  const Mat dZ = d_norm * params.head_W.transpose();
  Mat dh = ConstMatMap(dZ.data(), B * T, d);

  for (std::size_t i = cfg.n_layers; i-- > 0;) {
    Mat& d_disp = cfg.per_layer_dispatchers ? grads.layers[i].dispatchers : grads.dispatchers;
    if (cfg.attention_mode == AttentionMode::dispatcher && d_disp.size() == 0) {
      d_disp = Mat::Zero(static_cast<Eigen::Index>(cfg.n_dispatchers), d);
    }
    dh = encoder_block_backward(dh, params.layers[i], cfg, c.layers[i], grads.layers[i], d_disp);
  }

  grads.embedding.W.noalias() += c.patches.transpose() * dh;
  for (Eigen::Index b = 0; b < B; ++b) grads.embedding.W_pos += dh.middleRows(b * T, T);
}

void update_running_stats(ModelParams& params, const ForwardCache& cache, double momentum) {
  if (cache.mode != Mode::train) return;
  for (std::size_t i = 0; i < params.layers.size() && i < cache.layers.size(); ++i) {
    auto& L = params.layers[i];
    const auto& lc = cache.layers[i];
    auto update = [momentum](Mat& rm, Mat& rv, const BatchNormCache& bc, Eigen::Index M) {
      const double unbias = M > 1 ? static_cast<double>(M) / static_cast<double>(M - 1) : 1.0;
      rm = (1.0 - momentum) * rm + momentum * Mat(bc.batch_mean);
      rv = (1.0 - momentum) * rv + momentum * unbias * Mat(bc.batch_var);
    };
    update(L.bn1_running_mean, L.bn1_running_var, lc.bn1, lc.r1.rows());
    update(L.bn2_running_mean, L.bn2_running_var, lc.bn2, lc.r2.rows());
  }
}

}  // namespace unitst
