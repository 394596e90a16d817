#include "unitst/training.hpp"

#include "unitst/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

namespace unitst {

double mse_loss(const Mat& pred, const Mat& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ShapeError("mse_loss: prediction " + shape_str(pred) + " vs target " + shape_str(target));
  }
  if (pred.size() == 0) throw ShapeError("mse_loss: empty input");
  return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

Mat mse_loss_grad(const Mat& pred, const Mat& target) {
  return (pred - target) * (2.0 / static_cast<double>(pred.size()));
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
  if (!(lr >= 0.0)) fail("lr must be non-negative");
  if (batch_size == 0) fail("batch size must be >= 1");
  if (max_epochs == 0) fail("max_epochs must be >= 1");
  if (patience == 0) fail("patience must be >= 1");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) fail("adam betas must lie in [0, 1)");
  if (!(bn_momentum >= 0 && bn_momentum <= 1)) fail("bn momentum must lie in [0, 1]");
  if (eval_batch_size == 0) fail("eval batch size must be >= 1");
  if (!(lr_decay > 0 && lr_decay <= 1)) fail("lr decay must lie in (0, 1]");
}

Adam::Adam(const ModelParams& params, const TrainConfig& cfg)
    : lr_(cfg.lr), beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.adam_eps), weight_decay_(cfg.weight_decay) {
  for (const auto& t : named_parameters(params)) {
    m_.push_back(Mat::Zero(t.tensor->rows(), t.tensor->cols()));
    v_.push_back(Mat::Zero(t.tensor->rows(), t.tensor->cols()));
  }
}

void Adam::step(ModelParams& params, const ModelParams& grads) {
  auto P = named_parameters(params);
  auto G = named_parameters(grads);
  if (P.size() != m_.size() || G.size() != P.size()) throw std::logic_error("Adam: parameter set changed");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < P.size(); ++i) {
    Mat& w = *P[i].tensor;
    Mat g = *G[i].tensor;
    if (weight_decay_ > 0) g += weight_decay_ * w;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    w.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

double train_step(ModelParams& params, ModelParams& grads, Adam& opt, const Mat& x, const Mat& y,
                  const TrainConfig& cfg, Rng& dropout_rng) {
  ForwardCache cache;
  const ForwardOutput out = forward(params, x, Mode::train, &dropout_rng, &cache);
  const double loss = mse_loss(out.pred, y);
  if (!std::isfinite(loss)) return loss;
  for (auto& t : named_parameters(grads)) t.tensor->setZero();
  backward(params, cache, mse_loss_grad(out.pred, y), grads);
  if (cfg.grad_clip_norm > 0) {
    double sq = 0.0;
    for (const auto& t : named_parameters(std::as_const(grads))) sq += t.tensor->squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > cfg.grad_clip_norm) {
      for (auto& t : named_parameters(grads)) *t.tensor *= cfg.grad_clip_norm / norm;
    }
  }
  opt.step(params, grads);
  update_running_stats(params, cache, cfg.bn_momentum);
  return loss;
}

TrainResult train(ModelParams params, const WindowSet& train_set, const WindowSet& val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty() || val_set.empty()) throw TrainingError("train: train and validation window sets must be non-empty");
  if (train_set.num_variates() != params.config.n_variates || train_set.lookback() != params.config.lookback ||
      train_set.horizon() != params.config.horizon) {
    throw TrainingError("train: window shapes do not match the model config");
  }

  Rng shuffle_rng(cfg.seed, "shuffle");
  Rng dropout_rng(cfg.seed, "dropout");
  Adam opt(params, cfg);
  ModelParams grads = zeros_like(params);

  TrainResult result{params, {}};
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  std::vector<std::size_t> order(train_set.size());
  Mat x, y;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    opt.set_lr(cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(epoch - 1)));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());

    std::size_t n_batches = (order.size() + cfg.batch_size - 1) / cfg.batch_size;
    if (cfg.max_batches_per_epoch > 0) n_batches = std::min(n_batches, cfg.max_batches_per_epoch);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t bi = 0; bi < n_batches; ++bi) {
      const std::size_t begin = bi * cfg.batch_size;
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      train_set.gather(std::span<const std::size_t>(order).subspan(begin, end - begin), x, y);
      double loss = 0.0;
      try {
        loss = train_step(params, grads, opt, x, y, cfg, dropout_rng);
      } catch (const std::domain_error& e) {
        throw TrainingError("train: non-finite values at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(bi + 1) + ": " + e.what());
      }
      if (!std::isfinite(loss)) {
        throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(bi + 1));
      }
      loss_sum += loss * static_cast<double>(end - begin);
      seen += end - begin;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.val_loss = evaluate(params, val_set, cfg.eval_batch_size).mse;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val_loss < best) {
      best = rec.val_loss;
      since_best = 0;
      result.best = params;
      result.history.best_epoch = epoch;
      result.history.best_val_loss = best;
    } else if (++since_best >= cfg.patience) {
      result.history.stopped_early = true;
      break;
    }
  }
  return result;
}

Mat numeric_gradient(const std::function<double()>& loss, Mat& tensor, double step) {
  Mat g(tensor.rows(), tensor.cols());
  for (Eigen::Index i = 0; i < tensor.size(); ++i) {
    const double orig = tensor.data()[i];
    tensor.data()[i] = orig + step;
    const double up = loss();
    tensor.data()[i] = orig - step;
    const double down = loss();
    tensor.data()[i] = orig;
    g.data()[i] = (up - down) / (2.0 * step);
  }
  return g;
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult grad_check(const ModelParams& params, const Mat& x, const Mat& y, double step) {
  ModelParams work = params;
  // A fresh identically-seeded stream per forward keeps any dropout mask fixed across evaluations.
  auto loss = [&]() {
    Rng rng(0, "grad-check-dropout");
    return mse_loss(forward(work, x, Mode::train, &rng).pred, y);
  };

  ForwardCache cache;
  Rng rng(0, "grad-check-dropout");
  const Mat pred = forward(work, x, Mode::train, &rng, &cache).pred;
  ModelParams grads = zeros_like(work);
  backward(work, cache, mse_loss_grad(pred, y), grads);

  GradCheckResult res;
  auto P = named_parameters(work);
  auto G = named_parameters(std::as_const(grads));
  for (std::size_t i = 0; i < P.size(); ++i) {
    const Mat numeric = numeric_gradient(loss, *P[i].tensor, step);
    const Mat& analytic = *G[i].tensor;
    double worst = 0.0;
    for (Eigen::Index j = 0; j < numeric.size(); ++j) {
      const double e = relative_error(analytic.data()[j], numeric.data()[j]);
      if (e > worst) worst = e;
      if (e > res.max_rel_error) {
        res.max_rel_error = e;
        res.worst_tensor = P[i].name;
        res.worst_index = j;
      }
    }
    res.per_tensor.emplace_back(P[i].name, worst);
  }
  return res;
}

ModelConfig tiny_grad_check_config(AttentionMode mode) {
  ModelConfig c;
  c.n_variates = 3;
  c.lookback = 16;
  c.horizon = 4;
  c.patch = PatchConfig{4, 4, false};
  c.d_model = 8;
  c.n_heads = 2;
  c.n_dispatchers = 2;
  c.n_layers = 1;
  c.d_ff = 16;
  c.dropout = 0.0;
  c.attention_mode = mode;
  return c;
}

}  // namespace unitst
