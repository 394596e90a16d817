#pragma once

#include "unitst/data.hpp"
#include "unitst/model.hpp"

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace unitst {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mean of squared differences over every element.
double mse_loss(const Mat& pred, const Mat& target);
// d(mse_loss)/d(pred).
Mat mse_loss_grad(const Mat& pred, const Mat& target);

struct TrainConfig {
  double lr = 5e-4;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  std::uint64_t seed = 2024;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double bn_momentum = 0.1;
  double weight_decay = 0.0;   // off unless set
  double grad_clip_norm = 0.0; // off unless set
  double lr_decay = 1.0;       // epoch e runs at lr * lr_decay^(e-1); 1 is a constant rate
  std::size_t max_batches_per_epoch = 0;  // 0: every batch
  std::size_t eval_batch_size = 256;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  bool stopped_early = false;
};

class Adam {
 public:
  Adam(const ModelParams& params, const TrainConfig& cfg);
  void step(ModelParams& params, const ModelParams& grads);
  std::size_t steps() const { return t_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_, beta1_, beta2_, eps_, weight_decay_;
  std::size_t t_ = 0;
  std::vector<Mat> m_, v_;
};

struct TrainResult {
  ModelParams best;
  TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Adam on seeded shuffled mini-batches; validation MSE (eval mode) after every epoch drives
// early stopping, and the parameters of the best validation epoch are returned.
TrainResult train(ModelParams params, const WindowSet& train_set, const WindowSet& val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

// One optimisation pass helper used by train(): loss of the batch before the update.
double train_step(ModelParams& params, ModelParams& grads, Adam& opt, const Mat& x, const Mat& y,
                  const TrainConfig& cfg, Rng& dropout_rng);

// Central difference of `loss` w.r.t. every element of `tensor` (restored afterwards).
Mat numeric_gradient(const std::function<double()>& loss, Mat& tensor, double step);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  Eigen::Index worst_index = 0;
  std::vector<std::pair<std::string, double>> per_tensor;  // max relative error per tensor
};

// Element-wise |a - n| / max(|a|, |n|, floor); pairs that are both below `floor` are compared
// on the absolute scale of `floor`. Central differences at step 1e-5 on an O(1) loss carry ~1e-11 of
// round-off, so entries far below 1e-6 cannot be resolved relatively.
double relative_error(double analytic, double numeric, double floor = 1e-6);

// Analytic gradient of the train-mode MSE vs central finite differences, over every parameter.
GradCheckResult grad_check(const ModelParams& params, const Mat& x, const Mat& y, double step = 1e-5);

// Tiny configuration used for gradient checking: N=3, p=4 (L=16, l=s=4), d=8, h=2, k=2,
// one layer, S=4, dropout off.
ModelConfig tiny_grad_check_config(AttentionMode mode = AttentionMode::dispatcher);

}  // namespace unitst
