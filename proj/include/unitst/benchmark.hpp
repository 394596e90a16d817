#pragma once

#include "unitst/data.hpp"
#include "unitst/model.hpp"
#include "unitst/training.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace unitst {

struct MemReport {
  ModelConfig config;
  std::size_t batch = 1;
  AttentionMode mode = AttentionMode::dispatcher;
  std::uint64_t attn_map_elements = 0;
  std::uint64_t attn_map_bytes = 0;  // elements * sizeof(double)
  std::uint64_t param_count = 0;
  std::optional<double> peak_rss_bytes;
  std::optional<double> seconds_per_forward;
  std::optional<double> test_mse;
  std::optional<std::string> failure;

  nlohmann::json to_json() const;
};

// Closed-form attention-map entries of one forward pass over `batch` samples:
// B * layers * h * 2kNp (dispatcher) or B * layers * h * (Np)^2 (full).
std::uint64_t attention_map_elements(const ModelConfig& cfg, std::size_t batch);
std::uint64_t closed_form_param_count(const ModelConfig& cfg);

MemReport count_attention_memory(const ModelConfig& cfg, std::size_t batch);

// Wall time of eval-mode forwards on random input; fills seconds_per_forward and peak_rss_bytes.
void measure_forward(MemReport& report, std::size_t repeats, std::uint64_t seed);

struct AblationOptions {
  std::size_t batch = 32;             // batch used for the memory count
  std::uint64_t max_attn_elements = 2'000'000'000ULL;  // larger counts are reported as exhausted
  bool measure = true;
  std::size_t measure_repeats = 3;
};

// Identical configs differing only in attention mode: counts, optional timing, short training
// and test MSE. `ds` must be standardised and split. Failures are recorded, never thrown.
std::vector<MemReport> bench_ablation(const ModelConfig& cfg, const TimeSeriesDataset& ds,
                                      const TrainConfig& train_cfg, const std::vector<AttentionMode>& modes,
                                      const AblationOptions& opts = {});

std::string ablation_table(const std::vector<MemReport>& reports);

}  // namespace unitst
