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

struct Metrics {
  double mse = 0.0;
  double mae = 0.0;
  std::size_t n_windows = 0;
  Vec per_variate_mse;
};

// Eval-mode forward over every window, on the scale of the windows (dataset-standardised).
// Throws DataError on an empty set.
Metrics evaluate(const ModelParams& params, const WindowSet& windows, std::size_t batch_size = 256);

// Metric accumulation for precomputed predictions, [(B*N) x S] each.
Metrics metrics_from_predictions(const Mat& pred, const Mat& target, std::size_t n_variates);

enum class Protocol { long_term, short_term };
Protocol parse_protocol(const std::string& s);
std::string to_string(Protocol p);
std::vector<std::size_t> protocol_horizons(Protocol p);

struct HorizonRow {
  std::size_t horizon = 0;
  double mse = 0.0;
  double mae = 0.0;
  std::size_t n_windows = 0;
  std::vector<double> seed_mse;
  std::vector<double> seed_mae;
  std::optional<std::string> error;
};

struct EvalReport {
  std::string dataset;
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  std::vector<HorizonRow> rows;
  double avg_mse = 0.0;
  double avg_mae = 0.0;

  // Recomputes the Avg row as the arithmetic mean of the successful horizon rows.
  void finalize();
  nlohmann::json to_json() const;
  std::string to_table() const;
};

struct ProtocolOptions {
  std::size_t lookback = 96;
  std::vector<std::uint64_t> seeds{2024};
  std::vector<std::size_t> horizons;  // empty: the protocol's horizons
  std::string dataset_name;
};

// Trains and tests one model per horizon and seed. `ds` must be standardised and split.
// A failing horizon is recorded in its row and the remaining horizons still run.
EvalReport run_protocol(const TimeSeriesDataset& ds, Protocol protocol, const ModelConfig& base,
                        const TrainConfig& train_cfg, const ProtocolOptions& opts,
                        const EpochCallback& on_epoch = {});

}  // namespace unitst
