#include "unitst/evaluation.hpp"

#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace unitst {

Metrics metrics_from_predictions(const Mat& pred, const Mat& target, std::size_t n_variates) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ShapeError("metrics: prediction " + shape_str(pred) + " vs target " + shape_str(target));
  }
  const auto N = static_cast<Eigen::Index>(n_variates);
  if (N == 0 || pred.rows() % N != 0) throw ShapeError("metrics: rows are not a multiple of N");
  Metrics m;
  const Mat diff = pred - target;
  m.mse = diff.squaredNorm() / static_cast<double>(diff.size());
  m.mae = diff.cwiseAbs().sum() / static_cast<double>(diff.size());
  m.n_windows = static_cast<std::size_t>(pred.rows() / N);
  m.per_variate_mse = Vec::Zero(N);
  for (Eigen::Index r = 0; r < diff.rows(); ++r) m.per_variate_mse(r % N) += diff.row(r).squaredNorm();
  m.per_variate_mse /= static_cast<double>(m.n_windows * static_cast<std::size_t>(diff.cols()));
  return m;
}

Metrics evaluate(const ModelParams& params, const WindowSet& windows, std::size_t batch_size) {
  if (windows.empty()) throw DataError("evaluate: empty window set");
  if (batch_size == 0) throw std::invalid_argument("evaluate: batch size must be >= 1");
  const auto N = static_cast<Eigen::Index>(windows.num_variates());
  double sq = 0.0;
  double ab = 0.0;
  Vec per_var = Vec::Zero(N);
  std::vector<std::size_t> idx;
  Mat x, y;
  for (std::size_t begin = 0; begin < windows.size(); begin += batch_size) {
    const std::size_t end = std::min(windows.size(), begin + batch_size);
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    windows.gather(idx, x, y);
    const Mat diff = forward(params, x, Mode::eval).pred - y;
    sq += diff.squaredNorm();
    ab += diff.cwiseAbs().sum();
    for (Eigen::Index r = 0; r < diff.rows(); ++r) per_var(r % N) += diff.row(r).squaredNorm();
  }
  Metrics m;
  m.n_windows = windows.size();
  const double count = static_cast<double>(windows.size()) * static_cast<double>(N) *
                       static_cast<double>(windows.horizon());
  m.mse = sq / count;
  m.mae = ab / count;
  m.per_variate_mse = per_var / (static_cast<double>(windows.size()) * static_cast<double>(windows.horizon()));
  return m;
}

Protocol parse_protocol(const std::string& s) {
  if (s == "long_term" || s == "long-term") return Protocol::long_term;
  if (s == "short_term" || s == "short-term") return Protocol::short_term;
  throw std::invalid_argument("unknown protocol '" + s + "' (expected long_term|short_term)");
}

std::string to_string(Protocol p) { return p == Protocol::long_term ? "long_term" : "short_term"; }

std::vector<std::size_t> protocol_horizons(Protocol p) {
  if (p == Protocol::long_term) return {96, 192, 336, 720};
  return {12, 24, 48, 96};
}

void EvalReport::finalize() {
  double s_mse = 0.0, s_mae = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.error) continue;
    s_mse += r.mse;
    s_mae += r.mae;
    ++n;
  }
  avg_mse = n ? s_mse / static_cast<double>(n) : std::nan("");
  avg_mae = n ? s_mae / static_cast<double>(n) : std::nan("");
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["dataset"] = dataset;
  j["config_hash"] = config_hash;
  j["seeds"] = seeds;
  auto& arr = j["horizons"] = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row{{"horizon", r.horizon}, {"n_windows", r.n_windows}};
    if (r.error) {
      row["error"] = *r.error;
    } else {
      row["mse"] = r.mse;
      row["mae"] = r.mae;
      row["seed_mse"] = r.seed_mse;
      row["seed_mae"] = r.seed_mae;
    }
    arr.push_back(std::move(row));
  }
  if (std::isfinite(avg_mse)) j["avg"] = {{"mse", avg_mse}, {"mae", avg_mae}};
  return j;
}

std::string EvalReport::to_table() const {
  std::ostringstream os;
  os << std::left << std::setw(12) << (dataset.empty() ? "Dataset" : dataset) << std::setw(8) << "S"
     << std::right << std::setw(10) << "MSE" << std::setw(10) << "MAE" << "\n";
  os << std::fixed << std::setprecision(3);
  for (const auto& r : rows) {
    os << std::left << std::setw(12) << "" << std::setw(8) << r.horizon << std::right;
    if (r.error) {
      os << std::setw(20) << "failed" << "  (" << *r.error << ")";
    } else {
      os << std::setw(10) << r.mse << std::setw(10) << r.mae;
    }
    os << "\n";
  }
  os << std::left << std::setw(12) << "" << std::setw(8) << "Avg" << std::right;
  if (std::isfinite(avg_mse)) {
    os << std::setw(10) << avg_mse << std::setw(10) << avg_mae;
  } else {
    os << std::setw(20) << "n/a";
  }
  os << "\n";
  return os.str();
}

EvalReport run_protocol(const TimeSeriesDataset& ds, Protocol protocol, const ModelConfig& base,
                        const TrainConfig& train_cfg, const ProtocolOptions& opts, const EpochCallback& on_epoch) {
  if (opts.seeds.empty()) throw std::invalid_argument("run_protocol: at least one seed required");
  EvalReport report;
  report.dataset = opts.dataset_name;
  report.seeds = opts.seeds;
  const auto horizons = opts.horizons.empty() ? protocol_horizons(protocol) : opts.horizons;
  for (std::size_t S : horizons) {
    HorizonRow row;
    row.horizon = S;
    try {
      ModelConfig cfg = base;
      cfg.n_variates = ds.num_variates();
      cfg.lookback = opts.lookback;
      cfg.horizon = S;
      cfg.validate();
      const WindowSet tr = make_windows(ds, Split::train, cfg.lookback, S);
      const WindowSet va = make_windows(ds, Split::val, cfg.lookback, S);
      const WindowSet te = make_windows(ds, Split::test, cfg.lookback, S);
      for (std::uint64_t seed : opts.seeds) {
        TrainConfig tc = train_cfg;
        tc.seed = seed;
        auto result = train(init_params(cfg, seed), tr, va, tc, on_epoch);
        const Metrics m = evaluate(result.best, te, tc.eval_batch_size);
        row.seed_mse.push_back(m.mse);
        row.seed_mae.push_back(m.mae);
        row.n_windows = m.n_windows;
      }
      const double n = static_cast<double>(row.seed_mse.size());
      row.mse = std::accumulate(row.seed_mse.begin(), row.seed_mse.end(), 0.0) / n;
      row.mae = std::accumulate(row.seed_mae.begin(), row.seed_mae.end(), 0.0) / n;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    report.rows.push_back(std::move(row));
  }
  report.finalize();
  return report;
}

}  // namespace unitst
