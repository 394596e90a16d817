#include "unitst/benchmark.hpp"

#include "unitst/evaluation.hpp"

#include <sys/resource.h>

#include <chrono>
#include <iomanip>
#include <new>
#include <sstream>

namespace unitst {

std::uint64_t attention_map_elements(const ModelConfig& cfg, std::size_t batch) {
  const std::uint64_t T = cfg.num_tokens();
  const std::uint64_t per_layer = cfg.attention_mode == AttentionMode::dispatcher
                                      ? 2ULL * cfg.n_dispatchers * T
                                      : T * T;
  return static_cast<std::uint64_t>(batch) * cfg.n_layers * cfg.n_heads * per_layer;
}

std::uint64_t closed_form_param_count(const ModelConfig& cfg) {
  const std::uint64_t d = cfg.d_model, l = cfg.patch.patch_len, T = cfg.num_tokens(), k = cfg.n_dispatchers,
                      ff = cfg.d_ff, p = cfg.num_patches(), S = cfg.horizon, layers = cfg.n_layers;
  const bool disp = cfg.attention_mode == AttentionMode::dispatcher;
  std::uint64_t n = l * d + T * d;
  if (disp) n += (cfg.per_layer_dispatchers ? layers : 1) * k * d;
  const std::uint64_t attn = (disp ? 6 : 3) * d * d + d * d;
  const std::uint64_t ffn = d * ff + ff + ff * d + d;
  n += layers * (attn + ffn + 4 * d);
  n += p * d * S + S;
  return n;
}

MemReport count_attention_memory(const ModelConfig& cfg, std::size_t batch) {
  cfg.validate();
  MemReport r;
  r.config = cfg;
  r.batch = batch;
  r.mode = cfg.attention_mode;
  r.attn_map_elements = attention_map_elements(cfg, batch);
  r.attn_map_bytes = r.attn_map_elements * sizeof(double);
  r.param_count = closed_form_param_count(cfg);
  return r;
}

void measure_forward(MemReport& report, std::size_t repeats, std::uint64_t seed) {
  const ModelParams params = init_params(report.config, seed);
  Rng rng(seed, "bench-input");
  Mat x(static_cast<Eigen::Index>(report.batch * report.config.n_variates),
        static_cast<Eigen::Index>(report.config.lookback));
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < repeats; ++i) (void)forward(params, x, Mode::eval);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report.seconds_per_forward = secs / static_cast<double>(std::max<std::size_t>(repeats, 1));
  rusage usage{};
  if (getrusage(RUSAGE_SELF, &usage) == 0) report.peak_rss_bytes = static_cast<double>(usage.ru_maxrss) * 1024.0;
}

nlohmann::json MemReport::to_json() const {
  nlohmann::json j{{"mode", to_string(mode)},
                   {"N", config.n_variates},
                   {"p", config.num_patches()},
                   {"d", config.d_model},
                   {"h", config.n_heads},
                   {"k", config.n_dispatchers},
                   {"n_layers", config.n_layers},
                   {"B", batch},
                   {"attn_map_elements", attn_map_elements},
                   {"attn_map_bytes", attn_map_bytes},
                   {"param_count", param_count}};
  if (peak_rss_bytes) j["peak_rss_bytes"] = *peak_rss_bytes;
  if (seconds_per_forward) j["seconds_per_forward"] = *seconds_per_forward;
  if (test_mse) j["test_mse"] = *test_mse;
  if (failure) j["failure"] = *failure;
  return j;
}

std::vector<MemReport> bench_ablation(const ModelConfig& cfg, const TimeSeriesDataset& ds,
                                      const TrainConfig& train_cfg, const std::vector<AttentionMode>& modes,
                                      const AblationOptions& opts) {
  std::vector<MemReport> out;
  for (AttentionMode mode : modes) {
    ModelConfig c = cfg;
    c.attention_mode = mode;
    c.within_variate_only = false;
    c.n_variates = ds.num_variates();
    MemReport r = count_attention_memory(c, opts.batch);
    if (r.attn_map_elements > opts.max_attn_elements) {
      r.failure = "resource-exhausted: " + std::to_string(r.attn_map_elements) +
                  " attention-map entries exceed the budget of " + std::to_string(opts.max_attn_elements);
      out.push_back(std::move(r));
      continue;
    }
    try {
      const WindowSet tr = make_windows(ds, Split::train, c.lookback, c.horizon);
      const WindowSet va = make_windows(ds, Split::val, c.lookback, c.horizon);
      const WindowSet te = make_windows(ds, Split::test, c.lookback, c.horizon);
      auto result = train(init_params(c, train_cfg.seed), tr, va, train_cfg);
      r.test_mse = evaluate(result.best, te, train_cfg.eval_batch_size).mse;
      if (opts.measure) measure_forward(r, opts.measure_repeats, train_cfg.seed);
    } catch (const std::bad_alloc&) {
      r.failure = "resource-exhausted: out of memory";
    } catch (const std::exception& e) {
      r.failure = e.what();
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string ablation_table(const std::vector<MemReport>& reports) {
  std::ostringstream os;
  os << std::left << std::setw(18) << "Model" << std::right << std::setw(10) << "MSE" << std::setw(18)
     << "Attn entries" << std::setw(14) << "Attn MiB" << std::setw(12) << "Params" << "\n";
  for (const auto& r : reports) {
    os << std::left << std::setw(18) << (r.mode == AttentionMode::dispatcher ? "w/ dispatchers" : "w/o dispatchers")
       << std::right;
    if (r.failure && !r.test_mse) {
      os << std::setw(10) << "OOM";
    } else if (r.test_mse) {
      os << std::setw(10) << std::fixed << std::setprecision(3) << *r.test_mse;
    } else {
      os << std::setw(10) << "-";
    }
    os << std::setw(18) << r.attn_map_elements << std::setw(14) << std::fixed << std::setprecision(2)
       << static_cast<double>(r.attn_map_bytes) / (1024.0 * 1024.0) << std::setw(12) << r.param_count << "\n";
  }
  return os.str();
}

}  // namespace unitst
