#include "unitst/cli.hpp"

#include "unitst/analysis.hpp"
#include "unitst/benchmark.hpp"
#include "unitst/checkpoint.hpp"
#include "unitst/config.hpp"
#include "unitst/data.hpp"
#include "unitst/evaluation.hpp"
#include "unitst/model.hpp"
#include "unitst/training.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace unitst {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flags shared by the model-building subcommands. Only flags actually given override the
// config file.
struct CommonFlags {
  std::string config_path;
  std::optional<std::string> data, out_dir, date_column, split, seeds, attention_mode, protocol;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> horizon, lookback, patch_len, stride, dispatchers, layers, d_model, heads, batch_size,
      d_ff, epochs, patience, max_batches;
  std::optional<double> lr, lr_decay, dropout;
  std::optional<bool> pad_last, instance_norm;

  void attach(CLI::App& app, bool with_data = true) {
    app.add_option("--config", config_path, "key = value config file (flags take precedence)");
    if (with_data) {
      app.add_option("--data", data, "dataset CSV");
      app.add_option("--date-column", date_column, "name of the date column in the CSV");
      app.add_option("--split", split, "ratio:TRAIN,VAL or explicit:B0,B1,B2,B3");
    }
    app.add_option("--out-dir", out_dir, "output directory");
    app.add_option("--seed", seed, "single seed");
    app.add_option("--seeds", seeds, "comma-separated seeds");
    app.add_option("--horizon", horizon, "forecast horizon S");
    app.add_option("--lookback", lookback, "lookback L (default 96)");
    app.add_option("--patch-len", patch_len, "patch length l");
    app.add_option("--stride", stride, "patch stride s");
    app.add_option("--pad-last", pad_last, "replicate-pad a final patch over the tail (true|false)");
    app.add_option("--dispatchers", dispatchers, "dispatcher count k");
    app.add_option("--attention-mode", attention_mode, "dispatcher|full");
    app.add_option("--layers", layers, "encoder layers");
    app.add_option("--d-model", d_model, "model dimension d");
    app.add_option("--heads", heads, "attention heads");
    app.add_option("--d-ff", d_ff, "feed-forward hidden width");
    app.add_option("--dropout", dropout, "feed-forward dropout rate");
    app.add_option("--instance-norm", instance_norm, "per-window normalisation (true|false)");
    app.add_option("--lr", lr, "Adam learning rate");
    app.add_option("--lr-decay", lr_decay, "per-epoch multiplicative lr decay (1: off)");
    app.add_option("--batch-size", batch_size, "mini-batch size");
    app.add_option("--epochs", epochs, "maximum epochs");
    app.add_option("--patience", patience, "early-stopping patience in epochs");
    app.add_option("--max-batches", max_batches, "cap on batches per epoch (0: all)");
    app.add_option("--protocol", protocol, "long_term|short_term");
  }

  RunConfig resolve() const {
    RunConfig c;
    if (!config_path.empty()) apply_key_values(c, read_key_values(config_path));
    KeyValues kv;
    auto set = [&kv](const char* key, const auto& opt) {
      if (!opt) return;
      using T = std::decay_t<decltype(*opt)>;
      if constexpr (std::is_same_v<T, std::string>) {
        kv[key] = *opt;
      } else if constexpr (std::is_same_v<T, bool>) {
        kv[key] = *opt ? "true" : "false";
      } else if constexpr (std::is_floating_point_v<T>) {
        std::ostringstream os;
        os.precision(17);
        os << *opt;
        kv[key] = os.str();
      } else {
        kv[key] = std::to_string(*opt);
      }
    };
    set("data", data);
    set("date_column", date_column);
    set("split", split);
    set("out_dir", out_dir);
    set("seeds", seeds);
    set("protocol", protocol);
    set("model.horizon", horizon);
    set("model.lookback", lookback);
    set("model.patch_len", patch_len);
    set("model.stride", stride);
    set("model.pad_last", pad_last);
    set("model.dispatchers", dispatchers);
    set("model.attention_mode", attention_mode);
    set("model.layers", layers);
    set("model.d_model", d_model);
    set("model.n_heads", heads);
    set("model.d_ff", d_ff);
    set("model.dropout", dropout);
    set("model.instance_norm", instance_norm);
    set("train.lr", lr);
    set("train.lr_decay", lr_decay);
    set("train.batch_size", batch_size);
    set("train.max_epochs", epochs);
    set("train.patience", patience);
    set("train.max_batches_per_epoch", max_batches);
    apply_key_values(c, kv);
    if (seed) c.seeds = {*seed};
    c.train.seed = c.seeds.front();
    return c;
  }
};

struct PreparedData {
  TimeSeriesDataset ds;  // standardised and split
  GlobalScaler scaler;
};

PreparedData prepare(const RunConfig& c) {
  auto raw = split_dataset(load_csv_dataset(c.data_path, c.date_column), c.split);
  PreparedData p;
  p.scaler = GlobalScaler::fit(raw);
  p.ds = p.scaler.transform(std::move(raw));
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw RuntimeFailure("cannot write '" + path.string() + "'");
  os << text;
}

void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& c,
                    const std::vector<std::string>& outputs) {
  json kv = json::object();
  for (const auto& [k, v] : to_key_values(c)) kv[k] = v;
  json m{{"command", command},
         {"config_hash", config_hash(c)},
         {"seeds", c.seeds},
         {"versions", {{"unitst", kVersion}, {"checkpoint_format", kCheckpointVersion}}},
         {"config", kv},
         {"outputs", outputs}};
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

std::string seed_suffix(const RunConfig& c, std::uint64_t seed) {
  return c.seeds.size() > 1 ? "_seed" + std::to_string(seed) : "";
}

int cmd_train(RunConfig c, std::ostream& out) {
  c.validate();
  const PreparedData data = prepare(c);
  c.model.n_variates = data.ds.num_variates();
  const ModelConfig& mc = c.model;
  mc.validate();
  const fs::path dir = c.out_dir;
  fs::create_directories(dir);
  const WindowSet tr = make_windows(data.ds, Split::train, mc.lookback, mc.horizon);
  const WindowSet va = make_windows(data.ds, Split::val, mc.lookback, mc.horizon);
  const WindowSet te = make_windows(data.ds, Split::test, mc.lookback, mc.horizon);

  std::vector<std::string> outputs;
  json metrics{{"config_hash", config_hash(c)}, {"runs", json::array()}};
  double mse_sum = 0.0, mae_sum = 0.0;
  for (std::uint64_t seed : c.seeds) {
    TrainConfig tc = c.train;
    tc.seed = seed;
    const std::string sfx = seed_suffix(c, seed);
    const fs::path hist_path = dir / ("history" + sfx + ".jsonl");
    std::ofstream hist(hist_path);
    auto result = train(init_params(mc, seed), tr, va, tc, [&hist](const EpochRecord& r) {
      hist << json{{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_loss", r.val_loss}}.dump()
           << "\n";
      hist.flush();
    });
    const fs::path ck_path = dir / ("checkpoint" + sfx + ".bin");
    Checkpoint ck{result.best, data.scaler, json{{"seed", seed}, {"best_epoch", result.history.best_epoch}}};
    save_checkpoint(ck_path, ck);
    const Metrics m = evaluate(result.best, te, tc.eval_batch_size);
    mse_sum += m.mse;
    mae_sum += m.mae;
    metrics["runs"].push_back({{"seed", seed},
                               {"best_epoch", result.history.best_epoch},
                               {"best_val_loss", result.history.best_val_loss},
                               {"stopped_early", result.history.stopped_early},
                               {"epochs", result.history.epochs.size()},
                               {"test_mse", m.mse},
                               {"test_mae", m.mae}});
    outputs.push_back(hist_path.filename().string());
    outputs.push_back(ck_path.filename().string());
    out << "seed " << seed << ": best epoch " << result.history.best_epoch << ", test mse " << m.mse << ", mae "
        << m.mae << "\n";
    out << "checkpoint: " << ck_path.string() << "\n";
  }
  const double n = static_cast<double>(c.seeds.size());
  metrics["mean"] = {{"test_mse", mse_sum / n}, {"test_mae", mae_sum / n}};
  write_text(dir / "metrics.json", metrics.dump(2) + "\n");
  outputs.push_back("metrics.json");
  write_manifest(dir, "train", c, outputs);
  return 0;
}

int cmd_evaluate(RunConfig c, const std::string& checkpoint, const std::string& horizons, std::ostream& out) {
  c.validate();
  const fs::path dir = c.out_dir;
  fs::create_directories(dir);
  EvalReport report;
  report.dataset = fs::path(c.data_path).stem().string();
  report.config_hash = config_hash(c);
  report.seeds = c.seeds;
  if (!checkpoint.empty()) {
    const Checkpoint ck = load_checkpoint(checkpoint);
    auto raw = split_dataset(load_csv_dataset(c.data_path, c.date_column), c.split);
    const GlobalScaler scaler = ck.scaler ? *ck.scaler : GlobalScaler::fit(raw);
    const auto ds = scaler.transform(std::move(raw));
    const auto& mc = ck.params.config;
    if (ds.num_variates() != mc.n_variates) throw RuntimeFailure("dataset variate count does not match the checkpoint");
    const Metrics m = evaluate(ck.params, make_windows(ds, Split::test, mc.lookback, mc.horizon));
    report.rows.push_back(HorizonRow{mc.horizon, m.mse, m.mae, m.n_windows, {m.mse}, {m.mae}, std::nullopt});
  } else {
    const PreparedData data = prepare(c);
    c.model.n_variates = data.ds.num_variates();
    report.config_hash = config_hash(c);
    ProtocolOptions opts;
    opts.lookback = c.model.lookback;
    opts.seeds = c.seeds;
    opts.dataset_name = report.dataset;
    for (auto h : parse_seed_list(horizons.empty() ? "0" : horizons)) {
      if (h > 0) opts.horizons.push_back(static_cast<std::size_t>(h));
    }
    auto r = run_protocol(data.ds, c.protocol, c.model, c.train, opts);
    r.config_hash = report.config_hash;
    report = std::move(r);
  }
  report.finalize();
  write_text(dir / "report.json", report.to_json().dump(2) + "\n");
  write_text(dir / "report.txt", report.to_table());
  write_manifest(dir, "evaluate", c, {"report.json", "report.txt"});
  out << report.to_table();
  return 0;
}

int cmd_forecast(const std::string& checkpoint, const std::string& input, const std::optional<std::string>& date_column,
                 const std::string& output, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const auto& mc = ck.params.config;
  const TimeSeriesDataset win = load_csv_dataset(input, date_column);
  if (win.num_variates() != mc.n_variates) {
    throw RuntimeFailure("input has " + std::to_string(win.num_variates()) + " variates, model expects " +
                         std::to_string(mc.n_variates));
  }
  if (win.num_steps() < mc.lookback) {
    throw RuntimeFailure("input has " + std::to_string(win.num_steps()) + " rows, model needs lookback " +
                         std::to_string(mc.lookback));
  }
  Mat x = win.values.rightCols(static_cast<Eigen::Index>(mc.lookback));
  if (ck.scaler) x = ck.scaler->transform(x);
  Mat pred = forward(ck.params, x, Mode::eval).pred;
  if (ck.scaler) pred = ck.scaler->inverse(pred);

  std::ostringstream os;
  os.precision(17);
  os << "variate";
  for (std::size_t s = 1; s <= mc.horizon; ++s) os << ",t+" << s;
  os << "\n";
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    os << win.variate_names[static_cast<std::size_t>(i)];
    for (Eigen::Index s = 0; s < pred.cols(); ++s) os << "," << pred(i, s);
    os << "\n";
  }
  if (output.empty() || output == "-") {
    out << os.str();
  } else {
    if (fs::path(output).has_parent_path()) fs::create_directories(fs::path(output).parent_path());
    write_text(output, os.str());
    out << "forecast: " << output << "\n";
  }
  return 0;
}

int cmd_analyze_corr(const std::string& data_path, const std::optional<std::string>& date_column, std::size_t vi,
                     std::size_t vj, std::size_t patch_len, std::size_t begin, std::optional<std::size_t> end,
                     const std::string& out_dir, std::ostream& out) {
  const auto ds = load_csv_dataset(data_path, date_column);
  const auto hm = corr_heatmap(ds.values, vi, vj, patch_len, begin, end);
  fs::create_directories(out_dir);
  const fs::path path = fs::path(out_dir) / ("corr_heatmap_" + std::to_string(vi) + "_" + std::to_string(vj) + ".csv");
  write_text(path, hm.to_csv());
  out << "heatmap " << hm.values.rows() << "x" << hm.values.cols() << ": " << path.string() << "\n";
  return 0;
}

int cmd_analyze_attn(const RunConfig& c, const std::string& checkpoint, const std::string& split_name,
                     std::size_t first_window, std::size_t n_windows, std::size_t bins, const std::string& quantiles,
                     std::ostream& out) {
  c.validate();
  Checkpoint ck = load_checkpoint(checkpoint);
  ck.params.config.capture_attention = true;
  const auto& mc = ck.params.config;
  auto raw = split_dataset(load_csv_dataset(c.data_path, c.date_column), c.split);
  const GlobalScaler scaler = ck.scaler ? *ck.scaler : GlobalScaler::fit(raw);
  const auto ds = scaler.transform(std::move(raw));
  const WindowSet ws = make_windows(ds, parse_split_name(split_name), mc.lookback, mc.horizon);
  if (first_window >= ws.size() || n_windows == 0) throw RuntimeFailure("window selection outside the split");
  n_windows = std::min(n_windows, ws.size() - first_window);

  std::vector<std::size_t> idx(n_windows);
  for (std::size_t i = 0; i < n_windows; ++i) idx[i] = first_window + i;
  Mat x, y;
  ws.gather(idx, x, y);
  const auto fo = forward(ck.params, x, Mode::eval);

  // Per layer, the window-averaged token-to-token attention.
  std::vector<Mat> per_layer(mc.n_layers);
  for (const auto& rec : fo.records) {
    for (std::size_t l = 0; l < mc.n_layers; ++l) {
      const auto& maps = rec.layers[l];
      const Mat M = mc.attention_mode == AttentionMode::full ? maps.A_full : multiplied_attention(maps.A_dist, maps.A_agg);
      per_layer[l] = per_layer[l].size() ? Mat(per_layer[l] + M) : M;
    }
  }
  double global_max = 0.0;
  for (auto& M : per_layer) {
    M /= static_cast<double>(n_windows);
    global_max = std::max(global_max, M.maxCoeff());
  }
  std::vector<double> qs;
  {
    std::stringstream ss(quantiles);
    for (std::string item; std::getline(ss, item, ',');) qs.push_back(std::stod(item));
  }
  std::vector<Histogram> hists;
  json fractions = json::array();
  for (std::size_t l = 0; l < mc.n_layers; ++l) {
    hists.push_back(attn_weight_histogram(per_layer[l], bins, 0.0, global_max, "layer" + std::to_string(l)));
    auto rep = cross_pair_fraction(per_layer[l], qs, mc.n_variates, mc.num_patches()).to_json();
    rep["layer"] = l;
    fractions.push_back(std::move(rep));
  }
  const fs::path dir = c.out_dir;
  fs::create_directories(dir);
  write_text(dir / "attn_histogram.csv", histograms_to_csv(hists));
  write_text(dir / "pair_fraction.json", fractions.dump(2) + "\n");
  write_manifest(dir, "analyze-attn", c, {"attn_histogram.csv", "pair_fraction.json"});
  for (const auto& f : fractions) {
    out << "layer " << f["layer"].get<std::size_t>() << ":";
    for (const auto& e : f["thresholds"]) {
      out << " top " << e["top_quantile"].get<double>() << " -> " << e["percent"].get<double>() << "%";
    }
    out << " (baseline " << 100.0 * f["structural_baseline"].get<double>() << "%)\n";
  }
  return 0;
}

int cmd_bench_mem(const RunConfig& c, const std::vector<std::size_t>& sweep_k, std::size_t batch, bool with_data,
                  std::uint64_t budget, std::ostream& out) {
  c.validate(with_data);
  const fs::path dir = c.out_dir;
  fs::create_directories(dir);
  json j;
  std::string table;
  std::vector<MemReport> reports;
  if (with_data) {
    const PreparedData data = prepare(c);
    AblationOptions opts;
    opts.batch = batch;
    opts.max_attn_elements = budget;
    reports = bench_ablation(c.model, data.ds, c.train, {AttentionMode::full, AttentionMode::dispatcher}, opts);
  } else {
    for (AttentionMode mode : {AttentionMode::full, AttentionMode::dispatcher}) {
      ModelConfig mc = c.model;
      mc.attention_mode = mode;
      reports.push_back(count_attention_memory(mc, batch));
    }
  }
  table = ablation_table(reports);
  j["ablation"] = json::array();
  for (const auto& r : reports) j["ablation"].push_back(r.to_json());
  if (!sweep_k.empty()) {
    j["dispatcher_sweep"] = json::array();
    std::ostringstream os;
    os << "\nk   attention entries\n";
    for (std::size_t k : sweep_k) {
      ModelConfig mc = c.model;
      mc.attention_mode = AttentionMode::dispatcher;
      mc.n_dispatchers = k;
      const MemReport r = count_attention_memory(mc, batch);
      j["dispatcher_sweep"].push_back(r.to_json());
      os << k << "   " << r.attn_map_elements << "\n";
    }
    table += os.str();
  }
  write_text(dir / "bench.json", j.dump(2) + "\n");
  write_text(dir / "bench.txt", table);
  write_manifest(dir, "bench-mem", c, {"bench.json", "bench.txt"});
  out << table;
  return 0;
}

int cmd_grad_check(const std::string& mode_name, double step, std::uint64_t seed, std::ostream& out) {
  std::vector<AttentionMode> modes;
  if (mode_name == "both") {
    modes = {AttentionMode::dispatcher, AttentionMode::full};
  } else {
    modes = {parse_attention_mode(mode_name)};
  }
  double worst = 0.0;
  for (AttentionMode mode : modes) {
    const ModelConfig cfg = tiny_grad_check_config(mode);
    const ModelParams params = init_params(cfg, seed);
    Rng rng(seed, "grad-check-batch");
    const auto B = 2;
    Mat x(B * static_cast<Eigen::Index>(cfg.n_variates), static_cast<Eigen::Index>(cfg.lookback));
    Mat y(B * static_cast<Eigen::Index>(cfg.n_variates), static_cast<Eigen::Index>(cfg.horizon));
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = rng.normal();
    const auto res = grad_check(params, x, y, step);
    out << to_string(mode) << ": max relative error " << res.max_rel_error << " (" << res.worst_tensor << ")\n";
    worst = std::max(worst, res.max_rel_error);
  }
  const bool ok = worst < 1e-4;
  out << (ok ? "PASS" : "FAIL") << " max relative error " << worst << " (threshold 1e-4)\n";
  return ok ? 0 : 2;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"UniTST forecasting: flattened patch-token attention with dispatchers"};
  app.name("unitst");
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  app.set_version_flag("--version", kVersion);

  CommonFlags train_flags, eval_flags, attn_flags, bench_flags;

  auto* train_cmd = app.add_subcommand("train", "train a model; writes checkpoint, history JSONL and metrics");
  train_flags.attach(*train_cmd);

  auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint, or run a forecasting protocol");
  eval_flags.attach(*eval_cmd);
  std::string eval_ckpt;
  std::string eval_horizons;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint to evaluate on the test split");
  eval_cmd->add_option("--horizons", eval_horizons, "protocol horizons to run, e.g. 96,192 (default: all)");

  auto* fc_cmd = app.add_subcommand("forecast", "predict the next S steps from a lookback window CSV");
  std::string fc_ckpt, fc_input, fc_output;
  std::optional<std::string> fc_date;
  fc_cmd->add_option("--checkpoint", fc_ckpt, "model checkpoint")->required();
  fc_cmd->add_option("--input", fc_input, "CSV holding at least L rows; the last L are used")->required();
  fc_cmd->add_option("--date-column", fc_date, "name of the date column in the CSV");
  fc_cmd->add_option("--output", fc_output, "output CSV (default: stdout)");

  auto* corr_cmd = app.add_subcommand("analyze-corr", "patch-level cross-time cross-variate correlation heatmap");
  std::string corr_data, corr_out = "runs/analysis";
  std::optional<std::string> corr_date;
  std::size_t corr_i = 0, corr_j = 1, corr_len = 16, corr_begin = 0;
  std::optional<std::size_t> corr_end;
  corr_cmd->add_option("--data", corr_data, "dataset CSV")->required();
  corr_cmd->add_option("--date-column", corr_date, "name of the date column in the CSV");
  corr_cmd->add_option("--variate-i", corr_i, "row variate");
  corr_cmd->add_option("--variate-j", corr_j, "column variate");
  corr_cmd->add_option("--patch-len", corr_len, "patch length (non-overlapping)");
  corr_cmd->add_option("--begin", corr_begin, "first time index");
  corr_cmd->add_option("--end", corr_end, "one past the last time index");
  corr_cmd->add_option("--out-dir", corr_out, "output directory");

  auto* attn_cmd = app.add_subcommand("analyze-attn", "multiplied attention histograms and cross-pair fractions");
  attn_flags.attach(*attn_cmd);
  std::string attn_ckpt, attn_split = "test", attn_q = "1,0.05,0.005";
  std::size_t attn_first = 0, attn_n = 1, attn_bins = 50;
  attn_cmd->add_option("--checkpoint", attn_ckpt, "model checkpoint")->required();
  attn_cmd->add_option("--on-split", attn_split, "train|val|test");
  attn_cmd->add_option("--window", attn_first, "first window index");
  attn_cmd->add_option("--windows", attn_n, "number of windows averaged");
  attn_cmd->add_option("--bins", attn_bins, "histogram bins");
  attn_cmd->add_option("--quantiles", attn_q, "top fractions, comma-separated");

  auto* bench_cmd = app.add_subcommand("bench-mem", "attention-map memory: dispatcher vs full attention");
  bench_flags.attach(*bench_cmd);
  std::string sweep;
  std::uint64_t budget = 2'000'000'000ULL;
  std::size_t n_variates = 0;
  bench_cmd->add_option("--sweep-k", sweep, "dispatcher counts to sweep, e.g. 5,10,20,50");
  bench_cmd->add_option("--variates", n_variates, "N when no dataset is given");
  bench_cmd->add_option("--max-attn-elements", budget, "attention-map budget before a mode is reported exhausted");

  auto* gc_cmd = app.add_subcommand("grad-check", "finite-difference gradient check on the built-in tiny model");
  std::string gc_mode = "both";
  double gc_step = 1e-5;
  std::uint64_t gc_seed = 7;
  gc_cmd->add_option("--attention-mode", gc_mode, "dispatcher|full|both");
  gc_cmd->add_option("--step", gc_step, "finite-difference step");
  gc_cmd->add_option("--seed", gc_seed, "seed for parameters and batch");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 1;
  }

  try {
    if (*train_cmd) return cmd_train(train_flags.resolve(), out);
    if (*eval_cmd) return cmd_evaluate(eval_flags.resolve(), eval_ckpt, eval_horizons, out);
    if (*fc_cmd) return cmd_forecast(fc_ckpt, fc_input, fc_date, fc_output, out);
    if (*corr_cmd) return cmd_analyze_corr(corr_data, corr_date, corr_i, corr_j, corr_len, corr_begin, corr_end, corr_out, out);
    if (*attn_cmd) {
      return cmd_analyze_attn(attn_flags.resolve(), attn_ckpt, attn_split, attn_first, attn_n, attn_bins, attn_q, out);
    }
    if (*bench_cmd) {
      RunConfig c = bench_flags.resolve();
      const bool with_data = !c.data_path.empty();
      if (!with_data && n_variates > 0) c.model.n_variates = n_variates;
      std::vector<std::size_t> ks;
      if (!sweep.empty()) {
        for (auto s : parse_seed_list(sweep)) ks.push_back(static_cast<std::size_t>(s));
      }
      return cmd_bench_mem(c, ks, c.train.batch_size, with_data, budget, out);
    }
    if (*gc_cmd) return cmd_grad_check(gc_mode, gc_step, gc_seed, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace unitst
