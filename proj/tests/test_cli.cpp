#include "unitst/cli.hpp"
#include "unitst/rng.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using unitst::run;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result call(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("unitst_test_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Three noisy sinusoids with an hourly date column.
fs::path write_csv(const fs::path& dir, std::size_t rows = 400) {
  const auto p = dir / "series.csv";
  std::ofstream os(p);
  os << "date,a,b,c\n";
  unitst::Rng rng(3);
  for (std::size_t t = 0; t < rows; ++t) {
    const double x = static_cast<double>(t);
    os << "2021-01-" << (1 + t / 24) << " " << (t % 24) << ":00:00," << std::sin(0.3 * x) + 0.1 * rng.normal() << ","
       << std::cos(0.2 * x) + 0.1 * rng.normal() << "," << std::sin(0.1 * x + 1) + 0.1 * rng.normal() << "\n";
  }
  return p;
}

std::vector<std::string> small_model() {
  return {"--lookback", "32", "--horizon", "8", "--patch-len", "8", "--stride", "8", "--d-model", "8", "--heads", "2",
          "--d-ff", "16", "--layers", "1", "--dispatchers", "2", "--epochs", "2", "--batch-size", "16"};
}

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("grad-check passes and reports the threshold") {
  const auto r = call({"grad-check"});
  CHECK(r.code == 0);
  CHECK(r.out.find("PASS") != std::string::npos);
  CHECK(r.out.find("1e-4") != std::string::npos);
}

TEST_CASE("the binary itself runs and returns exit codes") {
  const std::string bin = UNITST_CLI_PATH;
  CHECK(std::system((bin + " --version > /dev/null").c_str()) == 0);
  const int code = std::system((bin + " train --no-such-flag > /dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(code) == 1);
}

TEST_CASE("usage errors exit with 1") {
  auto r = call({"train", "--bogus"});
  CHECK(r.code == 1);
  CHECK((r.out + r.err).find("--data") != std::string::npos);  // help text lists the flags
  CHECK(call({}).code == 1);
  CHECK(call({"frobnicate"}).code == 1);
  r = call({"train", "--data", "/nonexistent/x.csv"});
  CHECK(r.code == 1);
  CHECK(r.err.find("/nonexistent/x.csv") != std::string::npos);
  const auto d = scratch("usage");
  const auto csv = write_csv(d);
  CHECK(call({"train", "--data", csv.string(), "--heads", "3", "--d-model", "8"}).code == 1);
  CHECK(call({"train", "--data", csv.string(), "--attention-mode", "sparse"}).code == 1);
}

TEST_CASE("train writes checkpoint, history, metrics and manifest") {
  const auto d = scratch("train");
  const auto csv = write_csv(d);
  const auto out = d / "run";
  const auto r = call(cat({"train", "--data", csv.string(), "--date-column", "date", "--out-dir", out.string(),
                           "--seed", "4"},
                          small_model()));
  REQUIRE(r.code == 0);
  CHECK(fs::exists(out / "checkpoint.bin"));
  CHECK(fs::exists(out / "metrics.json"));
  std::ifstream hist(out / "history.jsonl");
  std::string line;
  std::size_t n = 0;
  while (std::getline(hist, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j["epoch"] == n + 1);
    CHECK(j.contains("train_loss"));
    CHECK(j.contains("val_loss"));
    ++n;
  }
  CHECK(n == 2);
  const auto m = nlohmann::json::parse(slurp(out / "manifest.json"));
  CHECK(m["command"] == "train");
  CHECK(m["seeds"] == nlohmann::json::array({4}));
  CHECK(m.contains("config_hash"));
  CHECK(m["config"]["model.n_variates"] == "3");

  SUBCASE("evaluate the checkpoint") {
    const auto e = call({"evaluate", "--data", csv.string(), "--date-column", "date", "--checkpoint", (out / "checkpoint.bin").string(),
                         "--out-dir", (d / "eval").string()});
    REQUIRE(e.code == 0);
    const auto rep = nlohmann::json::parse(slurp(d / "eval" / "report.json"));
    CHECK(rep["horizons"][0]["horizon"] == 8);
    const auto metrics = nlohmann::json::parse(slurp(out / "metrics.json"));
    CHECK(rep["horizons"][0]["mse"].get<double>() == doctest::Approx(metrics["mean"]["test_mse"].get<double>()));
  }

  SUBCASE("forecast emits N rows of S values") {
    const auto fc = d / "fc.csv";
    const auto f = call({"forecast", "--checkpoint", (out / "checkpoint.bin").string(), "--input", csv.string(),
                         "--date-column", "date", "--output", fc.string()});
    REQUIRE(f.code == 0);
    std::ifstream is(fc);
    std::string header;
    std::getline(is, header);
    CHECK(header.rfind("variate,t+1", 0) == 0);
    std::size_t rows = 0;
    while (std::getline(is, line)) {
      ++rows;
      CHECK(std::count(line.begin(), line.end(), ',') == 8);
    }
    CHECK(rows == 3);
  }

  SUBCASE("analyze-attn writes histograms and pair fractions") {
    const auto a = call({"analyze-attn", "--data", csv.string(), "--date-column", "date", "--checkpoint", (out / "checkpoint.bin").string(),
                         "--out-dir", (d / "attn").string(), "--windows", "2", "--bins", "10"});
    REQUIRE(a.code == 0);
    CHECK(fs::exists(d / "attn" / "attn_histogram.csv"));
    const auto pf = nlohmann::json::parse(slurp(d / "attn" / "pair_fraction.json"));
    REQUIRE(pf.size() == 1);  // one entry per layer
    CHECK(pf[0]["structural_baseline"].get<double>() == doctest::Approx(0.5));
  }

  SUBCASE("a missing checkpoint is a runtime failure") {
    CHECK(call({"forecast", "--checkpoint", (d / "nope.bin").string(), "--input", csv.string(), "--date-column", "date"}).code == 2);
  }
}

TEST_CASE("identical invocations give identical artefacts") {
  const auto d = scratch("repro");
  const auto csv = write_csv(d);
  for (const char* name : {"a", "b"}) {
    REQUIRE(call(cat({"train", "--data", csv.string(), "--date-column", "date", "--out-dir", (d / name).string(), "--seeds", "1,2",
                      "--dropout", "0.2"},
                     small_model()))
                .code == 0);
  }
  CHECK(slurp(d / "a" / "manifest.json").size() > 0);
  CHECK(nlohmann::json::parse(slurp(d / "a" / "manifest.json"))["config_hash"] ==
        nlohmann::json::parse(slurp(d / "b" / "manifest.json"))["config_hash"]);
  CHECK(slurp(d / "a" / "metrics.json") == slurp(d / "b" / "metrics.json"));
  CHECK(slurp(d / "a" / "history_seed1.jsonl") == slurp(d / "b" / "history_seed1.jsonl"));
  CHECK(slurp(d / "a" / "history_seed2.jsonl") != slurp(d / "a" / "history_seed1.jsonl"));
  CHECK(slurp(d / "a" / "checkpoint_seed2.bin") == slurp(d / "b" / "checkpoint_seed2.bin"));
}

TEST_CASE("flags override the config file") {
  const auto d = scratch("config");
  const auto csv = write_csv(d);
  {
    std::ofstream cfg(d / "run.cfg");
    cfg << "data = \"" << csv.string() << "\"\ndate_column = date\n[model]\nlookback = 32\nhorizon = 4\npatch_len = 8\nstride = 8\n"
        << "d_model = 8\nn_heads = 2\nlayers = 1\nd_ff = 8\n[train]\nmax_epochs = 1\nbatch_size = 32\n";
  }
  const auto out = d / "run";
  REQUIRE(call({"train", "--config", (d / "run.cfg").string(), "--horizon", "6", "--out-dir", out.string()}).code == 0);
  const auto m = nlohmann::json::parse(slurp(out / "manifest.json"));
  CHECK(m["config"]["model.horizon"] == "6");
  CHECK(m["config"]["model.lookback"] == "32");
  CHECK(m["config"]["train.max_epochs"] == "1");
}

TEST_CASE("analyze-corr writes the heatmap") {
  const auto d = scratch("corr");
  const auto csv = write_csv(d);
  const auto r = call({"analyze-corr", "--data", csv.string(), "--date-column", "date", "--variate-i", "0",
                       "--variate-j", "2", "--patch-len", "16", "--out-dir", d.string()});
  REQUIRE(r.code == 0);
  std::ifstream is(d / "corr_heatmap_0_2.csv");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 1 + 400 / 16);
  CHECK(call({"analyze-corr", "--data", csv.string(), "--date-column", "date", "--variate-j", "9", "--out-dir", d.string()}).code != 0);
}

TEST_CASE("bench-mem reports closed-form counts and a data ablation") {
  const auto d = scratch("bench");
  auto r = call({"bench-mem", "--variates", "7", "--sweep-k", "5,10", "--out-dir", d.string()});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(d / "bench.json"));
  CHECK(fs::exists(d / "bench.txt"));
  const auto csv = write_csv(d);
  r = call(cat({"bench-mem", "--data", csv.string(), "--date-column", "date", "--out-dir", (d / "abl").string()},
               small_model()));
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(slurp(d / "abl" / "bench.txt").find("w/o dispatchers") != std::string::npos);
}
