#include "unitst/checkpoint.hpp"
#include "unitst/config.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <utility>

using namespace unitst;
namespace fs = std::filesystem;

namespace {

fs::path tmp(const std::string& name) { return fs::temp_directory_path() / ("unitst_test_config_" + name); }

RunConfig sample() {
  RunConfig c;
  c.data_path = "data/ETTh1.csv";
  c.date_column = "date";
  c.split = parse_split_spec("explicit:0,8545,11426,14307");
  c.protocol = Protocol::short_term;
  c.out_dir = "runs/x";
  c.seeds = {1, 2, 3};
  c.model.horizon = 192;
  c.model.dropout = 0.1;
  c.model.attention_mode = AttentionMode::full;
  c.model.within_variate_only = true;
  c.train.lr = 1e-4;
  c.train.weight_decay = 1.0 / 3.0;
  return c;
}

bool same(const RunConfig& a, const RunConfig& b) {
  return a.data_path == b.data_path && a.date_column == b.date_column &&
         format_split_spec(a.split) == format_split_spec(b.split) && a.model == b.model && a.train == b.train &&
         a.protocol == b.protocol && a.out_dir == b.out_dir && a.seeds == b.seeds;
}

}  // namespace

TEST_CASE("key value parsing with sections and comments") {
  const auto kv = parse_key_values(
      "# experiment\n"
      "data = \"x.csv\"\n"
      "[model]\n"
      "d_model = 64   \n"
      "\n"
      "[train]\n"
      "lr=0.001\n");
  CHECK(kv.at("data") == "x.csv");
  CHECK(kv.at("model.d_model") == "64");
  CHECK(kv.at("train.lr") == "0.001");
  CHECK_THROWS_AS(parse_key_values("a = 1\nnot a pair\n"), ConfigError);
  CHECK_THROWS_AS(parse_key_values("[model\n"), ConfigError);
  try {
    parse_key_values("a = 1\nb\n");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("applying keys and rejecting unknown ones") {
  RunConfig c;
  apply_key_values(c, parse_key_values("[model]\ndispatchers = 5\nattention_mode = full\n[train]\npatience = 3\n"));
  CHECK(c.model.n_dispatchers == 5);
  CHECK(c.model.attention_mode == AttentionMode::full);
  CHECK(c.train.patience == 3);
  CHECK_THROWS_AS(apply_key_values(c, {{"model.wings", "2"}}), ConfigError);
  CHECK_THROWS_AS(apply_key_values(c, {{"model.d_model", "-3"}}), ConfigError);
  CHECK_THROWS_AS(apply_key_values(c, {{"train.lr", "fast"}}), ConfigError);
  CHECK_THROWS_AS(apply_key_values(c, {{"model.pad_last", "maybe"}}), ConfigError);
  CHECK_THROWS_AS(apply_key_values(c, {{"split", "ratio:1"}}), ConfigError);
}

TEST_CASE("serialisation round trips losslessly") {
  const RunConfig c = sample();
  const RunConfig back = deserialize(serialize(c));
  CHECK(same(c, back));
  CHECK(back.train.weight_decay == c.train.weight_decay);
  CHECK(serialize(back) == serialize(c));
  RunConfig d;
  CHECK(same(deserialize(serialize(d)), d));
}

TEST_CASE("config hash ignores the output directory only") {
  RunConfig a = sample(), b = sample();
  b.out_dir = "elsewhere";
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  b.model.n_dispatchers += 1;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("validation checks the data path and the nested configs") {
  RunConfig c;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_NOTHROW(c.validate(false));
  const auto p = tmp("exists.csv");
  std::ofstream(p) << "a\n1\n2\n";
  c.data_path = p.string();
  CHECK_NOTHROW(c.validate());
  c.model.n_heads = 5;
  CHECK_THROWS(c.validate());
  c = RunConfig{};
  c.seeds.clear();
  CHECK_THROWS_AS(c.validate(false), ConfigError);
}

TEST_CASE("seed lists") {
  CHECK(parse_seed_list("1,2, 3") == std::vector<std::uint64_t>{1, 2, 3});
  CHECK_THROWS_AS(parse_seed_list(""), ConfigError);
  CHECK_THROWS_AS(parse_seed_list("1,x"), ConfigError);
}

TEST_CASE("model config json round trip") {
  ModelConfig m = sample().model;
  m.per_layer_dispatchers = true;
  CHECK(model_config_from_json(to_json(m)) == m);
}

TEST_CASE("checkpoint round trip is bit exact") {
  for (AttentionMode mode : {AttentionMode::dispatcher, AttentionMode::full}) {
    ModelConfig c = tiny_grad_check_config(mode);
    c.dropout = 0.1;
    ModelParams P = init_params(c, 5);
    Rng rng(1);
    P.layers[0].bn1_running_mean = oracle::random_mat(rng, 1, 8);  // buffers must survive too
    Checkpoint ck{P, GlobalScaler{Vec::LinSpaced(3, 1.0, 3.0), Vec::Constant(3, 0.1)}, {{"seed", 5}}};
    const auto path = tmp("ck.bin");
    save_checkpoint(path, ck);
    const Checkpoint back = load_checkpoint(path);
    CHECK(back.params.config == c);
    const auto a = named_parameters(std::as_const(P)), b = named_parameters(back.params);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].name == b[i].name);
      CHECK(*a[i].tensor == *b[i].tensor);
    }
    const auto ba = named_buffers(std::as_const(P)), bb = named_buffers(back.params);
    for (std::size_t i = 0; i < ba.size(); ++i) CHECK(*ba[i].tensor == *bb[i].tensor);
    REQUIRE(back.scaler);
    CHECK(back.scaler->mean == ck.scaler->mean);
    CHECK(back.metadata["seed"] == 5);
    const Mat x = oracle::random_mat(rng, 6, 16);
    CHECK(forward(P, x, Mode::eval).pred == forward(back.params, x, Mode::eval).pred);
  }
}

TEST_CASE("corrupt checkpoints are rejected") {
  const auto bad = tmp("bad.bin");
  std::ofstream(bad) << "NOTACHECKPOINT";
  CHECK_THROWS_AS(load_checkpoint(bad), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(tmp("missing.bin")), CheckpointError);
  const auto good = tmp("trunc.bin");
  save_checkpoint(good, Checkpoint{init_params(tiny_grad_check_config(), 1), std::nullopt, {}});
  CHECK_NOTHROW(load_checkpoint(good));
  fs::resize_file(good, fs::file_size(good) - 16);
  CHECK_THROWS_AS(load_checkpoint(good), CheckpointError);
}
