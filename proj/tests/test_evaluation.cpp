#include "unitst/evaluation.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace unitst;
using oracle::random_mat;

namespace {

TimeSeriesDataset wave_dataset(std::size_t N, std::size_t T, std::uint64_t seed) {
  Rng rng(seed);
  TimeSeriesDataset ds;
  ds.values.resize(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(T));
  for (Eigen::Index i = 0; i < ds.values.rows(); ++i) {
    ds.variate_names.push_back("v" + std::to_string(i));
    for (Eigen::Index t = 0; t < ds.values.cols(); ++t)
      ds.values(i, t) = std::sin(0.3 * static_cast<double>(t) + static_cast<double>(i)) + 0.1 * rng.normal();
  }
  return split_dataset(std::move(ds), RatioSplit{0.6, 0.2});
}

ModelConfig small(std::size_t N) {
  ModelConfig c = tiny_grad_check_config(AttentionMode::dispatcher);
  c.n_variates = N;
  return c;
}

}  // namespace

TEST_CASE("perfect predictions score zero") {
  Rng rng(1);
  const Mat y = random_mat(rng, 6, 4);
  const Metrics m = metrics_from_predictions(y, y, 3);
  CHECK(m.mse == 0.0);
  CHECK(m.mae == 0.0);
  CHECK(m.n_windows == 2);
}

TEST_CASE("constant offset predictions") {
  Rng rng(2);
  const Mat y = random_mat(rng, 6, 4);
  const Metrics m = metrics_from_predictions(Mat(y.array() - 0.7), y, 3);
  CHECK(m.mse == doctest::Approx(0.49).epsilon(1e-12));
  CHECK(m.mae == doctest::Approx(0.7).epsilon(1e-12));
  CHECK_THROWS_AS(metrics_from_predictions(y, y, 4), ShapeError);
}

TEST_CASE("evaluate of a constant-output model matches a loop over windows") {
  const auto ds = wave_dataset(3, 120, 3);
  ModelConfig c = small(3);
  c.instance_norm = false;
  ModelParams P = zeros_like(init_params(c, 1));
  for (auto& L : P.layers) {
    L.bn1_running_var.setOnes();
    L.bn2_running_var.setOnes();
  }
  Rng rng(4);
  P.head_b = random_mat(rng, 1, 4);
  const WindowSet ws = make_windows(ds, Split::test, c.lookback, c.horizon, 3);
  REQUIRE(ws.size() >= 2);
  double sq = 0.0, ab = 0.0, n = 0.0;
  for (std::size_t w = 0; w < ws.size(); ++w) {
    const Window win = ws[w];
    for (Eigen::Index i = 0; i < 3; ++i)
      for (Eigen::Index s = 0; s < 4; ++s) {
        const double e = P.head_b(0, s) - win.y(i, s);
        sq += e * e;
        ab += std::abs(e);
        n += 1.0;
      }
  }
  for (std::size_t batch : {1u, 2u, 256u}) {
    const Metrics m = evaluate(P, ws, batch);
    CHECK(std::abs(m.mse - sq / n) < 1e-12);
    CHECK(std::abs(m.mae - ab / n) < 1e-12);
    CHECK(m.n_windows == ws.size());
    CHECK(std::abs(m.per_variate_mse.mean() - m.mse) < 1e-12);
  }
}

TEST_CASE("evaluate on an empty set is an error") {
  const ModelParams P = init_params(small(3), 1);
  CHECK_THROWS_AS(evaluate(P, WindowSet()), DataError);
}

TEST_CASE("squared mae never exceeds mse") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const Mat a = random_mat(rng, 4, 3, rng.uniform(0.1, 10)), b = random_mat(rng, 4, 3);
    const Metrics m = metrics_from_predictions(a, b, 2);
    CHECK(m.mse >= 0.0);
    CHECK(m.mae >= 0.0);
    CHECK(m.mae * m.mae <= m.mse * (1 + 1e-12));
  }
}

TEST_CASE("protocol horizons") {
  CHECK(protocol_horizons(Protocol::long_term) == std::vector<std::size_t>{96, 192, 336, 720});
  CHECK(protocol_horizons(Protocol::short_term) == std::vector<std::size_t>{12, 24, 48, 96});
  CHECK(parse_protocol("short_term") == Protocol::short_term);
  CHECK(to_string(Protocol::long_term) == "long_term");
  CHECK_THROWS(parse_protocol("medium"));
}

TEST_CASE("report average is the mean of the successful rows") {
  EvalReport r;
  r.rows = {HorizonRow{96, 0.4, 0.5, 10, {}, {}, std::nullopt}, HorizonRow{192, 0.6, 0.7, 8, {}, {}, std::nullopt},
            HorizonRow{336, 0, 0, 0, {}, {}, std::string("too long")}};
  r.finalize();
  CHECK(r.avg_mse == doctest::Approx(0.5));
  CHECK(r.avg_mae == doctest::Approx(0.6));
  const auto j = r.to_json();
  CHECK(j["horizons"].size() == 3);
  CHECK(j["horizons"][2]["error"] == "too long");
  const std::string table = r.to_table();
  CHECK(table.find("Avg") != std::string::npos);
  CHECK(table.find("0.400") != std::string::npos);
  CHECK(table.find("failed") != std::string::npos);
}

TEST_CASE("protocol runs every horizon and records failures") {
  const auto ds = wave_dataset(2, 160, 6);  // test split has 32 steps
  ModelConfig base = small(2);
  TrainConfig tc;
  tc.max_epochs = 2;
  tc.batch_size = 16;
  ProtocolOptions opts;
  opts.lookback = 16;
  opts.seeds = {1, 2};
  opts.horizons = {4, 8, 20};
  const EvalReport r = run_protocol(ds, Protocol::short_term, base, tc, opts);
  REQUIRE(r.rows.size() == 3);
  CHECK_FALSE(r.rows[0].error);
  CHECK_FALSE(r.rows[1].error);
  CHECK(r.rows[2].error);  // 16 + 20 exceeds the validation split
  CHECK(r.rows[0].seed_mse.size() == 2);
  CHECK(r.rows[0].mse == doctest::Approx((r.rows[0].seed_mse[0] + r.rows[0].seed_mse[1]) / 2));
  CHECK(r.avg_mse == doctest::Approx((r.rows[0].mse + r.rows[1].mse) / 2));
  for (const auto& row : r.rows) {
    if (!row.error) CHECK(row.mae * row.mae <= row.mse * (1 + 1e-12));
  }
}
