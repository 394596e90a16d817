#include "unitst/data.hpp"
#include "unitst/rng.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

using namespace unitst;
namespace fs = std::filesystem;

namespace {

fs::path write_tmp(const std::string& name, const std::string& text) {
  const fs::path p = fs::temp_directory_path() / ("unitst_test_data_" + name);
  std::ofstream(p) << text;
  return p;
}

TimeSeriesDataset ramp(std::size_t N, std::size_t T) {
  TimeSeriesDataset ds;
  ds.values.resize(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(T));
  for (Eigen::Index i = 0; i < ds.values.rows(); ++i)
    for (Eigen::Index t = 0; t < ds.values.cols(); ++t) ds.values(i, t) = 100.0 * static_cast<double>(i) + static_cast<double>(t);
  for (std::size_t i = 0; i < N; ++i) ds.variate_names.push_back("v" + std::to_string(i));
  return ds;
}

}  // namespace

TEST_CASE("csv with a date column and two variates") {
  std::string text = "date,a,b\n";
  for (int t = 0; t < 100; ++t) text += "2020-01-01 " + std::to_string(t) + "," + std::to_string(t) + "," + std::to_string(-t) + "\n";
  const auto ds = load_csv_dataset(write_tmp("two.csv", text), std::string("date"));
  CHECK(ds.num_variates() == 2);
  CHECK(ds.num_steps() == 100);
  CHECK(ds.variate_names == std::vector<std::string>{"a", "b"});
  CHECK(ds.timestamps.size() == 100);
  CHECK(ds.values(1, 42) == -42.0);
}

TEST_CASE("csv with seven variates") {
  std::string text = "date,HUFL,HULL,MUFL,MULL,LUFL,LULL,OT\n";
  for (int t = 0; t < 5; ++t) text += "d" + std::to_string(t) + ",1,2,3,4,5,6,7\n";
  const auto ds = load_csv_dataset(write_tmp("seven.csv", text), std::string("date"));
  CHECK(ds.num_variates() == 7);
  CHECK(ds.values(6, 4) == 7.0);
}

TEST_CASE("csv error on a NaN cell names row and column") {
  const auto p = write_tmp("nan.csv", "date,a,b\nx,1,2\ny,3,NaN\nz,5,6\n");
  try {
    load_csv_dataset(p, std::string("date"));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("'b'") != std::string::npos);
  }
  CHECK_THROWS_AS(load_csv_dataset(write_tmp("junk.csv", "a\n1\nabc\n")), DataError);
  CHECK_THROWS_AS(load_csv_dataset(write_tmp("inf.csv", "a\n1\ninf\n")), DataError);
}

TEST_CASE("csv missing file is an I/O error") {
  CHECK_THROWS_AS(load_csv_dataset("/nonexistent/unitst.csv"), std::ios_base::failure);
}

TEST_CASE("csv needs two rows and a known date column") {
  CHECK_THROWS_AS(load_csv_dataset(write_tmp("one.csv", "a\n1\n")), DataError);
  CHECK_THROWS_AS(load_csv_dataset(write_tmp("nodate.csv", "a\n1\n2\n"), std::string("date")), DataError);
}

TEST_CASE("ratio split on T=100") {
  const auto ds = split_dataset(ramp(1, 100), RatioSplit{0.7, 0.1});
  CHECK(ds.range(Split::train) == IndexRange{0, 70});
  CHECK(ds.range(Split::val) == IndexRange{70, 80});
  CHECK(ds.range(Split::test) == IndexRange{80, 100});
}

TEST_CASE("explicit split with the hourly ETT boundaries") {
  const auto ds = split_dataset(ramp(1, 17420), parse_split_spec("explicit:0,8545,11426,14307"));
  CHECK(ds.range(Split::train).size() == 8545);
  CHECK(ds.range(Split::val).size() == 2881);
  CHECK(ds.range(Split::test).size() == 2881);
}

TEST_CASE("ratio split leaving test empty is an error") {
  CHECK_THROWS_AS(split_dataset(ramp(1, 100), RatioSplit{0.99, 0.009}), DataError);
  CHECK_THROWS_AS(split_dataset(ramp(1, 100), RatioSplit{0.7, 0.4}), DataError);
  CHECK_THROWS_AS(split_dataset(ramp(1, 10), parse_split_spec("explicit:0,5,4,10")), DataError);
  CHECK_THROWS_AS(split_dataset(ramp(1, 10), parse_split_spec("explicit:0,5,8,11")), DataError);
}

TEST_CASE("split specs parse and format") {
  CHECK(format_split_spec(parse_split_spec("ratio:0.6,0.2")) == "ratio:0.6,0.2");
  CHECK(format_split_spec(parse_split_spec("explicit:0,8545,11426,14307")) == "explicit:0,8545,11426,14307");
  CHECK_THROWS(parse_split_spec("0.7,0.1"));
  CHECK_THROWS(parse_split_spec("ratio:0.7"));
  CHECK_THROWS(parse_split_spec("explicit:0,1,x,3"));
  CHECK_THROWS(parse_split_spec("weird:1,2"));
}

TEST_CASE("splits are disjoint and ordered") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t T = 10 + static_cast<std::size_t>(rng.uniform(0, 500));
    const double a = rng.uniform(0.05, 0.8), b = rng.uniform(0.01, 0.95 - a);
    TimeSeriesDataset ds;
    try {
      ds = split_dataset(ramp(1, T), RatioSplit{a, b});
    } catch (const DataError&) {
      continue;
    }
    std::set<std::size_t> seen;
    for (Split s : {Split::train, Split::val, Split::test}) {
      const auto r = ds.range(s);
      CHECK(r.begin < r.end);
      for (std::size_t t = r.begin; t < r.end; ++t) CHECK(seen.insert(t).second);
    }
    CHECK(ds.range(Split::train).end == ds.range(Split::val).begin);
    CHECK(ds.range(Split::val).end == ds.range(Split::test).begin);
    CHECK(ds.range(Split::test).end == T);
  }
}

TEST_CASE("window counts on the boundary") {
  CHECK(window_count(20, 8, 4, 1) == 9);
  auto ds = split_dataset(ramp(2, 40), parse_split_spec("explicit:0,12,23,40"));
  CHECK(make_windows(ds, Split::train, 8, 4).size() == 1);
  CHECK_THROWS_AS(make_windows(ds, Split::val, 8, 4), DataError);  // val has 11 steps
}

TEST_CASE("window count formula, exhaustive up to 64 steps") {
  for (std::size_t len = 1; len <= 64; ++len)
    for (std::size_t L = 1; L <= len; ++L)
      for (std::size_t S = 1; L + S <= len; ++S)
        for (std::size_t stride = 1; stride <= 8; ++stride) {
          REQUIRE(window_count(len, L, S, stride) == oracle::enumerate_windows(len, L, S, stride));
        }
}

TEST_CASE("every window is an adjacent slice of its split") {
  auto ds = split_dataset(ramp(3, 120), RatioSplit{0.5, 0.2});
  for (Split s : {Split::train, Split::val, Split::test}) {
    for (std::size_t stride : {1u, 3u}) {
      const auto ws = make_windows(ds, s, 10, 5, stride);
      const auto r = ds.range(s);
      CHECK(ws.size() == window_count(r.size(), 10, 5, stride));
      for (std::size_t w = 0; w < ws.size(); ++w) {
        const Window win = ws[w];
        const auto t0 = static_cast<Eigen::Index>(win.origin_t);
        CHECK(win.origin_t >= r.begin);
        CHECK(win.origin_t + 15 <= r.end);
        CHECK(win.x == ds.values.middleCols(t0, 10));
        CHECK(win.y == ds.values.middleCols(t0 + 10, 5));
      }
    }
  }
}

TEST_CASE("gather stacks windows sample-major") {
  auto ds = split_dataset(ramp(3, 60), RatioSplit{0.6, 0.2});
  const auto ws = make_windows(ds, Split::train, 6, 2);
  const std::vector<std::size_t> idx{4, 0, 7};
  Mat x, y;
  ws.gather(idx, x, y);
  CHECK(x.rows() == 9);
  CHECK(y.cols() == 2);
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const Window w = ws[idx[b]];
    CHECK(x.middleRows(static_cast<Eigen::Index>(3 * b), 3) == w.x);
    CHECK(y.middleRows(static_cast<Eigen::Index>(3 * b), 3) == w.y);
  }
  CHECK_THROWS(ws[ws.size()]);
}

TEST_CASE("instance normalisation is a fixed point on standardised rows") {
  Rng rng(3);
  Mat x = oracle::random_mat(rng, 4, 50);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    x.row(i).array() -= x.row(i).mean();
    x.row(i) /= std::sqrt(x.row(i).squaredNorm() / 50.0);
  }
  const auto n = instance_normalize(x);
  CHECK(oracle::max_abs_diff(n.x_norm, x) < 1e-9);
}

TEST_CASE("normalised rows have zero mean and unit std") {
  Rng rng(5);
  Mat x = oracle::random_mat(rng, 3, 40, 7.0).array() + 12.0;
  const auto n = instance_normalize(x);
  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK(std::abs(n.x_norm.row(i).mean()) < 1e-12);
    CHECK(std::abs(std::sqrt(n.x_norm.row(i).squaredNorm() / 40.0) - 1.0) < 1e-9);
  }
}

TEST_CASE("denormalise inverts normalise on any slice") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    Mat x = oracle::random_mat(rng, 3, 24, rng.uniform(0.01, 100.0)).array() + rng.uniform(-50, 50);
    const auto n = instance_normalize(x);
    const auto a = static_cast<Eigen::Index>(rng.uniform(0, 12));
    const auto len = static_cast<Eigen::Index>(1 + rng.uniform(0, 11));
    const Mat back = denormalize(n.x_norm.middleCols(a, len), n.stats);
    CHECK(oracle::max_abs_diff(back, x.middleCols(a, len)) < 1e-9 * std::max(1.0, x.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("constant rows normalise to zero and come back") {
  Mat x = Mat::Constant(2, 16, 3.25);
  x.row(1).setConstant(-1.0);
  const auto n = instance_normalize(x);
  CHECK(n.x_norm.cwiseAbs().maxCoeff() < 1e-12);
  const Mat back = denormalize(Mat::Zero(2, 5), n.stats);
  CHECK(oracle::max_abs_diff(back.row(0), Mat::Constant(1, 5, 3.25)) < 1e-12);
  CHECK(oracle::max_abs_diff(back.row(1), Mat::Constant(1, 5, -1.0)) < 1e-12);
  CHECK(n.stats.scale(0) > 0.0);
}

TEST_CASE("global scaler uses train statistics and inverts") {
  auto ds = split_dataset(ramp(2, 100), RatioSplit{0.7, 0.1});
  const auto sc = GlobalScaler::fit(ds);
  CHECK(sc.mean(0) == doctest::Approx(34.5));
  CHECK(sc.mean(1) == doctest::Approx(134.5));
  const auto z = sc.transform(ds);
  CHECK(std::abs(z.values.leftCols(70).row(0).mean()) < 1e-12);
  CHECK(oracle::max_abs_diff(sc.inverse(z.values), ds.values) < 1e-9);
}
