#pragma once

#include "unitst/tensor.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace unitst {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const IndexRange&) const = default;
};

struct SplitBounds {
  IndexRange train;
  IndexRange val;
  IndexRange test;
  bool operator==(const SplitBounds&) const = default;
};

enum class Split { train, val, test };

Split parse_split_name(const std::string& name);

struct TimeSeriesDataset {
  Mat values;  // [N variates x T steps]
  std::vector<std::string> variate_names;
  std::vector<std::string> timestamps;  // date column, metadata only
  std::optional<std::string> frequency;
  std::optional<SplitBounds> split_bounds;

  std::size_t num_variates() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t num_steps() const { return static_cast<std::size_t>(values.cols()); }
  IndexRange range(Split which) const;
};

// Fails on unparseable or non-finite cells, naming the row (1-based, header excluded) and column.
TimeSeriesDataset load_csv_dataset(const std::filesystem::path& path,
                                   const std::optional<std::string>& date_column = std::nullopt);

struct RatioSplit {
  double train = 0.7;
  double val = 0.1;
};
struct ExplicitSplit {
  SplitBounds bounds;
};
using SplitSpec = std::variant<RatioSplit, ExplicitSplit>;

// Accepts "ratio:0.7,0.1" or "explicit:0,8545,11426,14307".
SplitSpec parse_split_spec(const std::string& text);
std::string format_split_spec(const SplitSpec& spec);

TimeSeriesDataset split_dataset(TimeSeriesDataset ds, const SplitSpec& spec);

struct Window {
  Mat x;  // [N x L]
  Mat y;  // [N x S]
  std::size_t origin_t = 0;
};

// Lazily materialised windows over one split. Holds its own copy of the split's columns.
class WindowSet {
 public:
  WindowSet() = default;
  WindowSet(Mat source, std::size_t offset, std::size_t lookback, std::size_t horizon,
            std::size_t stride);

  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }
  std::size_t lookback() const { return lookback_; }
  std::size_t horizon() const { return horizon_; }
  std::size_t num_variates() const { return static_cast<std::size_t>(source_.rows()); }

  Window operator[](std::size_t i) const;
  std::size_t origin(std::size_t i) const { return offset_ + i * stride_; }

  // Stacks the selected windows: x -> [(B*N) x L], y -> [(B*N) x S], sample-major.
  void gather(std::span<const std::size_t> indices, Mat& x, Mat& y) const;

 private:
  Mat source_;
  std::size_t offset_ = 0;
  std::size_t lookback_ = 0;
  std::size_t horizon_ = 0;
  std::size_t stride_ = 1;
  std::size_t count_ = 0;
};

std::size_t window_count(std::size_t split_len, std::size_t lookback, std::size_t horizon,
                         std::size_t stride);

WindowSet make_windows(const TimeSeriesDataset& ds, Split which, std::size_t lookback,
                       std::size_t horizon, std::size_t stride = 1);

// Per-variate statistics for the reversible z-score. The divisor is sqrt(std^2 + epsilon^2),
// which stays positive on constant rows and is within 1e-10 of std for unit-scale data.
struct NormStats {
  Vec mean;
  Vec std;
  double epsilon = 1e-5;

  double scale(Eigen::Index i) const;
};

struct Normalized {
  Mat x_norm;
  NormStats stats;
};

Normalized instance_normalize(const Mat& x, double epsilon = 1e-5);
Mat denormalize(const Mat& y_norm, const NormStats& stats);

// Dataset-level z-score fitted on the train split; metrics are reported on this scale.
struct GlobalScaler {
  Vec mean;
  Vec std;

  static GlobalScaler fit(const TimeSeriesDataset& ds);
  TimeSeriesDataset transform(TimeSeriesDataset ds) const;
  Mat transform(const Mat& values) const;
  Mat inverse(const Mat& values) const;
};

}  // namespace unitst
