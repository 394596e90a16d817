#pragma once

#include "unitst/tensor.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace unitst {

class UndefinedCorrelation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Pearson correlation of two equal-length segments: (1/L) sum_{k<L} z_a[k] z_b[k] with
// population mean/std per segment. Throws UndefinedCorrelation when either segment is constant.
double cross_corr(std::span<const double> a, std::span<const double> b);

struct CorrHeatmap {
  Mat values;   // [p_i x p_j]; entries where `defined` is false carry no meaning
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> defined;
  std::size_t variate_i = 0;
  std::size_t variate_j = 0;
  std::size_t patch_len = 0;
  std::vector<std::size_t> starts_i;  // time index of each row's patch
  std::vector<std::size_t> starts_j;

  // Header row/column are patch indices; undefined cells are left empty.
  std::string to_csv() const;
};

// Correlations between every non-overlapping patch of variate i (rows) and of variate j
// (columns) within [time_begin, time_end) of `values` ([N x T]).
CorrHeatmap corr_heatmap(const Mat& values, std::size_t variate_i, std::size_t variate_j, std::size_t patch_len,
                         std::size_t time_begin = 0, std::optional<std::size_t> time_end = std::nullopt);

// M = A_dist * A_agg; both inputs must be row-stochastic (row sums within 1e-4, entries >= 0).
Mat multiplied_attention(const Mat& A_dist, const Mat& A_agg);

struct Histogram {
  std::vector<double> edges;  // n_bins + 1
  std::vector<std::size_t> counts;
  std::string layer;
};

// Equal-width bins over [lo, hi] (default [0, max entry]); the right edge is inclusive.
Histogram attn_weight_histogram(const Mat& M, std::size_t n_bins, std::optional<double> lo = std::nullopt,
                                std::optional<double> hi = std::nullopt, std::string layer = {});

// bin_left,bin_right,count,layer
std::string histograms_to_csv(const std::vector<Histogram>& hists);

struct PairFractionEntry {
  double quantile = 1.0;
  std::size_t selected = 0;  // entries at or above the selection threshold
  std::size_t cross = 0;     // of those, pairs with distinct variate and distinct patch
  double fraction = 0.0;
};

struct PairFractionReport {
  std::size_t n_variates = 0;
  std::size_t n_patches = 0;
  std::vector<PairFractionEntry> entries;
  double structural_baseline = 0.0;  // (1 - 1/N)(1 - 1/p)

  nlohmann::json to_json() const;
};

double structural_cross_fraction(std::size_t n_variates, std::size_t n_patches);

// For each quantile q in (0, 1], keeps the ceil(q * (N*p)^2) largest entries of M plus every
// entry tied with the smallest kept one, and reports the share of cross-variate cross-time pairs.
PairFractionReport cross_pair_fraction(const Mat& M, const std::vector<double>& top_quantiles, std::size_t n_variates,
                                       std::size_t n_patches);

}  // namespace unitst
