#include "unitst/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace unitst {

double cross_corr(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cross_corr: segment lengths differ");
  if (a.size() < 2) throw std::invalid_argument("cross_corr: segments need at least 2 points");
  const double L = static_cast<double>(a.size());
  double mu_a = 0.0, mu_b = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    mu_a += a[k];
    mu_b += b[k];
  }
  mu_a /= L;
  mu_b /= L;
  double var_a = 0.0, var_b = 0.0, cov = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double da = a[k] - mu_a;
    const double db = b[k] - mu_b;
    var_a += da * da;
    var_b += db * db;
    cov += da * db;
  }
  if (var_a == 0.0 || var_b == 0.0) {
    throw UndefinedCorrelation("cross_corr: correlation undefined for a constant segment");
  }
  const double r = cov / std::sqrt(var_a * var_b);
  return std::clamp(r, -1.0, 1.0);
}

std::string CorrHeatmap::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "patch";
  for (Eigen::Index c = 0; c < values.cols(); ++c) os << "," << c;
  os << "\n";
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    os << r;
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      os << ",";
      if (defined(r, c)) os << values(r, c);
    }
    os << "\n";
  }
  return os.str();
}

CorrHeatmap corr_heatmap(const Mat& values, std::size_t variate_i, std::size_t variate_j, std::size_t patch_len,
                         std::size_t time_begin, std::optional<std::size_t> time_end) {
  const auto N = static_cast<std::size_t>(values.rows());
  if (variate_i >= N || variate_j >= N) {
    throw std::out_of_range("corr_heatmap: variate index out of range (N=" + std::to_string(N) + ")");
  }
  if (patch_len < 2) throw std::invalid_argument("corr_heatmap: patch length must be >= 2");
  const std::size_t end = time_end.value_or(static_cast<std::size_t>(values.cols()));
  if (end > static_cast<std::size_t>(values.cols()) || time_begin >= end) {
    throw std::out_of_range("corr_heatmap: invalid time range");
  }
  const std::size_t n_patch = (end - time_begin) / patch_len;
  if (n_patch == 0) throw std::invalid_argument("corr_heatmap: series shorter than one patch");

  CorrHeatmap hm;
  hm.variate_i = variate_i;
  hm.variate_j = variate_j;
  hm.patch_len = patch_len;
  const auto P = static_cast<Eigen::Index>(n_patch);
  hm.values = Mat::Zero(P, P);
  hm.defined.setConstant(P, P, false);
  for (std::size_t a = 0; a < n_patch; ++a) {
    hm.starts_i.push_back(time_begin + a * patch_len);
    hm.starts_j.push_back(time_begin + a * patch_len);
  }
  const Mat row_i = values.row(static_cast<Eigen::Index>(variate_i));
  const Mat row_j = values.row(static_cast<Eigen::Index>(variate_j));
  for (std::size_t a = 0; a < n_patch; ++a) {
    std::span<const double> seg_a(row_i.data() + hm.starts_i[a], patch_len);
    for (std::size_t b = 0; b < n_patch; ++b) {
      std::span<const double> seg_b(row_j.data() + hm.starts_j[b], patch_len);
      try {
        hm.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = cross_corr(seg_a, seg_b);
        hm.defined(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = true;
      } catch (const UndefinedCorrelation&) {
      }
    }
  }
  return hm;
}

namespace {

void require_stochastic(const Mat& A, const char* what) {
  if ((A.array() < 0.0).any()) throw std::invalid_argument(std::string(what) + " has negative entries");
  for (Eigen::Index r = 0; r < A.rows(); ++r) {
    const double s = A.row(r).sum();
    if (std::abs(s - 1.0) > 1e-4) {
      throw std::invalid_argument(std::string(what) + " row " + std::to_string(r) + " sums to " + std::to_string(s));
    }
  }
}

}  // namespace

Mat multiplied_attention(const Mat& A_dist, const Mat& A_agg) {
  if (A_dist.cols() != A_agg.rows()) {
    throw ShapeError("multiplied_attention: " + shape_str(A_dist) + " x " + shape_str(A_agg));
  }
  require_stochastic(A_dist, "A_dist");
  require_stochastic(A_agg, "A_agg");
  return A_dist * A_agg;
}

Histogram attn_weight_histogram(const Mat& M, std::size_t n_bins, std::optional<double> lo, std::optional<double> hi,
                                std::string layer) {
  if (n_bins < 2) throw std::invalid_argument("histogram: need at least 2 bins");
  if (M.size() == 0) throw std::invalid_argument("histogram: empty matrix");
  double left = lo.value_or(0.0);
  double right = hi.value_or(M.maxCoeff());
  if (!(right > left)) right = left + 1.0;
  Histogram h;
  h.layer = std::move(layer);
  h.counts.assign(n_bins, 0);
  const double width = (right - left) / static_cast<double>(n_bins);
  for (std::size_t b = 0; b <= n_bins; ++b) h.edges.push_back(left + width * static_cast<double>(b));
  h.edges.back() = right;
  for (Eigen::Index i = 0; i < M.size(); ++i) {
    const double v = M.data()[i];
    if (v < left || v > right) continue;
    auto bin = static_cast<std::size_t>((v - left) / width);
    h.counts[std::min(bin, n_bins - 1)]++;
  }
  return h;
}

std::string histograms_to_csv(const std::vector<Histogram>& hists) {
  std::ostringstream os;
  os.precision(17);
  os << "bin_left,bin_right,count,layer\n";
  for (const auto& h : hists) {
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      os << h.edges[b] << "," << h.edges[b + 1] << "," << h.counts[b] << "," << h.layer << "\n";
    }
  }
  return os.str();
}

double structural_cross_fraction(std::size_t n_variates, std::size_t n_patches) {
  // (1 - 1/N)(1 - 1/p) as one rounded division, so it agrees bit for bit with a pair count.
  if (n_variates == 0 || n_patches == 0) return 0.0;
  return static_cast<double>((n_variates - 1) * (n_patches - 1)) / static_cast<double>(n_variates * n_patches);
}

nlohmann::json PairFractionReport::to_json() const {
  nlohmann::json j{{"n_variates", n_variates}, {"n_patches", n_patches}, {"structural_baseline", structural_baseline}};
  auto& arr = j["thresholds"] = nlohmann::json::array();
  for (const auto& e : entries) {
    arr.push_back({{"top_quantile", e.quantile}, {"selected", e.selected}, {"cross", e.cross},
                   {"fraction", e.fraction}, {"percent", 100.0 * e.fraction}});
  }
  return j;
}

PairFractionReport cross_pair_fraction(const Mat& M, const std::vector<double>& top_quantiles, std::size_t n_variates,
                                       std::size_t n_patches) {
  const auto T = static_cast<Eigen::Index>(n_variates * n_patches);
  require_shape(M, T, T, "cross_pair_fraction");
  PairFractionReport rep;
  rep.n_variates = n_variates;
  rep.n_patches = n_patches;
  rep.structural_baseline = structural_cross_fraction(n_variates, n_patches);

  std::vector<double> sorted(M.data(), M.data() + M.size());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const auto p = static_cast<Eigen::Index>(n_patches);
  for (double q : top_quantiles) {
    if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("cross_pair_fraction: quantiles must lie in (0, 1]");
    const double want = std::ceil(q * static_cast<double>(sorted.size()) - 1e-9);
    const auto keep = std::clamp<std::size_t>(static_cast<std::size_t>(want), 1, sorted.size());
    const double threshold = sorted[keep - 1];
    PairFractionEntry e;
    e.quantile = q;
    for (Eigen::Index r = 0; r < T; ++r) {
      for (Eigen::Index c = 0; c < T; ++c) {
        if (M(r, c) < threshold) continue;
        ++e.selected;
        if (r / p != c / p && r % p != c % p) ++e.cross;
      }
    }
    e.fraction = static_cast<double>(e.cross) / static_cast<double>(e.selected);
    rep.entries.push_back(e);
  }
  return rep;
}

}  // namespace unitst
