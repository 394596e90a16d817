#include "unitst/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace unitst {

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  std::string out(s.substr(b, e - b + 1));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
      cur.push_back(c);
    } else if (c == ',' && !quoted) {
      cells.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(trim(cur));
  return cells;
}

std::optional<double> parse_real(const std::string& cell) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || cell.empty()) return std::nullopt;
  return v;
}

}  // namespace

Split parse_split_name(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + name + "' (expected train|val|test)");
}

IndexRange TimeSeriesDataset::range(Split which) const {
  if (!split_bounds) throw DataError("dataset has no split bounds; call split_dataset first");
  switch (which) {
    case Split::train: return split_bounds->train;
    case Split::val: return split_bounds->val;
    case Split::test: return split_bounds->test;
  }
  return {};
}

TimeSeriesDataset load_csv_dataset(const std::filesystem::path& path,
                                   const std::optional<std::string>& date_column) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open dataset file '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file (missing header row)");
  const auto header = split_csv_line(line);

  std::optional<std::size_t> date_idx;
  if (date_column) {
    auto it = std::find(header.begin(), header.end(), *date_column);
    if (it == header.end()) throw DataError(path.string() + ": date column '" + *date_column + "' not in header");
    date_idx = static_cast<std::size_t>(it - header.begin());
  }

  TimeSeriesDataset ds;
  std::vector<std::size_t> value_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (date_idx && c == *date_idx) continue;
    value_cols.push_back(c);
    ds.variate_names.push_back(header[c]);
  }
  if (value_cols.empty()) throw DataError(path.string() + ": no value columns");

  std::vector<std::vector<double>> rows;
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row_no;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError(path.string() + ": row " + std::to_string(row_no) + " has " +
                      std::to_string(cells.size()) + " cells, header has " + std::to_string(header.size()));
    }
    std::vector<double> row;
    row.reserve(value_cols.size());
    for (std::size_t c : value_cols) {
      auto v = parse_real(cells[c]);
      if (!v || !std::isfinite(*v)) {
        throw DataError(path.string() + ": row " + std::to_string(row_no) + ", column '" + header[c] +
                        "': cannot parse '" + cells[c] + "' as a finite real");
      }
      row.push_back(*v);
    }
    rows.push_back(std::move(row));
    if (date_idx) ds.timestamps.push_back(cells[*date_idx]);
  }
  if (rows.size() < 2) throw DataError(path.string() + ": need at least 2 data rows");

  ds.values.resize(static_cast<Eigen::Index>(value_cols.size()), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (std::size_t i = 0; i < value_cols.size(); ++i) {
      ds.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = rows[t][i];
    }
  }
  return ds;
}

SplitSpec parse_split_spec(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("split spec '" + text + "' lacks a mode prefix");
  const std::string mode = text.substr(0, colon);
  std::vector<std::string> parts;
  std::stringstream ss(text.substr(colon + 1));
  for (std::string item; std::getline(ss, item, ',');) parts.push_back(trim(item));

  if (mode == "ratio") {
    if (parts.size() != 2) throw std::invalid_argument("ratio split needs two values: ratio:TRAIN,VAL");
    auto a = parse_real(parts[0]);
    auto b = parse_real(parts[1]);
    if (!a || !b) throw std::invalid_argument("ratio split values must be reals");
    return RatioSplit{*a, *b};
  }
  if (mode == "explicit") {
    if (parts.size() != 4) throw std::invalid_argument("explicit split needs four boundaries: explicit:B0,B1,B2,B3");
    std::size_t b[4];
    for (int i = 0; i < 4; ++i) {
      auto [ptr, ec] = std::from_chars(parts[i].data(), parts[i].data() + parts[i].size(), b[i]);
      if (ec != std::errc() || ptr != parts[i].data() + parts[i].size()) {
        throw std::invalid_argument("explicit split boundary '" + parts[i] + "' is not an index");
      }
    }
    return ExplicitSplit{SplitBounds{{b[0], b[1]}, {b[1], b[2]}, {b[2], b[3]}}};
  }
  throw std::invalid_argument("unknown split mode '" + mode + "' (expected ratio|explicit)");
}

std::string format_split_spec(const SplitSpec& spec) {
  std::ostringstream os;
  auto shortest = [](double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  };
  if (const auto* r = std::get_if<RatioSplit>(&spec)) {
    os << "ratio:" << shortest(r->train) << "," << shortest(r->val);
  } else {
    const auto& b = std::get<ExplicitSplit>(spec).bounds;
    os << "explicit:" << b.train.begin << "," << b.val.begin << "," << b.test.begin << "," << b.test.end;
  }
  return os.str();
}

TimeSeriesDataset split_dataset(TimeSeriesDataset ds, const SplitSpec& spec) {
  const std::size_t T = ds.num_steps();
  SplitBounds bounds;
  if (const auto* r = std::get_if<RatioSplit>(&spec)) {
    if (!(r->train > 0 && r->train < 1 && r->val > 0 && r->val < 1 && r->train + r->val < 1)) {
      throw DataError("ratio split requires train, val in (0,1) with train + val < 1");
    }
    // The small offset keeps e.g. 0.7 * 100 from flooring to 69.
    const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(T) * r->train + 1e-9));
    const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(T) * r->val + 1e-9));
    bounds = {{0, n_train}, {n_train, n_train + n_val}, {n_train + n_val, T}};
  } else {
    bounds = std::get<ExplicitSplit>(spec).bounds;
    if (!(bounds.train.begin <= bounds.train.end && bounds.train.end <= bounds.val.begin &&
          bounds.val.begin <= bounds.val.end && bounds.val.end <= bounds.test.begin &&
          bounds.test.begin <= bounds.test.end && bounds.test.end <= T)) {
      throw DataError("explicit split bounds must be ordered, non-overlapping and within T=" + std::to_string(T));
    }
  }
  if (bounds.train.size() == 0 || bounds.val.size() == 0 || bounds.test.size() == 0) {
    throw DataError("split produces an empty partition (train=" + std::to_string(bounds.train.size()) +
                    ", val=" + std::to_string(bounds.val.size()) + ", test=" + std::to_string(bounds.test.size()) + ")");
  }
  ds.split_bounds = bounds;
  return ds;
}

std::size_t window_count(std::size_t split_len, std::size_t lookback, std::size_t horizon,
                         std::size_t stride) {
  if (stride == 0) throw std::invalid_argument("window stride must be >= 1");
  if (lookback + horizon > split_len) return 0;
  return (split_len - lookback - horizon) / stride + 1;
}

WindowSet::WindowSet(Mat source, std::size_t offset, std::size_t lookback, std::size_t horizon,
                     std::size_t stride)
    : source_(std::move(source)), offset_(offset), lookback_(lookback), horizon_(horizon), stride_(stride) {
  count_ = window_count(static_cast<std::size_t>(source_.cols()), lookback, horizon, stride);
}

Window WindowSet::operator[](std::size_t i) const {
  if (i >= count_) throw std::out_of_range("window index out of range");
  const auto start = static_cast<Eigen::Index>(i * stride_);
  const auto L = static_cast<Eigen::Index>(lookback_);
  const auto S = static_cast<Eigen::Index>(horizon_);
  return Window{source_.middleCols(start, L), source_.middleCols(start + L, S), origin(i)};
}

void WindowSet::gather(std::span<const std::size_t> indices, Mat& x, Mat& y) const {
  const auto N = source_.rows();
  const auto L = static_cast<Eigen::Index>(lookback_);
  const auto S = static_cast<Eigen::Index>(horizon_);
  const auto B = static_cast<Eigen::Index>(indices.size());
  x.resize(B * N, L);
  y.resize(B * N, S);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto i = indices[static_cast<std::size_t>(b)];
    if (i >= count_) throw std::out_of_range("window index out of range");
    const auto start = static_cast<Eigen::Index>(i * stride_);
    x.middleRows(b * N, N) = source_.middleCols(start, L);
    y.middleRows(b * N, N) = source_.middleCols(start + L, S);
  }
}

WindowSet make_windows(const TimeSeriesDataset& ds, Split which, std::size_t lookback,
                       std::size_t horizon, std::size_t stride) {
  const IndexRange r = ds.range(which);
  if (lookback + horizon > r.size()) {
    throw DataError("lookback + horizon (" + std::to_string(lookback + horizon) + ") exceeds split length " +
                    std::to_string(r.size()));
  }
  if (stride == 0) throw DataError("window stride must be >= 1");
  return WindowSet(ds.values.middleCols(static_cast<Eigen::Index>(r.begin), static_cast<Eigen::Index>(r.size())),
                   r.begin, lookback, horizon, stride);
}

double NormStats::scale(Eigen::Index i) const {
  return std::sqrt(std(i) * std(i) + epsilon * epsilon);
}

Normalized instance_normalize(const Mat& x, double epsilon) {
  Normalized out;
  const auto N = x.rows();
  out.stats.epsilon = epsilon;
  out.stats.mean = x.rowwise().mean();
  out.stats.std.resize(N);
  out.x_norm.resize(N, x.cols());
  for (Eigen::Index i = 0; i < N; ++i) {
    const double mu = out.stats.mean(i);
    const double var = (x.row(i).array() - mu).square().mean();
    out.stats.std(i) = std::sqrt(var);
    out.x_norm.row(i) = (x.row(i).array() - mu) / out.stats.scale(i);
  }
  return out;
}

Mat denormalize(const Mat& y_norm, const NormStats& stats) {
  if (y_norm.rows() != stats.mean.size()) throw ShapeError("denormalize: row count does not match stats");
  Mat y(y_norm.rows(), y_norm.cols());
  for (Eigen::Index i = 0; i < y_norm.rows(); ++i) {
    y.row(i) = y_norm.row(i).array() * stats.scale(i) + stats.mean(i);
  }
  return y;
}

GlobalScaler GlobalScaler::fit(const TimeSeriesDataset& ds) {
  const IndexRange r = ds.range(Split::train);
  const Mat train = ds.values.middleCols(static_cast<Eigen::Index>(r.begin), static_cast<Eigen::Index>(r.size()));
  GlobalScaler s;
  s.mean = train.rowwise().mean();
  s.std.resize(train.rows());
  for (Eigen::Index i = 0; i < train.rows(); ++i) {
    const double sd = std::sqrt((train.row(i).array() - s.mean(i)).square().mean());
    s.std(i) = sd > 0 ? sd : 1.0;
  }
  return s;
}

Mat GlobalScaler::transform(const Mat& values) const {
  if (values.rows() != mean.size()) throw ShapeError("GlobalScaler: variate count mismatch");
  Mat out(values.rows(), values.cols());
  for (Eigen::Index i = 0; i < values.rows(); ++i) out.row(i) = (values.row(i).array() - mean(i)) / std(i);
  return out;
}

TimeSeriesDataset GlobalScaler::transform(TimeSeriesDataset ds) const {
  ds.values = transform(ds.values);
  return ds;
}

Mat GlobalScaler::inverse(const Mat& values) const {
  if (values.rows() != mean.size()) throw ShapeError("GlobalScaler: variate count mismatch");
  Mat out(values.rows(), values.cols());
  for (Eigen::Index i = 0; i < values.rows(); ++i) out.row(i) = values.row(i).array() * std(i) + mean(i);
  return out;
}

}  // namespace unitst
