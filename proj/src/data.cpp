#include "bnmf/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "bnmf/rng.hpp"

namespace bnmf {

namespace {

struct Record {
  std::uint32_t user;
  std::uint32_t item;
  double rating;
};

bool parse_positive_int(const std::string& s, std::uint32_t* out) {
  if (s.empty()) return false;
  std::uint64_t v = 0;
  for (const char c : s) {
    if (c < '0' || c > '9') return false;
    v = v * 10 + static_cast<std::uint64_t>(c - '0');
    if (v > 0xffffffffULL) return false;
  }
  if (v == 0) return false;
  *out = static_cast<std::uint32_t>(v);
  return true;
}

bool parse_real(const std::string& s, double* out) {
  if (s.empty()) return false;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) return false;
  *out = v;
  return true;
}

std::vector<std::string> split_fields(const std::string& line,
                                      const std::string& sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = line.find(sep, pos);
    if (next == std::string::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + sep.size();
  }
  return out;
}

}  // namespace

const char* to_string(RatingsFormat fmt) {
  switch (fmt) {
    case RatingsFormat::kUData: return "u.data";
    case RatingsFormat::kRatingsDat: return "ratings.dat";
    case RatingsFormat::kSynthetic: return "synthetic";
  }
  return "?";
}

RatingsFormat ratings_format_from_string(const std::string& name) {
  if (name == "u.data") return RatingsFormat::kUData;
  if (name == "ratings.dat") return RatingsFormat::kRatingsDat;
  if (name == "synthetic") return RatingsFormat::kSynthetic;
  throw ValidationError("unknown ratings format: " + name);
}

ObservedMatrix load_ratings(const std::string& path, RatingsFormat fmt) {
  std::ifstream in(path);
  if (!in) throw IoError("load_ratings: cannot open " + path);

  const std::string sep = fmt == RatingsFormat::kRatingsDat ? "::" : "\t";
  const bool range_checked = fmt != RatingsFormat::kSynthetic;

  std::vector<Record> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line, sep);
    const bool arity_ok = fmt == RatingsFormat::kSynthetic
                              ? (fields.size() == 3 || fields.size() == 4)
                              : fields.size() == 4;
    Record r{};
    if (!arity_ok || !parse_positive_int(fields[0], &r.user) ||
        !parse_positive_int(fields[1], &r.item) ||
        !parse_real(fields[2], &r.rating))
      throw ParseError(path, line_no, "malformed record: '" + line + "'");
    if (range_checked && (r.rating < 1.0 || r.rating > 5.0))
      throw ParseError(path, line_no,
                       "rating outside [1,5]: " + fields[2]);
    records.push_back(r);
  }
  if (records.empty()) throw DomainError("load_ratings: no records in " + path);

  // dense remap in ascending id order; duplicates keep the last occurrence
  std::map<std::uint32_t, std::uint32_t> users, items;
  for (const auto& r : records) {
    users.emplace(r.user, 0);
    items.emplace(r.item, 0);
  }
  std::uint32_t idx = 0;
  for (auto& [id, mapped] : users) mapped = idx++;
  idx = 0;
  for (auto& [id, mapped] : items) mapped = idx++;

  Matrix values(users.size(), items.size());
  Mask mask(users.size(), items.size());
  for (const auto& r : records) {
    const std::uint32_t i = users[r.user], j = items[r.item];
    values(i, j) = r.rating;
    mask.set(i, j, true);
  }
  return ObservedMatrix::from(std::move(values), std::move(mask));
}

void save_ratings(const ObservedMatrix& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_ratings: cannot open " + path);
  char buf[64];
  for (std::size_t t = 0; t < data.observed_count; ++t) {
    std::snprintf(buf, sizeof buf, "%.17g", data.obs_val[t]);
    out << (data.obs_row[t] + 1) << '\t' << (data.obs_col[t] + 1) << '\t' << buf
        << '\n';
  }
  if (!out) throw IoError("save_ratings: write failed for " + path);
}

ObservedMatrix clean_min_observed(const ObservedMatrix& data,
                                  std::size_t min_count) {
  if (min_count < 1)
    throw ValidationError("clean_min_observed: min_count must be >= 1");
  const std::size_t m = data.rows(), n = data.cols();
  std::vector<char> row_keep(m, 1), col_keep(n, 1);
  std::vector<std::size_t> row_cnt(m, 0), col_cnt(n, 0);

  bool changed = true;
  while (changed) {
    changed = false;
    std::fill(row_cnt.begin(), row_cnt.end(), 0);
    std::fill(col_cnt.begin(), col_cnt.end(), 0);
    for (std::size_t t = 0; t < data.observed_count; ++t) {
      const std::size_t i = data.obs_row[t], j = data.obs_col[t];
      if (row_keep[i] && col_keep[j]) {
        ++row_cnt[i];
        ++col_cnt[j];
      }
    }
    for (std::size_t i = 0; i < m; ++i)
      if (row_keep[i] && row_cnt[i] < min_count) {
        row_keep[i] = 0;
        changed = true;
      }
    for (std::size_t j = 0; j < n; ++j)
      if (col_keep[j] && col_cnt[j] < min_count) {
        col_keep[j] = 0;
        changed = true;
      }
  }

  std::vector<std::uint32_t> row_map(m), col_map(n);
  std::uint32_t mr = 0, nc = 0;
  for (std::size_t i = 0; i < m; ++i)
    if (row_keep[i]) row_map[i] = mr++;
  for (std::size_t j = 0; j < n; ++j)
    if (col_keep[j]) col_map[j] = nc++;
  if (mr == 0 || nc == 0)
    throw DomainError("clean_min_observed: cleaning emptied the matrix");

  Matrix values(mr, nc);
  Mask mask(mr, nc);
  for (std::size_t t = 0; t < data.observed_count; ++t) {
    const std::size_t i = data.obs_row[t], j = data.obs_col[t];
    if (!row_keep[i] || !col_keep[j]) continue;
    values(row_map[i], col_map[j]) = data.obs_val[t];
    mask.set(row_map[i], col_map[j], true);
  }
  return ObservedMatrix::from(std::move(values), std::move(mask));
}

std::pair<ObservedMatrix, ObservedMatrix> split_train_test(
    const ObservedMatrix& data, const SplitSpec& spec) {
  const double f = spec.fraction_unobserved;
  if (!(f > 0.0 && f < 1.0))
    throw ValidationError("split_train_test: fraction_unobserved must be in (0,1)");
  const double grid = static_cast<double>(data.rows()) *
                      static_cast<double>(data.cols());
  std::size_t train_count = static_cast<std::size_t>(
      std::llround((1.0 - f) * grid));
  if (train_count > data.observed_count) train_count = data.observed_count;
  if (train_count == 0)
    throw ValidationError(
        "split_train_test: fraction leaves no observed training entries");

  // deterministic Fisher-Yates over flat observed-cell indices
  std::vector<std::uint32_t> order(data.observed_count);
  for (std::size_t t = 0; t < order.size(); ++t)
    order[t] = static_cast<std::uint32_t>(t);
  Rng rng(spec.seed);
  for (std::size_t t = order.size(); t > 1; --t) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform() * t);
    std::swap(order[t - 1], order[j]);
  }

  Mask train_mask(data.rows(), data.cols());
  Mask test_mask(data.rows(), data.cols());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::uint32_t t = order[i];
    (i < train_count ? train_mask : test_mask)
        .set(data.obs_row[t], data.obs_col[t], true);
  }
  return {ObservedMatrix::from(data.values, std::move(train_mask)),
          ObservedMatrix::from(data.values, std::move(test_mask))};
}

ObservedMatrix add_noise(const ObservedMatrix& data, double noise_to_signal,
                         std::uint64_t seed) {
  if (!(noise_to_signal >= 0.0) || !std::isfinite(noise_to_signal))
    throw ValidationError("add_noise: ratio must be finite and >= 0");
  if (noise_to_signal == 0.0) return data;
  double mean = 0.0;
  for (const double v : data.obs_val) mean += v;
  mean /= static_cast<double>(data.observed_count);
  double var = 0.0;
  for (const double v : data.obs_val) var += (v - mean) * (v - mean);
  var /= static_cast<double>(data.observed_count);

  const double sd = std::sqrt(noise_to_signal * var);
  Rng rng(seed);
  ObservedMatrix out = data;
  for (std::size_t t = 0; t < out.observed_count; ++t) {
    const double noised = out.obs_val[t] + sd * rng.normal();
    out.obs_val[t] = noised;
    out.values(out.obs_row[t], out.obs_col[t]) = noised;
  }
  return out;
}

SyntheticData synthetic_generate(std::size_t rows, std::size_t cols,
                                 std::size_t k_true, double noise_sd,
                                 std::uint64_t seed) {
  if (rows < 1 || cols < 1 || k_true < 1)
    throw ValidationError("synthetic_generate: dimensions must be >= 1");
  if (!(noise_sd >= 0.0))
    throw ValidationError("synthetic_generate: noise_sd must be >= 0");
  Rng rng(seed);
  SyntheticData out;
  out.w_true = Matrix(rows, k_true);
  out.z_true = Matrix(k_true, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t k = 0; k < k_true; ++k)
      out.w_true(i, k) = rng.exponential(1.0);
  for (std::size_t k = 0; k < k_true; ++k)
    for (std::size_t j = 0; j < cols; ++j)
      out.z_true(k, j) = rng.exponential(1.0);

  Matrix values(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < k_true; ++k)
        s += out.w_true(i, k) * out.z_true(k, j);
      values(i, j) = noise_sd > 0.0 ? s + noise_sd * rng.normal() : s;
    }
  }
  out.data = ObservedMatrix::from(std::move(values), Mask(rows, cols, true));
  return out;
}

}  // namespace bnmf
