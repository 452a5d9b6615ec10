#include "bnmf/report.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "bnmf/errors.hpp"

namespace bnmf {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  return in;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = line.find(',', pos);
    if (next == std::string::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + 1;
  }
  return out;
}

void expect_header(std::ifstream& in, const std::string& path,
                   const std::string& expected) {
  std::string line;
  if (!std::getline(in, line) || line != expected)
    throw ParseError(path, 1, "unexpected header: '" + line + "'");
}

std::size_t parse_size(const std::string& s) {
  return static_cast<std::size_t>(std::strtoull(s.c_str(), nullptr, 10));
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size())
    throw ParseError("<string>", 0, "bad number: '" + s + "'");
  return v;
}

std::vector<ResultRow> result_rows(ExperimentKind kind,
                                   const std::vector<CellSummary>& cells) {
  std::vector<ResultRow> rows;
  rows.reserve(cells.size());
  for (const CellSummary& c : cells) {
    ResultRow r;
    r.experiment = to_string(kind);
    r.model = to_string(c.key.model);
    r.k = c.key.k;
    r.fraction_or_ratio = c.key.level;
    r.repeat = c.key.repeat;
    r.seed = c.seed;
    r.train_mse_mean_of_samples = c.train_mse_mean_of_samples;
    r.test_mse_of_posterior_mean = c.test_mse_of_posterior_mean;
    r.diverged = c.diverged;
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_results_csv(const std::string& path,
                       const std::vector<ResultRow>& rows) {
  auto out = open_out(path);
  out << kResultsHeader << '\n';
  for (const auto& r : rows) {
    out << r.experiment << ',' << r.model << ',' << r.k << ','
        << format_double(r.fraction_or_ratio) << ',' << r.repeat << ','
        << r.seed << ',' << format_double(r.train_mse_mean_of_samples) << ','
        << format_double(r.test_mse_of_posterior_mean) << ','
        << (r.diverged ? 1 : 0) << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<ResultRow> parse_results_csv(const std::string& path) {
  auto in = open_in(path);
  expect_header(in, path, kResultsHeader);
  std::vector<ResultRow> rows;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 9) throw ParseError(path, line_no, "expected 9 fields");
    ResultRow r;
    r.experiment = f[0];
    r.model = f[1];
    r.k = parse_size(f[2]);
    r.fraction_or_ratio = parse_double(f[3]);
    r.repeat = parse_size(f[4]);
    r.seed = std::strtoull(f[5].c_str(), nullptr, 10);
    r.train_mse_mean_of_samples = parse_double(f[6]);
    r.test_mse_of_posterior_mean = parse_double(f[7]);
    r.diverged = f[8] == "1";
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_aggregate_csv(const std::string& path, ExperimentKind kind,
                         const std::vector<AggregateRow>& rows) {
  auto out = open_out(path);
  out << "experiment,model,K,fraction_or_ratio,n,train_mse_mean,train_mse_std,"
         "test_mse_mean,test_mse_std,metric_mean,metric_std,diverged_count\n";
  for (const auto& r : rows) {
    out << to_string(kind) << ',' << to_string(r.key.model) << ',' << r.key.k
        << ',' << format_double(r.key.level) << ',' << r.n << ','
        << format_double(r.train_mse_mean) << ','
        << format_double(r.train_mse_std) << ','
        << format_double(r.test_mse_mean) << ','
        << format_double(r.test_mse_std) << ',' << format_double(r.metric_mean)
        << ',' << format_double(r.metric_std) << ',' << r.diverged_count
        << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<AggregateRow> parse_aggregate_csv(const std::string& path) {
  auto in = open_in(path);
  expect_header(in, path,
                "experiment,model,K,fraction_or_ratio,n,train_mse_mean,"
                "train_mse_std,test_mse_mean,test_mse_std,metric_mean,"
                "metric_std,diverged_count");
  std::vector<AggregateRow> rows;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 12) throw ParseError(path, line_no, "expected 12 fields");
    AggregateRow r;
    r.key.model = model_kind_from_string(f[1]);
    r.key.k = parse_size(f[2]);
    r.key.level = parse_double(f[3]);
    r.n = parse_size(f[4]);
    r.train_mse_mean = parse_double(f[5]);
    r.train_mse_std = parse_double(f[6]);
    r.test_mse_mean = parse_double(f[7]);
    r.test_mse_std = parse_double(f[8]);
    r.metric_mean = parse_double(f[9]);
    r.metric_std = parse_double(f[10]);
    r.diverged_count = parse_size(f[11]);
    rows.push_back(r);
  }
  return rows;
}

void write_timings_csv(const std::string& path, ExperimentKind kind,
                       const std::vector<CellSummary>& cells) {
  auto out = open_out(path);
  out << "experiment,model,K,fraction_or_ratio,repeat,seed,wall_seconds\n";
  for (const auto& c : cells) {
    out << to_string(kind) << ',' << to_string(c.key.model) << ',' << c.key.k
        << ',' << format_double(c.key.level) << ',' << c.key.repeat << ','
        << c.seed << ',' << format_double(c.wall_seconds) << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<TimingRow> parse_timings_csv(const std::string& path) {
  auto in = open_in(path);
  expect_header(in, path,
                "experiment,model,K,fraction_or_ratio,repeat,seed,wall_seconds");
  std::vector<TimingRow> rows;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 7) throw ParseError(path, line_no, "expected 7 fields");
    TimingRow r;
    r.model = f[1];
    r.k = parse_size(f[2]);
    r.fraction_or_ratio = parse_double(f[3]);
    r.repeat = parse_size(f[4]);
    r.seed = std::strtoull(f[5].c_str(), nullptr, 10);
    r.wall_seconds = parse_double(f[6]);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_noise_metrics_csv(const std::string& path,
                             const std::vector<CellSummary>& cells) {
  auto out = open_out(path);
  out << "model,K,ratio,repeat,seed,variance_data,mse_posterior_mean,"
         "metric_var_to_mse,clean_target_mse\n";
  for (const auto& c : cells) {
    out << to_string(c.key.model) << ',' << c.key.k << ','
        << format_double(c.key.level) << ',' << c.key.repeat << ',' << c.seed
        << ',' << format_double(c.variance_data) << ','
        << format_double(c.train_mse_of_posterior_mean) << ','
        << format_double(c.metric_var_to_mse) << ','
        << format_double(c.clean_target_mse) << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<NoiseMetricRow> parse_noise_metrics_csv(const std::string& path) {
  auto in = open_in(path);
  expect_header(in, path,
                "model,K,ratio,repeat,seed,variance_data,mse_posterior_mean,"
                "metric_var_to_mse,clean_target_mse");
  std::vector<NoiseMetricRow> rows;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 9) throw ParseError(path, line_no, "expected 9 fields");
    NoiseMetricRow r;
    r.model = f[0];
    r.k = parse_size(f[1]);
    r.ratio = parse_double(f[2]);
    r.repeat = parse_size(f[3]);
    r.seed = std::strtoull(f[4].c_str(), nullptr, 10);
    r.variance_data = parse_double(f[5]);
    r.mse_posterior_mean = parse_double(f[6]);
    r.metric_var_to_mse = parse_double(f[7]);
    r.clean_target_mse = parse_double(f[8]);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_curve_csv(const std::string& path, const ConvergenceCurve& curve) {
  auto out = open_out(path);
  out << "iteration,train_mse_mean\n";
  for (std::size_t i = 0; i < curve.mean_train_mse.size(); ++i)
    out << i << ',' << format_double(curve.mean_train_mse[i]) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

std::vector<double> parse_curve_csv(const std::string& path) {
  auto in = open_in(path);
  expect_header(in, path, "iteration,train_mse_mean");
  std::vector<double> out;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 2) throw ParseError(path, line_no, "expected 2 fields");
    out.push_back(parse_double(f[1]));
  }
  return out;
}

void write_trace_csv(const std::string& path, const RunTrace& trace) {
  auto out = open_out(path);
  out << (trace.has_test ? "iteration,train_mse,test_mse\n"
                         : "iteration,train_mse\n");
  for (std::size_t i = 0; i < trace.train_mse.size(); ++i) {
    out << i << ',' << format_double(trace.train_mse[i]);
    if (trace.has_test) out << ',' << format_double(trace.test_mse[i]);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

ParsedTrace parse_trace_csv(const std::string& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path, 1, "empty trace");
  const bool has_test = line == "iteration,train_mse,test_mse";
  if (!has_test && line != "iteration,train_mse")
    throw ParseError(path, 1, "unexpected header: '" + line + "'");
  ParsedTrace t;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != (has_test ? 3u : 2u))
      throw ParseError(path, line_no, "bad field count");
    t.train_mse.push_back(parse_double(f[1]));
    if (has_test) t.test_mse.push_back(parse_double(f[2]));
  }
  return t;
}

void write_prediction_csv(const std::string& path, const Matrix& prediction) {
  auto out = open_out(path);
  out << "row,col,value\n";
  for (std::size_t i = 0; i < prediction.rows(); ++i)
    for (std::size_t j = 0; j < prediction.cols(); ++j)
      if (!std::isnan(prediction(i, j)))
        out << i << ',' << j << ',' << format_double(prediction(i, j)) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

Matrix parse_prediction_csv(const std::string& path, std::size_t rows,
                            std::size_t cols) {
  auto in = open_in(path);
  expect_header(in, path, "row,col,value");
  Matrix m(rows, cols, std::numeric_limits<double>::quiet_NaN());
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 3) throw ParseError(path, line_no, "bad field count");
    m(parse_size(f[0]), parse_size(f[1])) = parse_double(f[2]);
  }
  return m;
}

std::uint64_t fnv1a64_file(const std::string& path) {
  auto in = open_in(path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (in.eof()) break;
  }
  return h;
}

std::string to_hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace bnmf
