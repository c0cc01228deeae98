#include "data_io.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace postcorr {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

std::string lower(std::string_view s) {
  std::string r(s);
  std::transform(r.begin(), r.end(), r.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return r;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

RawSeries RawSeries::slice(std::size_t first_row, std::size_t count) const {
  RawSeries out;
  out.rows = count;
  out.cols = cols;
  out.column_names = column_names;
  out.values.assign(values.begin() + static_cast<std::ptrdiff_t>(first_row * cols),
                    values.begin() + static_cast<std::ptrdiff_t>((first_row + count) * cols));
  return out;
}

RawSeries parse_csv(std::string_view text) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  const auto lines = split_lines(text);
  if (lines.empty() || trim(lines[0]).empty()) fail(ErrorCode::Structural, "CSV is empty");

  auto header = split_fields(lines[0]);
  std::size_t skip = 0;
  const std::string first = lower(header[0]);
  if (first == "date" || first == "time" || first == "datetime" || first == "timestamp") skip = 1;
  if (header.size() <= skip) fail(ErrorCode::Structural, "CSV header has no value columns");

  RawSeries out;
  out.cols = header.size() - skip;
  for (std::size_t i = skip; i < header.size(); ++i) out.column_names.emplace_back(header[i]);
  if (lines.size() < 2) fail(ErrorCode::Structural, "CSV has a header but no data rows");

  out.values.reserve((lines.size() - 1) * out.cols);
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto fields = split_fields(lines[r]);
    if (fields.size() != header.size()) {
      fail(ErrorCode::Structural, "row " + std::to_string(r) + " has " + std::to_string(fields.size()) +
                                      " fields, header has " + std::to_string(header.size()));
    }
    for (std::size_t c = skip; c < fields.size(); ++c) {
      const std::string& col = out.column_names[c - skip];
      if (fields[c].empty()) {
        fail(ErrorCode::Parse, "row " + std::to_string(r) + " column " + col + ": missing value");
      }
      double v = 0.0;
      if (!parse_double(fields[c], v)) {
        fail(ErrorCode::Parse, "row " + std::to_string(r) + " column " + col + ": '" + std::string(fields[c]) +
                                   "' is not a finite number");
      }
      out.values.push_back(v);
    }
  }
  out.rows = lines.size() - 1;
  return out;
}

std::string serialize_csv(const RawSeries& series) {
  std::string out;
  for (std::size_t c = 0; c < series.cols; ++c) {
    if (c) out += ',';
    out += series.column_names[c];
  }
  out += '\n';
  for (std::size_t t = 0; t < series.rows; ++t) {
    for (std::size_t c = 0; c < series.cols; ++c) {
      if (c) out += ',';
      out += format_double(series.at(t, c));
    }
    out += '\n';
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::NotFound, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Internal, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) fail(ErrorCode::Internal, "write failed for " + path.string());
}

RawSeries read_csv_file(const std::filesystem::path& path) { return parse_csv(read_text_file(path)); }

void validate_split(const SplitSpec& s) {
  for (double f : {s.train, s.val, s.test}) {
    if (!(f > 0.0 && f < 1.0)) fail(ErrorCode::Configuration, "split fractions must lie in (0, 1)");
  }
  if (std::abs(s.train + s.val + s.test - 1.0) > 1e-9) {
    fail(ErrorCode::Configuration, "split fractions must sum to 1");
  }
}

void validate_window(const WindowSpec& w) {
  if (w.window < 1) fail(ErrorCode::Configuration, "window size must be at least 1");
  if (w.horizon < 1) fail(ErrorCode::Configuration, "horizon must be at least 1");
  if (w.stride < 1) fail(ErrorCode::Configuration, "stride must be at least 1");
}

Segments chronological_split(const RawSeries& series, const SplitSpec& split, const WindowSpec& window) {
  validate_split(split);
  validate_window(window);
  const std::size_t t = series.rows;
  const std::size_t need = window.window + window.horizon;
  const auto n_val = static_cast<std::size_t>(std::floor(split.val * static_cast<double>(t)));
  const auto n_test = static_cast<std::size_t>(std::floor(split.test * static_cast<double>(t)));
  const std::size_t n_train = t - n_val - n_test;
  if (n_train < need || n_val < need || n_test < need) {
    const double smallest = std::min({split.train, split.val, split.test});
    const auto min_t = static_cast<std::size_t>(std::ceil(static_cast<double>(need) / smallest));
    fail(ErrorCode::Configuration, "series of " + std::to_string(t) + " rows gives segments " + std::to_string(n_train) +
                                       "/" + std::to_string(n_val) + "/" + std::to_string(n_test) +
                                       "; each needs window+horizon = " + std::to_string(need) +
                                       " rows (about T >= " + std::to_string(min_t) + ")");
  }
  Segments s;
  s.train_offset = 0;
  s.val_offset = n_train;
  s.test_offset = n_train + n_val;
  s.train = series.slice(0, n_train);
  s.val = series.slice(n_train, n_val);
  s.test = series.slice(n_train + n_val, n_test);
  return s;
}

std::size_t window_count(std::size_t rows, const WindowSpec& spec) noexcept {
  if (spec.stride == 0 || spec.window + spec.horizon > rows) return 0;
  return (rows - spec.window - spec.horizon) / spec.stride + 1;
}

std::vector<Window> make_windows(const RawSeries& series, const WindowSpec& spec, std::string_view prefix,
                                 std::size_t base_offset) {
  validate_window(spec);
  if (spec.window + spec.horizon > series.rows) {
    fail(ErrorCode::Configuration, "window + horizon = " + std::to_string(spec.window + spec.horizon) +
                                       " exceeds the " + std::to_string(series.rows) + " available rows");
  }
  const std::size_t d = series.cols;
  std::vector<Window> out;
  const std::size_t n = window_count(series.rows, spec);
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i * spec.stride;
    Window w;
    w.offset = base_offset + k;
    w.sample_id = std::string(prefix) + ":" + std::to_string(w.offset);
    w.context.assign(series.values.begin() + static_cast<std::ptrdiff_t>(k * d),
                     series.values.begin() + static_cast<std::ptrdiff_t>((k + spec.window) * d));
    w.target.assign(series.values.begin() + static_cast<std::ptrdiff_t>((k + spec.window) * d),
                    series.values.begin() + static_cast<std::ptrdiff_t>((k + spec.window + spec.horizon) * d));
    out.push_back(std::move(w));
  }
  return out;
}

std::string prediction_csv(const PredictionFile& file) {
  std::string out = "sample_id,channel";
  for (std::size_t h = 1; h <= file.meta.horizon; ++h) out += ",h" + std::to_string(h);
  out += '\n';
  for (const auto& r : file.records) {
    out += r.sample_id;
    out += ',';
    out += std::to_string(r.channel);
    for (double v : r.values) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

std::string prediction_meta_json(const PredictionMeta& meta) {
  nlohmann::ordered_json j;
  j["window"] = meta.window;
  j["horizon"] = meta.horizon;
  j["channels"] = meta.channels;
  j["model"] = meta.model;
  return j.dump(2) + "\n";
}

PredictionMeta parse_prediction_meta(std::string_view json_text) {
  try {
    const auto j = nlohmann::json::parse(json_text);
    PredictionMeta m;
    m.window = j.at("window").get<std::size_t>();
    m.horizon = j.at("horizon").get<std::size_t>();
    m.channels = j.at("channels").get<std::size_t>();
    m.model = j.value("model", "");
    if (m.horizon < 1 || m.channels < 1) fail(ErrorCode::Structural, "prediction metadata: horizon and channels must be >= 1");
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Structural, std::string("prediction metadata: ") + e.what());
  }
}

PredictionFile parse_prediction_csv(std::string_view csv, const PredictionMeta& meta) {
  const auto lines = split_lines(csv);
  if (lines.empty()) fail(ErrorCode::Structural, "prediction file is empty");
  const auto header = split_fields(lines[0]);
  if (header.size() != meta.horizon + 2 || header[0] != "sample_id" || header[1] != "channel") {
    fail(ErrorCode::Alignment, "prediction header must be sample_id,channel,h1..h" + std::to_string(meta.horizon) +
                                   " (" + std::to_string(header.size() - std::min<std::size_t>(2, header.size())) +
                                   " horizon columns found)");
  }
  PredictionFile file;
  file.meta = meta;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto f = split_fields(lines[r]);
    if (f.size() != header.size()) {
      fail(ErrorCode::Alignment, "prediction row " + std::to_string(r) + " has " + std::to_string(f.size()) +
                                     " fields, expected " + std::to_string(header.size()));
    }
    PredictionRecord rec;
    rec.sample_id = std::string(f[0]);
    double ch = 0.0;
    if (!parse_double(f[1], ch) || ch < 0 || ch != std::floor(ch) || ch >= static_cast<double>(meta.channels)) {
      fail(ErrorCode::Parse, "prediction row " + std::to_string(r) + ": bad channel '" + std::string(f[1]) + "'");
    }
    rec.channel = static_cast<std::size_t>(ch);
    for (std::size_t h = 0; h < meta.horizon; ++h) {
      double v = 0.0;
      if (!parse_double(f[h + 2], v)) {
        fail(ErrorCode::Parse, "prediction row " + std::to_string(r) + " column h" + std::to_string(h + 1) +
                                   ": '" + std::string(f[h + 2]) + "' is not a finite number");
      }
      rec.values.push_back(v);
    }
    file.records.push_back(std::move(rec));
  }
  return file;
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".json");
  return p;
}

void save_prediction_file(const PredictionFile& file, const std::filesystem::path& csv_path) {
  write_text_file(csv_path, prediction_csv(file));
  write_text_file(sidecar_path(csv_path), prediction_meta_json(file.meta));
}

PredictionFile load_prediction_file(const std::filesystem::path& csv_path) {
  const auto meta = parse_prediction_meta(read_text_file(sidecar_path(csv_path)));
  return parse_prediction_csv(read_text_file(csv_path), meta);
}

ForecastBatch load_predictions(const PredictionFile& file, std::span<const Window> targets, std::size_t channels) {
  if (targets.empty()) fail(ErrorCode::Alignment, "no target windows to align with");
  const std::size_t h_count = file.meta.horizon;
  if (channels != file.meta.channels) {
    fail(ErrorCode::Alignment, "prediction file has " + std::to_string(file.meta.channels) + " channels, data has " +
                                   std::to_string(channels));
  }
  const std::size_t expected = targets.front().target.size() / channels;
  if (h_count != expected) {
    fail(ErrorCode::Alignment, "prediction horizon " + std::to_string(h_count) + " differs from target horizon " +
                                   std::to_string(expected));
  }
  std::map<std::pair<std::string, std::size_t>, const PredictionRecord*> index;
  for (const auto& rec : file.records) {
    if (rec.values.size() != h_count) {
      fail(ErrorCode::Alignment, "record " + rec.sample_id + "/" + std::to_string(rec.channel) + " has " +
                                     std::to_string(rec.values.size()) + " values, horizon is " + std::to_string(h_count));
    }
    if (!index.emplace(std::make_pair(rec.sample_id, rec.channel), &rec).second) {
      fail(ErrorCode::Alignment, "duplicate prediction record " + rec.sample_id + "/" + std::to_string(rec.channel));
    }
  }
  const Shape shape{targets.size(), h_count, channels};
  Tensor3 pred(shape), truth(shape);
  std::vector<std::string> ids;
  std::vector<std::string> missing;
  for (std::size_t n = 0; n < targets.size(); ++n) {
    const Window& w = targets[n];
    ids.push_back(w.sample_id);
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t h = 0; h < h_count; ++h) truth.at(n, h, c) = w.target[h * channels + c];
      auto it = index.find({w.sample_id, c});
      if (it == index.end()) {
        if (missing.size() < 20) missing.push_back(w.sample_id + "/" + std::to_string(c));
        continue;
      }
      auto dst = pred.series(n, c);
      std::copy(it->second->values.begin(), it->second->values.end(), dst.begin());
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    fail(ErrorCode::Alignment, "predictions missing for sample/channel: " + list);
  }
  return ForecastBatch(std::move(pred), std::move(truth), std::move(ids));
}

PredictionTensor prediction_tensor(const PredictionFile& file) {
  const std::size_t d = file.meta.channels;
  const std::size_t h_count = file.meta.horizon;
  std::vector<std::string> ids;
  std::unordered_map<std::string, std::size_t> pos;
  for (const auto& r : file.records) {
    if (pos.emplace(r.sample_id, ids.size()).second) ids.push_back(r.sample_id);
  }
  Tensor3 values(Shape{ids.size(), h_count, d});
  std::vector<std::vector<bool>> seen(ids.size(), std::vector<bool>(d, false));
  for (const auto& r : file.records) {
    if (r.values.size() != h_count || r.channel >= d) {
      fail(ErrorCode::Alignment, "record " + r.sample_id + "/" + std::to_string(r.channel) + " does not match metadata");
    }
    const std::size_t n = pos[r.sample_id];
    if (seen[n][r.channel]) fail(ErrorCode::Alignment, "duplicate prediction record " + r.sample_id + "/" + std::to_string(r.channel));
    seen[n][r.channel] = true;
    auto dst = values.series(n, r.channel);
    std::copy(r.values.begin(), r.values.end(), dst.begin());
  }
  for (std::size_t n = 0; n < ids.size(); ++n) {
    for (std::size_t c = 0; c < d; ++c) {
      if (!seen[n][c]) fail(ErrorCode::Alignment, "sample " + ids[n] + " lacks channel " + std::to_string(c));
    }
  }
  return {std::move(values), std::move(ids)};
}

PredictionFile prediction_file_from(const Tensor3& values, std::span<const std::string> sample_ids,
                                    const PredictionMeta& meta) {
  PredictionFile f;
  f.meta = meta;
  const Shape& s = values.shape();
  for (std::size_t n = 0; n < s.samples; ++n) {
    for (std::size_t c = 0; c < s.channels; ++c) {
      auto src = values.series(n, c);
      f.records.push_back({sample_ids[n], c, {src.begin(), src.end()}});
    }
  }
  return f;
}

PredictionFile forecast_persistence(std::span<const Window> windows, const WindowSpec& spec, std::size_t channels) {
  PredictionFile f;
  f.meta = {spec.window, spec.horizon, channels, "persistence"};
  for (const auto& w : windows) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double last = w.context[(spec.window - 1) * channels + c];
      f.records.push_back({w.sample_id, c, std::vector<double>(spec.horizon, last)});
    }
  }
  return f;
}

RidgeModel fit_ridge(std::span<const Window> train, const WindowSpec& spec, std::size_t channels, double lambda) {
  if (train.empty()) fail(ErrorCode::Configuration, "ridge needs at least one training window");
  if (!(lambda >= 0.0)) fail(ErrorCode::Configuration, "ridge strength must be non-negative");
  const auto n = static_cast<Eigen::Index>(train.size());
  const auto w_len = static_cast<Eigen::Index>(spec.window);
  const auto h_len = static_cast<Eigen::Index>(spec.horizon);
  RidgeModel m{spec.window, spec.horizon, channels, lambda, {}, {}};
  for (std::size_t c = 0; c < channels; ++c) {
    Eigen::MatrixXd x(n, w_len), y(n, h_len);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Window& w = train[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < w_len; ++j) x(i, j) = w.context[static_cast<std::size_t>(j) * channels + c];
      for (Eigen::Index j = 0; j < h_len; ++j) y(i, j) = w.target[static_cast<std::size_t>(j) * channels + c];
    }
    const Eigen::RowVectorXd x_mean = x.colwise().mean();
    const Eigen::RowVectorXd y_mean = y.colwise().mean();
    x.rowwise() -= x_mean;
    y.rowwise() -= y_mean;
    Eigen::MatrixXd gram = x.transpose() * x;
    gram.diagonal().array() += lambda;
    const Eigen::MatrixXd beta = gram.ldlt().solve(x.transpose() * y);  // W x H
    const Eigen::RowVectorXd b0 = y_mean - x_mean * beta;

    std::vector<double> coef(static_cast<std::size_t>(h_len * w_len));
    for (Eigen::Index h = 0; h < h_len; ++h)
      for (Eigen::Index j = 0; j < w_len; ++j) coef[static_cast<std::size_t>(h * w_len + j)] = beta(j, h);
    m.coef.push_back(std::move(coef));
    m.intercept.emplace_back(b0.data(), b0.data() + h_len);
  }
  return m;
}

PredictionFile forecast_ridge(const RidgeModel& model, std::span<const Window> windows) {
  PredictionFile f;
  f.meta = {model.window, model.horizon, model.channels, "ridge"};
  const std::size_t d = model.channels;
  for (const auto& w : windows) {
    for (std::size_t c = 0; c < d; ++c) {
      std::vector<double> out(model.horizon);
      for (std::size_t h = 0; h < model.horizon; ++h) {
        double acc = model.intercept[c][h];
        for (std::size_t j = 0; j < model.window; ++j) acc += model.coef[c][h * model.window + j] * w.context[j * d + c];
        out[h] = acc;
      }
      f.records.push_back({w.sample_id, c, std::move(out)});
    }
  }
  return f;
}

ZScore fit_zscore(const RawSeries& series) {
  ZScore z;
  for (std::size_t c = 0; c < series.cols; ++c) {
    double mean = 0.0;
    for (std::size_t t = 0; t < series.rows; ++t) mean += series.at(t, c);
    mean /= static_cast<double>(series.rows);
    double var = 0.0;
    for (std::size_t t = 0; t < series.rows; ++t) var += (series.at(t, c) - mean) * (series.at(t, c) - mean);
    var /= static_cast<double>(series.rows);
    z.mean.push_back(mean);
    z.scale.push_back(var > 0.0 ? std::sqrt(var) : 1.0);
  }
  return z;
}

RawSeries apply_zscore(const ZScore& z, const RawSeries& series) {
  RawSeries out = series;
  for (std::size_t t = 0; t < series.rows; ++t)
    for (std::size_t c = 0; c < series.cols; ++c)
      out.values[t * series.cols + c] = (series.at(t, c) - z.mean[c]) / z.scale[c];
  return out;
}

}  // namespace postcorr
