#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tensor.hpp"

namespace postcorr {

// T x d matrix of observations, row-major, rows in time order.
struct RawSeries {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  std::vector<std::string> column_names;

  double at(std::size_t t, std::size_t c) const { return values[t * cols + c]; }
  RawSeries slice(std::size_t first_row, std::size_t count) const;
};

// Header row required; an optional leading date/time column is dropped.
// Errors: Structural (empty, ragged), Parse (missing or non-numeric cell,
// reported with 1-based data row and column name).
RawSeries parse_csv(std::string_view text);
std::string serialize_csv(const RawSeries& series);
RawSeries read_csv_file(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

struct SplitSpec {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

struct WindowSpec {
  std::size_t window = 0;
  std::size_t horizon = 0;
  std::size_t stride = 1;
};

void validate_split(const SplitSpec& spec);
void validate_window(const WindowSpec& spec);

struct Segments {
  RawSeries train, val, test;
  std::size_t train_offset = 0, val_offset = 0, test_offset = 0;
};

// Contiguous train/val/test in time order. Val and test take floor(frac*T),
// train takes the rest. Each segment must host at least one window.
Segments chronological_split(const RawSeries& series, const SplitSpec& split, const WindowSpec& window);

struct Window {
  std::vector<double> context;  // W x d, row-major
  std::vector<double> target;   // H x d, row-major
  std::string sample_id;
  std::size_t offset = 0;  // row of the first context value in the full series
};

std::size_t window_count(std::size_t rows, const WindowSpec& spec) noexcept;

// Windows at offsets 0, stride, 2*stride, ...; ids are "<prefix>:<base_offset + offset>".
std::vector<Window> make_windows(const RawSeries& series, const WindowSpec& spec, std::string_view prefix = "w",
                                 std::size_t base_offset = 0);

struct PredictionMeta {
  std::size_t window = 0;
  std::size_t horizon = 0;
  std::size_t channels = 0;
  std::string model;
};

struct PredictionRecord {
  std::string sample_id;
  std::size_t channel = 0;
  std::vector<double> values;
};

struct PredictionFile {
  PredictionMeta meta;
  std::vector<PredictionRecord> records;
};

// CSV body "sample_id,channel,h1..hH" plus a JSON sidecar
// {"window","horizon","channels","model"}.
std::string prediction_csv(const PredictionFile& file);
std::string prediction_meta_json(const PredictionMeta& meta);
PredictionMeta parse_prediction_meta(std::string_view json_text);
PredictionFile parse_prediction_csv(std::string_view csv, const PredictionMeta& meta);

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);
void save_prediction_file(const PredictionFile& file, const std::filesystem::path& csv_path);
PredictionFile load_prediction_file(const std::filesystem::path& csv_path);

// Join on (sample_id, channel). Extra records are ignored; missing pairs,
// duplicates and horizon mismatches are Alignment errors.
ForecastBatch load_predictions(const PredictionFile& file, std::span<const Window> targets, std::size_t channels);

// Samples in first-appearance order; every sample must carry all channels.
struct PredictionTensor {
  Tensor3 values;
  std::vector<std::string> sample_ids;
};
PredictionTensor prediction_tensor(const PredictionFile& file);
PredictionFile prediction_file_from(const Tensor3& values, std::span<const std::string> sample_ids,
                                    const PredictionMeta& meta);

// Built-in base forecasters.
PredictionFile forecast_persistence(std::span<const Window> windows, const WindowSpec& spec, std::size_t channels);

// Per-channel ridge map from W lags to H outputs; intercept unpenalized.
struct RidgeModel {
  std::size_t window = 0;
  std::size_t horizon = 0;
  std::size_t channels = 0;
  double lambda = 1e-2;
  std::vector<std::vector<double>> coef;       // per channel: H x W, row-major
  std::vector<std::vector<double>> intercept;  // per channel: H
};

RidgeModel fit_ridge(std::span<const Window> train, const WindowSpec& spec, std::size_t channels, double lambda);
PredictionFile forecast_ridge(const RidgeModel& model, std::span<const Window> windows);

// Per-channel z-score fitted on one segment (normally train).
struct ZScore {
  std::vector<double> mean;
  std::vector<double> scale;
};
ZScore fit_zscore(const RawSeries& series);
RawSeries apply_zscore(const ZScore& z, const RawSeries& series);

}  // namespace postcorr
