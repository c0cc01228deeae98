#pragma once

#include <cmath>
#include <random>

#include "pipeline.hpp"

namespace testing {

using namespace postcorr;

// Positive seasonal series with noise; `cols` channels at different levels.
inline RawSeries seasonal_series(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.3);
  RawSeries s;
  s.rows = rows;
  s.cols = cols;
  for (std::size_t c = 0; c < cols; ++c) s.column_names.push_back("ch" + std::to_string(c));
  for (std::size_t t = 0; t < rows; ++t)
    for (std::size_t c = 0; c < cols; ++c) {
      const double phase = 2.0 * M_PI * static_cast<double>(t) / 24.0 + static_cast<double>(c);
      s.values.push_back(10.0 + 5.0 * static_cast<double>(c) + 3.0 * std::sin(phase) + noise(rng));
    }
  return s;
}

// Base forecasts for every window of every split with truth = factor * pred.
inline PredictionFile planted_predictions(const RawSeries& series, const DatasetConfig& cfg, double factor) {
  const PreparedData shape_only(series, DatasetConfig{cfg.window, cfg.split, false, Baseline::Persistence});
  PredictionFile f;
  f.meta = {cfg.window.window, cfg.window.horizon, series.cols, "planted"};
  const std::size_t d = series.cols;
  for (const auto& w : shape_only.all_windows())
    for (std::size_t c = 0; c < d; ++c) {
      std::vector<double> v;
      for (std::size_t h = 0; h < cfg.window.horizon; ++h) v.push_back(w.target[h * d + c] / factor);
      f.records.push_back({w.sample_id, c, std::move(v)});
    }
  return f;
}

inline DatasetConfig small_dataset(std::size_t window = 24, std::size_t horizon = 12) {
  DatasetConfig cfg;
  cfg.window = {window, horizon, 1};
  cfg.baseline = Baseline::External;
  return cfg;
}

}  // namespace testing
