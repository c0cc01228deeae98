#pragma once

#include <optional>
#include <string>

#include "data_io.hpp"
#include "optimizer.hpp"
#include "serialize.hpp"

namespace postcorr {

enum class Baseline { Persistence, Ridge, External };

std::string_view baseline_name(Baseline b) noexcept;
std::optional<Baseline> baseline_from_name(std::string_view name) noexcept;

struct DatasetConfig {
  WindowSpec window{96, 96, 1};
  SplitSpec split;
  bool normalize = false;  // per-channel z-score fitted on train
  Baseline baseline = Baseline::Persistence;
  double ridge_lambda = 1e-2;
};

Json to_json(const DatasetConfig& cfg);
DatasetConfig dataset_config_from_json(const Json& j);

// A windowed dataset with base forecasts for every split. The test batch is
// only materialized on request.
class PreparedData {
 public:
  // `external` is required for Baseline::External and ignored otherwise.
  PreparedData(const RawSeries& series, const DatasetConfig& cfg, const PredictionFile* external = nullptr);

  const DatasetConfig& config() const noexcept { return cfg_; }
  const RawSeries& series() const noexcept { return series_; }
  std::size_t channels() const noexcept { return series_.cols; }
  const std::vector<Window>& train_windows() const noexcept { return train_; }
  const std::vector<Window>& val_windows() const noexcept { return val_; }
  const PredictionFile& predictions() const noexcept { return predictions_; }
  const std::optional<ZScore>& zscore() const noexcept { return zscore_; }

  Objective objective() const;
  ForecastBatch test_batch() const;

  // Truth windows of all splits, for evaluating prediction files.
  std::vector<Window> all_windows() const;

  Json summary() const;

 private:
  DatasetConfig cfg_;
  RawSeries series_;
  std::optional<ZScore> zscore_;
  std::vector<Window> train_, val_, test_;
  PredictionFile predictions_;
};

}  // namespace postcorr
