#include "pipeline.hpp"

namespace postcorr {

std::string_view baseline_name(Baseline b) noexcept {
  switch (b) {
    case Baseline::Persistence: return "persistence";
    case Baseline::Ridge: return "ridge";
    case Baseline::External: return "external";
  }
  return "?";
}

std::optional<Baseline> baseline_from_name(std::string_view name) noexcept {
  for (Baseline b : {Baseline::Persistence, Baseline::Ridge, Baseline::External}) {
    if (baseline_name(b) == name) return b;
  }
  return std::nullopt;
}

Json to_json(const DatasetConfig& cfg) {
  return Json{{"window", cfg.window.window},
              {"horizon", cfg.window.horizon},
              {"stride", cfg.window.stride},
              {"split", Json::array({cfg.split.train, cfg.split.val, cfg.split.test})},
              {"normalize", cfg.normalize},
              {"baseline", std::string(baseline_name(cfg.baseline))},
              {"ridge_lambda", cfg.ridge_lambda}};
}

DatasetConfig dataset_config_from_json(const Json& j) {
  DatasetConfig cfg;
  auto size_field = [&](const char* key, std::size_t& out) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_number_integer() || j.at(key).get<long long>() < 1) {
      fail(ErrorCode::Validation, std::string(key) + ": must be a positive integer");
    }
    out = j.at(key).get<std::size_t>();
  };
  size_field("window", cfg.window.window);
  size_field("window_size", cfg.window.window);
  size_field("horizon", cfg.window.horizon);
  size_field("prediction_horizon", cfg.window.horizon);
  size_field("stride", cfg.window.stride);
  if (j.contains("split")) {
    const Json& s = j.at("split");
    if (!s.is_array() || s.size() != 3 || !s[0].is_number() || !s[1].is_number() || !s[2].is_number()) {
      fail(ErrorCode::Validation, "split: must be [train, val, test] fractions");
    }
    cfg.split = {s[0].get<double>(), s[1].get<double>(), s[2].get<double>()};
  }
  if (j.contains("normalize")) {
    if (!j.at("normalize").is_boolean()) fail(ErrorCode::Validation, "normalize: must be a boolean");
    cfg.normalize = j.at("normalize").get<bool>();
  }
  if (j.contains("baseline")) {
    const auto b = j.at("baseline").is_string() ? baseline_from_name(j.at("baseline").get<std::string>()) : std::nullopt;
    if (!b) fail(ErrorCode::Validation, "baseline: must be persistence, ridge or external");
    cfg.baseline = *b;
  }
  if (j.contains("ridge_lambda")) {
    if (!j.at("ridge_lambda").is_number() || j.at("ridge_lambda").get<double>() < 0.0) {
      fail(ErrorCode::Validation, "ridge_lambda: must be a non-negative number");
    }
    cfg.ridge_lambda = j.at("ridge_lambda").get<double>();
  }
  return cfg;
}

PreparedData::PreparedData(const RawSeries& series, const DatasetConfig& cfg, const PredictionFile* external)
    : cfg_(cfg), series_(series) {
  if (series.rows == 0 || series.cols == 0) fail(ErrorCode::Structural, "series is empty");
  Segments seg = chronological_split(series_, cfg.split, cfg.window);
  if (cfg.normalize) {
    zscore_ = fit_zscore(seg.train);
    series_ = apply_zscore(*zscore_, series_);
    seg = chronological_split(series_, cfg.split, cfg.window);
  }
  train_ = make_windows(seg.train, cfg.window, "train", seg.train_offset);
  val_ = make_windows(seg.val, cfg.window, "val", seg.val_offset);
  test_ = make_windows(seg.test, cfg.window, "test", seg.test_offset);

  const std::size_t d = series_.cols;
  switch (cfg.baseline) {
    case Baseline::Persistence: {
      predictions_ = forecast_persistence(all_windows(), cfg.window, d);
      break;
    }
    case Baseline::Ridge: {
      const RidgeModel model = fit_ridge(train_, cfg.window, d, cfg.ridge_lambda);
      predictions_ = forecast_ridge(model, all_windows());
      break;
    }
    case Baseline::External: {
      if (!external) fail(ErrorCode::Configuration, "external baseline needs a prediction file");
      if (external->meta.horizon != cfg.window.horizon) {
        fail(ErrorCode::Alignment, "prediction file horizon " + std::to_string(external->meta.horizon) +
                                       " differs from configured horizon " + std::to_string(cfg.window.horizon));
      }
      if (external->meta.window != 0 && external->meta.window != cfg.window.window) {
        fail(ErrorCode::Alignment, "prediction file window " + std::to_string(external->meta.window) +
                                       " differs from configured window " + std::to_string(cfg.window.window));
      }
      predictions_ = *external;
      if (zscore_) {
        for (auto& rec : predictions_.records) {
          if (rec.channel >= d) continue;
          for (double& v : rec.values) v = (v - zscore_->mean[rec.channel]) / zscore_->scale[rec.channel];
        }
      }
      break;
    }
  }
  // full validation up front, so later stages never see a partial file
  (void)load_predictions(predictions_, train_, d);
  (void)load_predictions(predictions_, val_, d);
  (void)load_predictions(predictions_, test_, d);
}

Objective PreparedData::objective() const {
  return Objective{load_predictions(predictions_, val_, channels()), load_predictions(predictions_, train_, channels())};
}

ForecastBatch PreparedData::test_batch() const { return load_predictions(predictions_, test_, channels()); }

std::vector<Window> PreparedData::all_windows() const {
  std::vector<Window> all = train_;
  all.insert(all.end(), val_.begin(), val_.end());
  all.insert(all.end(), test_.begin(), test_.end());
  return all;
}

Json PreparedData::summary() const {
  return Json{{"rows", series_.rows},
              {"channels", series_.cols},
              {"columns", series_.column_names},
              {"window", cfg_.window.window},
              {"horizon", cfg_.window.horizon},
              {"baseline", std::string(baseline_name(cfg_.baseline))},
              {"normalized", cfg_.normalize},
              {"windows", {{"train", train_.size()}, {"val", val_.size()}, {"test", test_.size()}}}};
}

}  // namespace postcorr
