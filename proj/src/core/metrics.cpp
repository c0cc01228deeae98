#include "metrics.hpp"

#include <cmath>

namespace postcorr {

double mse(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) {
    fail(ErrorCode::Dimension, "mse: " + std::to_string(pred.size()) + " predictions vs " +
                                   std::to_string(truth.size()) + " targets");
  }
  if (pred.empty()) fail(ErrorCode::Dimension, "mse: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - truth[i];
    if (!std::isfinite(e)) fail(ErrorCode::Validation, "mse: non-finite value at index " + std::to_string(i));
    sum += e * e;
  }
  return sum / static_cast<double>(pred.size());
}

double mse(const Tensor3& pred, const Tensor3& truth) {
  if (pred.shape() != truth.shape()) {
    fail(ErrorCode::Dimension, "mse: shape " + to_string(pred.shape()) + " vs " + to_string(truth.shape()));
  }
  return mse(pred.values(), truth.values());
}

double channel_mse(const Tensor3& pred, const Tensor3& truth, std::size_t channel) {
  if (pred.shape() != truth.shape()) {
    fail(ErrorCode::Dimension, "channel_mse: shape " + to_string(pred.shape()) + " vs " + to_string(truth.shape()));
  }
  const Shape& s = pred.shape();
  if (channel >= s.channels) fail(ErrorCode::Dimension, "channel index out of range");
  double sum = 0.0;
  for (std::size_t n = 0; n < s.samples; ++n) {
    auto p = pred.series(n, channel);
    auto t = truth.series(n, channel);
    for (std::size_t h = 0; h < s.horizon; ++h) {
      const double e = p[h] - t[h];
      sum += e * e;
    }
  }
  return sum / static_cast<double>(s.samples * s.horizon);
}

double relative_improvement(double mse_before, double mse_after) {
  if (!(mse_before > 0.0)) {
    fail(ErrorCode::Domain, "relative improvement is undefined for a baseline MSE of " + std::to_string(mse_before));
  }
  return (mse_before - mse_after) / mse_before;
}

std::optional<double> try_relative_improvement(double mse_before, double mse_after) noexcept {
  if (!(mse_before > 0.0)) return std::nullopt;
  return (mse_before - mse_after) / mse_before;
}

EvalReport per_channel_report(const ForecastBatch& before, const ForecastBatch& after) {
  if (before.shape() != after.shape()) {
    fail(ErrorCode::Dimension, "report: shape " + to_string(before.shape()) + " vs " + to_string(after.shape()));
  }
  if (before.truth() != after.truth()) {
    fail(ErrorCode::Dimension, "report: batches must share the same truth");
  }
  EvalReport report;
  report.mse_before = mse(before.predictions(), before.truth());
  report.mse_after = mse(after.predictions(), after.truth());
  report.improvement = try_relative_improvement(report.mse_before, report.mse_after);
  for (std::size_t c = 0; c < before.shape().channels; ++c) {
    ChannelReport row;
    row.channel = c;
    row.mse_before = channel_mse(before.predictions(), before.truth(), c);
    row.mse_after = channel_mse(after.predictions(), after.truth(), c);
    row.improvement = try_relative_improvement(row.mse_before, row.mse_after);
    report.per_channel.push_back(row);
  }
  return report;
}

std::optional<double> mean_improvement(std::span<const EvalReport> reports) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : reports) {
    if (r.improvement) {
      sum += *r.improvement;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

}  // namespace postcorr
