#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "tensor.hpp"

namespace postcorr {

struct ChannelReport {
  std::size_t channel = 0;
  double mse_before = 0.0;
  double mse_after = 0.0;
  std::optional<double> improvement;  // undefined when mse_before == 0
};

struct EvalReport {
  double mse_before = 0.0;
  double mse_after = 0.0;
  std::optional<double> improvement;
  std::vector<ChannelReport> per_channel;
  std::optional<bool> train_consistent;
};

// Mean squared error over every element, accumulated in double.
double mse(std::span<const double> pred, std::span<const double> truth);
double mse(const Tensor3& pred, const Tensor3& truth);
double channel_mse(const Tensor3& pred, const Tensor3& truth, std::size_t channel);

// (before - after) / before. Throws Domain when before <= 0.
double relative_improvement(double mse_before, double mse_after);

// Like relative_improvement but yields nullopt instead of throwing.
std::optional<double> try_relative_improvement(double mse_before, double mse_after) noexcept;

EvalReport per_channel_report(const ForecastBatch& before, const ForecastBatch& after);

// Uniform average over reports from several horizons; entries with an
// undefined improvement are skipped.
std::optional<double> mean_improvement(std::span<const EvalReport> reports);

inline double rmse(double mse_value) { return std::sqrt(mse_value); }

}  // namespace postcorr
