#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "optimizer.hpp"

namespace testing {

using namespace postcorr;

inline std::vector<std::string> ids(std::size_t n, const std::string& prefix) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + ":" + std::to_string(i));
  return out;
}

// Series-major values: [sample][channel][step].
inline ForecastBatch batch(Shape s, std::vector<double> pred, std::vector<double> truth, const std::string& prefix = "s") {
  return ForecastBatch(Tensor3(s, std::move(pred)), Tensor3(s, std::move(truth)), ids(s.samples, prefix));
}

// Positive, non-constant predictions with truth = factor * pred.
inline ForecastBatch scaled_batch(Shape s, double factor, std::uint64_t seed, const std::string& prefix) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> level(5.0, 15.0);
  std::normal_distribution<double> wiggle(0.0, 1.0);
  std::vector<double> pred(s.size()), truth(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    pred[i] = level(rng) + wiggle(rng);
    truth[i] = factor * pred[i];
  }
  return batch(s, pred, truth, prefix);
}

inline Objective scaled_objective(double factor, std::uint64_t seed = 1, Shape s = {40, 24, 2}) {
  return Objective{scaled_batch(s, factor, seed, "val"), scaled_batch(s, factor, seed + 100, "train")};
}

// Reference MSE with plain loops.
inline double ref_mse(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

inline double ref_mse(const Tensor3& a, const Tensor3& b) {
  return ref_mse(std::vector<double>(a.values().begin(), a.values().end()),
                 std::vector<double>(b.values().begin(), b.values().end()));
}

// Sort + linear interpolation between order statistics.
inline double ref_quantile(std::vector<double> x, double p) {
  std::sort(x.begin(), x.end());
  const double pos = p * static_cast<double>(x.size() - 1);
  const auto i = static_cast<std::size_t>(pos);
  if (i + 1 >= x.size()) return x.back();
  return x[i] * (1.0 - (pos - static_cast<double>(i))) + x[i + 1] * (pos - static_cast<double>(i));
}

}  // namespace testing
