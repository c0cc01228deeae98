#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"

namespace postcorr {

struct Shape {
  std::size_t samples = 0;
  std::size_t horizon = 0;
  std::size_t channels = 0;

  std::size_t size() const noexcept { return samples * horizon * channels; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& shape);

// Dense samples x horizon x channels tensor. Storage is series-major
// ([sample][channel][step]) so that each (sample, channel) forecast is a
// contiguous span; every action works on one such series at a time.
class Tensor3 {
 public:
  Tensor3() = default;
  explicit Tensor3(Shape shape, double fill = 0.0) : shape_(shape), data_(shape.size(), fill) {}
  Tensor3(Shape shape, std::vector<double> series_major);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& at(std::size_t sample, std::size_t step, std::size_t channel) {
    return data_[index(sample, step, channel)];
  }
  double at(std::size_t sample, std::size_t step, std::size_t channel) const {
    return data_[index(sample, step, channel)];
  }

  std::span<double> series(std::size_t sample, std::size_t channel) {
    return {data_.data() + (sample * shape_.channels + channel) * shape_.horizon, shape_.horizon};
  }
  std::span<const double> series(std::size_t sample, std::size_t channel) const {
    return {data_.data() + (sample * shape_.channels + channel) * shape_.horizon, shape_.horizon};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  std::size_t index(std::size_t sample, std::size_t step, std::size_t channel) const noexcept {
    return (sample * shape_.channels + channel) * shape_.horizon + step;
  }

  Shape shape_;
  std::vector<double> data_;
};

// Aligned (prediction, truth) pair. Immutable once built; the constructor
// enforces equal non-degenerate shapes, finite values and one id per sample.
class ForecastBatch {
 public:
  ForecastBatch() = default;
  ForecastBatch(Tensor3 predictions, Tensor3 truth, std::vector<std::string> sample_ids);

  const Tensor3& predictions() const noexcept { return predictions_; }
  const Tensor3& truth() const noexcept { return truth_; }
  const std::vector<std::string>& sample_ids() const noexcept { return sample_ids_; }
  const Shape& shape() const noexcept { return predictions_.shape(); }
  bool empty() const noexcept { return sample_ids_.empty(); }

  // Same truth and ids, different predictions. Shape must match.
  ForecastBatch with_predictions(Tensor3 predictions) const;

 private:
  Tensor3 predictions_;
  Tensor3 truth_;
  std::vector<std::string> sample_ids_;
};

void require_finite(std::span<const double> values, const char* what);

}  // namespace postcorr
