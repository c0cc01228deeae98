#include "tensor.hpp"

#include <cmath>
#include <unordered_set>

namespace postcorr {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Dimension: return "dimension_error";
    case ErrorCode::Validation: return "validation_error";
    case ErrorCode::Domain: return "domain_error";
    case ErrorCode::Parse: return "parse_error";
    case ErrorCode::Structural: return "structural_error";
    case ErrorCode::Configuration: return "configuration_error";
    case ErrorCode::Alignment: return "alignment_error";
    case ErrorCode::Conflict: return "conflict";
    case ErrorCode::NotFound: return "not_found";
    case ErrorCode::Transport: return "transport_error";
    case ErrorCode::Internal: return "internal_error";
  }
  return "internal_error";
}

std::string to_string(const Shape& shape) {
  return std::to_string(shape.samples) + "x" + std::to_string(shape.horizon) + "x" +
         std::to_string(shape.channels);
}

Tensor3::Tensor3(Shape shape, std::vector<double> series_major) : shape_(shape), data_(std::move(series_major)) {
  if (data_.size() != shape_.size()) {
    fail(ErrorCode::Dimension, "tensor data has " + std::to_string(data_.size()) + " values, shape " +
                                   to_string(shape_) + " needs " + std::to_string(shape_.size()));
  }
}

void require_finite(std::span<const double> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      fail(ErrorCode::Validation, std::string(what) + " contains a non-finite value at flat index " + std::to_string(i));
    }
  }
}

ForecastBatch::ForecastBatch(Tensor3 predictions, Tensor3 truth, std::vector<std::string> sample_ids)
    : predictions_(std::move(predictions)), truth_(std::move(truth)), sample_ids_(std::move(sample_ids)) {
  const Shape& s = predictions_.shape();
  if (s != truth_.shape()) {
    fail(ErrorCode::Dimension, "prediction shape " + to_string(s) + " differs from truth shape " + to_string(truth_.shape()));
  }
  if (s.samples == 0 || s.horizon == 0 || s.channels == 0) {
    fail(ErrorCode::Dimension, "forecast batch needs at least one sample, step and channel, got " + to_string(s));
  }
  if (sample_ids_.size() != s.samples) {
    fail(ErrorCode::Dimension, "expected " + std::to_string(s.samples) + " sample ids, got " + std::to_string(sample_ids_.size()));
  }
  std::unordered_set<std::string> seen;
  for (const auto& id : sample_ids_) {
    if (!seen.insert(id).second) fail(ErrorCode::Validation, "duplicate sample id '" + id + "'");
  }
  require_finite(predictions_.values(), "predictions");
  require_finite(truth_.values(), "truth");
}

ForecastBatch ForecastBatch::with_predictions(Tensor3 predictions) const {
  return ForecastBatch(std::move(predictions), truth_, sample_ids_);
}

}  // namespace postcorr
