#include "actions.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace postcorr {
namespace {

constexpr ParamRange kSlope[] = {{"s", -5.0, 5.0, false}};
constexpr ParamRange kIntercept[] = {{"b", -5.0, 5.0, false}};
constexpr ParamRange kHigh[] = {{"delta", 70.0, 100.0, false}, {"f", -1.0, 10.0, false}};
constexpr ParamRange kLow[] = {{"delta", 0.0, 30.0, false}, {"f", -1.0, 10.0, false}};
constexpr ParamRange kShift[] = {{"shift", -200.0, 200.0, true}};
constexpr ParamRange kAmplitude[] = {{"f", -5.0, 5.0, false}};
constexpr ParamRange kNoise[] = {{"sigma", 10.0, 30.0, false}};
constexpr ParamRange kMinFactor[] = {{"f", -1.0, 10.0, false}};

// Shift is an open integer interval (-200, 200).
constexpr double kMaxShift = 199.0;

struct SeriesStats {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
};

SeriesStats stats_of(std::span<const double> x) {
  SeriesStats s{x[0], x[0], 0.0};
  double sum = 0.0;
  for (double v : x) {
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
    sum += v;
  }
  s.mean = sum / static_cast<double>(x.size());
  return s;
}

void scale_where(std::span<double> x, double factor, auto&& pred) {
  for (double& v : x) {
    if (pred(v)) v *= factor;
  }
}

}  // namespace

std::string_view kind_name(ActionKind kind) noexcept {
  switch (kind) {
    case ActionKind::LinearTrendSlope: return "LinearTrendSlope";
    case ActionKind::LinearTrendIntercept: return "LinearTrendIntercept";
    case ActionKind::PiecewiseScaleHigh: return "PiecewiseScaleHigh";
    case ActionKind::PiecewiseScaleLow: return "PiecewiseScaleLow";
    case ActionKind::SwapSeries: return "SwapSeries";
    case ActionKind::ShiftSeries: return "ShiftSeries";
    case ActionKind::ScaleAmplitude: return "ScaleAmplitude";
    case ActionKind::AddNoise: return "AddNoise";
    case ActionKind::IncreaseMinimumFactor: return "IncreaseMinimumFactor";
  }
  return "?";
}

std::optional<ActionKind> kind_from_name(std::string_view name) noexcept {
  for (ActionKind k : kAllKinds) {
    if (kind_name(k) == name) return k;
  }
  return std::nullopt;
}

std::span<const ParamRange> param_ranges(ActionKind kind) noexcept {
  switch (kind) {
    case ActionKind::LinearTrendSlope: return kSlope;
    case ActionKind::LinearTrendIntercept: return kIntercept;
    case ActionKind::PiecewiseScaleHigh: return kHigh;
    case ActionKind::PiecewiseScaleLow: return kLow;
    case ActionKind::SwapSeries: return {};
    case ActionKind::ShiftSeries: return kShift;
    case ActionKind::ScaleAmplitude: return kAmplitude;
    case ActionKind::AddNoise: return kNoise;
    case ActionKind::IncreaseMinimumFactor: return kMinFactor;
  }
  return {};
}

std::size_t param_arity(ActionKind kind) noexcept { return param_ranges(kind).size(); }

std::optional<std::size_t> param_index(ActionKind kind, std::string_view name) noexcept {
  auto ranges = param_ranges(kind);
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    if (ranges[i].name == name) return i;
  }
  return std::nullopt;
}

Interval effective_range(ActionKind kind, std::size_t param, std::size_t horizon) {
  auto ranges = param_ranges(kind);
  if (param >= ranges.size()) fail(ErrorCode::Validation, "parameter index out of range");
  Interval r = ranges[param].interval();
  if (kind == ActionKind::ShiftSeries) {
    const double limit = std::min(kMaxShift, horizon > 0 ? static_cast<double>(horizon - 1) : 0.0);
    r = {-limit, limit};
  }
  return r;
}

std::string describe(const ActionInstance& action) {
  std::ostringstream os;
  os << kind_name(action.kind) << "(";
  auto ranges = param_ranges(action.kind);
  for (std::size_t i = 0; i < action.params.size(); ++i) {
    if (i) os << ", ";
    os << (i < ranges.size() ? ranges[i].name : "?") << "=" << action.params[i];
  }
  os << ")";
  return os.str();
}

void validate_action(const ActionInstance& action, std::size_t horizon) {
  auto ranges = param_ranges(action.kind);
  if (action.params.size() != ranges.size()) {
    fail(ErrorCode::Validation, std::string(kind_name(action.kind)) + " takes " + std::to_string(ranges.size()) +
                                    " parameter(s), got " + std::to_string(action.params.size()));
  }
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    const double v = action.params[i];
    const auto& r = ranges[i];
    if (!std::isfinite(v) || !r.interval().contains(v)) {
      std::ostringstream os;
      os << kind_name(action.kind) << ": " << r.name << "=" << v << " outside [" << r.low << ", " << r.high << "]";
      fail(ErrorCode::Validation, os.str());
    }
    if (r.integer_valued && v != std::round(v)) {
      fail(ErrorCode::Validation, std::string(kind_name(action.kind)) + ": " + std::string(r.name) + " must be an integer");
    }
  }
  if (action.kind == ActionKind::ShiftSeries) {
    const double shift = std::abs(action.params[0]);
    if (shift >= kMaxShift + 1.0) fail(ErrorCode::Validation, "ShiftSeries: shift must lie in (-200, 200)");
    if (shift >= static_cast<double>(horizon)) {
      fail(ErrorCode::Validation, "ShiftSeries: |shift| = " + std::to_string(static_cast<long>(shift)) +
                                      " would erase a horizon of " + std::to_string(horizon));
    }
  }
}

Interval sampling_range(ActionKind kind, std::size_t param, std::size_t horizon, const RangeOverrides* overrides) {
  Interval r = effective_range(kind, param, horizon);
  if (overrides) {
    auto it = overrides->find(kind);
    if (it != overrides->end() && param < it->second.size() && it->second[param]) {
      const Interval& o = *it->second[param];
      const Interval narrowed{std::max(r.low, o.low), std::min(r.high, o.high)};
      if (narrowed.low <= narrowed.high) r = narrowed;
    }
  }
  if (param_ranges(kind)[param].integer_valued) {
    r = {std::ceil(r.low), std::floor(r.high)};
    if (r.low > r.high) r.low = r.high = 0.0;
  }
  return r;
}

ActionInstance sample_instance(ActionKind kind, Rng& rng, std::size_t horizon, const RangeOverrides* overrides) {
  ActionInstance out{kind, {}};
  auto ranges = param_ranges(kind);
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    const Interval r = sampling_range(kind, i, horizon, overrides);
    if (ranges[i].integer_valued) {
      std::uniform_int_distribution<long> dist(static_cast<long>(r.low), static_cast<long>(r.high));
      out.params.push_back(static_cast<double>(dist(rng)));
    } else if (r.low == r.high) {
      out.params.push_back(r.low);
    } else {
      std::uniform_real_distribution<double> dist(r.low, r.high);
      out.params.push_back(dist(rng));
    }
  }
  return out;
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) fail(ErrorCode::Dimension, "quantile of an empty series");
  p = std::clamp(p, 0.0, 1.0);
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

double quantile(std::span<const double> values, double p) {
  if (values.empty()) fail(ErrorCode::Dimension, "quantile of an empty series");
  // Selects the two order statistics that quantile_sorted would read.
  thread_local std::vector<double> buf;
  buf.assign(values.begin(), values.end());
  p = std::clamp(p, 0.0, 1.0);
  const double h = p * static_cast<double>(buf.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto at = buf.begin() + static_cast<std::ptrdiff_t>(lo);
  std::nth_element(buf.begin(), at, buf.end());
  if (lo + 1 >= buf.size()) return *at;
  const double next = *std::min_element(at + 1, buf.end());
  return *at + (h - static_cast<double>(lo)) * (next - *at);
}

void apply_to_series(const ActionInstance& action, std::span<double> x, NoiseRng* noise) {
  if (x.empty()) fail(ErrorCode::Dimension, "cannot transform an empty series");
  const auto& p = action.params;
  switch (action.kind) {
    case ActionKind::LinearTrendSlope: {
      const SeriesStats s = stats_of(x);
      const double step = p[0] / 100.0 * (s.max - s.min);
      for (std::size_t t = 0; t < x.size(); ++t) x[t] += step * static_cast<double>(t + 1);
      break;
    }
    case ActionKind::LinearTrendIntercept: {
      const double offset = p[0] / 100.0 * stats_of(x).mean;
      for (double& v : x) v += offset;
      break;
    }
    case ActionKind::ScaleAmplitude: {
      const double factor = 1.0 + p[0] / 100.0;
      for (double& v : x) v *= factor;
      break;
    }
    case ActionKind::SwapSeries: {
      const double mean = stats_of(x).mean;
      for (double& v : x) v = mean - (v - mean);
      break;
    }
    case ActionKind::ShiftSeries: {
      const auto shift = static_cast<long>(p[0]);
      const auto last = static_cast<long>(x.size()) - 1;
      thread_local std::vector<double> src;
      src.assign(x.begin(), x.end());
      for (long t = 0; t <= last; ++t) x[static_cast<std::size_t>(t)] = src[static_cast<std::size_t>(std::clamp(t + shift, 0L, last))];
      break;
    }
    case ActionKind::PiecewiseScaleHigh: {
      const double q = quantile(x, p[0] / 100.0);
      scale_where(x, 1.0 + p[1] / 100.0, [q](double v) { return v > q; });
      break;
    }
    case ActionKind::PiecewiseScaleLow: {
      const double q = quantile(x, p[0] / 100.0);
      scale_where(x, 1.0 + p[1] / 100.0, [q](double v) { return v <= q; });
      break;
    }
    case ActionKind::IncreaseMinimumFactor: {
      const double q = quantile(x, 0.10);
      scale_where(x, 1.0 + p[0] / 100.0, [q](double v) { return v <= q; });
      break;
    }
    case ActionKind::AddNoise: {
      if (!noise) fail(ErrorCode::Internal, "AddNoise requires a random stream");
      std::normal_distribution<double> unit(0.0, 1.0);
      const double rel = p[0] / 100.0;
      for (double& v : x) v += rel * std::abs(v) * unit(*noise);
      break;
    }
  }
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept {
  // splitmix64 finalizer over a combined state
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t series_seed(std::uint64_t seed, std::size_t step, std::string_view sample_id, std::size_t channel) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : sample_id) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix_seed(mix_seed(mix_seed(seed, step), h), channel);
}

Tensor3 apply_action(const ActionInstance& action, const Tensor3& pred, std::span<const std::string> sample_ids,
                     std::uint64_t seed, std::size_t step_index) {
  Tensor3 out = pred;
  apply_action_inplace(action, out, sample_ids, seed, step_index);
  return out;
}

void apply_action_inplace(const ActionInstance& action, Tensor3& pred, std::span<const std::string> sample_ids,
                          std::uint64_t seed, std::size_t step_index) {
  validate_action(action, pred.shape().horizon);
  const Shape& s = pred.shape();
  if (action.kind == ActionKind::AddNoise && sample_ids.size() != s.samples) {
    fail(ErrorCode::Dimension, "AddNoise needs one sample id per sample");
  }
  for (std::size_t n = 0; n < s.samples; ++n) {
    for (std::size_t c = 0; c < s.channels; ++c) apply_to_series(action, pred.series(n, c), sample_ids, seed, step_index, n, c);
  }
}

void apply_to_series(const ActionInstance& action, std::span<double> series, std::span<const std::string> sample_ids,
                     std::uint64_t seed, std::size_t step_index, std::size_t sample, std::size_t channel) {
  if (action.kind == ActionKind::AddNoise) {
    NoiseRng rng(series_seed(seed, step_index, sample_ids[sample], channel));
    apply_to_series(action, series, &rng);
  } else {
    apply_to_series(action, series, nullptr);
  }
}

}  // namespace postcorr
