#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tensor.hpp"

namespace postcorr {

// Ordinal order is significant: it is the tie-break order between plans.
enum class ActionKind : int {
  LinearTrendSlope = 0,
  LinearTrendIntercept,
  PiecewiseScaleHigh,
  PiecewiseScaleLow,
  SwapSeries,
  ShiftSeries,
  ScaleAmplitude,
  AddNoise,
  IncreaseMinimumFactor,
};

inline constexpr std::array<ActionKind, 9> kAllKinds = {
    ActionKind::LinearTrendSlope,   ActionKind::LinearTrendIntercept, ActionKind::PiecewiseScaleHigh,
    ActionKind::PiecewiseScaleLow,  ActionKind::SwapSeries,           ActionKind::ShiftSeries,
    ActionKind::ScaleAmplitude,     ActionKind::AddNoise,             ActionKind::IncreaseMinimumFactor,
};

std::string_view kind_name(ActionKind kind) noexcept;
std::optional<ActionKind> kind_from_name(std::string_view name) noexcept;

struct Interval {
  double low = 0.0;
  double high = 0.0;
  bool contains(double v) const noexcept { return v >= low && v <= high; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

struct ParamRange {
  std::string_view name;
  double low;
  double high;
  bool integer_valued;
  Interval interval() const noexcept { return {low, high}; }
};

// Catalog ranges, in parameter order.
std::span<const ParamRange> param_ranges(ActionKind kind) noexcept;
std::size_t param_arity(ActionKind kind) noexcept;
std::optional<std::size_t> param_index(ActionKind kind, std::string_view name) noexcept;

// Catalog range narrowed by what the horizon allows (|shift| <= H - 1).
Interval effective_range(ActionKind kind, std::size_t param, std::size_t horizon);

struct ActionInstance {
  ActionKind kind = ActionKind::ScaleAmplitude;
  std::vector<double> params;

  friend bool operator==(const ActionInstance&, const ActionInstance&) = default;
};

std::string describe(const ActionInstance& action);

// Throws Validation on arity, range, integrality or |shift| >= horizon.
void validate_action(const ActionInstance& action, std::size_t horizon);

// Per-kind sub-ranges that restrict sampling (from human feedback). A missing
// entry or nullopt slot means the catalog range.
using RangeOverrides = std::map<ActionKind, std::vector<std::optional<Interval>>>;

Interval sampling_range(ActionKind kind, std::size_t param, std::size_t horizon, const RangeOverrides* overrides);

using Rng = std::mt19937_64;

// Per-series noise stream (splitmix64). Seeding is one word, which matters
// because every series of every candidate gets a fresh stream.
class NoiseRng {
 public:
  using result_type = std::uint64_t;
  explicit NoiseRng(std::uint64_t seed) noexcept : state_(seed) {}
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }
  result_type operator()() noexcept {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

// Uniform draw over each parameter range (shift uniform over integers).
ActionInstance sample_instance(ActionKind kind, Rng& rng, std::size_t horizon,
                               const RangeOverrides* overrides = nullptr);

// Sorted-order linear interpolation ("type 7") quantile, p in [0, 1].
double quantile_sorted(std::span<const double> sorted, double p);
double quantile(std::span<const double> values, double p);

// Transform one (sample, channel) forecast in place. `noise` is only read by
// AddNoise and may be null for every other kind.
void apply_to_series(const ActionInstance& action, std::span<double> series, NoiseRng* noise);

// Seed of the noise stream for one series; depends only on its identity, so
// results do not change with batch composition or order.
std::uint64_t series_seed(std::uint64_t seed, std::size_t step, std::string_view sample_id, std::size_t channel) noexcept;

Tensor3 apply_action(const ActionInstance& action, const Tensor3& pred, std::span<const std::string> sample_ids,
                     std::uint64_t seed, std::size_t step_index = 0);

void apply_action_inplace(const ActionInstance& action, Tensor3& pred, std::span<const std::string> sample_ids,
                          std::uint64_t seed, std::size_t step_index = 0);

// One series of a batch, with the noise stream apply_action would give it.
// Does not validate the action.
void apply_to_series(const ActionInstance& action, std::span<double> series, std::span<const std::string> sample_ids,
                     std::uint64_t seed, std::size_t step_index, std::size_t sample, std::size_t channel);

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept;

}  // namespace postcorr
