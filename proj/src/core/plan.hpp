#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "actions.hpp"
#include "affine.hpp"

namespace postcorr {

struct CorrectionPlan {
  std::vector<ActionInstance> steps;
  std::optional<AffineTail> affine;
  std::uint64_t seed = 0;  // noise stream seed; only AddNoise steps read it

  bool empty() const noexcept { return steps.empty() && !affine; }
  friend bool operator==(const CorrectionPlan&, const CorrectionPlan&) = default;
};

// Steps left to right, then the affine tail. An empty plan returns the input
// unchanged. Step failures are rethrown with the step index attached.
Tensor3 apply_plan(const CorrectionPlan& plan, const Tensor3& pred, std::span<const std::string> sample_ids,
                   std::uint64_t rng_seed);

inline Tensor3 apply_plan(const CorrectionPlan& plan, const Tensor3& pred, std::span<const std::string> sample_ids) {
  return apply_plan(plan, pred, sample_ids, plan.seed);
}

// mse(apply_plan(plan, pred, ids), truth) without materializing the corrected
// tensor; the result is bitwise identical.
double plan_mse(const CorrectionPlan& plan, const Tensor3& pred, const Tensor3& truth,
                std::span<const std::string> sample_ids);

// Total tie-break order between plans of equal score: fewer steps, then lower
// kind ordinals, then lower parameter values.
bool plan_precedes(const CorrectionPlan& lhs, const CorrectionPlan& rhs) noexcept;

std::string describe(const CorrectionPlan& plan);

}  // namespace postcorr
