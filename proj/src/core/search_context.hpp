#pragma once

#include <string>
#include <vector>

#include "optimizer.hpp"

namespace postcorr::detail {

// Shared bookkeeping for every strategy: budget accounting, noise-seed
// derivation, optional affine tail, the guard, trace and best plan.
class SearchContext {
 public:
  SearchContext(const Objective& obj, const OptimizerConfig& cfg, std::string strategy);

  std::size_t horizon() const noexcept { return obj_.val.shape().horizon; }
  std::size_t remaining() const noexcept { return cfg_.budget - candidates_; }
  const OptimizerConfig& config() const noexcept { return cfg_; }

  // Evaluates in order (in parallel when jobs > 1). Plans are completed in
  // place with their noise seed and fitted affine tail.
  std::vector<CandidateEval> evaluate(std::vector<CorrectionPlan>& plans);
  CandidateEval evaluate(CorrectionPlan& plan);

  double reward(const CandidateEval& eval) const noexcept { return reward_of(eval, trace_.baseline_val_mse); }

  SearchTrace& trace() noexcept { return trace_; }
  SearchTrace finish() { return std::move(trace_); }

 private:
  CandidateEval score(CorrectionPlan& plan, std::size_t candidate_index) const;
  void record(const CorrectionPlan& plan, const CandidateEval& eval);

  const Objective& obj_;
  const OptimizerConfig& cfg_;
  std::size_t candidates_ = 0;
  SearchTrace trace_;
};

}  // namespace postcorr::detail
