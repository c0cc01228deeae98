#include "plan.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace postcorr {

namespace {

void validate_steps(const CorrectionPlan& plan, std::size_t horizon) {
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    try {
      validate_action(plan.steps[i], horizon);
    } catch (const Error& e) {
      fail(e.code(), "plan step " + std::to_string(i) + ": " + e.what());
    }
  }
}

}  // namespace

Tensor3 apply_plan(const CorrectionPlan& plan, const Tensor3& pred, std::span<const std::string> sample_ids,
                   std::uint64_t rng_seed) {
  if (plan.empty()) return pred;
  Tensor3 out = pred;
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    try {
      apply_action_inplace(plan.steps[i], out, sample_ids, rng_seed, i);
    } catch (const Error& e) {
      fail(e.code(), "plan step " + std::to_string(i) + ": " + e.what());
    }
  }
  if (plan.affine) apply_affine_tail_inplace(*plan.affine, out);
  return out;
}

double plan_mse(const CorrectionPlan& plan, const Tensor3& pred, const Tensor3& truth,
                std::span<const std::string> sample_ids) {
  if (pred.shape() != truth.shape()) {
    fail(ErrorCode::Dimension, "mse: shape " + to_string(pred.shape()) + " vs " + to_string(truth.shape()));
  }
  const Shape& s = pred.shape();
  if (s.size() == 0) fail(ErrorCode::Dimension, "mse: empty input");
  validate_steps(plan, s.horizon);
  const bool noisy = std::any_of(plan.steps.begin(), plan.steps.end(),
                                 [](const ActionInstance& a) { return a.kind == ActionKind::AddNoise; });
  if (noisy && sample_ids.size() != s.samples) {
    fail(ErrorCode::Dimension, "plan step: AddNoise needs one sample id per sample");
  }
  if (plan.affine) check_affine_tail(*plan.affine, s);

  std::vector<double> x(s.horizon);
  double sum = 0.0;
  std::size_t index = 0;
  for (std::size_t n = 0; n < s.samples; ++n) {
    for (std::size_t c = 0; c < s.channels; ++c) {
      const auto src = pred.series(n, c);
      const auto t = truth.series(n, c);
      std::copy(src.begin(), src.end(), x.begin());
      for (std::size_t i = 0; i < plan.steps.size(); ++i) {
        apply_to_series(plan.steps[i], x, sample_ids, plan.seed, i, n, c);
      }
      for (std::size_t h = 0; h < s.horizon; ++h, ++index) {
        double v = x[h];
        if (plan.affine) {
          const std::size_t g = affine_group_of(plan.affine->scope, h, c);
          v = plan.affine->a[g] * v + plan.affine->b[g];
        }
        const double e = v - t[h];
        if (!std::isfinite(e)) fail(ErrorCode::Validation, "mse: non-finite value at index " + std::to_string(index));
        sum += e * e;
      }
    }
  }
  return sum / static_cast<double>(s.size());
}

bool plan_precedes(const CorrectionPlan& lhs, const CorrectionPlan& rhs) noexcept {
  if (lhs.steps.size() != rhs.steps.size()) return lhs.steps.size() < rhs.steps.size();
  for (std::size_t i = 0; i < lhs.steps.size(); ++i) {
    const auto lk = static_cast<int>(lhs.steps[i].kind);
    const auto rk = static_cast<int>(rhs.steps[i].kind);
    if (lk != rk) return lk < rk;
  }
  for (std::size_t i = 0; i < lhs.steps.size(); ++i) {
    const auto& lp = lhs.steps[i].params;
    const auto& rp = rhs.steps[i].params;
    for (std::size_t j = 0; j < lp.size() && j < rp.size(); ++j) {
      if (lp[j] != rp[j]) return lp[j] < rp[j];
    }
  }
  return false;
}

std::string describe(const CorrectionPlan& plan) {
  if (plan.empty()) return "identity";
  std::ostringstream os;
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    if (i) os << " -> ";
    os << describe(plan.steps[i]);
  }
  if (plan.affine) os << (plan.steps.empty() ? "" : " -> ") << "affine[" << scope_name(plan.affine->scope) << "]";
  return os.str();
}

}  // namespace postcorr
