#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "tensor.hpp"

namespace postcorr {

// Closed-form least-squares correction y -> a*y + b. Moments use the
// population convention (divide by n), which makes the risk identities
// below hold exactly on finite samples.
struct AffineFit {
  double a = 1.0;
  double b = 0.0;
  double cov_py = 0.0;
  double var_p = 0.0;
  double var_t = 0.0;
  double mean_p = 0.0;
  double mean_t = 0.0;
  bool degenerate = false;  // constant predictor: a pinned to 1, mean shift only
};

AffineFit fit_affine(std::span<const double> pred, std::span<const double> truth);

void apply_affine(const AffineFit& fit, std::span<double> values) noexcept;
Tensor3 apply_affine(const AffineFit& fit, const Tensor3& pred);

struct RiskGap {
  double r_before = 0.0;  // direct MSE of pred
  double r_after = 0.0;   // direct MSE of the corrected pred, same data
  double gap = 0.0;       // r_before - r_after

  // Closed forms from the moments.
  double variance_term = 0.0;      // (sqrt(Var_p) - Cov/sqrt(Var_p))^2
  double bias_term = 0.0;          // (E[truth] - E[pred])^2
  double closed_form_gap = 0.0;    // variance_term + bias_term
  double closed_form_after = 0.0;  // Var_t - Cov^2 / Var_p
  bool degenerate = false;         // closed-form checks do not apply
  AffineFit fit;
};

RiskGap risk_gap(std::span<const double> pred, std::span<const double> truth);

enum class AffineScope { Global, PerChannel, PerHorizon };

std::string_view scope_name(AffineScope scope) noexcept;
std::optional<AffineScope> scope_from_name(std::string_view name) noexcept;

// One (a, b) per group: 1 for Global, d for PerChannel, H for PerHorizon.
struct AffineTail {
  AffineScope scope = AffineScope::PerChannel;
  std::vector<double> a;
  std::vector<double> b;

  friend bool operator==(const AffineTail&, const AffineTail&) = default;
};

std::size_t affine_group_count(AffineScope scope, const Shape& shape) noexcept;

inline std::size_t affine_group_of(AffineScope scope, std::size_t step, std::size_t channel) noexcept {
  return scope == AffineScope::Global ? 0 : scope == AffineScope::PerChannel ? channel : step;
}

AffineTail fit_affine_tail(const Tensor3& pred, const Tensor3& truth, AffineScope scope);
// Throws Dimension when the tail's group count does not fit the shape.
void check_affine_tail(const AffineTail& tail, const Shape& shape);
Tensor3 apply_affine_tail(const AffineTail& tail, const Tensor3& pred);
void apply_affine_tail_inplace(const AffineTail& tail, Tensor3& pred);

}  // namespace postcorr
