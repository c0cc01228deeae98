#include "affine.hpp"

#include <cmath>

#include "metrics.hpp"

namespace postcorr {
namespace {

struct Moments {
  double mean_p = 0.0;
  double mean_t = 0.0;
  double var_p = 0.0;
  double var_t = 0.0;
  double cov = 0.0;
};

// Two passes: means first, then centered products.
Moments moments_of(std::span<const double> p, std::span<const double> t) {
  Moments m;
  const auto n = static_cast<double>(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    m.mean_p += p[i];
    m.mean_t += t[i];
  }
  m.mean_p /= n;
  m.mean_t /= n;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double dp = p[i] - m.mean_p;
    const double dt = t[i] - m.mean_t;
    m.var_p += dp * dp;
    m.var_t += dt * dt;
    m.cov += dp * dt;
  }
  m.var_p /= n;
  m.var_t /= n;
  m.cov /= n;
  return m;
}

AffineFit fit_from(const Moments& m) {
  AffineFit fit;
  fit.cov_py = m.cov;
  fit.var_p = m.var_p;
  fit.var_t = m.var_t;
  fit.mean_p = m.mean_p;
  fit.mean_t = m.mean_t;
  // A spread this small relative to the level is a constant predictor in
  // floating point; a would be dominated by rounding noise.
  const double scale = std::max(1.0, m.mean_p * m.mean_p);
  if (!(m.var_p > 1e-24 * scale)) {
    fit.degenerate = true;
    fit.a = 1.0;
    fit.b = m.mean_t - m.mean_p;
  } else {
    fit.a = m.cov / m.var_p;
    fit.b = m.mean_t - fit.a * m.mean_p;
  }
  return fit;
}

void check_pair(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) {
    fail(ErrorCode::Dimension, "affine fit: " + std::to_string(pred.size()) + " predictions vs " +
                                   std::to_string(truth.size()) + " targets");
  }
  if (pred.size() < 2) fail(ErrorCode::Dimension, "affine fit needs at least two points");
  require_finite(pred, "predictions");
  require_finite(truth, "truth");
}

}  // namespace

AffineFit fit_affine(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth);
  return fit_from(moments_of(pred, truth));
}

void apply_affine(const AffineFit& fit, std::span<double> values) noexcept {
  for (double& v : values) v = fit.a * v + fit.b;
}

Tensor3 apply_affine(const AffineFit& fit, const Tensor3& pred) {
  Tensor3 out = pred;
  apply_affine(fit, out.values());
  return out;
}

RiskGap risk_gap(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth);
  const Moments m = moments_of(pred, truth);
  RiskGap r;
  r.fit = fit_from(m);
  r.degenerate = r.fit.degenerate;

  std::vector<double> corrected(pred.begin(), pred.end());
  apply_affine(r.fit, corrected);
  r.r_before = mse(pred, truth);
  r.r_after = mse(corrected, truth);
  r.gap = r.r_before - r.r_after;

  r.bias_term = (m.mean_t - m.mean_p) * (m.mean_t - m.mean_p);
  if (!r.degenerate) {
    const double sd = std::sqrt(m.var_p);
    const double root = sd - m.cov / sd;
    r.variance_term = root * root;
    r.closed_form_after = m.var_t - m.cov * m.cov / m.var_p;
  } else {
    r.closed_form_after = m.var_t;
  }
  r.closed_form_gap = r.variance_term + r.bias_term;
  return r;
}

std::string_view scope_name(AffineScope scope) noexcept {
  switch (scope) {
    case AffineScope::Global: return "global";
    case AffineScope::PerChannel: return "per_channel";
    case AffineScope::PerHorizon: return "per_horizon";
  }
  return "?";
}

std::optional<AffineScope> scope_from_name(std::string_view name) noexcept {
  for (auto s : {AffineScope::Global, AffineScope::PerChannel, AffineScope::PerHorizon}) {
    if (scope_name(s) == name) return s;
  }
  return std::nullopt;
}

std::size_t affine_group_count(AffineScope scope, const Shape& shape) noexcept {
  switch (scope) {
    case AffineScope::Global: return 1;
    case AffineScope::PerChannel: return shape.channels;
    case AffineScope::PerHorizon: return shape.horizon;
  }
  return 1;
}

namespace {

template <class Fn>
void for_each_element(const Shape& s, AffineScope scope, Fn&& fn) {
  for (std::size_t n = 0; n < s.samples; ++n)
    for (std::size_t c = 0; c < s.channels; ++c)
      for (std::size_t h = 0; h < s.horizon; ++h) {
        const std::size_t group = scope == AffineScope::Global ? 0 : scope == AffineScope::PerChannel ? c : h;
        fn(n, h, c, group);
      }
}

}  // namespace

AffineTail fit_affine_tail(const Tensor3& pred, const Tensor3& truth, AffineScope scope) {
  if (pred.shape() != truth.shape()) {
    fail(ErrorCode::Dimension, "affine fit: shape " + to_string(pred.shape()) + " vs " + to_string(truth.shape()));
  }
  const Shape& s = pred.shape();
  const std::size_t groups = affine_group_count(scope, s);
  std::vector<std::vector<double>> gp(groups), gt(groups);
  for_each_element(s, scope, [&](std::size_t n, std::size_t h, std::size_t c, std::size_t g) {
    gp[g].push_back(pred.at(n, h, c));
    gt[g].push_back(truth.at(n, h, c));
  });
  AffineTail tail{scope, {}, {}};
  for (std::size_t g = 0; g < groups; ++g) {
    if (gp[g].size() < 2) {
      // a single point: only a shift is identifiable
      const double shift = gp[g].empty() ? 0.0 : gt[g][0] - gp[g][0];
      tail.a.push_back(1.0);
      tail.b.push_back(shift);
      continue;
    }
    const AffineFit fit = fit_affine(gp[g], gt[g]);
    tail.a.push_back(fit.a);
    tail.b.push_back(fit.b);
  }
  return tail;
}

void check_affine_tail(const AffineTail& tail, const Shape& s) {
  const std::size_t groups = affine_group_count(tail.scope, s);
  if (tail.a.size() != groups || tail.b.size() != groups) {
    fail(ErrorCode::Dimension, "affine tail has " + std::to_string(tail.a.size()) + " groups, scope " +
                                   std::string(scope_name(tail.scope)) + " on shape " + to_string(s) + " needs " +
                                   std::to_string(groups));
  }
}

Tensor3 apply_affine_tail(const AffineTail& tail, const Tensor3& pred) {
  Tensor3 out = pred;
  apply_affine_tail_inplace(tail, out);
  return out;
}

void apply_affine_tail_inplace(const AffineTail& tail, Tensor3& pred) {
  check_affine_tail(tail, pred.shape());
  for_each_element(pred.shape(), tail.scope, [&](std::size_t n, std::size_t h, std::size_t c, std::size_t g) {
    double& v = pred.at(n, h, c);
    v = tail.a[g] * v + tail.b[g];
  });
}

}  // namespace postcorr
