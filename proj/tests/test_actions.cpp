#include <algorithm>
#include <numeric>

#include "doctest.h"
#include "support.hpp"

using namespace postcorr;

namespace {

std::vector<double> run(const ActionInstance& a, std::vector<double> x, NoiseRng* noise = nullptr) {
  apply_to_series(a, x, noise);
  return x;
}

void check_close(const std::vector<double>& got, const std::vector<double>& want) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

std::vector<double> ramp(std::size_t n) {
  std::vector<double> x(n);
  std::iota(x.begin(), x.end(), 1.0);
  return x;
}

}  // namespace

TEST_CASE("catalog shape") {
  CHECK(kAllKinds.size() == 9);
  CHECK(param_arity(ActionKind::SwapSeries) == 0);
  CHECK(param_arity(ActionKind::PiecewiseScaleHigh) == 2);
  CHECK(param_arity(ActionKind::PiecewiseScaleLow) == 2);
  for (auto k : {ActionKind::LinearTrendSlope, ActionKind::LinearTrendIntercept, ActionKind::ShiftSeries,
                 ActionKind::ScaleAmplitude, ActionKind::AddNoise, ActionKind::IncreaseMinimumFactor}) {
    CHECK(param_arity(k) == 1);
  }
  for (auto k : kAllKinds) {
    CHECK(kind_from_name(kind_name(k)) == k);
    for (const auto& r : param_ranges(k)) {
      CHECK(r.low < r.high);
      CHECK(r.integer_valued == (k == ActionKind::ShiftSeries));
    }
  }
  CHECK(param_ranges(ActionKind::ScaleAmplitude)[0].interval() == Interval{-5, 5});
  CHECK(param_ranges(ActionKind::PiecewiseScaleHigh)[0].interval() == Interval{70, 100});
  CHECK(param_ranges(ActionKind::PiecewiseScaleLow)[0].interval() == Interval{0, 30});
  CHECK(param_ranges(ActionKind::AddNoise)[0].interval() == Interval{10, 30});
  CHECK_FALSE(kind_from_name("Purple").has_value());
}

TEST_CASE("closed forms on hand fixtures") {
  check_close(run({ActionKind::ScaleAmplitude, {10}}, {1, 2, 3}), {1.1, 2.2, 3.3});
  check_close(run({ActionKind::SwapSeries, {}}, {1, 2, 3}), {3, 2, 1});
  check_close(run({ActionKind::LinearTrendSlope, {100}}, {0, 1, 2}), {2, 5, 8});
  // Q_70 of 1..10 is 7.3, so only 8, 9, 10 move
  check_close(run({ActionKind::PiecewiseScaleHigh, {70, 10}}, ramp(10)), {1, 2, 3, 4, 5, 6, 7, 8.8, 9.9, 11.0});
  check_close(run({ActionKind::LinearTrendIntercept, {5}}, {1, 2, 3}), {1.1, 2.1, 3.1});
  check_close(run({ActionKind::ShiftSeries, {1}}, {1, 2, 3, 4}), {2, 3, 4, 4});
  check_close(run({ActionKind::ShiftSeries, {-2}}, {1, 2, 3, 4}), {1, 1, 1, 2});
  // Q_20 of 1..10 is 2.8
  check_close(run({ActionKind::PiecewiseScaleLow, {20, 10}}, ramp(10)), {1.1, 2.2, 3, 4, 5, 6, 7, 8, 9, 10});
  // Q_10 of 1..10 is 1.9
  check_close(run({ActionKind::IncreaseMinimumFactor, {-1}}, ramp(10)), {0.99, 2, 3, 4, 5, 6, 7, 8, 9, 10});
}

TEST_CASE("linear trend slope uses t = 1..H and the series range") {
  const std::vector<double> x{3, -1, 4, 1, 5};
  const auto y = run({ActionKind::LinearTrendSlope, {2.5}}, x);
  const double span = 5 - (-1);
  for (std::size_t t = 0; t < x.size(); ++t) CHECK(y[t] == doctest::Approx(x[t] + 0.025 * span * double(t + 1)));
}

TEST_CASE("no-op parameters are identities") {
  const std::vector<double> x{0.3, -2.5, 7.25, 1e6, -1e-6};
  CHECK(run({ActionKind::ScaleAmplitude, {0}}, x) == x);
  CHECK(run({ActionKind::LinearTrendSlope, {0}}, x) == x);
  CHECK(run({ActionKind::LinearTrendIntercept, {0}}, x) == x);
  CHECK(run({ActionKind::PiecewiseScaleHigh, {80, 0}}, x) == x);
  CHECK(run({ActionKind::PiecewiseScaleLow, {20, 0}}, x) == x);
  CHECK(run({ActionKind::IncreaseMinimumFactor, {0}}, x) == x);
  CHECK(run({ActionKind::ShiftSeries, {0}}, x) == x);
}

TEST_CASE("swap preserves the series mean") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(4.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(37);
    for (double& v : x) v = g(rng);
    const auto y = run({ActionKind::SwapSeries, {}}, x);
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / 37.0;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / 37.0;
    CHECK(my == doctest::Approx(mx).epsilon(1e-12));
  }
}

TEST_CASE("quantile regions match the sort-based oracle and leave the rest untouched") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::uniform_real_distribution<double> dh(70.0, 100.0), dl(0.0, 30.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(2 + trial % 50);
    for (double& v : x) v = u(rng);
    const double delta_h = dh(rng), delta_l = dl(rng);
    CHECK(quantile(x, delta_h / 100.0) == doctest::Approx(testing::ref_quantile(x, delta_h / 100.0)).epsilon(1e-12));

    const double qh = testing::ref_quantile(x, delta_h / 100.0);
    const double ql = testing::ref_quantile(x, delta_l / 100.0);
    const double q10 = testing::ref_quantile(x, 0.10);
    const auto hi = run({ActionKind::PiecewiseScaleHigh, {delta_h, 7}}, x);
    const auto lo = run({ActionKind::PiecewiseScaleLow, {delta_l, 7}}, x);
    const auto mn = run({ActionKind::IncreaseMinimumFactor, {7}}, x);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(hi[i] == (x[i] > qh ? x[i] * 1.07 : x[i]));
      CHECK(lo[i] == (x[i] <= ql ? x[i] * 1.07 : x[i]));
      CHECK(mn[i] == (x[i] <= q10 ? x[i] * 1.07 : x[i]));
    }
  }
}

TEST_CASE("quantile edge cases") {
  const std::vector<double> one{4.0};
  CHECK(quantile(one, 0.7) == 4.0);
  CHECK(quantile(std::vector<double>{1, 2}, 1.0) == 2.0);
  CHECK(quantile(std::vector<double>{1, 2}, 0.0) == 1.0);
  CHECK_THROWS_AS(quantile(std::vector<double>{}, 0.5), Error);
}

TEST_CASE("add noise has the requested relative spread") {
  const ActionInstance a{ActionKind::AddNoise, {10}};
  NoiseRng rng(99);
  const std::size_t n = 100000;
  std::vector<double> x(n, 5.0);
  apply_to_series(a, x, &rng);
  double sum = 0.0, sq = 0.0;
  for (double v : x) {
    sum += v - 5.0;
    sq += (v - 5.0) * (v - 5.0);
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  CHECK(std::abs(sd - 0.5) < 0.05);
  CHECK(std::abs(mean) < 4 * 0.5 / std::sqrt(double(n)));
  std::vector<double> y{1, 2};
  CHECK_THROWS_AS(apply_to_series(a, y, nullptr), Error);
}

TEST_CASE("noise streams depend only on series identity") {
  const Shape s{3, 5, 2};
  Tensor3 pred(s, 2.0);
  const std::vector<std::string> ids{"a", "b", "c"};
  const ActionInstance noise{ActionKind::AddNoise, {20}};
  const Tensor3 full = apply_action(noise, pred, ids, 42);
  CHECK(full == apply_action(noise, pred, ids, 42));
  CHECK_FALSE(full == apply_action(noise, pred, ids, 43));
  // the same sample inside a smaller batch draws the same values
  Tensor3 single({1, 5, 2}, 2.0);
  const std::vector<std::string> only_b{"b"};
  const Tensor3 part = apply_action(noise, single, only_b, 42);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t h = 0; h < 5; ++h) CHECK(part.at(0, h, c) == full.at(1, h, c));
}

TEST_CASE("statistics are per sample and channel") {
  // two series with different ranges get different slopes
  const Shape s{2, 3, 1};
  Tensor3 pred(s, std::vector<double>{0, 1, 2, 0, 10, 20});
  const auto out = apply_action({ActionKind::LinearTrendSlope, {5}}, pred, testing::ids(2, "x"), 0);
  CHECK(out.at(0, 0, 0) == doctest::Approx(0.1));
  CHECK(out.at(1, 0, 0) == doctest::Approx(1.0));
  CHECK(out.at(1, 2, 0) == doctest::Approx(23.0));
  CHECK(out.shape() == s);
}

TEST_CASE("validation") {
  CHECK_THROWS_AS(validate_action({ActionKind::ScaleAmplitude, {6}}, 10), Error);
  CHECK_THROWS_AS(validate_action({ActionKind::ScaleAmplitude, {}}, 10), Error);
  CHECK_THROWS_AS(validate_action({ActionKind::ShiftSeries, {1.5}}, 10), Error);
  CHECK_THROWS_AS(validate_action({ActionKind::ShiftSeries, {10}}, 10), Error);
  CHECK_THROWS_AS(validate_action({ActionKind::ShiftSeries, {-200}}, 500), Error);
  CHECK_THROWS_AS(validate_action({ActionKind::AddNoise, {NAN}}, 10), Error);
  CHECK_NOTHROW(validate_action({ActionKind::ShiftSeries, {9}}, 10));
  CHECK_NOTHROW(validate_action({ActionKind::ScaleAmplitude, {5}}, 10));
  CHECK_NOTHROW(validate_action({ActionKind::SwapSeries, {}}, 1));
  try {
    validate_action({ActionKind::PiecewiseScaleHigh, {60, 1}}, 10);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Validation);
    CHECK(std::string(e.what()).find("delta") != std::string::npos);
  }
}

TEST_CASE("sampling") {
  Rng a(1), b(1);
  CHECK(sample_instance(ActionKind::ScaleAmplitude, a, 24) == sample_instance(ActionKind::ScaleAmplitude, b, 24));
  CHECK(sample_instance(ActionKind::SwapSeries, a, 24).params.empty());

  Rng rng(2024);
  const int n = 10000;
  double sum = 0.0, lo = 1e9, hi = -1e9;
  for (int i = 0; i < n; ++i) {
    const double f = sample_instance(ActionKind::ScaleAmplitude, rng, 24).params[0];
    sum += f;
    lo = std::min(lo, f);
    hi = std::max(hi, f);
  }
  CHECK(lo >= -5.0);
  CHECK(hi <= 5.0);
  const double sigma = 10.0 / std::sqrt(12.0) / std::sqrt(double(n));
  CHECK(std::abs(sum / n) < 3 * sigma);

  for (int i = 0; i < 2000; ++i) {
    const auto s = sample_instance(ActionKind::ShiftSeries, rng, 6);
    CHECK(s.params[0] == std::round(s.params[0]));
    CHECK(std::abs(s.params[0]) <= 5.0);
  }

  RangeOverrides o;
  o[ActionKind::ScaleAmplitude] = {Interval{2, 4}};
  for (int i = 0; i < 1000; ++i) {
    const double f = sample_instance(ActionKind::ScaleAmplitude, rng, 24, &o).params[0];
    CHECK(f >= 2.0);
    CHECK(f <= 4.0);
  }
}

TEST_CASE("plans") {
  const Shape s{2, 3, 1};
  const Tensor3 pred(s, std::vector<double>{1, 2, 3, -1, 0, 4});
  const auto ids = testing::ids(2, "p");
  SUBCASE("empty plan is a bitwise identity") { CHECK(apply_plan(CorrectionPlan{}, pred, ids, 5) == pred); }
  SUBCASE("zero intercept after a scale changes nothing") {
    CorrectionPlan p{{{ActionKind::ScaleAmplitude, {4}}, {ActionKind::LinearTrendIntercept, {0}}}, {}, 0};
    CorrectionPlan q{{{ActionKind::ScaleAmplitude, {4}}}, {}, 0};
    CHECK(apply_plan(p, pred, ids) == apply_plan(q, pred, ids));
  }
  SUBCASE("composition") {
    // the closed form itself accepts any factor; plans hold catalog values
    std::vector<double> x{1};
    apply_to_series({ActionKind::ScaleAmplitude, {10}}, x, nullptr);
    apply_to_series({ActionKind::ScaleAmplitude, {10}}, x, nullptr);
    CHECK(x[0] == doctest::Approx(1.21));
    CorrectionPlan p{{{ActionKind::ScaleAmplitude, {5}}, {ActionKind::ScaleAmplitude, {5}}}, {}, 0};
    const Tensor3 one({1, 1, 1}, std::vector<double>{1});
    const std::vector<std::string> id{"z"};
    CHECK(apply_plan(p, one, id).at(0, 0, 0) == doctest::Approx(1.1025));
    CorrectionPlan bad{{{ActionKind::ScaleAmplitude, {10}}}, {}, 0};
    CHECK_THROWS_AS(apply_plan(bad, one, id), Error);
  }
  SUBCASE("affine tail runs last") {
    CorrectionPlan p{{{ActionKind::ScaleAmplitude, {5}}}, AffineTail{AffineScope::Global, {2}, {3}}, 0};
    const auto out = apply_plan(p, pred, ids);
    CHECK(out.at(0, 0, 0) == doctest::Approx(2 * 1.05 + 3));
  }
  SUBCASE("step errors carry the index") {
    CorrectionPlan p{{{ActionKind::ScaleAmplitude, {1}}, {ActionKind::ShiftSeries, {7}}}, {}, 0};
    try {
      apply_plan(p, pred, ids);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("step 1") != std::string::npos);
    }
  }
  SUBCASE("tie-break order") {
    const CorrectionPlan empty;
    const CorrectionPlan slope{{{ActionKind::LinearTrendSlope, {1}}}, {}, 0};
    const CorrectionPlan amp{{{ActionKind::ScaleAmplitude, {1}}}, {}, 0};
    const CorrectionPlan amp_lo{{{ActionKind::ScaleAmplitude, {-1}}}, {}, 0};
    const CorrectionPlan two{{{ActionKind::LinearTrendSlope, {1}}, {ActionKind::LinearTrendSlope, {1}}}, {}, 0};
    CHECK(plan_precedes(empty, slope));
    CHECK(plan_precedes(slope, amp));
    CHECK(plan_precedes(amp_lo, amp));
    CHECK(plan_precedes(amp, two));
    CHECK_FALSE(plan_precedes(amp, amp));
  }
}

TEST_CASE("streamed plan mse equals mse of the applied plan bitwise") {
  Rng rng(314);
  std::normal_distribution<double> z(5.0, 3.0);
  const Shape s{7, 12, 3};
  Tensor3 pred(s), truth(s);
  for (double& v : pred.values()) v = z(rng);
  for (double& v : truth.values()) v = z(rng);
  const auto ids = testing::ids(7, "m");
  std::uniform_int_distribution<int> kind(0, 8), steps(0, 3), scope(0, 2);
  for (int trial = 0; trial < 200; ++trial) {
    CorrectionPlan plan;
    plan.seed = rng();
    for (int k = steps(rng); k > 0; --k) plan.steps.push_back(sample_instance(kAllKinds[kind(rng)], rng, s.horizon));
    if (trial % 2) {
      const auto sc = static_cast<AffineScope>(scope(rng));
      plan.affine = AffineTail{sc, std::vector<double>(affine_group_count(sc, s), 1.1),
                               std::vector<double>(affine_group_count(sc, s), -0.4)};
    }
    CAPTURE(describe(plan));
    CHECK(plan_mse(plan, pred, truth, ids) == mse(apply_plan(plan, pred, ids), truth));
  }
  CorrectionPlan wrong{{}, AffineTail{AffineScope::PerChannel, {1.0}, {0.0}}, 0};
  CHECK_THROWS_AS(plan_mse(wrong, pred, truth, ids), Error);
}

TEST_CASE("selection quantile matches the sorted quantile") {
  Rng rng(2);
  std::uniform_int_distribution<int> len(1, 40), coarse(0, 5);
  std::uniform_real_distribution<double> p(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> x(static_cast<std::size_t>(len(rng)));
    for (double& v : x) v = coarse(rng);
    std::vector<double> sorted = x;
    std::sort(sorted.begin(), sorted.end());
    const double q = trial % 10 == 0 ? 1.0 : p(rng);
    CHECK(quantile(x, q) == quantile_sorted(sorted, q));
  }
}
