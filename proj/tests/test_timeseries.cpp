#include "doctest.h"
#include "support.hpp"

using namespace postcorr;
using testing::batch;

TEST_CASE("mse hand fixtures") {
  CHECK(mse(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}) == 0.0);
  CHECK(mse(std::vector<double>{0, 0}, std::vector<double>{1, 1}) == 1.0);
  CHECK(mse(std::vector<double>{1, 2, 3}, std::vector<double>{2, 2, 2}) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("mse rejects mismatched or non-finite input") {
  CHECK_THROWS_AS(mse(std::vector<double>{1, 2}, std::vector<double>{1}), Error);
  try {
    mse(std::vector<double>{1, 2}, std::vector<double>{1});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Dimension);
  }
  try {
    mse(std::vector<double>{1, NAN}, std::vector<double>{1, 2});
    FAIL("expected a validation error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Validation);
  }
}

TEST_CASE("mse properties on random tensors") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(60), b(60), flipped(60);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = g(rng);
      b[i] = g(rng);
      flipped[i] = 2 * b[i] - a[i];  // same |error|, opposite sign
    }
    const double m = mse(a, b);
    CHECK(m >= 0.0);
    CHECK(m == doctest::Approx(testing::ref_mse(a, b)).epsilon(1e-12));
    CHECK(mse(flipped, b) == doctest::Approx(m).epsilon(1e-12));
    CHECK(mse(a, a) == 0.0);
  }
}

TEST_CASE("relative improvement") {
  CHECK(relative_improvement(1.0, 0.5) == 0.5);
  CHECK(relative_improvement(0.7, 0.7) == 0.0);
  CHECK(relative_improvement(0.61, 0.51) == doctest::Approx(0.1639).epsilon(1e-3));
  CHECK(relative_improvement(3.0, 0.0) == 1.0);
  CHECK_THROWS_AS(relative_improvement(0.0, 0.0), Error);
  CHECK_THROWS_AS(relative_improvement(-1.0, 0.0), Error);
  CHECK_FALSE(try_relative_improvement(0.0, 1.0).has_value());
  try {
    relative_improvement(0.0, 1.0);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Domain);
  }
}

TEST_CASE("forecast batch invariants") {
  CHECK_THROWS_AS(batch({1, 2, 1}, {1, 2}, {1, 2, 3}), Error);
  CHECK_THROWS_AS(ForecastBatch(Tensor3({0, 2, 1}), Tensor3({0, 2, 1}), {}), Error);
  CHECK_THROWS_AS(ForecastBatch(Tensor3({2, 1, 1}, {1, 2}), Tensor3({2, 1, 1}, {1, 2}), {"a", "a"}), Error);
  CHECK_THROWS_AS(batch({1, 2, 1}, {1, INFINITY}, {1, 2}), Error);
  const auto b = batch({1, 2, 1}, {1, 2}, {3, 4});
  CHECK(b.shape() == Shape{1, 2, 1});
  CHECK(b.predictions().at(0, 1, 0) == 2.0);
}

TEST_CASE("tensor layout keeps each series contiguous") {
  Tensor3 t({2, 3, 2});
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t h = 0; h < 3; ++h)
      for (std::size_t c = 0; c < 2; ++c) t.at(n, h, c) = static_cast<double>(100 * n + 10 * c + h);
  auto s = t.series(1, 1);
  CHECK(s.size() == 3);
  CHECK(s[0] == 110.0);
  CHECK(s[2] == 112.0);
}

TEST_CASE("per-channel report") {
  SUBCASE("identical predictions give zero improvement everywhere") {
    const auto b = batch({3, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}, {0, 2, 3, 5, 5, 6, 7, 9, 9, 10, 12, 12});
    const auto r = per_channel_report(b, b);
    CHECK(*r.improvement == 0.0);
    for (const auto& c : r.per_channel) CHECK(*c.improvement == 0.0);
    CHECK_FALSE(r.train_consistent.has_value());
  }
  SUBCASE("single channel") {
    const auto before = batch({1, 2, 1}, {1, 1}, {0, 0});
    const auto after = before.with_predictions(Tensor3({1, 2, 1}, {0.5, 0.5}));
    const auto r = per_channel_report(before, after);
    CHECK(r.mse_before == 1.0);
    CHECK(r.mse_after == 0.25);
    CHECK(*r.improvement == 0.75);
    REQUIRE(r.per_channel.size() == 1);
    CHECK(*r.per_channel[0].improvement == 0.75);
  }
  SUBCASE("global M lies between channel Ms on equal-energy channels") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    const Shape s{20, 8, 2};
    Tensor3 truth(s), pred(s), fixed(s);
    for (std::size_t n = 0; n < s.samples; ++n) {
      for (std::size_t h = 0; h < s.horizon; ++h) {
        const double e = g(rng);
        for (std::size_t c = 0; c < 2; ++c) {
          truth.at(n, h, c) = g(rng);
          pred.at(n, h, c) = truth.at(n, h, c) + e;
          fixed.at(n, h, c) = truth.at(n, h, c) + e * (c == 0 ? std::sqrt(0.8) : std::sqrt(1.1));
        }
      }
    }
    const ForecastBatch before(pred, truth, testing::ids(s.samples, "x"));
    const auto r = per_channel_report(before, before.with_predictions(fixed));
    CHECK(*r.per_channel[0].improvement == doctest::Approx(0.2));
    CHECK(*r.per_channel[1].improvement == doctest::Approx(-0.1));
    CHECK(*r.improvement > -0.1);
    CHECK(*r.improvement < 0.2);
    // global MSE is the plain mean of the channel MSEs
    CHECK(r.mse_after == doctest::Approx(0.5 * (r.per_channel[0].mse_after + r.per_channel[1].mse_after)));
  }
  SUBCASE("zero baseline error leaves M undefined") {
    const auto b = batch({1, 2, 1}, {1, 1}, {1, 1});
    const auto r = per_channel_report(b, b.with_predictions(Tensor3({1, 2, 1}, {2, 2})));
    CHECK_FALSE(r.improvement.has_value());
  }
  SUBCASE("different truth is rejected") {
    const auto a = batch({1, 2, 1}, {1, 1}, {1, 1});
    const auto b = batch({1, 2, 1}, {1, 1}, {2, 2});
    CHECK_THROWS_AS(per_channel_report(a, b), Error);
  }
}

TEST_CASE("uniform average over horizons skips undefined entries") {
  EvalReport a, b, c;
  a.improvement = 0.2;
  b.improvement = 0.4;
  std::vector<EvalReport> rs{a, b, c};
  CHECK(*mean_improvement(rs) == doctest::Approx(0.3));
  std::vector<EvalReport> none{c};
  CHECK_FALSE(mean_improvement(none).has_value());
}

TEST_CASE("error codes have stable names") {
  CHECK(std::string(error_code_name(ErrorCode::Validation)) == "validation_error");
  CHECK(std::string(error_code_name(ErrorCode::Conflict)) == "conflict");
}
