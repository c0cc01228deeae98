#include <algorithm>
#include <set>

#include "doctest.h"
#include "serialize.hpp"
#include "support.hpp"

using namespace postcorr;
using testing::scaled_objective;

namespace {

OptimizerConfig config(Strategy s, std::size_t budget, std::uint64_t seed = 3) {
  OptimizerConfig cfg;
  cfg.strategy = s;
  cfg.budget = budget;
  cfg.seed = seed;
  return cfg;
}

double val_m(const SearchTrace& t) { return t.best_improvement().value_or(0.0); }

void check_trace_contract(const SearchTrace& t, const OptimizerConfig& cfg) {
  REQUIRE_FALSE(t.episodes.empty());
  CHECK(t.episodes[0].plan.empty());
  CHECK(t.episodes[0].accepted);
  CHECK(t.evaluations == t.episodes.size());
  CHECK(t.evaluations <= cfg.budget + 1);
  CHECK(t.best_val_mse <= t.baseline_val_mse);
  const auto curve = best_curve(t);
  CHECK(std::is_sorted(curve.rbegin(), curve.rend()));
  CHECK(curve.back() == t.best_val_mse);
  // the best plan is one of the consistent episodes
  bool found = false;
  for (const auto& e : t.episodes) {
    if (e.episode > 0) CHECK(e.accepted == (e.consistent && e.val_mse < t.baseline_val_mse));
    if (e.plan == t.best_plan && e.val_mse == t.best_val_mse) found = found || e.consistent;
    if (e.consistent) CHECK(e.val_mse >= t.best_val_mse);
  }
  CHECK(found);
}

}  // namespace

TEST_CASE("candidate evaluation") {
  const Objective obj = scaled_objective(1.05);
  SUBCASE("empty plan reproduces the baseline") {
    const auto e = evaluate_candidate(CorrectionPlan{}, obj);
    CHECK(e.val_mse == testing::ref_mse(obj.val.predictions(), obj.val.truth()));
    CHECK(e.train_mse == testing::ref_mse(obj.train.predictions(), obj.train.truth()));
    CHECK(e.consistent);
  }
  SUBCASE("the exact inverse of a planted scale") {
    const CorrectionPlan p{{{ActionKind::ScaleAmplitude, {5}}}, {}, 0};
    const auto e = evaluate_candidate(p, obj);
    CHECK(e.consistent);
    CHECK(e.val_mse < 1e-20);
  }
  SUBCASE("a val-only offset trips the guard") {
    auto val = testing::scaled_batch({30, 12, 1}, 1.0, 5, "val");
    Tensor3 shifted = val.truth();
    for (double& v : shifted.values()) v *= 1.04;
    const Objective conflict{ForecastBatch(val.predictions(), shifted, val.sample_ids()),
                             testing::scaled_batch({30, 12, 1}, 1.0, 6, "train")};
    const CorrectionPlan p{{{ActionKind::ScaleAmplitude, {4}}}, {}, 0};
    const auto e = evaluate_candidate(p, conflict);
    CHECK(e.val_mse < 1e-20);
    CHECK_FALSE(e.consistent);
  }
}

TEST_CASE("objective validation") {
  auto a = testing::scaled_batch({4, 3, 1}, 1.0, 1, "x");
  CHECK_THROWS_AS(validate_objective(Objective{a, a}), Error);
  auto b = testing::scaled_batch({4, 5, 1}, 1.0, 1, "y");
  CHECK_THROWS_AS(validate_objective(Objective{a, b}), Error);
}

TEST_CASE("config validation names the field") {
  auto expect_field = [](OptimizerConfig cfg, const std::string& field) {
    try {
      validate_config(cfg);
      FAIL("expected a validation error for " << field);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Validation);
      CHECK(std::string(e.what()).rfind(field, 0) == 0);
    }
  };
  OptimizerConfig cfg;
  cfg.budget = 0;
  expect_field(cfg, "budget");
  cfg = {};
  cfg.action_space.clear();
  expect_field(cfg, "action_space");
  cfg = {};
  cfg.overrides[ActionKind::ScaleAmplitude] = {Interval{6, 8}};
  expect_field(cfg, "overrides");
  cfg = {};
  cfg.ga.population = 1;
  expect_field(cfg, "ga.population");
  cfg = {};
  cfg.jobs = 0;
  expect_field(cfg, "jobs");
}

TEST_CASE("random search") {
  SUBCASE("an already perfect forecast keeps the empty plan") {
    const Objective obj = scaled_objective(1.0);
    const auto cfg = config(Strategy::Random, 9);
    const auto t = optimize_random(obj, cfg);
    check_trace_contract(t, cfg);
    CHECK(t.best_plan.empty());
    CHECK(t.evaluations == 10);
  }
  SUBCASE("budget is split over kinds and swap is drawn once") {
    const Objective obj = scaled_objective(1.03);
    const auto cfg = config(Strategy::Random, 90);
    const auto t = optimize_random(obj, cfg);
    check_trace_contract(t, cfg);
    std::map<ActionKind, int> per_kind;
    for (std::size_t i = 1; i < t.episodes.size(); ++i) ++per_kind[t.episodes[i].plan.steps.at(0).kind];
    CHECK(per_kind[ActionKind::SwapSeries] == 1);
    CHECK(per_kind[ActionKind::ScaleAmplitude] == 10);
    CHECK(t.evaluations == 82);
  }
  SUBCASE("planted scale inside the catalog is recovered") {
    const Objective obj = scaled_objective(1.03);
    const auto t = optimize_random(obj, config(Strategy::Random, 200));
    REQUIRE(t.best_plan.steps.size() == 1);
    CHECK(t.best_plan.steps[0].kind == ActionKind::ScaleAmplitude);
    CHECK(std::abs(t.best_plan.steps[0].params[0] - 3.0) < 1.0);
    CHECK(val_m(t) > 0.8);
  }
  SUBCASE("affine tail") {
    const Objective obj = scaled_objective(1.3);
    auto cfg = config(Strategy::Random, 18);
    cfg.affine_tail = true;
    const auto t = optimize_random(obj, cfg);
    REQUIRE(t.best_plan.affine.has_value());
    CHECK(t.best_plan.affine->a.size() == 2);
    CHECK(val_m(t) > 0.99);
  }
}

TEST_CASE("determinism and parallel evaluation") {
  const Objective obj = scaled_objective(1.04);
  for (auto s : {Strategy::Random, Strategy::ShHpo, Strategy::Ppo, Strategy::Ga}) {
    CAPTURE(strategy_name(s));
    auto cfg = config(s, 60, 11);
    const auto a = optimize(obj, cfg);
    const auto b = optimize(obj, cfg);
    cfg.jobs = 3;
    const auto c = optimize(obj, cfg);
    CHECK(to_json(a.best_plan).dump() == to_json(b.best_plan).dump());
    CHECK(trace_jsonl(a) == trace_jsonl(b));
    CHECK(trace_jsonl(a) == trace_jsonl(c));
    check_trace_contract(a, cfg);
  }
}

TEST_CASE("noise candidates get reproducible seeds") {
  const Objective obj = scaled_objective(1.02);
  auto cfg = config(Strategy::Random, 12);
  cfg.action_space = {ActionKind::AddNoise};
  const auto t = optimize_random(obj, cfg);
  std::set<std::uint64_t> seeds;
  for (std::size_t i = 1; i < t.episodes.size(); ++i) {
    const auto& e = t.episodes[i];
    seeds.insert(e.plan.seed);
    CHECK(evaluate_candidate(e.plan, obj).val_mse == e.val_mse);
  }
  CHECK(seeds.size() == 12);
}

TEST_CASE("successive halving with stub rewards") {
  const std::vector<double> reward{0.5, 0.1, 0.0};
  SuccessiveHalvingUcb sh(3, 30, std::sqrt(2.0));
  const auto survivor = sh.run([&](std::size_t arm) { return reward[arm]; });
  CHECK(survivor == 0);
  CHECK(sh.total_pulls() == 30);
  REQUIRE(sh.rung_survivors().size() == 2);  // ceil(log2 3)
  for (const auto& rung : sh.rung_survivors()) CHECK(std::find(rung.begin(), rung.end(), 0u) != rung.end());
  CHECK(sh.rung_survivors()[0].size() == 2);
  CHECK(sh.rung_survivors()[1].size() == 1);

  SuccessiveHalvingUcb tight(3, 3, 1.0);
  int pulls = 0;
  CHECK(tight.run([&](std::size_t arm) {
    ++pulls;
    return reward[arm];
  }) == 0);
  CHECK(pulls == 3);
  CHECK_THROWS_AS(SuccessiveHalvingUcb(3, 2, 1.0), Error);
}

TEST_CASE("golden section maximizer") {
  GoldenSection gs(0.0, 5.0);
  while (gs.width() > 1e-6) {
    const double x = gs.next();
    gs.report(-(x - 2.0) * (x - 2.0));
  }
  CHECK(gs.next() == doctest::Approx(2.0).epsilon(1e-5));
}

TEST_CASE("sh-hpo picks the arm with the best per-arm optimum") {
  const Objective obj = scaled_objective(1.03);
  auto cfg = config(Strategy::ShHpo, 120);
  const auto t = optimize_sh_hpo(obj, cfg);
  check_trace_contract(t, cfg);
  // exhaustive oracle: best M of each kind over a fine grid
  std::map<ActionKind, double> best;
  Rng rng(1);
  for (auto k : kAllKinds) {
    best[k] = -1e9;
    for (int i = 0; i < 400; ++i) {
      const auto inst = sample_instance(k, rng, obj.val.shape().horizon);
      CorrectionPlan p{{inst}, {}, 0};
      const auto e = evaluate_candidate(p, obj);
      best[k] = std::max(best[k], reward_of(e, evaluate_candidate({}, obj).val_mse));
    }
  }
  const auto top = std::max_element(best.begin(), best.end(), [](auto& a, auto& b) { return a.second < b.second; })->first;
  CHECK(top == ActionKind::ScaleAmplitude);
  REQUIRE(t.final_arm.has_value());
  CHECK(*t.final_arm == top);
  CHECK(val_m(t) > 0.95);
}

TEST_CASE("sh-hpo with budget equal to the arm count") {
  const Objective obj = scaled_objective(1.03);
  auto cfg = config(Strategy::ShHpo, 9);
  const auto t = optimize(obj, cfg);
  CHECK(t.evaluations <= 10);
  CHECK(t.warnings.empty());
  auto small = config(Strategy::ShHpo, 5);
  const auto f = optimize(obj, small);
  CHECK(f.strategy == "random");
  CHECK_FALSE(f.warnings.empty());
}

TEST_CASE("ppo action grid") {
  OptimizerConfig cfg;
  const auto grid = build_action_grid(cfg, 24);
  CHECK_FALSE(grid[0].has_value());
  std::map<ActionKind, std::size_t> per_kind;
  for (std::size_t i = 1; i < grid.size(); ++i) ++per_kind[grid[i]->kind];
  CHECK(per_kind[ActionKind::ScaleAmplitude] == 11);
  CHECK(per_kind[ActionKind::PiecewiseScaleHigh] == 7 * 11);
  CHECK(per_kind[ActionKind::SwapSeries] == 1);
  for (std::size_t i = 1; i < grid.size(); ++i) CHECK_NOTHROW(validate_action(*grid[i], 24));
}

TEST_CASE("ppo reaches the grid optimum") {
  const Objective obj = scaled_objective(1.04);
  auto cfg = config(Strategy::Ppo, 300, 5);
  cfg.episodes = 10;
  const auto grid = build_action_grid(cfg, obj.val.shape().horizon);
  const double base = evaluate_candidate({}, obj).val_mse;
  double grid_best = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const auto e = evaluate_candidate(CorrectionPlan{{*grid[i]}, {}, 0}, obj);
    if (e.consistent) grid_best = std::max(grid_best, relative_improvement(base, e.val_mse));
  }
  CHECK(grid_best > 0.99);
  const auto t = optimize_ppo(obj, cfg);
  check_trace_contract(t, cfg);
  CHECK(val_m(t) >= 0.95 * grid_best);
  CHECK(t.diagnostics.at("policy_updates") == 10);
}

TEST_CASE("ppo on a zero-reward landscape") {
  const Objective obj = scaled_objective(1.0);
  auto cfg = config(Strategy::Ppo, 100, 2);
  const auto t = optimize_ppo(obj, cfg);
  CHECK(t.best_plan.empty());
  const double h0 = t.diagnostics.at("policy_entropy_initial");
  const double h1 = t.diagnostics.at("policy_entropy_final");
  CHECK(std::abs(h1 - h0) <= 0.1 * h0);
}

TEST_CASE("genetic search") {
  const Objective obj = scaled_objective(1.03);
  SUBCASE("a seeded exact inverse is kept as the elite") {
    auto cfg = config(Strategy::Ga, 200);
    const CorrectionPlan inverse{{{ActionKind::ScaleAmplitude, {3}}}, {}, 0};
    cfg.ga.seed_genomes = {inverse};
    const auto out = optimize_ga_detailed(obj, cfg);
    REQUIRE_FALSE(out.final_population.empty());
    CHECK(out.final_population.front().first == inverse);
    CHECK(out.trace.best_plan == inverse);
  }
  SUBCASE("population 30 over 20 generations") {
    auto cfg = config(Strategy::Ga, 30 * 20);
    const auto t = optimize_ga(obj, cfg);
    check_trace_contract(t, cfg);
    CHECK(val_m(t) >= 0.8);
    CHECK(t.diagnostics.at("generations") == 20);  // the last one truncated by the budget
  }
  SUBCASE("mutation respects ranges") {
    OptimizerConfig cfg;
    cfg.ga.mutation_rate = 1.0;
    cfg.ga.mutation_scale = 2.0;
    Rng rng(4);
    for (int i = 0; i < 100000; ++i) {
      CorrectionPlan g{{sample_instance(kAllKinds[i % 9], rng, 24)}, {}, 0};
      mutate_params(g, rng, cfg, 24);
      CHECK_NOTHROW(validate_action(g.steps[0], 24));
    }
  }
  SUBCASE("crossover keeps between one and max_steps steps from the parents") {
    Rng rng(9);
    const CorrectionPlan a{{{ActionKind::ScaleAmplitude, {1}}, {ActionKind::ScaleAmplitude, {2}}}, {}, 0};
    const CorrectionPlan b{{{ActionKind::SwapSeries, {}}}, {}, 0};
    for (int i = 0; i < 200; ++i) {
      const auto c = crossover_steps(a, b, rng, 3);
      CHECK(c.steps.size() >= 1);
      CHECK(c.steps.size() <= 2);
      CHECK((c.steps[0] == a.steps[0] || c.steps[0] == b.steps[0]));
    }
  }
  SUBCASE("budget below two falls back") {
    const auto t = optimize(obj, config(Strategy::Ga, 1));
    CHECK(t.strategy == "random");
  }
}

TEST_CASE("guard soundness across strategies") {
  // val wants +4%, train wants nothing
  auto val = testing::scaled_batch({30, 12, 1}, 1.04, 21, "val");
  auto train = testing::scaled_batch({30, 12, 1}, 1.0, 22, "train");
  const Objective obj{val, train};
  for (auto s : {Strategy::Random, Strategy::ShHpo, Strategy::Ppo, Strategy::Ga}) {
    const auto cfg = config(s, 80, 4);
    const auto t = optimize(obj, cfg);
    const auto e = evaluate_candidate(t.best_plan, obj);
    CHECK(e.train_mse <= t.baseline_train_mse * 1.01);
  }
}

TEST_CASE("run evaluates the held-out split") {
  const Objective obj = scaled_objective(1.03);
  const auto test = testing::scaled_batch({10, 24, 2}, 1.03, 77, "test");
  const auto r = run(obj, config(Strategy::Random, 50), test);
  CHECK(r.test_report.improvement.value() > 0.5);
  CHECK(r.test_report.train_consistent == true);
  const auto overlap = testing::scaled_batch({10, 24, 2}, 1.03, 77, "val");
  CHECK_THROWS_AS(run(obj, config(Strategy::Random, 5), overlap), Error);
}

TEST_CASE("strategy names") {
  for (auto s : {Strategy::Random, Strategy::ShHpo, Strategy::Ppo, Strategy::Ga}) CHECK(strategy_from_name(strategy_name(s)) == s);
  CHECK(strategy_from_name("sh_hpo") == Strategy::ShHpo);
  CHECK_FALSE(strategy_from_name("anneal").has_value());
}
