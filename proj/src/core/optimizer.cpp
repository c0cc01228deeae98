#include "optimizer.hpp"

#include <algorithm>
#include <exception>
#include <set>
#include <thread>
#include <unordered_set>

#include "search_context.hpp"

namespace postcorr {

std::string_view strategy_name(Strategy s) noexcept {
  switch (s) {
    case Strategy::Random: return "random";
    case Strategy::ShHpo: return "sh-hpo";
    case Strategy::Ppo: return "ppo";
    case Strategy::Ga: return "ga";
  }
  return "?";
}

std::optional<Strategy> strategy_from_name(std::string_view name) noexcept {
  for (auto s : {Strategy::Random, Strategy::ShHpo, Strategy::Ppo, Strategy::Ga}) {
    if (strategy_name(s) == name) return s;
  }
  if (name == "sh_hpo" || name == "SH_HPO" || name == "shhpo") return Strategy::ShHpo;
  return std::nullopt;
}

void validate_config(const OptimizerConfig& cfg) {
  auto bad = [](const std::string& field, const std::string& why) {
    fail(ErrorCode::Validation, field + ": " + why);
  };
  if (cfg.budget < 1) bad("budget", "must be at least 1");
  if (cfg.episodes < 1) bad("episodes", "must be at least 1");
  if (cfg.jobs < 1) bad("jobs", "must be at least 1");
  if (!(cfg.guard_tolerance >= 0.0)) bad("guard_tolerance", "must be non-negative");
  if (cfg.max_steps < 1 || cfg.max_steps > 3) bad("max_steps", "must be between 1 and 3");
  if (cfg.action_space.empty()) bad("action_space", "must name at least one action kind");
  std::set<ActionKind> seen(cfg.action_space.begin(), cfg.action_space.end());
  if (seen.size() != cfg.action_space.size()) bad("action_space", "contains duplicates");
  for (const auto& [kind, slots] : cfg.overrides) {
    const auto ranges = param_ranges(kind);
    if (slots.size() > ranges.size()) bad("overrides", std::string(kind_name(kind)) + " has too many parameters");
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (!slots[i]) continue;
      const Interval& o = *slots[i];
      if (!(o.low <= o.high) || o.low < ranges[i].low || o.high > ranges[i].high) {
        bad("overrides", std::string(kind_name(kind)) + "." + std::string(ranges[i].name) +
                             " must be a sub-interval of the catalog range");
      }
    }
  }
  if (cfg.ga.population < 2) bad("ga.population", "must be at least 2");
  if (cfg.ga.tournament < 1) bad("ga.tournament", "must be at least 1");
  if (cfg.ga.elitism >= cfg.ga.population) bad("ga.elitism", "must be smaller than the population");
  if (cfg.ga.mutation_rate < 0.0 || cfg.ga.mutation_rate > 1.0) bad("ga.mutation_rate", "must lie in [0, 1]");
  if (cfg.ppo.episode_length < 1 || cfg.ppo.episode_length > cfg.max_steps) {
    bad("ppo.episode_length", "must be between 1 and max_steps");
  }
  if (cfg.ppo.continuous_bins < 2 || cfg.ppo.quantile_bins < 2) bad("ppo bins", "need at least two bins");
  if (!(cfg.ppo.clip > 0.0) || !(cfg.ppo.learning_rate > 0.0)) bad("ppo", "clip and learning_rate must be positive");
  if (!(cfg.bandit.exploration >= 0.0)) bad("bandit.exploration", "must be non-negative");
}

void validate_objective(const Objective& obj) {
  if (obj.val.empty()) fail(ErrorCode::Configuration, "validation split is empty");
  if (obj.train.empty()) fail(ErrorCode::Configuration, "training split is empty");
  if (obj.val.shape().horizon != obj.train.shape().horizon || obj.val.shape().channels != obj.train.shape().channels) {
    fail(ErrorCode::Configuration, "train and validation batches disagree on horizon or channel count");
  }
  std::unordered_set<std::string> ids(obj.val.sample_ids().begin(), obj.val.sample_ids().end());
  for (const auto& id : obj.train.sample_ids()) {
    if (ids.contains(id)) fail(ErrorCode::Configuration, "sample '" + id + "' appears in both train and validation");
  }
}

CandidateEval evaluate_candidate(const CorrectionPlan& plan, const Objective& obj, double guard_tolerance) {
  const double base_train = mse(obj.train.predictions(), obj.train.truth());
  CandidateEval e;
  e.val_mse = plan_mse(plan, obj.val.predictions(), obj.val.truth(), obj.val.sample_ids());
  e.train_mse = plan_mse(plan, obj.train.predictions(), obj.train.truth(), obj.train.sample_ids());
  e.consistent = e.train_mse <= base_train * (1.0 + guard_tolerance);
  return e;
}

double reward_of(const CandidateEval& eval, double baseline_val_mse) noexcept {
  if (!eval.consistent) return -1.0;
  if (!(baseline_val_mse > 0.0)) return eval.val_mse > 0.0 ? -1.0 : 0.0;
  return std::clamp((baseline_val_mse - eval.val_mse) / baseline_val_mse, -1.0, 1.0);
}

std::vector<double> best_curve(const SearchTrace& trace) {
  std::vector<double> curve;
  double best = INFINITY;
  for (const auto& e : trace.episodes) {
    if (e.accepted || e.episode == 0) best = std::min(best, e.val_mse);
    curve.push_back(best);
  }
  return curve;
}

namespace detail {

namespace {
bool has_noise(const CorrectionPlan& plan) {
  return std::any_of(plan.steps.begin(), plan.steps.end(),
                     [](const ActionInstance& a) { return a.kind == ActionKind::AddNoise; });
}
}  // namespace

SearchContext::SearchContext(const Objective& obj, const OptimizerConfig& cfg, std::string strategy)
    : obj_(obj), cfg_(cfg) {
  validate_objective(obj_);
  trace_.strategy = std::move(strategy);
  trace_.baseline_val_mse = mse(obj_.val.predictions(), obj_.val.truth());
  trace_.baseline_train_mse = mse(obj_.train.predictions(), obj_.train.truth());
  trace_.best_val_mse = trace_.baseline_val_mse;
  trace_.evaluations = 1;
  EpisodeRecord base;
  base.episode = 0;
  base.val_mse = trace_.baseline_val_mse;
  base.train_mse = trace_.baseline_train_mse;
  base.consistent = true;
  base.accepted = true;
  trace_.episodes.push_back(std::move(base));
  if (cfg_.on_episode) cfg_.on_episode(trace_.episodes.back());
}

CandidateEval SearchContext::score(CorrectionPlan& plan, std::size_t candidate_index) const {
  plan.seed = has_noise(plan) ? mix_seed(cfg_.seed, candidate_index) : 0;
  plan.affine.reset();
  CandidateEval e;
  if (cfg_.affine_tail) {
    // the tail is fitted on the corrected validation forecasts
    Tensor3 val = apply_plan(plan, obj_.val.predictions(), obj_.val.sample_ids());
    plan.affine = fit_affine_tail(val, obj_.val.truth(), cfg_.affine_scope);
    apply_affine_tail_inplace(*plan.affine, val);
    e.val_mse = mse(val, obj_.val.truth());
  } else {
    e.val_mse = plan_mse(plan, obj_.val.predictions(), obj_.val.truth(), obj_.val.sample_ids());
  }
  e.train_mse = plan_mse(plan, obj_.train.predictions(), obj_.train.truth(), obj_.train.sample_ids());
  e.consistent = e.train_mse <= trace_.baseline_train_mse * (1.0 + cfg_.guard_tolerance);
  return e;
}

void SearchContext::record(const CorrectionPlan& plan, const CandidateEval& eval) {
  EpisodeRecord r;
  r.episode = trace_.episodes.size();
  r.plan = plan;
  r.val_mse = eval.val_mse;
  r.train_mse = eval.train_mse;
  r.consistent = eval.consistent;
  r.accepted = eval.consistent && eval.val_mse < trace_.baseline_val_mse;
  if (eval.consistent && (eval.val_mse < trace_.best_val_mse ||
                          (eval.val_mse == trace_.best_val_mse && plan_precedes(plan, trace_.best_plan)))) {
    trace_.best_val_mse = eval.val_mse;
    trace_.best_plan = plan;
  }
  trace_.episodes.push_back(std::move(r));
  ++trace_.evaluations;
  if (cfg_.on_episode) cfg_.on_episode(trace_.episodes.back());
}

std::vector<CandidateEval> SearchContext::evaluate(std::vector<CorrectionPlan>& plans) {
  if (plans.size() > remaining()) fail(ErrorCode::Internal, "strategy exceeded its evaluation budget");
  std::vector<CandidateEval> out(plans.size());
  const std::size_t first = candidates_;
  const std::size_t workers = std::min(cfg_.jobs, plans.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < plans.size(); ++i) out[i] = score(plans[i], first + i);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          try {
            for (std::size_t i = w; i < plans.size(); i += workers) out[i] = score(plans[i], first + i);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  candidates_ += plans.size();
  for (std::size_t i = 0; i < plans.size(); ++i) record(plans[i], out[i]);
  return out;
}

CandidateEval SearchContext::evaluate(CorrectionPlan& plan) {
  std::vector<CorrectionPlan> one{plan};
  const CandidateEval e = evaluate(one)[0];
  plan = std::move(one[0]);
  return e;
}

}  // namespace detail

SearchTrace optimize_random(const Objective& obj, const OptimizerConfig& cfg) {
  validate_config(cfg);
  detail::SearchContext ctx(obj, cfg, std::string(strategy_name(Strategy::Random)));
  Rng rng(mix_seed(cfg.seed, 0x52414e44));
  const std::size_t kinds = cfg.action_space.size();
  const std::size_t per_kind = cfg.budget / kinds;
  const std::size_t extra = cfg.budget % kinds;
  std::vector<CorrectionPlan> candidates;
  for (std::size_t k = 0; k < kinds; ++k) {
    const ActionKind kind = cfg.action_space[k];
    std::size_t draws = per_kind + (k < extra ? 1 : 0);
    if (param_arity(kind) == 0) draws = std::min<std::size_t>(draws, 1);
    for (std::size_t i = 0; i < draws; ++i) {
      CorrectionPlan plan;
      plan.steps.push_back(sample_instance(kind, rng, ctx.horizon(), &cfg.overrides));
      candidates.push_back(std::move(plan));
    }
  }
  // chunked so observers see progress; results do not depend on the chunking
  const std::size_t chunk = std::max<std::size_t>(16, 4 * cfg.jobs);
  for (std::size_t i = 0; i < candidates.size(); i += chunk) {
    std::vector<CorrectionPlan> part(candidates.begin() + static_cast<std::ptrdiff_t>(i),
                                     candidates.begin() + static_cast<std::ptrdiff_t>(std::min(i + chunk, candidates.size())));
    ctx.evaluate(part);
  }
  return ctx.finish();
}

SearchTrace optimize(const Objective& obj, const OptimizerConfig& cfg) {
  validate_config(cfg);
  auto fallback = [&](const std::string& why) {
    SearchTrace t = optimize_random(obj, cfg);
    t.warnings.push_back(std::string(strategy_name(cfg.strategy)) + " fell back to random search: " + why);
    return t;
  };
  switch (cfg.strategy) {
    case Strategy::Random: return optimize_random(obj, cfg);
    case Strategy::ShHpo:
      if (cfg.budget < cfg.action_space.size()) return fallback("budget below the number of arms");
      return optimize_sh_hpo(obj, cfg);
    case Strategy::Ppo: return optimize_ppo(obj, cfg);
    case Strategy::Ga:
      if (cfg.budget < 2) return fallback("budget below the minimum population of 2");
      return optimize_ga(obj, cfg);
  }
  fail(ErrorCode::Internal, "unknown strategy");
}

EvalReport evaluate_plan_on(const CorrectionPlan& plan, const ForecastBatch& batch) {
  const ForecastBatch after = batch.with_predictions(apply_plan(plan, batch.predictions(), batch.sample_ids()));
  return per_channel_report(batch, after);
}

RunResult run(const Objective& obj, const OptimizerConfig& cfg, const ForecastBatch& test) {
  if (test.empty()) fail(ErrorCode::Configuration, "test split is empty");
  validate_objective(obj);
  std::unordered_set<std::string> used(obj.val.sample_ids().begin(), obj.val.sample_ids().end());
  used.insert(obj.train.sample_ids().begin(), obj.train.sample_ids().end());
  for (const auto& id : test.sample_ids()) {
    if (used.contains(id)) fail(ErrorCode::Configuration, "test sample '" + id + "' overlaps train/validation");
  }
  RunResult result;
  result.trace = optimize(obj, cfg);
  result.test_report = evaluate_plan_on(result.trace.best_plan, test);
  result.test_report.train_consistent = true;  // the best plan always passed the guard
  for (const auto& e : result.trace.episodes) {
    if (e.plan == result.trace.best_plan) {
      result.test_report.train_consistent = e.consistent;
      break;
    }
  }
  return result;
}

}  // namespace postcorr
