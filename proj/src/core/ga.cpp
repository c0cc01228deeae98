#include <algorithm>
#include <cmath>
#include <limits>

#include "optimizer.hpp"
#include "search_context.hpp"

namespace postcorr {
namespace {

constexpr double kRejected = -std::numeric_limits<double>::infinity();

struct Individual {
  CorrectionPlan genome;
  double fitness = kRejected;
};

CorrectionPlan random_genome(const OptimizerConfig& cfg, Rng& rng, std::size_t horizon) {
  std::uniform_int_distribution<std::size_t> len(1, cfg.max_steps);
  std::uniform_int_distribution<std::size_t> pick(0, cfg.action_space.size() - 1);
  CorrectionPlan g;
  const std::size_t n = len(rng);
  for (std::size_t i = 0; i < n; ++i) {
    g.steps.push_back(sample_instance(cfg.action_space[pick(rng)], rng, horizon, &cfg.overrides));
  }
  return g;
}

double fitness_of(const CandidateEval& e, double baseline_val_mse) {
  if (!e.consistent) return kRejected;
  if (!(baseline_val_mse > 0.0)) return e.val_mse > 0.0 ? -1.0 : 0.0;
  return (baseline_val_mse - e.val_mse) / baseline_val_mse;
}

// Higher fitness first; ties broken by the plan order.
bool fitter(const Individual& a, const Individual& b) {
  if (a.fitness != b.fitness) return a.fitness > b.fitness;
  return plan_precedes(a.genome, b.genome);
}

const Individual& tournament(const std::vector<Individual>& pop, std::size_t k, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, pop.size() - 1);
  const Individual* best = &pop[pick(rng)];
  for (std::size_t i = 1; i < k; ++i) {
    const Individual& c = pop[pick(rng)];
    if (fitter(c, *best)) best = &c;
  }
  return *best;
}

}  // namespace

CorrectionPlan crossover_steps(const CorrectionPlan& a, const CorrectionPlan& b, Rng& rng, std::size_t max_steps) {
  std::bernoulli_distribution coin(0.5);
  CorrectionPlan child;
  const std::size_t n = std::max(a.steps.size(), b.steps.size());
  for (std::size_t i = 0; i < n && child.steps.size() < max_steps; ++i) {
    const CorrectionPlan& src = coin(rng) ? a : b;
    if (i < src.steps.size()) child.steps.push_back(src.steps[i]);
  }
  if (child.steps.empty()) child.steps.push_back(!a.steps.empty() ? a.steps.front() : b.steps.front());
  return child;
}

void mutate_params(CorrectionPlan& genome, Rng& rng, const OptimizerConfig& cfg, std::size_t horizon) {
  std::bernoulli_distribution hit(cfg.ga.mutation_rate);
  std::normal_distribution<double> unit(0.0, 1.0);
  for (auto& step : genome.steps) {
    const auto catalog = param_ranges(step.kind);
    for (std::size_t i = 0; i < step.params.size(); ++i) {
      if (!hit(rng)) continue;
      const Interval r = sampling_range(step.kind, i, horizon, &cfg.overrides);
      double v = step.params[i] + cfg.ga.mutation_scale * (r.high - r.low) * unit(rng);
      if (catalog[i].integer_valued) v = std::round(v);
      step.params[i] = std::clamp(v, r.low, r.high);
    }
  }
}

GaOutcome optimize_ga_detailed(const Objective& obj, const OptimizerConfig& cfg) {
  validate_config(cfg);
  detail::SearchContext ctx(obj, cfg, std::string(strategy_name(Strategy::Ga)));
  const std::size_t horizon = ctx.horizon();
  Rng rng(mix_seed(cfg.seed, 0x4741));
  const std::size_t pop_size = std::min(cfg.ga.population, cfg.budget);
  const std::size_t elites = std::min(cfg.ga.elitism, pop_size - 1);

  auto score = [&](std::vector<Individual>& group) {
    std::vector<CorrectionPlan> plans;
    for (const auto& ind : group) plans.push_back(ind.genome);
    const auto evals = ctx.evaluate(plans);
    for (std::size_t i = 0; i < group.size(); ++i) {
      group[i].genome = plans[i];
      group[i].fitness = fitness_of(evals[i], ctx.trace().baseline_val_mse);
    }
  };

  std::vector<Individual> pop;
  for (const auto& seeded : cfg.ga.seed_genomes) {
    if (pop.size() == pop_size) break;
    for (const auto& s : seeded.steps) validate_action(s, horizon);
    if (seeded.steps.empty() || seeded.steps.size() > cfg.max_steps) {
      fail(ErrorCode::Validation, "ga.seed_genomes: genomes need 1.." + std::to_string(cfg.max_steps) + " steps");
    }
    pop.push_back({CorrectionPlan{seeded.steps, std::nullopt, 0}, kRejected});
  }
  while (pop.size() < pop_size) pop.push_back({random_genome(cfg, rng, horizon), kRejected});
  score(pop);

  std::size_t generations = 0;
  while (ctx.remaining() > 0) {
    std::sort(pop.begin(), pop.end(), fitter);
    std::vector<Individual> next(pop.begin(), pop.begin() + static_cast<std::ptrdiff_t>(elites));
    const std::size_t children = std::min(pop_size - elites, ctx.remaining());
    std::vector<Individual> brood;
    for (std::size_t i = 0; i < children; ++i) {
      const Individual& pa = tournament(pop, cfg.ga.tournament, rng);
      const Individual& pb = tournament(pop, cfg.ga.tournament, rng);
      Individual child{crossover_steps(pa.genome, pb.genome, rng, cfg.max_steps), kRejected};
      mutate_params(child.genome, rng, cfg, horizon);
      brood.push_back(std::move(child));
    }
    score(brood);
    for (auto& c : brood) next.push_back(std::move(c));
    // a truncated last generation keeps the fittest survivors of the previous one
    for (std::size_t i = elites; next.size() < pop_size; ++i) next.push_back(pop[i]);
    pop = std::move(next);
    ++generations;
  }
  std::sort(pop.begin(), pop.end(), fitter);

  GaOutcome out;
  out.trace = ctx.finish();
  out.trace.diagnostics["generations"] = static_cast<double>(generations);
  out.trace.diagnostics["population"] = static_cast<double>(pop_size);
  for (auto& ind : pop) out.final_population.emplace_back(std::move(ind.genome), ind.fitness);
  return out;
}

SearchTrace optimize_ga(const Objective& obj, const OptimizerConfig& cfg) {
  return optimize_ga_detailed(obj, cfg).trace;
}

}  // namespace postcorr
