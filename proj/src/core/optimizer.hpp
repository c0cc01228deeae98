#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "metrics.hpp"
#include "plan.hpp"

namespace postcorr {

enum class Strategy { Random, ShHpo, Ppo, Ga };

std::string_view strategy_name(Strategy s) noexcept;
std::optional<Strategy> strategy_from_name(std::string_view name) noexcept;

struct BanditParams {
  double exploration = std::sqrt(2.0);  // UCB1 constant
};

struct PpoParams {
  std::size_t episode_length = 3;
  std::size_t continuous_bins = 11;
  std::size_t quantile_bins = 7;
  double learning_rate = 0.5;
  double clip = 0.2;
  std::size_t update_epochs = 4;
  double baseline_rate = 0.3;
  bool normalize_advantages = true;  // divide by the batch RMS advantage
};

struct GaParams {
  std::size_t population = 30;
  std::size_t tournament = 3;
  double mutation_rate = 0.3;
  double mutation_scale = 0.1;  // std as a fraction of the parameter range
  std::size_t elitism = 1;
  std::vector<CorrectionPlan> seed_genomes;
};

struct EpisodeRecord;

// Called for every recorded episode, baseline included, in trace order.
// Exceptions thrown by the observer abort the search.
using EpisodeObserver = std::function<void(const EpisodeRecord&)>;

struct OptimizerConfig {
  Strategy strategy = Strategy::Random;
  std::size_t budget = 200;  // candidate evaluations, excluding the baseline
  std::size_t episodes = 5;  // PPO policy-update rounds
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  double guard_tolerance = 0.01;  // allowed relative train-MSE increase
  std::size_t max_steps = 3;
  bool affine_tail = false;
  AffineScope affine_scope = AffineScope::PerChannel;
  std::vector<ActionKind> action_space{kAllKinds.begin(), kAllKinds.end()};
  RangeOverrides overrides;
  BanditParams bandit;
  PpoParams ppo;
  GaParams ga;
  EpisodeObserver on_episode;  // not serialized
};

// Throws Validation naming the offending field.
void validate_config(const OptimizerConfig& cfg);

struct Objective {
  ForecastBatch val;
  ForecastBatch train;
};

// Throws Configuration when a split is empty or val/train share sample ids.
void validate_objective(const Objective& obj);

struct CandidateEval {
  double val_mse = 0.0;
  double train_mse = 0.0;
  bool consistent = true;
};

CandidateEval evaluate_candidate(const CorrectionPlan& plan, const Objective& obj, double guard_tolerance = 0.01);

struct EpisodeRecord {
  std::size_t episode = 0;
  std::size_t round = 1;
  CorrectionPlan plan;
  double val_mse = 0.0;
  double train_mse = 0.0;
  bool consistent = true;
  bool accepted = false;  // consistent and strictly better than the base forecast
};

struct SearchTrace {
  std::string strategy;
  std::vector<EpisodeRecord> episodes;  // episode 0 is the baseline (empty plan)
  CorrectionPlan best_plan;
  double best_val_mse = 0.0;
  double baseline_val_mse = 0.0;
  double baseline_train_mse = 0.0;
  std::size_t evaluations = 0;  // objective evaluations, baseline included
  std::optional<ActionKind> final_arm;
  std::map<std::string, double> diagnostics;
  std::vector<std::string> warnings;

  std::optional<double> best_improvement() const noexcept {
    return try_relative_improvement(baseline_val_mse, best_val_mse);
  }
};

// Best validation MSE after each episode.
std::vector<double> best_curve(const SearchTrace& trace);

// Reward shared by the bandit, policy-gradient and genetic strategies:
// validation M clipped to [-1, 1]; guard failures score -1.
double reward_of(const CandidateEval& eval, double baseline_val_mse) noexcept;

SearchTrace optimize_random(const Objective& obj, const OptimizerConfig& cfg);
SearchTrace optimize_sh_hpo(const Objective& obj, const OptimizerConfig& cfg);
SearchTrace optimize_ppo(const Objective& obj, const OptimizerConfig& cfg);
SearchTrace optimize_ga(const Objective& obj, const OptimizerConfig& cfg);

// Dispatch on cfg.strategy (with the Random fallback for budgets below a
// strategy's minimum).
SearchTrace optimize(const Objective& obj, const OptimizerConfig& cfg);

struct RunResult {
  SearchTrace trace;
  EvalReport test_report;
};

RunResult run(const Objective& obj, const OptimizerConfig& cfg, const ForecastBatch& test);

EvalReport evaluate_plan_on(const CorrectionPlan& plan, const ForecastBatch& batch);

// ---------------------------------------------------------------------------
// Strategy building blocks, exposed for direct testing.

// Successive halving over bandit arms with UCB1 arm selection inside each
// rung. Every arm is pulled once first; the remaining budget is split evenly
// over ceil(log2 K) rungs, and each rung keeps the better half (by best
// observed reward).
class SuccessiveHalvingUcb {
 public:
  struct ArmStats {
    std::size_t pulls = 0;
    double reward_sum = 0.0;
    double best_reward = -INFINITY;
    double mean() const noexcept { return pulls ? reward_sum / static_cast<double>(pulls) : 0.0; }
  };

  SuccessiveHalvingUcb(std::size_t arms, std::size_t budget, double exploration);

  // Returns the surviving arm.
  std::size_t run(const std::function<double(std::size_t arm)>& pull);

  const std::vector<ArmStats>& stats() const noexcept { return stats_; }
  const std::vector<std::vector<std::size_t>>& rung_survivors() const noexcept { return rungs_; }
  std::size_t total_pulls() const noexcept { return total_pulls_; }

 private:
  std::size_t select(const std::vector<std::size_t>& alive) const;
  void record(std::size_t arm, double reward);

  std::size_t budget_;
  double exploration_;
  std::size_t total_pulls_ = 0;
  std::vector<ArmStats> stats_;
  std::vector<std::vector<std::size_t>> rungs_;
};

// One-dimensional golden-section maximizer advanced one evaluation at a time.
class GoldenSection {
 public:
  GoldenSection(double low, double high);
  double next() const noexcept;  // the point whose value is needed next
  void report(double value);     // value at next()
  double width() const noexcept { return hi_ - lo_; }

 private:
  double lo_, hi_, c_, d_;
  std::optional<double> fc_, fd_;
};

// Discrete action grid used by the policy-gradient strategy. Index 0 is
// "stop", which ends an episode early.
std::vector<std::optional<ActionInstance>> build_action_grid(const OptimizerConfig& cfg, std::size_t horizon);

// Genetic operators.
CorrectionPlan crossover_steps(const CorrectionPlan& a, const CorrectionPlan& b, Rng& rng, std::size_t max_steps);
void mutate_params(CorrectionPlan& genome, Rng& rng, const OptimizerConfig& cfg, std::size_t horizon);

struct GaOutcome {
  SearchTrace trace;
  std::vector<std::pair<CorrectionPlan, double>> final_population;  // genome, fitness
};

GaOutcome optimize_ga_detailed(const Objective& obj, const OptimizerConfig& cfg);

}  // namespace postcorr
