#include <algorithm>
#include <cmath>
#include <map>

#include "optimizer.hpp"
#include "search_context.hpp"

namespace postcorr {
namespace {

std::vector<double> bin_points(const Interval& r, std::size_t bins, bool integer) {
  std::vector<double> pts;
  if (r.low == r.high) return {r.low};
  for (std::size_t i = 0; i < bins; ++i) {
    double v = r.low + (r.high - r.low) * static_cast<double>(i) / static_cast<double>(bins - 1);
    if (integer) v = std::round(v);
    if (pts.empty() || pts.back() != v) pts.push_back(v);
  }
  return pts;
}

std::vector<double> softmax(const std::vector<double>& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

struct Choice {
  std::size_t step;
  std::size_t action;  // grid index
  double old_prob;
};

struct Trajectory {
  std::vector<Choice> choices;
  CorrectionPlan plan;
  double reward = 0.0;
};

// Categorical over the action grid, factored as p(kind) * p(bin | kind) so
// that credit for one bin of a kind is shared with its neighbours. Kind 0 is
// "stop", which is masked at the first position. One independent table per
// position in the episode.
class Policy {
 public:
  Policy(std::size_t steps, const std::vector<std::optional<ActionInstance>>& grid) {
    // group grid cells by kind, in grid order
    group_of_.assign(grid.size(), 0);
    bin_of_.assign(grid.size(), 0);
    members_.push_back({0});
    for (std::size_t i = 1; i < grid.size(); ++i) {
      if (members_.size() == 1 || grid[members_.back().front()]->kind != grid[i]->kind) members_.push_back({});
      group_of_[i] = members_.size() - 1;
      bin_of_[i] = members_.back().size();
      members_.back().push_back(i);
    }
    for (std::size_t s = 0; s < steps; ++s) {
      kind_logits_.emplace_back(members_.size(), 0.0);
      // the empty plan is already the baseline episode, so never stop first
      if (s == 0 && members_.size() > 1) kind_logits_[0][0] = -INFINITY;
      std::vector<std::vector<double>> bins;
      for (const auto& m : members_) bins.emplace_back(m.size(), 0.0);
      bin_logits_.push_back(std::move(bins));
    }
  }

  double prob(std::size_t step, std::size_t action) const {
    const std::size_t g = group_of_[action];
    return softmax(kind_logits_[step])[g] * softmax(bin_logits_[step][g])[bin_of_[action]];
  }

  std::size_t sample(std::size_t step, Rng& rng) const {
    const std::size_t g = draw(softmax(kind_logits_[step]), rng);
    return members_[g][draw(softmax(bin_logits_[step][g]), rng)];
  }

  // Adds scale * grad log p(action) to the logits.
  void accumulate(std::size_t step, std::size_t action, double scale, Policy& grad) const {
    const std::size_t g = group_of_[action];
    const auto pk = softmax(kind_logits_[step]);
    for (std::size_t k = 0; k < pk.size(); ++k) grad.kind_logits_[step][k] += scale * ((k == g ? 1.0 : 0.0) - pk[k]);
    const auto pb = softmax(bin_logits_[step][g]);
    for (std::size_t b = 0; b < pb.size(); ++b) {
      grad.bin_logits_[step][g][b] += scale * ((b == bin_of_[action] ? 1.0 : 0.0) - pb[b]);
    }
  }

  void zero() {
    for (auto& v : kind_logits_) std::fill(v.begin(), v.end(), 0.0);
    for (auto& step : bin_logits_)
      for (auto& v : step) std::fill(v.begin(), v.end(), 0.0);
  }

  void add(const Policy& grad, double rate) {
    for (std::size_t s = 0; s < kind_logits_.size(); ++s) {
      for (std::size_t k = 0; k < kind_logits_[s].size(); ++k) kind_logits_[s][k] += rate * grad.kind_logits_[s][k];
      for (std::size_t g = 0; g < bin_logits_[s].size(); ++g)
        for (std::size_t b = 0; b < bin_logits_[s][g].size(); ++b) bin_logits_[s][g][b] += rate * grad.bin_logits_[s][g][b];
    }
  }

  // Mean over positions of the entropy of the joint grid distribution.
  double mean_entropy() const {
    double h = 0.0;
    for (std::size_t s = 0; s < kind_logits_.size(); ++s) {
      const auto pk = softmax(kind_logits_[s]);
      h += entropy(pk);
      for (std::size_t g = 0; g < pk.size(); ++g) h += pk[g] * entropy(softmax(bin_logits_[s][g]));
    }
    return h / static_cast<double>(kind_logits_.size());
  }

  std::size_t steps() const noexcept { return kind_logits_.size(); }

 private:
  static std::size_t draw(const std::vector<double>& p, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double x = u(rng);
    for (std::size_t i = 0; i < p.size(); ++i) {
      x -= p[i];
      if (x < 0.0) return i;
    }
    return p.size() - 1;
  }

  std::vector<std::vector<std::size_t>> members_;
  std::vector<std::size_t> group_of_, bin_of_;
  std::vector<std::vector<double>> kind_logits_;
  std::vector<std::vector<std::vector<double>>> bin_logits_;
};

}  // namespace

std::vector<std::optional<ActionInstance>> build_action_grid(const OptimizerConfig& cfg, std::size_t horizon) {
  std::vector<std::optional<ActionInstance>> grid{std::nullopt};
  for (ActionKind kind : cfg.action_space) {
    const auto catalog = param_ranges(kind);
    std::vector<std::vector<double>> axes;
    for (std::size_t i = 0; i < catalog.size(); ++i) {
      const std::size_t bins = catalog[i].name == "delta" ? cfg.ppo.quantile_bins : cfg.ppo.continuous_bins;
      axes.push_back(bin_points(sampling_range(kind, i, horizon, &cfg.overrides), bins, catalog[i].integer_valued));
    }
    // cartesian product, first axis slowest
    std::vector<std::vector<double>> combos{{}};
    for (const auto& axis : axes) {
      std::vector<std::vector<double>> next;
      for (const auto& prefix : combos) {
        for (double v : axis) {
          auto c = prefix;
          c.push_back(v);
          next.push_back(std::move(c));
        }
      }
      combos = std::move(next);
    }
    for (auto& params : combos) grid.emplace_back(ActionInstance{kind, std::move(params)});
  }
  return grid;
}

SearchTrace optimize_ppo(const Objective& obj, const OptimizerConfig& cfg) {
  validate_config(cfg);
  detail::SearchContext ctx(obj, cfg, std::string(strategy_name(Strategy::Ppo)));
  const auto grid = build_action_grid(cfg, ctx.horizon());
  const PpoParams& pp = cfg.ppo;
  Policy policy(pp.episode_length, grid);
  Rng rng(mix_seed(cfg.seed, 0x50504f));
  double baseline = 0.0;

  const double initial_entropy = policy.mean_entropy();
  const std::size_t rounds = std::min(cfg.episodes, cfg.budget);
  std::size_t updates = 0;
  for (std::size_t round = 0; round < rounds; ++round) {
    const std::size_t batch = ctx.remaining() / (rounds - round);
    if (batch == 0) continue;

    std::vector<Trajectory> trajectories(batch);
    std::vector<CorrectionPlan> plans;
    for (auto& tr : trajectories) {
      for (std::size_t s = 0; s < pp.episode_length; ++s) {
        const std::size_t a = policy.sample(s, rng);
        tr.choices.push_back({s, a, policy.prob(s, a)});
        if (!grid[a]) break;
        tr.plan.steps.push_back(*grid[a]);
      }
      plans.push_back(tr.plan);
    }
    const auto evals = ctx.evaluate(plans);
    double mean_reward = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
      trajectories[i].reward = ctx.reward(evals[i]);
      mean_reward += trajectories[i].reward;
    }
    mean_reward /= static_cast<double>(batch);
    double spread = 1.0;
    if (pp.normalize_advantages) {
      double var = 0.0;
      for (const auto& tr : trajectories) var += (tr.reward - baseline) * (tr.reward - baseline);
      spread = std::sqrt(var / static_cast<double>(batch)) + 1e-8;
    }

    // clipped-surrogate ascent against the learned scalar baseline
    Policy grad = policy;
    for (std::size_t epoch = 0; epoch < pp.update_epochs; ++epoch) {
      grad.zero();
      for (const auto& tr : trajectories) {
        const double adv = (tr.reward - baseline) / spread;
        for (const auto& ch : tr.choices) {
          const double ratio = policy.prob(ch.step, ch.action) / ch.old_prob;
          if ((adv >= 0.0 && ratio >= 1.0 + pp.clip) || (adv < 0.0 && ratio <= 1.0 - pp.clip)) continue;
          policy.accumulate(ch.step, ch.action, adv * ratio, grad);
        }
      }
      policy.add(grad, pp.learning_rate / static_cast<double>(batch));
    }
    baseline += pp.baseline_rate * (mean_reward - baseline);
    ++updates;
  }

  SearchTrace trace = ctx.finish();
  trace.diagnostics["grid_size"] = static_cast<double>(grid.size());
  trace.diagnostics["policy_updates"] = static_cast<double>(updates);
  trace.diagnostics["policy_entropy_initial"] = initial_entropy;
  trace.diagnostics["policy_entropy_final"] = policy.mean_entropy();
  return trace;
}

}  // namespace postcorr
