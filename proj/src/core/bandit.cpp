#include <algorithm>
#include <cmath>
#include <map>

#include "optimizer.hpp"
#include "search_context.hpp"

namespace postcorr {

SuccessiveHalvingUcb::SuccessiveHalvingUcb(std::size_t arms, std::size_t budget, double exploration)
    : budget_(budget), exploration_(exploration), stats_(arms) {
  if (arms == 0) fail(ErrorCode::Validation, "successive halving needs at least one arm");
  if (budget < arms) fail(ErrorCode::Validation, "budget must allow one pull per arm");
}

void SuccessiveHalvingUcb::record(std::size_t arm, double reward) {
  auto& s = stats_[arm];
  ++s.pulls;
  s.reward_sum += reward;
  s.best_reward = std::max(s.best_reward, reward);
  ++total_pulls_;
}

std::size_t SuccessiveHalvingUcb::select(const std::vector<std::size_t>& alive) const {
  const double log_n = std::log(static_cast<double>(std::max<std::size_t>(total_pulls_, 1)));
  std::size_t best = alive.front();
  double best_score = -INFINITY;
  for (std::size_t arm : alive) {
    const auto& s = stats_[arm];
    if (s.pulls == 0) return arm;
    const double score = s.mean() + exploration_ * std::sqrt(log_n / static_cast<double>(s.pulls));
    if (score > best_score) {
      best_score = score;
      best = arm;
    }
  }
  return best;
}

std::size_t SuccessiveHalvingUcb::run(const std::function<double(std::size_t)>& pull) {
  const std::size_t arms = stats_.size();
  std::vector<std::size_t> alive(arms);
  for (std::size_t i = 0; i < arms; ++i) {
    alive[i] = i;
    record(i, pull(i));
  }
  std::size_t remaining = budget_ - arms;
  const auto rungs = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(arms))));
  for (std::size_t r = 0; r < rungs; ++r) {
    const std::size_t rung_pulls = remaining / (rungs - r);
    for (std::size_t i = 0; i < rung_pulls; ++i) {
      const std::size_t arm = select(alive);
      record(arm, pull(arm));
    }
    remaining -= rung_pulls;
    std::stable_sort(alive.begin(), alive.end(), [this](std::size_t a, std::size_t b) {
      const auto& sa = stats_[a];
      const auto& sb = stats_[b];
      if (sa.best_reward != sb.best_reward) return sa.best_reward > sb.best_reward;
      if (sa.mean() != sb.mean()) return sa.mean() > sb.mean();
      return a < b;
    });
    alive.resize((alive.size() + 1) / 2);
    rungs_.push_back(alive);
  }
  for (; remaining > 0; --remaining) record(alive.front(), pull(alive.front()));
  return alive.front();
}

namespace {
constexpr double kGolden = 0.6180339887498949;
}

GoldenSection::GoldenSection(double low, double high)
    : lo_(low), hi_(high), c_(high - kGolden * (high - low)), d_(low + kGolden * (high - low)) {}

double GoldenSection::next() const noexcept { return fc_ ? d_ : c_; }

void GoldenSection::report(double value) {
  if (!fc_) {
    fc_ = value;
  } else {
    fd_ = value;
  }
  if (!(fc_ && fd_)) return;
  if (*fc_ >= *fd_) {
    hi_ = d_;
    d_ = c_;
    fd_ = fc_;
    c_ = hi_ - kGolden * (hi_ - lo_);
    fc_.reset();
  } else {
    lo_ = c_;
    c_ = d_;
    fc_ = fd_;
    d_ = lo_ + kGolden * (hi_ - lo_);
    fd_.reset();
  }
}

namespace {

// Coordinate-wise golden-section refinement of one arm's parameters, one
// evaluation per pull.
class ArmSearch {
 public:
  ArmSearch(ActionKind kind, const OptimizerConfig& cfg, std::size_t horizon) : kind_(kind) {
    const auto catalog = param_ranges(kind);
    for (std::size_t i = 0; i < catalog.size(); ++i) {
      ranges_.push_back(sampling_range(kind, i, horizon, &cfg.overrides));
      integer_.push_back(catalog[i].integer_valued);
      double mid = 0.5 * (ranges_[i].low + ranges_[i].high);
      current_.push_back(integer_[i] ? std::round(mid) : mid);
    }
    best_params_ = current_;
    if (!ranges_.empty()) restart(ranges_[0]);
  }

  ActionInstance next_instance() const {
    ActionInstance inst{kind_, current_};
    if (search_) {
      double x = search_->next();
      if (integer_[coord_]) x = std::round(x);
      inst.params[coord_] = std::clamp(x, ranges_[coord_].low, ranges_[coord_].high);
    }
    return inst;
  }

  void report(const ActionInstance& inst, double reward) {
    if (reward > best_reward_) {
      best_reward_ = reward;
      best_params_ = inst.params;
    }
    if (!search_) return;
    search_->report(reward);
    const Interval& r = ranges_[coord_];
    const double tol = integer_[coord_] ? 1.0 : 1e-3 * (r.high - r.low);
    if (search_->width() >= tol) return;
    // coordinate converged: hold it at the best value and move on
    current_ = best_params_;
    coord_ = (coord_ + 1) % ranges_.size();
    if (coord_ == 0) first_pass_ = false;
    const Interval& next = ranges_[coord_];
    if (first_pass_) {
      restart(next);
    } else {
      const double half = (next.high - next.low) / 8.0;
      restart({std::max(next.low, best_params_[coord_] - half), std::min(next.high, best_params_[coord_] + half)});
    }
  }

 private:
  void restart(const Interval& r) { search_.emplace(r.low, r.high); }

  ActionKind kind_;
  std::vector<Interval> ranges_;
  std::vector<bool> integer_;
  std::vector<double> current_;
  std::vector<double> best_params_;
  double best_reward_ = -INFINITY;
  std::size_t coord_ = 0;
  bool first_pass_ = true;
  std::optional<GoldenSection> search_;
};

}  // namespace

SearchTrace optimize_sh_hpo(const Objective& obj, const OptimizerConfig& cfg) {
  validate_config(cfg);
  detail::SearchContext ctx(obj, cfg, std::string(strategy_name(Strategy::ShHpo)));
  const auto& kinds = cfg.action_space;
  std::vector<ArmSearch> arms;
  for (ActionKind k : kinds) arms.emplace_back(k, cfg, ctx.horizon());
  std::map<std::pair<std::size_t, std::vector<double>>, double> seen;

  SuccessiveHalvingUcb bandit(kinds.size(), cfg.budget, cfg.bandit.exploration);
  const std::size_t survivor = bandit.run([&](std::size_t arm) {
    const ActionInstance inst = arms[arm].next_instance();
    const auto key = std::make_pair(arm, inst.params);
    double reward;
    if (auto it = seen.find(key); it != seen.end()) {
      reward = it->second;
    } else {
      CorrectionPlan plan;
      plan.steps.push_back(inst);
      reward = ctx.reward(ctx.evaluate(plan));
      seen.emplace(key, reward);
    }
    arms[arm].report(inst, reward);
    return reward;
  });

  SearchTrace trace = ctx.finish();
  trace.final_arm = kinds[survivor];
  trace.diagnostics["pulls"] = static_cast<double>(bandit.total_pulls());
  return trace;
}

}  // namespace postcorr
