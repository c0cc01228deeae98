#include "serialize.hpp"

namespace postcorr {
namespace {

[[noreturn]] void invalid(const std::string& field, const std::string& why) {
  fail(ErrorCode::Validation, field + ": " + why);
}

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> optional_from(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

template <class T>
T get_field(const Json& j, const char* key, const std::string& path) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    invalid(path + key, "missing or wrong type");
  }
}

}  // namespace

Json to_json(const ActionInstance& action) {
  Json params = Json::object();
  const auto ranges = param_ranges(action.kind);
  for (std::size_t i = 0; i < action.params.size() && i < ranges.size(); ++i) {
    params[std::string(ranges[i].name)] = action.params[i];
  }
  return Json{{"kind", std::string(kind_name(action.kind))}, {"params", params}};
}

ActionInstance action_from_json(const Json& j) {
  if (!j.is_object()) invalid("action", "must be an object");
  const auto name = get_field<std::string>(j, "kind", "action.");
  const auto kind = kind_from_name(name);
  if (!kind) invalid("action.kind", "unknown kind '" + name + "'");
  ActionInstance a{*kind, {}};
  const auto ranges = param_ranges(*kind);
  const Json params = j.value("params", Json::object());
  if (!params.is_object()) invalid("action.params", "must be an object");
  for (const auto& [key, _] : params.items()) {
    if (!param_index(*kind, key)) invalid("action.params." + key, "not a parameter of " + name);
  }
  for (const auto& r : ranges) {
    const std::string key(r.name);
    if (!params.contains(key) || !params.at(key).is_number()) invalid("action.params." + key, "missing number");
    a.params.push_back(params.at(key).get<double>());
  }
  return a;
}

Json to_json(const CorrectionPlan& plan) {
  Json steps = Json::array();
  for (const auto& s : plan.steps) steps.push_back(to_json(s));
  Json j{{"steps", steps}};
  if (plan.affine) {
    const auto& t = *plan.affine;
    Json aff;
    if (t.scope == AffineScope::Global && t.a.size() == 1) {
      aff["a"] = t.a[0];
      aff["b"] = t.b[0];
    } else {
      aff["a"] = t.a;
      aff["b"] = t.b;
    }
    aff["scope"] = std::string(scope_name(t.scope));
    j["affine"] = aff;
  }
  j["seed"] = plan.seed;
  return j;
}

CorrectionPlan plan_from_json(const Json& j) {
  if (!j.is_object()) invalid("plan", "must be an object");
  CorrectionPlan plan;
  if (j.contains("steps")) {
    if (!j.at("steps").is_array()) invalid("plan.steps", "must be an array");
    for (const auto& s : j.at("steps")) plan.steps.push_back(action_from_json(s));
  }
  if (j.contains("affine") && !j.at("affine").is_null()) {
    const Json& aff = j.at("affine");
    AffineTail t;
    const auto scope = scope_from_name(aff.value("scope", "global"));
    if (!scope) invalid("plan.affine.scope", "must be global, per_channel or per_horizon");
    t.scope = *scope;
    auto read = [&](const char* key, std::vector<double>& out) {
      if (!aff.contains(key)) invalid(std::string("plan.affine.") + key, "missing");
      const Json& v = aff.at(key);
      if (v.is_number()) {
        out = {v.get<double>()};
      } else if (v.is_array()) {
        out = v.get<std::vector<double>>();
      } else {
        invalid(std::string("plan.affine.") + key, "must be a number or array");
      }
    };
    read("a", t.a);
    read("b", t.b);
    if (t.a.size() != t.b.size() || t.a.empty()) invalid("plan.affine", "a and b must have the same non-zero length");
    plan.affine = std::move(t);
  }
  plan.seed = j.value("seed", std::uint64_t{0});
  return plan;
}

Json to_json(const EvalReport& r) {
  Json rows = Json::array();
  for (const auto& c : r.per_channel) {
    rows.push_back(Json{{"channel", c.channel},
                        {"mse_before", c.mse_before},
                        {"mse_after", c.mse_after},
                        {"improvement", optional_number(c.improvement)}});
  }
  Json j{{"mse_before", r.mse_before},
         {"mse_after", r.mse_after},
         {"improvement", optional_number(r.improvement)},
         {"rmse_before", rmse(r.mse_before)},
         {"rmse_after", rmse(r.mse_after)},
         {"per_channel", rows}};
  j["train_consistent"] = r.train_consistent ? Json(*r.train_consistent) : Json(nullptr);
  return j;
}

EvalReport report_from_json(const Json& j) {
  EvalReport r;
  r.mse_before = get_field<double>(j, "mse_before", "report.");
  r.mse_after = get_field<double>(j, "mse_after", "report.");
  r.improvement = optional_from(j, "improvement");
  if (j.contains("per_channel")) {
    for (const auto& row : j.at("per_channel")) {
      ChannelReport c;
      c.channel = get_field<std::size_t>(row, "channel", "report.per_channel.");
      c.mse_before = get_field<double>(row, "mse_before", "report.per_channel.");
      c.mse_after = get_field<double>(row, "mse_after", "report.per_channel.");
      c.improvement = optional_from(row, "improvement");
      r.per_channel.push_back(c);
    }
  }
  if (j.contains("train_consistent") && !j.at("train_consistent").is_null()) {
    r.train_consistent = j.at("train_consistent").get<bool>();
  }
  return r;
}

Json to_json(const OptimizerConfig& cfg) {
  Json kinds = Json::array();
  for (auto k : cfg.action_space) kinds.push_back(std::string(kind_name(k)));
  Json overrides = Json::object();
  for (const auto& [kind, slots] : cfg.overrides) {
    Json o = Json::object();
    const auto ranges = param_ranges(kind);
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (slots[i]) o[std::string(ranges[i].name)] = Json::array({slots[i]->low, slots[i]->high});
    }
    overrides[std::string(kind_name(kind))] = o;
  }
  Json seeds = Json::array();
  for (const auto& g : cfg.ga.seed_genomes) seeds.push_back(to_json(g));
  return Json{{"strategy", std::string(strategy_name(cfg.strategy))},
              {"budget", cfg.budget},
              {"episodes", cfg.episodes},
              {"seed", cfg.seed},
              {"jobs", cfg.jobs},
              {"guard_tolerance", cfg.guard_tolerance},
              {"max_steps", cfg.max_steps},
              {"affine_tail", cfg.affine_tail},
              {"affine_scope", std::string(scope_name(cfg.affine_scope))},
              {"action_space", kinds},
              {"overrides", overrides},
              {"bandit", {{"exploration", cfg.bandit.exploration}}},
              {"ppo",
               {{"episode_length", cfg.ppo.episode_length},
                {"continuous_bins", cfg.ppo.continuous_bins},
                {"quantile_bins", cfg.ppo.quantile_bins},
                {"learning_rate", cfg.ppo.learning_rate},
                {"clip", cfg.ppo.clip},
                {"update_epochs", cfg.ppo.update_epochs},
                {"baseline_rate", cfg.ppo.baseline_rate}}},
              {"ga",
               {{"population", cfg.ga.population},
                {"tournament", cfg.ga.tournament},
                {"mutation_rate", cfg.ga.mutation_rate},
                {"mutation_scale", cfg.ga.mutation_scale},
                {"elitism", cfg.ga.elitism},
                {"seed_genomes", seeds}}}};
}

namespace {

template <class T>
void read_opt(const Json& j, const char* key, T& out, const std::string& path) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!j.at(key).is_boolean()) invalid(path + key, "must be a boolean");
      out = j.at(key).get<bool>();
    } else if constexpr (std::is_unsigned_v<T>) {
      const Json& v = j.at(key);
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
        invalid(path + key, "must be a non-negative integer");
      }
      out = static_cast<T>(v.get<unsigned long long>());
    } else {
      out = j.at(key).get<T>();
    }
  } catch (const nlohmann::json::exception&) {
    invalid(path + key, "wrong type");
  }
}

}  // namespace

OptimizerConfig config_from_json(const Json& j) {
  if (!j.is_object()) invalid("config", "must be an object");
  OptimizerConfig cfg;
  if (j.contains("strategy")) {
    const auto name = get_field<std::string>(j, "strategy", "");
    const auto s = strategy_from_name(name);
    if (!s) invalid("strategy", "unknown strategy '" + name + "'");
    cfg.strategy = *s;
  }
  read_opt(j, "budget", cfg.budget, "");
  read_opt(j, "episodes", cfg.episodes, "");
  read_opt(j, "seed", cfg.seed, "");
  read_opt(j, "jobs", cfg.jobs, "");
  read_opt(j, "guard_tolerance", cfg.guard_tolerance, "");
  read_opt(j, "max_steps", cfg.max_steps, "");
  read_opt(j, "affine_tail", cfg.affine_tail, "");
  if (j.contains("affine_scope")) {
    const auto s = scope_from_name(get_field<std::string>(j, "affine_scope", ""));
    if (!s) invalid("affine_scope", "must be global, per_channel or per_horizon");
    cfg.affine_scope = *s;
  }
  if (j.contains("action_space")) {
    cfg.action_space.clear();
    for (const auto& k : j.at("action_space")) {
      const auto kind = k.is_string() ? kind_from_name(k.get<std::string>()) : std::nullopt;
      if (!kind) invalid("action_space", "unknown kind " + k.dump());
      cfg.action_space.push_back(*kind);
    }
  }
  if (j.contains("overrides")) {
    for (const auto& [name, o] : j.at("overrides").items()) {
      const auto kind = kind_from_name(name);
      if (!kind) invalid("overrides", "unknown kind '" + name + "'");
      auto& slots = cfg.overrides[*kind];
      slots.resize(param_arity(*kind));
      for (const auto& [pname, range] : o.items()) {
        const auto idx = param_index(*kind, pname);
        if (!idx) invalid("overrides." + name, "unknown parameter '" + pname + "'");
        if (!range.is_array() || range.size() != 2) invalid("overrides." + name + "." + pname, "must be [low, high]");
        slots[*idx] = Interval{range[0].get<double>(), range[1].get<double>()};
      }
    }
  }
  if (j.contains("bandit")) read_opt(j.at("bandit"), "exploration", cfg.bandit.exploration, "bandit.");
  if (j.contains("ppo")) {
    const Json& p = j.at("ppo");
    read_opt(p, "episode_length", cfg.ppo.episode_length, "ppo.");
    read_opt(p, "continuous_bins", cfg.ppo.continuous_bins, "ppo.");
    read_opt(p, "quantile_bins", cfg.ppo.quantile_bins, "ppo.");
    read_opt(p, "learning_rate", cfg.ppo.learning_rate, "ppo.");
    read_opt(p, "clip", cfg.ppo.clip, "ppo.");
    read_opt(p, "update_epochs", cfg.ppo.update_epochs, "ppo.");
    read_opt(p, "baseline_rate", cfg.ppo.baseline_rate, "ppo.");
  }
  if (j.contains("ga")) {
    const Json& g = j.at("ga");
    read_opt(g, "population", cfg.ga.population, "ga.");
    read_opt(g, "tournament", cfg.ga.tournament, "ga.");
    read_opt(g, "mutation_rate", cfg.ga.mutation_rate, "ga.");
    read_opt(g, "mutation_scale", cfg.ga.mutation_scale, "ga.");
    read_opt(g, "elitism", cfg.ga.elitism, "ga.");
    if (g.contains("seed_genomes")) {
      for (const auto& s : g.at("seed_genomes")) cfg.ga.seed_genomes.push_back(plan_from_json(s));
    }
  }
  validate_config(cfg);
  return cfg;
}

Json to_json(const EpisodeRecord& r) {
  return Json{{"episode", r.episode},   {"round", r.round},           {"plan", to_json(r.plan)},
              {"val_mse", r.val_mse},   {"train_mse", r.train_mse},   {"consistent", r.consistent},
              {"accepted", r.accepted}, {"action", describe(r.plan)}};
}

EpisodeRecord episode_from_json(const Json& j) {
  EpisodeRecord r;
  r.episode = get_field<std::size_t>(j, "episode", "episode.");
  r.round = j.value("round", std::size_t{1});
  r.plan = plan_from_json(j.at("plan"));
  r.val_mse = get_field<double>(j, "val_mse", "episode.");
  r.train_mse = j.value("train_mse", 0.0);
  r.consistent = j.value("consistent", true);
  r.accepted = get_field<bool>(j, "accepted", "episode.");
  return r;
}

Json trace_summary(const SearchTrace& t) {
  Json diag = Json::object();
  for (const auto& [k, v] : t.diagnostics) diag[k] = v;
  Json j{{"strategy", t.strategy},
         {"best_plan", to_json(t.best_plan)},
         {"best_description", describe(t.best_plan)},
         {"best_val_mse", t.best_val_mse},
         {"baseline_val_mse", t.baseline_val_mse},
         {"baseline_train_mse", t.baseline_train_mse},
         {"val_improvement", optional_number(t.best_improvement())},
         {"evaluations", t.evaluations},
         {"final_arm", t.final_arm ? Json(std::string(kind_name(*t.final_arm))) : Json(nullptr)},
         {"diagnostics", diag},
         {"warnings", t.warnings}};
  return j;
}

std::string trace_jsonl(const SearchTrace& trace, const EvalReport* test_report) {
  std::string out;
  for (const auto& e : trace.episodes) out += to_json(e).dump() + "\n";
  Json terminal = trace_summary(trace);
  if (test_report) terminal["report"] = to_json(*test_report);
  out += terminal.dump() + "\n";
  return out;
}

}  // namespace postcorr
