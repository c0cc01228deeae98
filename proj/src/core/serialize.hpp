#pragma once

#include <string>

#include "json.hpp"
#include "optimizer.hpp"

namespace postcorr {

using Json = nlohmann::ordered_json;

// {"kind": "ScaleAmplitude", "params": {"f": 10}}
Json to_json(const ActionInstance& action);
ActionInstance action_from_json(const Json& j);

// {"steps": [...], "affine": {"a", "b", "scope"}, "seed": n}; a/b are numbers
// for the global scope and per-group arrays otherwise.
Json to_json(const CorrectionPlan& plan);
CorrectionPlan plan_from_json(const Json& j);

Json to_json(const EvalReport& report);
EvalReport report_from_json(const Json& j);

Json to_json(const OptimizerConfig& cfg);
// Missing fields keep their defaults. Throws Validation naming the field.
OptimizerConfig config_from_json(const Json& j);

Json to_json(const EpisodeRecord& record);
EpisodeRecord episode_from_json(const Json& j);

// JSON Lines: one record per episode, then a terminal record carrying the
// best plan (and the test report when given).
std::string trace_jsonl(const SearchTrace& trace, const EvalReport* test_report = nullptr);

Json trace_summary(const SearchTrace& trace);

}  // namespace postcorr
