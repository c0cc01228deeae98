#include "feedback.hpp"

#include <algorithm>
#include <cctype>
#include <ctime>
#include <fstream>
#include <regex>

#include "httplib.h"

namespace postcorr {

std::string_view provenance_name(Provenance p) noexcept { return p == Provenance::Grammar ? "grammar" : "llm"; }

std::optional<Provenance> provenance_from_name(std::string_view name) noexcept {
  if (name == "grammar") return Provenance::Grammar;
  if (name == "llm") return Provenance::Llm;
  return std::nullopt;
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

const std::vector<std::string>& grammar_templates() {
  static const std::vector<std::string> templates = {
      "increase values above quantile 80 by 5%",
      "decrease values below quantile 20 by 1%",
      "increase the amplitude by 1% to 3%",
      "increase the minimum by 2%",
      "increase the trend by 1% to 2%",
      "increase the amplitude by 2% and shift by 3 steps",
      "shift by -2 steps",
  };
  return templates;
}

namespace {

std::string normalize(const std::string& text) {
  std::string out;
  bool space = false;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      space = !out.empty();
      continue;
    }
    if (space) out.push_back(' ');
    space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  while (!out.empty() && (out.back() == '.' || out.back() == '!')) out.pop_back();
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string fmt(const Interval& r) { return "[" + fmt(r.low) + ", " + fmt(r.high) + "]"; }

FeedbackDirective reject(FeedbackDirective d, std::string why) {
  d.parsed.clear();
  d.rejection = std::move(why);
  const std::string norm = normalize(d.raw_text);
  std::size_t best = SIZE_MAX;
  for (const auto& t : grammar_templates()) {
    const std::size_t dist = edit_distance(norm, t);
    if (dist < best) {
      best = dist;
      d.hint = t;
    }
  }
  return d;
}

// Intersects the requested range with the catalog; false when disjoint.
bool clamp_into(Interval& r, const ParamRange& cat, ActionKind kind, std::vector<std::string>& warnings) {
  if (r.high < cat.low || r.low > cat.high) return false;
  const Interval clamped{std::max(r.low, cat.low), std::min(r.high, cat.high)};
  if (!(clamped == r)) {
    warnings.push_back(std::string(kind_name(kind)) + "." + std::string(cat.name) + " range " + fmt(r) +
                       " clamped to catalog range " + fmt(clamped));
    r = clamped;
  }
  return true;
}

const std::string kNum = R"(([+-]?\d+(?:\.\d+)?))";

}  // namespace

FeedbackDirective parse_grammar(const std::string& text) {
  FeedbackDirective d;
  d.raw_text = text;
  d.provenance = Provenance::Grammar;
  std::string s = normalize(text);
  if (s.empty()) return reject(std::move(d), "empty feedback text");

  static const std::regex shift_re("(?:^|,? ?(?:and )?)shift (?:it |the forecast )?by " + kNum + " steps?$");
  static const std::regex main_re("^(increase|decrease) (?:the )?(.+?) by " + kNum + " ?%(?: to " + kNum + " ?%)?$");
  static const std::regex quant_re("^values (above|below) (?:the )?quantile " + kNum + "$");
  static const std::regex pct_re(R"(^values (above|below) the (\d+(?:\.\d+)?)(?:st|nd|rd|th)? (?:quantile|percentile)$)");

  std::optional<double> shift;
  std::smatch m;
  if (std::regex_search(s, m, shift_re)) {
    shift = std::stod(m[1].str());
    s.erase(static_cast<std::size_t>(m.position(0)));
    while (!s.empty() && (s.back() == ' ' || s.back() == ',')) s.pop_back();
  }

  if (!s.empty()) {
    if (!std::regex_match(s, m, main_re)) return reject(std::move(d), "text does not match any phrasebook template");
    const bool decrease = m[1].str() == "decrease";
    const std::string target = m[2].str();
    double x = std::stod(m[3].str());
    double y = m[4].matched ? std::stod(m[4].str()) : x;
    if (decrease) {
      x = -x;
      y = -y;
    }
    Interval f{std::min(x, y), std::max(x, y)};

    ParsedAction act;
    std::smatch tm;
    std::optional<double> q;
    if (std::regex_match(target, tm, quant_re) || std::regex_match(target, tm, pct_re)) {
      act.kind = tm[1].str() == "above" ? ActionKind::PiecewiseScaleHigh : ActionKind::PiecewiseScaleLow;
      q = std::stod(tm[2].str());
    } else if (target == "amplitude") {
      act.kind = ActionKind::ScaleAmplitude;
    } else if (target == "minimum" || target == "minimum values" || target == "minima") {
      act.kind = ActionKind::IncreaseMinimumFactor;
    } else if (target == "trend" || target == "slope") {
      act.kind = ActionKind::LinearTrendSlope;
    } else {
      return reject(std::move(d), "unknown target '" + target + "'");
    }
    const auto catalog = param_ranges(act.kind);
    act.ranges.resize(catalog.size());
    if (q) {
      if (!(*q > 0.0 && *q < 100.0)) return reject(std::move(d), "quantile " + fmt(*q) + " is outside (0, 100)");
      if (!catalog[0].interval().contains(*q)) {
        return reject(std::move(d), "quantile " + fmt(*q) + " is outside the " + fmt(catalog[0].interval()) + " range of " +
                                        std::string(kind_name(act.kind)));
      }
      act.ranges[0] = Interval{*q, *q};
    }
    const std::size_t fi = catalog.size() - 1;
    if (!clamp_into(f, catalog[fi], act.kind, d.warnings)) {
      return reject(std::move(d), std::string(kind_name(act.kind)) + "." + std::string(catalog[fi].name) + " range " + fmt(f) +
                                      " lies outside the catalog range " + fmt(catalog[fi].interval()));
    }
    act.ranges[fi] = f;
    d.parsed.push_back(std::move(act));
  }

  if (shift) {
    if (*shift != std::round(*shift)) return reject(std::move(d), "shift must be a whole number of steps");
    const ParamRange& cat = param_ranges(ActionKind::ShiftSeries)[0];
    Interval r{*shift, *shift};
    if (!clamp_into(r, cat, ActionKind::ShiftSeries, d.warnings)) {
      return reject(std::move(d), "shift " + fmt(*shift) + " lies outside the catalog range " + fmt(cat.interval()));
    }
    d.parsed.push_back(ParsedAction{ActionKind::ShiftSeries, {r}});
  }
  return d;
}

const std::string& llm_system_prompt() {
  static const std::string prompt = [] {
    std::string p =
        "You translate feedback about a time-series forecast into forecast corrections. "
        "Reply with JSON only, no prose and no code: either one object or an array of objects of the form "
        "{\"kind\": KIND, \"params\": {NAME_low: number, NAME_high: number}}. "
        "A fixed value may be given as {NAME: number}. Allowed kinds and parameter ranges:";
    for (ActionKind k : kAllKinds) {
      p += "\n- " + std::string(kind_name(k));
      for (const auto& r : param_ranges(k)) p += " " + std::string(r.name) + " in " + fmt(r.interval());
    }
    return p;
  }();
  return prompt;
}

std::string llm_request_body(const LlmConfig& cfg, const std::string& text) {
  Json body{{"model", cfg.model},
            {"temperature", 0},
            {"messages",
             Json::array({Json{{"role", "system"}, {"content", llm_system_prompt()}},
                          Json{{"role", "user"}, {"content", text}}})}};
  return body.dump();
}

std::string llm_message_content(const std::string& response_body) {
  const auto j = Json::parse(response_body, nullptr, false);
  if (j.is_object() && j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
    const auto& c = j["choices"][0];
    if (c.contains("message") && c["message"].contains("content") && c["message"]["content"].is_string()) {
      return c["message"]["content"].get<std::string>();
    }
  }
  return response_body;
}

LlmParse parse_llm_reply(const std::string& content) {
  std::string body = content;
  if (auto open = body.find("```"); open != std::string::npos) {
    const auto start = body.find('\n', open);
    const auto close = body.rfind("```");
    if (start != std::string::npos && close > start) body = body.substr(start + 1, close - start - 1);
  }
  const auto j = Json::parse(body, nullptr, false);
  if (j.is_discarded()) return {{}, "reply is not JSON"};
  const Json items = j.is_array() ? j : Json::array({j});
  if (items.empty()) return {{}, "reply contains no actions"};

  LlmParse out;
  for (const auto& item : items) {
    if (!item.is_object() || !item.contains("kind") || !item["kind"].is_string()) return {{}, "each action needs a string kind"};
    const auto kind = kind_from_name(item["kind"].get<std::string>());
    if (!kind) return {{}, "unknown kind " + item["kind"].dump()};
    const auto catalog = param_ranges(*kind);
    ParsedAction act{*kind, std::vector<std::optional<Interval>>(catalog.size())};
    const Json params = item.value("params", Json::object());
    if (!params.is_object()) return {{}, "params must be an object"};
    for (const auto& [key, value] : params.items()) {
      std::string name = key;
      int side = 0;  // -1 low, 1 high, 0 both
      if (name.size() > 4 && name.ends_with("_low")) {
        side = -1;
        name.resize(name.size() - 4);
      } else if (name.size() > 5 && name.ends_with("_high")) {
        side = 1;
        name.resize(name.size() - 5);
      }
      const auto idx = param_index(*kind, name);
      if (!idx) return {{}, "unknown parameter '" + key + "' for " + std::string(kind_name(*kind))};
      std::vector<double> vals;
      if (value.is_number()) {
        vals = {value.get<double>()};
      } else if (value.is_array() && value.size() == 2 && value[0].is_number() && value[1].is_number() && side == 0) {
        vals = {value[0].get<double>(), value[1].get<double>()};
      } else {
        return {{}, "parameter '" + key + "' must be a number"};
      }
      const ParamRange& cat = catalog[*idx];
      for (double v : vals) {
        if (!cat.interval().contains(v)) {
          return {{}, key + "=" + fmt(v) + " exceeds catalog range " + fmt(cat.interval()) + " of " + std::string(kind_name(*kind))};
        }
        if (cat.integer_valued && v != std::round(v)) return {{}, key + " must be an integer"};
      }
      auto& slot = act.ranges[*idx];
      if (!slot) slot = Interval{cat.low, cat.high};
      if (side <= 0) slot->low = vals.front();
      if (side >= 0) slot->high = vals.back();
    }
    for (std::size_t i = 0; i < act.ranges.size(); ++i) {
      if (act.ranges[i] && act.ranges[i]->low > act.ranges[i]->high) {
        return {{}, std::string(catalog[i].name) + " low exceeds high"};
      }
    }
    if (std::any_of(out.actions.begin(), out.actions.end(), [&](const ParsedAction& a) { return a.kind == act.kind; })) {
      return {{}, "kind " + std::string(kind_name(act.kind)) + " appears twice"};
    }
    out.actions.push_back(std::move(act));
  }
  return out;
}

LlmTransport http_transport() {
  return [](const LlmConfig& cfg, const std::string& request_body) -> std::string {
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(cfg.endpoint, m, url_re)) fail(ErrorCode::Configuration, "malformed LLM endpoint '" + cfg.endpoint + "'");
    if (cfg.endpoint.starts_with("https")) fail(ErrorCode::Transport, "https endpoints need a TLS-enabled build");
    httplib::Client client(m[1].str());
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!cfg.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg.api_key);
    const std::string path = m[2].matched ? m[2].str() : "/";
    auto res = client.Post(path, headers, request_body, "application/json");
    if (!res) fail(ErrorCode::Transport, "LLM request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) fail(ErrorCode::Transport, "LLM endpoint returned HTTP " + std::to_string(res->status));
    return res->body;
  };
}

FeedbackDirective parse_llm(const std::string& text, const LlmConfig& cfg, const LlmTransport& transport) {
  if (cfg.endpoint.empty()) fail(ErrorCode::Configuration, "LLM endpoint is not configured");
  FeedbackDirective d;
  d.raw_text = text;
  d.provenance = Provenance::Llm;
  if (normalize(text).empty()) {
    d.rejection = "empty feedback text";
    return d;
  }
  const std::string request = llm_request_body(cfg, text);
  std::string error;
  for (std::size_t attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    d.raw_response = llm_message_content(transport(cfg, request));
    LlmParse parsed = parse_llm_reply(d.raw_response);
    if (parsed.error.empty()) {
      d.parsed = std::move(parsed.actions);
      return d;
    }
    error = parsed.error;
  }
  d.rejection = "invalid LLM reply after " + std::to_string(cfg.max_retries + 1) + " attempts: " + error;
  return d;
}

void validate_directive(const FeedbackDirective& d) {
  if (d.parsed.empty()) {
    if (d.rejection.empty()) fail(ErrorCode::Validation, "directive has no actions");
    return;
  }
  std::vector<ActionKind> seen;
  for (const auto& act : d.parsed) {
    const auto name = std::string(kind_name(act.kind));
    if (std::find(seen.begin(), seen.end(), act.kind) != seen.end()) fail(ErrorCode::Validation, name + " appears twice");
    seen.push_back(act.kind);
    const auto catalog = param_ranges(act.kind);
    if (act.ranges.size() != catalog.size()) fail(ErrorCode::Validation, name + ": expected " + std::to_string(catalog.size()) + " ranges");
    for (std::size_t i = 0; i < catalog.size(); ++i) {
      const auto& r = act.ranges[i];
      if (!r) continue;
      if (!(r->low <= r->high) || r->low < catalog[i].low || r->high > catalog[i].high) {
        fail(ErrorCode::Validation, name + "." + std::string(catalog[i].name) + " range " + fmt(*r) + " is not inside the catalog range " +
                                        fmt(catalog[i].interval()));
      }
    }
  }
}

OptimizerConfig inject(const FeedbackDirective& directive, const OptimizerConfig& cfg) {
  if (directive.parsed.empty()) return cfg;
  validate_directive(directive);
  OptimizerConfig out = cfg;
  out.action_space.clear();
  out.overrides.clear();
  for (ActionKind k : kAllKinds) {
    for (const auto& act : directive.parsed) {
      if (act.kind != k) continue;
      out.action_space.push_back(k);
      if (std::any_of(act.ranges.begin(), act.ranges.end(), [](const auto& r) { return r.has_value(); })) {
        out.overrides[k] = act.ranges;
      }
    }
  }
  // seeded genomes outside the new space would be rejected by the GA
  out.ga.seed_genomes.clear();
  return out;
}

Json to_json(const FeedbackDirective& d) {
  Json parsed = Json::array();
  for (const auto& act : d.parsed) {
    Json ranges = Json::object();
    const auto catalog = param_ranges(act.kind);
    for (std::size_t i = 0; i < act.ranges.size() && i < catalog.size(); ++i) {
      if (act.ranges[i]) ranges[std::string(catalog[i].name)] = Json::array({act.ranges[i]->low, act.ranges[i]->high});
    }
    parsed.push_back(Json{{"kind", std::string(kind_name(act.kind))}, {"ranges", ranges}});
  }
  Json j{{"raw_text", d.raw_text},
         {"provenance", std::string(provenance_name(d.provenance))},
         {"accepted", d.accepted()},
         {"parsed", parsed},
         {"warnings", d.warnings}};
  if (!d.rejection.empty()) j["rejection"] = d.rejection;
  if (!d.hint.empty()) j["hint"] = d.hint;
  if (!d.raw_response.empty()) j["raw_response"] = d.raw_response;
  return j;
}

FeedbackDirective directive_from_json(const Json& j) {
  FeedbackDirective d;
  d.raw_text = j.value("raw_text", "");
  const auto prov = provenance_from_name(j.value("provenance", "grammar"));
  if (!prov) fail(ErrorCode::Validation, "provenance: must be grammar or llm");
  d.provenance = *prov;
  for (const auto& p : j.value("parsed", Json::array())) {
    const auto kind = kind_from_name(p.value("kind", ""));
    if (!kind) fail(ErrorCode::Validation, "parsed.kind: unknown kind " + p.value("kind", std::string()));
    ParsedAction act{*kind, std::vector<std::optional<Interval>>(param_arity(*kind))};
    const Json ranges = p.value("ranges", Json::object());
    for (const auto& [name, r] : ranges.items()) {
      const auto idx = param_index(*kind, name);
      if (!idx || !r.is_array() || r.size() != 2) fail(ErrorCode::Validation, "parsed.ranges." + name + ": malformed");
      act.ranges[*idx] = Interval{r[0].get<double>(), r[1].get<double>()};
    }
    d.parsed.push_back(std::move(act));
  }
  d.warnings = j.value("warnings", std::vector<std::string>{});
  d.rejection = j.value("rejection", "");
  d.hint = j.value("hint", "");
  d.raw_response = j.value("raw_response", "");
  validate_directive(d);
  return d;
}

void append_audit(const std::filesystem::path& path, const FeedbackDirective& directive) {
  char stamp[32];
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
  Json record = to_json(directive);
  record["timestamp"] = stamp;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) fail(ErrorCode::Internal, "cannot open audit log " + path.string());
  out << record.dump() << '\n';
}

}  // namespace postcorr
