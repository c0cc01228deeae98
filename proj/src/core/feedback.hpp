#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "optimizer.hpp"
#include "serialize.hpp"

namespace postcorr {

enum class Provenance { Grammar, Llm };

std::string_view provenance_name(Provenance p) noexcept;
std::optional<Provenance> provenance_from_name(std::string_view name) noexcept;

// One kind plus a sub-range per parameter (nullopt = catalog range).
struct ParsedAction {
  ActionKind kind = ActionKind::ScaleAmplitude;
  std::vector<std::optional<Interval>> ranges;

  friend bool operator==(const ParsedAction&, const ParsedAction&) = default;
};

struct FeedbackDirective {
  std::string raw_text;
  std::vector<ParsedAction> parsed;  // non-empty iff accepted
  Provenance provenance = Provenance::Grammar;
  std::vector<std::string> warnings;
  std::string rejection;     // reason when not accepted
  std::string hint;          // nearest phrasebook template on rejection
  std::string raw_response;  // LLM output kept for audit

  bool accepted() const noexcept { return !parsed.empty(); }
};

// The controlled phrasebook, one example per template.
const std::vector<std::string>& grammar_templates();

// Deterministic, case-insensitive. Percent values are action parameters
// ("by 5%" means f = 5); "decrease" negates them. Ranges partly outside the
// catalog are clamped with a warning; ranges entirely outside are rejected.
FeedbackDirective parse_grammar(const std::string& text);

struct LlmConfig {
  std::string endpoint;  // empty disables the LLM path
  std::string model = "qwen2-72b-32k";
  std::chrono::milliseconds timeout{30000};
  std::size_t max_retries = 2;
  std::string api_key;
};

// Sends the request body, returns the response body. Throws Transport.
using LlmTransport = std::function<std::string(const LlmConfig&, const std::string& request_body)>;

LlmTransport http_transport();

const std::string& llm_system_prompt();
std::string llm_request_body(const LlmConfig& cfg, const std::string& text);

// Pulls the model text out of a chat-completions response; any other body
// is taken verbatim.
std::string llm_message_content(const std::string& response_body);

// Schema check of one model reply; out-of-catalog values are rejected, never
// clamped. Returns the parsed actions or a reason.
struct LlmParse {
  std::vector<ParsedAction> actions;
  std::string error;
};
LlmParse parse_llm_reply(const std::string& content);

// Throws Configuration when no endpoint is set and Transport on network
// failure (never a partial directive). Invalid replies are retried up to
// cfg.max_retries times, then rejected with the last raw reply attached.
FeedbackDirective parse_llm(const std::string& text, const LlmConfig& cfg, const LlmTransport& transport = http_transport());

// Throws Validation if a range leaves the catalog, a kind repeats, or an
// accepted directive is empty.
void validate_directive(const FeedbackDirective& directive);

// Restricts the action space to the directive's kinds and their sub-ranges.
// A directive with nothing parsed leaves the config unchanged.
OptimizerConfig inject(const FeedbackDirective& directive, const OptimizerConfig& cfg);

Json to_json(const FeedbackDirective& directive);
FeedbackDirective directive_from_json(const Json& j);

// Append-only JSON Lines audit record.
void append_audit(const std::filesystem::path& path, const FeedbackDirective& directive);

std::size_t edit_distance(std::string_view a, std::string_view b);

}  // namespace postcorr
