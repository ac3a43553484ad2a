#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file backend.hpp
 * @brief Model backend interface and step-generation types
 *
 * One backend call produces one reasoning step: a single sentence with
 * per-token log-probabilities. Implementations must be callable from several
 * threads at once.
 */

#include <algorithm>
#include <cctype>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "entroguide/errors.hpp"
#include "entroguide/metrics.hpp"

namespace entroguide {

enum class RequestKind {
  Step,        ///< next single reasoning step
  Conclusion,  ///< final answer for a finished chain
};

struct GenerationRequest {
  std::string system_prompt;
  std::string task;
  std::vector<std::string> prior_steps;
  std::string instruction;  ///< appended after the prior steps
  double temperature = 0.7;
  int max_tokens = 128;
  int top_logprobs = 5;
  std::vector<std::string> stop_sequences = {"\n"};
  RequestKind kind = RequestKind::Step;
  int chain_id = 0;    ///< informational; lets test backends vary per chain
  int step_index = 1;  ///< 1-based index of the step being requested
};

enum class FinishReason { StopSequence, Length, AnswerMarker };

struct StepGeneration {
  std::string text;
  std::vector<TokenRecord> tokens;
  FinishReason finish_reason = FinishReason::StopSequence;

  bool operator==(const StepGeneration& o) const {
    if (text != o.text || finish_reason != o.finish_reason || tokens.size() != o.tokens.size())
      return false;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const auto& a = tokens[i];
      const auto& b = o.tokens[i];
      if (a.text != b.text || a.chosen_logprob != b.chosen_logprob) return false;
      if (a.top_alternatives.has_value() != b.top_alternatives.has_value()) return false;
      if (a.top_alternatives) {
        if (a.top_alternatives->size() != b.top_alternatives->size()) return false;
        for (std::size_t k = 0; k < a.top_alternatives->size(); ++k)
          if ((*a.top_alternatives)[k].token != (*b.top_alternatives)[k].token ||
              (*a.top_alternatives)[k].logprob != (*b.top_alternatives)[k].logprob)
            return false;
      }
    }
    return true;
  }
};

class Backend {
 public:
  virtual ~Backend() = default;

  /// Throws BackendError on transport/content failures and ConfigError when
  /// the backend cannot supply log-probabilities.
  virtual StepGeneration generate_step(const GenerationRequest& request) = 0;
};

// ---------------------------------------------------------------------------
// Answer markers and step segmentation
// ---------------------------------------------------------------------------

inline constexpr std::string_view kDefaultAnswerPattern = "the answer is";
inline constexpr std::string_view kDefaultStepDelimiter = R"(Step \d+:)";

namespace detail {

inline std::string trim(std::string_view s) {
  const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace detail

/// Trailing answer span after the last match of `pattern` (ECMAScript regex,
/// case-insensitive), trimmed. nullopt when there is no match or nothing
/// follows it.
inline std::optional<std::string> detect_answer_marker(
    std::string_view text, std::string_view pattern = kDefaultAnswerPattern) {
  const std::regex re(std::string(pattern), std::regex::ECMAScript | std::regex::icase);
  const std::string s(text);
  std::optional<std::size_t> tail;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it)
    tail = static_cast<std::size_t>(it->position(0) + it->length(0));
  if (!tail) return std::nullopt;
  auto rest = detail::trim(std::string_view(s).substr(*tail));
  if (rest.empty()) return std::nullopt;
  return rest;
}

/// Cuts a generation at the first step delimiter found after its start,
/// dropping every token that reaches into the delimiter. Returns true when
/// something was cut.
inline bool truncate_at_delimiter(StepGeneration& gen, std::string_view delimiter_regex) {
  const std::regex re{std::string(delimiter_regex)};
  std::smatch m;
  std::size_t search_from = 0;
  // Skip leading whitespace and a delimiter that opens the step itself.
  while (search_from < gen.text.size() &&
         std::isspace(static_cast<unsigned char>(gen.text[search_from])))
    ++search_from;
  std::optional<std::size_t> cut;
  auto begin = gen.text.cbegin() + static_cast<std::ptrdiff_t>(search_from);
  while (std::regex_search(begin, gen.text.cend(), m, re)) {
    const auto pos = static_cast<std::size_t>(m.position(0)) +
                     static_cast<std::size_t>(begin - gen.text.cbegin());
    if (pos > search_from) {
      cut = pos;
      break;
    }
    begin += std::max<std::ptrdiff_t>(m.length(0), 1);
  }
  if (!cut) return false;
  std::size_t consumed = 0;
  std::size_t keep = 0;
  for (const auto& t : gen.tokens) {
    if (consumed + t.text.size() > *cut) break;
    consumed += t.text.size();
    ++keep;
  }
  gen.tokens.resize(keep);
  gen.text.resize(consumed);
  gen.finish_reason = FinishReason::StopSequence;
  return true;
}

// ---------------------------------------------------------------------------
// Fixture JSON (one StepGeneration per line)
// ---------------------------------------------------------------------------

inline const char* to_string(FinishReason r) {
  switch (r) {
    case FinishReason::StopSequence: return "stop";
    case FinishReason::Length: return "length";
    case FinishReason::AnswerMarker: return "answer";
  }
  return "?";
}

inline FinishReason finish_reason_from_string(std::string_view s) {
  if (s == "stop") return FinishReason::StopSequence;
  if (s == "length") return FinishReason::Length;
  if (s == "answer") return FinishReason::AnswerMarker;
  throw std::invalid_argument("unknown finish_reason: " + std::string(s));
}

inline nlohmann::json to_json(const StepGeneration& g) {
  nlohmann::json tokens = nlohmann::json::array();
  for (const auto& t : g.tokens) {
    nlohmann::json jt{{"text", t.text}, {"logprob", t.chosen_logprob}};
    if (t.top_alternatives) {
      nlohmann::json top = nlohmann::json::array();
      for (const auto& a : *t.top_alternatives) top.push_back({{"token", a.token}, {"logprob", a.logprob}});
      jt["top"] = std::move(top);
    }
    tokens.push_back(std::move(jt));
  }
  return {{"text", g.text}, {"tokens", std::move(tokens)}, {"finish_reason", to_string(g.finish_reason)}};
}

inline StepGeneration step_generation_from_json(const nlohmann::json& j) {
  StepGeneration g;
  g.text = j.at("text").get<std::string>();
  for (const auto& jt : j.at("tokens")) {
    TokenRecord t;
    t.text = jt.at("text").get<std::string>();
    t.chosen_logprob = jt.at("logprob").get<double>();
    if (t.chosen_logprob > 0.0) throw std::invalid_argument("token logprob must be <= 0");
    if (auto top = jt.find("top"); top != jt.end() && !top->is_null()) {
      std::vector<TokenAlternative> alts;
      for (const auto& ja : *top)
        alts.push_back({ja.at("token").get<std::string>(), ja.at("logprob").get<double>()});
      std::stable_sort(alts.begin(), alts.end(),
                       [](const auto& a, const auto& b) { return a.logprob > b.logprob; });
      t.top_alternatives = std::move(alts);
    }
    g.tokens.push_back(std::move(t));
  }
  g.finish_reason = finish_reason_from_string(j.value("finish_reason", std::string("stop")));
  if (!g.text.empty() && g.tokens.empty()) throw std::invalid_argument("text without tokens");
  return g;
}

/// Builds the user message shown to a chat model for one request.
inline std::string render_user_message(const GenerationRequest& r) {
  std::string out = "Question: " + r.task + "\n";
  for (std::size_t i = 0; i < r.prior_steps.size(); ++i)
    out += "Step " + std::to_string(i + 1) + ": " + r.prior_steps[i] + "\n";
  out += r.instruction;
  return out;
}

}  // namespace entroguide
