#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file cleansing.hpp
 * @brief Normalizes raw model predictions before exact-match scoring
 *
 * Numeric answers: drop thousands separators, pull every number out with a
 * regex and keep the first or the last. Choice answers: match an option label,
 * then option text, with yes/no handling for boolean tasks.
 */

#include <algorithm>
#include <cctype>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "entroguide/backend.hpp"

namespace entroguide {

enum class PositionRule {
  First,
  Last,
  Auto,  ///< First when the prediction opens with an answer marker, else Last
};

struct ChoiceOption {
  std::string label;  ///< "A".."E", or "yes"/"no" for boolean tasks
  std::string text;
};

namespace detail {

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

/// "3.50" -> "3.5", "4.0" -> "4", "-0" -> "0".
inline std::string canonical_number(std::string s) {
  if (const auto dot = s.find('.'); dot != std::string::npos) {
    while (!s.empty() && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
  }
  if (s == "-0") s = "0";
  return s;
}

inline bool opens_with_answer_marker(std::string_view pred) {
  return to_lower(trim(pred)).rfind(kDefaultAnswerPattern, 0) == 0;
}

/// Text after the last "answer is" / "answer:" marker, if any.
inline std::optional<std::string> answer_span(std::string_view pred) {
  return detect_answer_marker(pred, R"(answer\s*(?:is|:))");
}

inline bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

/// Case-insensitive whole-word search; returns the position or npos.
inline std::size_t find_word(std::string_view haystack_lower, std::string_view needle_lower) {
  if (needle_lower.empty()) return std::string_view::npos;
  std::size_t pos = haystack_lower.find(needle_lower);
  while (pos != std::string_view::npos) {
    const bool left_ok = pos == 0 || !is_word_char(haystack_lower[pos - 1]);
    const std::size_t end = pos + needle_lower.size();
    const bool right_ok = end >= haystack_lower.size() || !is_word_char(haystack_lower[end]);
    if (left_ok && right_ok) return pos;
    pos = haystack_lower.find(needle_lower, pos + 1);
  }
  return std::string_view::npos;
}

inline std::string match_boolean(std::string_view text) {
  static const std::regex re(R"(\b(yes|no|true|false)\b)", std::regex::icase);
  std::cmatch m;
  if (!std::regex_search(text.data(), text.data() + text.size(), m, re)) return {};
  const auto w = to_lower(m.str(1));
  return (w == "yes" || w == "true") ? "yes" : "no";
}

inline std::string match_choice(std::string_view text, std::span<const ChoiceOption> options) {
  const auto is_label = [&](const std::string& l) {
    return std::any_of(options.begin(), options.end(),
                       [&](const ChoiceOption& o) { return to_lower(o.label) == to_lower(l); });
  };
  const auto canonical_label = [&](const std::string& l) {
    for (const auto& o : options)
      if (to_lower(o.label) == to_lower(l)) return o.label;
    return std::string{};
  };
  const std::string s(text);

  // "(B)" anywhere.
  static const std::regex paren(R"(\(\s*([A-Za-z])\s*\))");
  for (auto it = std::sregex_iterator(s.begin(), s.end(), paren); it != std::sregex_iterator(); ++it)
    if (is_label(it->str(1))) return canonical_label(it->str(1));

  // A bare label opening the span: "B", "B.", "B) park".
  static const std::regex lead(R"(^\s*([A-Za-z])(?:[\s.,:;)]|$))");
  if (std::smatch m; std::regex_search(s, m, lead) && is_label(m.str(1)))
    return canonical_label(m.str(1));

  // Option text, longest match wins.
  const auto lower = to_lower(s);
  const ChoiceOption* best = nullptr;
  for (const auto& o : options) {
    if (o.text.empty()) continue;
    if (find_word(lower, to_lower(o.text)) == std::string_view::npos) continue;
    if (!best || o.text.size() > best->text.size()) best = &o;
  }
  if (best) return best->label;

  // Stand-alone capital label anywhere.
  static const std::regex bare(R"(\b([A-Z])\b)");
  for (auto it = std::sregex_iterator(s.begin(), s.end(), bare); it != std::sregex_iterator(); ++it)
    if (is_label(it->str(1))) return canonical_label(it->str(1));
  return {};
}

inline bool is_boolean_options(std::span<const ChoiceOption> options) {
  return !options.empty() && std::all_of(options.begin(), options.end(), [](const ChoiceOption& o) {
    const auto l = to_lower(o.label);
    return l == "yes" || l == "no";
  });
}

}  // namespace detail

/// Every number in `pred` after removing commas, in order of appearance.
inline std::vector<std::string> extract_numbers(std::string_view pred) {
  std::string s;
  s.reserve(pred.size());
  for (char c : pred)
    if (c != ',') s.push_back(c);
  static const std::regex number(R"(-?\d+(?:\.\d+)?)");
  std::vector<std::string> out;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), number); it != std::sregex_iterator(); ++it)
    out.push_back(detail::canonical_number(it->str()));
  return out;
}

/// Empty string when the prediction holds no number.
inline std::string clean_answer_numeric(std::string_view pred, PositionRule rule = PositionRule::Auto) {
  const auto numbers = extract_numbers(pred);
  if (numbers.empty()) return {};
  if (rule == PositionRule::Auto)
    rule = detail::opens_with_answer_marker(pred) ? PositionRule::First : PositionRule::Last;
  return rule == PositionRule::First ? numbers.front() : numbers.back();
}

inline std::vector<ChoiceOption> boolean_options() { return {{"yes", "yes"}, {"no", "no"}}; }

/// Matched option label, or "" when nothing matches.
inline std::string clean_answer_choice(std::string_view pred, std::span<const ChoiceOption> options) {
  if (options.empty()) return {};
  const auto span = detail::answer_span(pred);
  if (detail::is_boolean_options(options)) {
    if (span) {
      if (auto b = detail::match_boolean(*span); !b.empty()) return b;
    }
    return detail::match_boolean(pred);
  }
  if (span) {
    if (auto c = detail::match_choice(*span, options); !c.empty()) return c;
  }
  return detail::match_choice(pred, options);
}

inline std::string clean_answer_choice(std::string_view pred, const std::vector<ChoiceOption>& options) {
  return clean_answer_choice(pred, std::span<const ChoiceOption>(options));
}

}  // namespace entroguide
