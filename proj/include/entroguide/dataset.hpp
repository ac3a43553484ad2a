#pragma once

// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "entroguide/cleansing.hpp"
#include "entroguide/errors.hpp"

namespace entroguide {

enum class TaskKind { NumericMath, MultipleChoice, Boolean };

struct TaskInstance {
  std::string id;
  std::string question;
  std::string gold_answer;
  TaskKind kind = TaskKind::NumericMath;
  std::vector<ChoiceOption> options;  ///< MultipleChoice only
};

struct DatasetLoad {
  std::vector<TaskInstance> tasks;
  std::vector<std::string> warnings;  ///< "path:line: reason" for skipped rows
};

inline TaskKind task_kind_from_string(std::string_view s) {
  if (s == "math" || s == "numeric") return TaskKind::NumericMath;
  if (s == "choice" || s == "mc" || s == "multiple-choice") return TaskKind::MultipleChoice;
  if (s == "boolean" || s == "bool" || s == "yesno") return TaskKind::Boolean;
  throw ConfigError("unknown task kind: " + std::string(s));
}

inline const char* to_string(TaskKind k) {
  switch (k) {
    case TaskKind::NumericMath: return "math";
    case TaskKind::MultipleChoice: return "choice";
    case TaskKind::Boolean: return "boolean";
  }
  return "?";
}

/// Gold numeric answer: text after the last "####" when present, then the
/// last number with commas removed.
inline std::string extract_numeric_gold(std::string_view answer) {
  if (const auto pos = answer.rfind("####"); pos != std::string_view::npos)
    answer = answer.substr(pos + 4);
  return clean_answer_numeric(answer, PositionRule::Last);
}

namespace detail {

inline std::vector<ChoiceOption> parse_options(const nlohmann::json& j) {
  std::vector<ChoiceOption> out;
  if (j.is_object()) {
    for (const auto& [label, text] : j.items()) out.push_back({label, text.get<std::string>()});
  } else if (j.is_array()) {
    char label = 'A';
    for (const auto& o : j) {
      if (o.is_string()) {
        out.push_back({std::string(1, label), o.get<std::string>()});
      } else {
        out.push_back({o.at("label").get<std::string>(), o.at("text").get<std::string>()});
      }
      ++label;
    }
  } else {
    throw std::invalid_argument("options must be an array or object");
  }
  return out;
}

inline std::string json_scalar_to_string(const nlohmann::json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_boolean()) return j.get<bool>() ? "yes" : "no";
  if (j.is_number()) return j.dump();
  throw std::invalid_argument("expected a string, number or boolean");
}

inline TaskInstance parse_task(const nlohmann::json& row, TaskKind kind, std::size_t line_no) {
  TaskInstance t;
  t.kind = kind;
  t.id = row.contains("id") ? json_scalar_to_string(row.at("id")) : "line-" + std::to_string(line_no);
  if (!row.contains("question")) throw std::invalid_argument("missing \"question\"");
  if (!row.contains("answer")) throw std::invalid_argument("missing \"answer\"");
  t.question = row.at("question").get<std::string>();
  if (t.question.empty()) throw std::invalid_argument("empty question");
  const std::string raw = json_scalar_to_string(row.at("answer"));

  for (const char* key : {"options", "choices"})
    if (row.contains(key)) t.options = parse_options(row.at(key));

  switch (kind) {
    case TaskKind::NumericMath:
      t.gold_answer = extract_numeric_gold(raw);
      break;
    case TaskKind::MultipleChoice:
      if (t.options.empty()) throw std::invalid_argument("multiple-choice row without options");
      t.gold_answer = clean_answer_choice(raw, t.options);
      break;
    case TaskKind::Boolean:
      t.options = boolean_options();
      t.gold_answer = clean_answer_choice(raw, t.options);
      break;
  }
  if (t.gold_answer.empty()) throw std::invalid_argument("unusable \"answer\": " + raw);
  return t;
}

}  // namespace detail

/// Reads JSONL rows {id, question, answer[, options]}. Malformed rows are
/// skipped with a warning, or rejected in strict mode.
inline DatasetLoad load_dataset(const std::string& path, TaskKind kind, bool strict = false) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot read dataset: " + path);
  DatasetLoad out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.tasks.push_back(detail::parse_task(nlohmann::json::parse(line), kind, line_no));
    } catch (const std::exception& e) {
      const std::string msg = path + ":" + std::to_string(line_no) + ": " + e.what();
      if (strict) throw DatasetError(msg);
      out.warnings.push_back(msg);
    }
  }
  if (out.tasks.empty()) throw DatasetError("no valid rows in dataset: " + path);
  return out;
}

}  // namespace entroguide
