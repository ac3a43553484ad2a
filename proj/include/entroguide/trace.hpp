#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file trace.hpp
 * @brief JSONL trace export, parsing and per-chain summaries
 *
 * One line per TraceEvent. Doubles are written with round-trip precision so
 * parsed metrics equal the in-memory values.
 */

#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "entroguide/engine.hpp"
#include "entroguide/errors.hpp"

namespace entroguide {

/// A trace line as stored on disk.
struct TraceRecord {
  std::string task_id;
  TraceEvent event;
};

namespace detail {

template <typename T, typename F>
nlohmann::json optional_json(const std::optional<T>& v, F&& f) {
  return v ? nlohmann::json(f(*v)) : nlohmann::json(nullptr);
}

}  // namespace detail

inline nlohmann::json trace_event_to_json(const TraceEvent& e, const std::string& task_id) {
  const auto id = [](auto x) { return x; };
  const auto action = [](Action a) { return std::string(to_string(a)); };
  nlohmann::json j;
  j["task_id"] = task_id;
  j["j"] = e.step_index;
  j["chain_id"] = e.chain_id;
  j["n"] = e.metrics.n;
  j["entropy"] = e.metrics.entropy_bits;
  j["norm_entropy"] = e.metrics.normalized_entropy;
  j["mean_token_entropy"] = e.metrics.mean_token_entropy;
  j["var_entropy"] = e.metrics.variance_entropy;
  j["norm_var_entropy"] = e.metrics.normalized_variance_entropy;
  j["dH"] = e.state ? nlohmann::json(e.state->delta_entropy) : nlohmann::json(nullptr);
  j["dVar"] = e.state ? nlohmann::json(e.state->delta_variance) : nlohmann::json(nullptr);
  j["best_action"] = detail::optional_json(e.best_action, action);
  j["sampled_action"] = detail::optional_json(e.sampled_action, action);
  j["executed"] = to_string(e.executed);
  j["stop_pending"] = detail::optional_json(e.stop_pending_remaining, id);
  j["new_chain"] = detail::optional_json(e.new_chain, id);
  j["degraded"] = e.degraded;
  j["answer"] = e.answer_detected;
  return j;
}

inline TraceRecord trace_record_from_json(const nlohmann::json& j) {
  TraceRecord r;
  r.task_id = j.at("task_id").get<std::string>();
  auto& e = r.event;
  e.step_index = j.at("j").get<int>();
  e.chain_id = j.at("chain_id").get<ChainId>();
  e.metrics.n = j.at("n").get<int>();
  e.metrics.entropy_bits = j.at("entropy").get<double>();
  e.metrics.normalized_entropy = j.at("norm_entropy").get<double>();
  e.metrics.mean_token_entropy = j.at("mean_token_entropy").get<double>();
  e.metrics.variance_entropy = j.at("var_entropy").get<double>();
  e.metrics.normalized_variance_entropy = j.at("norm_var_entropy").get<double>();
  if (!j.at("dH").is_null()) e.state = PolicyState{j.at("dH").get<double>(), j.at("dVar").get<double>()};
  if (!j.at("best_action").is_null()) e.best_action = action_from_string(j.at("best_action").get<std::string>());
  if (!j.at("sampled_action").is_null())
    e.sampled_action = action_from_string(j.at("sampled_action").get<std::string>());
  e.executed = behavior_from_string(j.at("executed").get<std::string>());
  if (!j.at("stop_pending").is_null()) e.stop_pending_remaining = j.at("stop_pending").get<int>();
  if (!j.at("new_chain").is_null()) e.new_chain = j.at("new_chain").get<ChainId>();
  e.degraded = j.value("degraded", false);
  e.answer_detected = j.value("answer", false);
  return r;
}

inline void export_trace(const RunResult& result, const std::string& task_id, std::ostream& sink) {
  for (const auto& e : result.trace) sink << trace_event_to_json(e, task_id).dump() << '\n';
  sink.flush();
  if (!sink) throw ConfigError("trace sink not writable");
}

/// Reads a JSONL trace. Throws ConfigError naming the first bad line.
inline std::vector<TraceRecord> read_trace(std::istream& in) {
  std::vector<TraceRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(trace_record_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw ConfigError("trace line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

/// Per-chain CSV from a finished run.
inline void export_chain_summary_csv(const RunResult& result, const std::string& task_id,
                                     std::ostream& sink, bool header = true) {
  if (header) sink << "task_id,chain_id,parent,split,length,status,mean_norm_entropy,final_answer\n";
  for (const auto& c : result.structure.chains()) {
    std::string answer = c.final_answer().value_or("");
    for (char& ch : answer)
      if (ch == ',' || ch == '\n' || ch == '"') ch = ' ';
    sink << task_id << ',' << c.id() << ','
         << (c.parent() ? std::to_string(c.parent()->chain) : std::string()) << ','
         << (c.parent() ? std::to_string(c.parent()->split_index) : std::string()) << ',' << c.length()
         << ',' << to_string(c.status()) << ',' << c.mean_normalized_entropy() << ',' << answer << '\n';
  }
  if (!sink) throw ConfigError("summary sink not writable");
}

struct ChainTraceSummary {
  std::string task_id;
  ChainId chain_id = 0;
  int events = 0;
  int nodes = 0;  ///< nodes generated by this chain's events (Expand counts two)
  std::map<Behavior, int> executed;
  double mean_norm_entropy = 0.0;
  double mean_norm_var_entropy = 0.0;
  int last_step = 0;
};

/// Groups trace records by (task, chain), in first-seen order.
inline std::vector<ChainTraceSummary> summarize_trace(const std::vector<TraceRecord>& records) {
  std::vector<ChainTraceSummary> out;
  std::map<std::pair<std::string, ChainId>, std::size_t> index;
  for (const auto& r : records) {
    const auto key = std::make_pair(r.task_id, r.event.chain_id);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, out.size()).first;
      ChainTraceSummary fresh;
      fresh.task_id = r.task_id;
      fresh.chain_id = r.event.chain_id;
      out.push_back(std::move(fresh));
    }
    auto& s = out[it->second];
    ++s.events;
    s.nodes += r.event.generated_nodes();
    ++s.executed[r.event.executed];
    s.mean_norm_entropy += r.event.metrics.normalized_entropy;
    s.mean_norm_var_entropy += r.event.metrics.normalized_variance_entropy;
    s.last_step = std::max(s.last_step, r.event.step_index);
  }
  for (auto& s : out) {
    s.mean_norm_entropy /= s.events;
    s.mean_norm_var_entropy /= s.events;
  }
  return out;
}

inline void write_trace_summary_csv(const std::vector<ChainTraceSummary>& summary, std::ostream& sink) {
  sink << "task_id,chain_id,events,nodes,deepen,expand,stop,forced_deepen,last_step,mean_norm_entropy,"
          "mean_norm_var_entropy\n";
  for (const auto& s : summary) {
    const auto count = [&](Behavior b) {
      auto it = s.executed.find(b);
      return it == s.executed.end() ? 0 : it->second;
    };
    sink << s.task_id << ',' << s.chain_id << ',' << s.events << ',' << s.nodes << ','
         << count(Behavior::Deepen) << ',' << count(Behavior::Expand) << ',' << count(Behavior::Stop) << ','
         << count(Behavior::ForcedDeepen) << ',' << s.last_step << ',' << s.mean_norm_entropy << ','
         << s.mean_norm_var_entropy << '\n';
  }
  if (!sink) throw ConfigError("summary sink not writable");
}

}  // namespace entroguide
