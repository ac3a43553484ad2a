#pragma once

// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <functional>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "entroguide/backend.hpp"
#include "entroguide/baselines.hpp"
#include "entroguide/cleansing.hpp"
#include "entroguide/dataset.hpp"
#include "entroguide/engine.hpp"
#include "entroguide/errors.hpp"

namespace entroguide {

enum class Method { EntropyGuided, CoT, CoTSC, ToT };

inline Method method_from_string(std::string_view s) {
  if (s == "entropy" || s == "entroduction") return Method::EntropyGuided;
  if (s == "cot") return Method::CoT;
  if (s == "cotsc" || s == "cot-sc") return Method::CoTSC;
  if (s == "tot") return Method::ToT;
  throw ConfigError("unknown method: " + std::string(s));
}

inline const char* to_string(Method m) {
  switch (m) {
    case Method::EntropyGuided: return "entropy";
    case Method::CoT: return "cot";
    case Method::CoTSC: return "cotsc";
    case Method::ToT: return "tot";
  }
  return "?";
}

inline BaselineMethod as_baseline(Method m) {
  switch (m) {
    case Method::CoT: return BaselineMethod::CoT;
    case Method::CoTSC: return BaselineMethod::CoTSC;
    case Method::ToT: return BaselineMethod::ToT;
    case Method::EntropyGuided: break;
  }
  throw ConfigError("not a baseline method");
}

enum class TaskErrorKind { None, Backend, Config };

struct TaskRecord {
  std::string id;
  std::string predicted;
  std::string gold;
  bool correct = false;
  std::int64_t steps = 0;           ///< reasoning nodes generated for the task
  double mean_chain_length = 0.0;   ///< nodes per chain (shared prefixes counted per chain)
  int chains = 0;
  double wall_ms = 0.0;
  TaskErrorKind error_kind = TaskErrorKind::None;
  std::string error;
};

struct BenchmarkReport {
  std::string method;
  double accuracy = 0.0;
  double mean_steps = 0.0;         ///< mean nodes per task
  double mean_chain_length = 0.0;  ///< mean of per-task nodes-per-chain
  std::vector<TaskRecord> records;

  int correct_count() const {
    int n = 0;
    for (const auto& r : records) n += r.correct ? 1 : 0;
    return n;
  }
  bool any_error(TaskErrorKind kind) const {
    for (const auto& r : records)
      if (r.error_kind == kind) return true;
    return false;
  }
};

struct BenchmarkConfig {
  Method method = Method::EntropyGuided;
  RunConfig run;
  BaselineParams baseline = BaselineParams::math();
  PositionRule numeric_rule = PositionRule::Auto;
  int workers = 1;
  /// Called once per finished entropy-guided run, serialized. For trace sinks.
  std::function<void(const TaskInstance&, const RunResult&)> on_run;
};

/// Cleanser appropriate for the task's answer kind.
inline std::function<std::string(const std::string&)> cleanser_for(const TaskInstance& task,
                                                                   PositionRule rule = PositionRule::Auto) {
  switch (task.kind) {
    case TaskKind::NumericMath:
      return [rule](const std::string& s) { return clean_answer_numeric(s, rule); };
    case TaskKind::MultipleChoice:
    case TaskKind::Boolean: {
      auto options = task.options.empty() ? boolean_options() : task.options;
      return [options](const std::string& s) { return clean_answer_choice(s, options); };
    }
  }
  return {};
}

/// Recomputes accuracy and step means from the records.
inline void finalize_report(BenchmarkReport& report) {
  const auto n = report.records.size();
  if (n == 0) return;
  double steps = 0.0, chain_len = 0.0;
  for (const auto& r : report.records) {
    steps += static_cast<double>(r.steps);
    chain_len += r.mean_chain_length;
  }
  report.accuracy = static_cast<double>(report.correct_count()) / static_cast<double>(n);
  report.mean_steps = steps / static_cast<double>(n);
  report.mean_chain_length = chain_len / static_cast<double>(n);
}

namespace detail {

inline TaskRecord run_one(const TaskInstance& task, const BenchmarkConfig& config, Backend& backend,
                          std::mutex& sink_mu) {
  TaskRecord rec;
  rec.id = task.id;
  rec.gold = task.gold_answer;
  RunConfig run = config.run;
  run.cleanse = cleanser_for(task, config.numeric_rule);
  const auto start = std::chrono::steady_clock::now();
  try {
    if (config.method == Method::EntropyGuided) {
      RunResult result = run_task(task.question, run, backend);
      rec.predicted = result.conclusion;
      rec.steps = result.total_steps;
      rec.mean_chain_length = result.mean_chain_length();
      rec.chains = static_cast<int>(result.structure.chain_count());
      if (result.aborted()) {
        rec.error_kind = result.abort_kind == AbortKind::Config ? TaskErrorKind::Config : TaskErrorKind::Backend;
        rec.error = result.error;
      }
      if (config.on_run) {
        std::lock_guard lock(sink_mu);
        config.on_run(task, result);
      }
    } else {
      const auto method = as_baseline(config.method);
      const auto out = run_baseline_task(method, config.baseline, task.question, run, backend);
      rec.predicted = out.answer;
      rec.steps = out.steps;
      rec.chains = method == BaselineMethod::CoTSC ? config.baseline.chains : 1;
      rec.mean_chain_length = static_cast<double>(out.steps) / rec.chains;
    }
  } catch (const BackendError& e) {
    rec.error_kind = TaskErrorKind::Backend;
    rec.error = e.what();
  } catch (const ConfigError& e) {
    rec.error_kind = TaskErrorKind::Config;
    rec.error = e.what();
  }
  rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  rec.correct = rec.error_kind == TaskErrorKind::None && !rec.predicted.empty() &&
                rec.predicted == task.gold_answer;
  return rec;
}

}  // namespace detail

/// Runs every task and scores exact matches of cleansed predictions. Backend
/// failures mark the task incorrect and the run continues.
inline BenchmarkReport run_benchmark(std::span<const TaskInstance> tasks, const BenchmarkConfig& config,
                                     Backend& backend) {
  if (tasks.empty()) throw DatasetError("empty task list");
  if (config.workers < 1) throw ConfigError("workers must be >= 1");
  if (config.method == Method::EntropyGuided) {
    config.run.validate();
  } else {
    config.baseline.validate(as_baseline(config.method));
  }

  BenchmarkReport report;
  report.method = to_string(config.method);
  report.records.resize(tasks.size());
  std::mutex sink_mu;
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++)
      report.records[i] = detail::run_one(tasks[i], config, backend, sink_mu);
  };
  const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(config.workers), tasks.size());
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  finalize_report(report);
  return report;
}

inline BenchmarkReport run_benchmark(const std::vector<TaskInstance>& tasks, const BenchmarkConfig& config,
                                     Backend& backend) {
  return run_benchmark(std::span<const TaskInstance>(tasks), config, backend);
}

/// Baseline benchmark with the given structure parameters.
inline BenchmarkReport run_baseline(BaselineMethod method, const BaselineParams& params,
                                    const std::vector<TaskInstance>& tasks, Backend& backend,
                                    BenchmarkConfig config = {}) {
  switch (method) {
    case BaselineMethod::CoT: config.method = Method::CoT; break;
    case BaselineMethod::CoTSC: config.method = Method::CoTSC; break;
    case BaselineMethod::ToT: config.method = Method::ToT; break;
  }
  config.baseline = params;
  return run_benchmark(tasks, config, backend);
}

inline const char* to_string(TaskErrorKind k) {
  switch (k) {
    case TaskErrorKind::None: return "none";
    case TaskErrorKind::Backend: return "backend";
    case TaskErrorKind::Config: return "config";
  }
  return "?";
}

inline nlohmann::json to_json(const BenchmarkReport& r) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& t : r.records) {
    records.push_back({{"id", t.id},
                       {"predicted", t.predicted},
                       {"gold", t.gold},
                       {"correct", t.correct},
                       {"steps", t.steps},
                       {"mean_chain_length", t.mean_chain_length},
                       {"chains", t.chains},
                       {"wall_ms", t.wall_ms},
                       {"error", t.error_kind == TaskErrorKind::None ? nlohmann::json(nullptr)
                                                                      : nlohmann::json(t.error)},
                       {"error_kind", to_string(t.error_kind)}});
  }
  return {{"method", r.method},
          {"tasks", r.records.size()},
          {"correct", r.correct_count()},
          {"accuracy", r.accuracy},
          {"mean_steps_per_task", r.mean_steps},
          {"mean_nodes_per_chain", r.mean_chain_length},
          {"records", std::move(records)}};
}

inline void write_report(const BenchmarkReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write report: " + path);
  out << to_json(r).dump(2) << '\n';
  if (!out) throw ConfigError("cannot write report: " + path);
}

}  // namespace entroguide
