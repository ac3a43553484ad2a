#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file cli.hpp
 * @brief Command-line front end: run, bench and trace subcommands
 *
 * Exit codes: 0 success, 1 configuration error, 2 backend failure,
 * 3 dataset error. Shared options live on the top-level app and fall through
 * to subcommands, so a key=value file passed with --config can set them.
 */

#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "entroguide/benchmark.hpp"
#include "entroguide/dataset.hpp"
#include "entroguide/engine.hpp"
#include "entroguide/errors.hpp"
#include "entroguide/http_backend.hpp"
#include "entroguide/scripted_backend.hpp"
#include "entroguide/synthetic_backend.hpp"
#include "entroguide/trace.hpp"

namespace entroguide {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitBackend = 2, kExitDataset = 3 };

struct CliOptions {
  // backend
  std::string backend = "http";
  std::string endpoint = "http://127.0.0.1:8000";
  std::string model = "default";
  std::string api_key;
  std::string fixture;
  std::vector<double> synthetic_entropies = {0.9, 0.8, 0.85};
  int synthetic_tokens = 8;
  std::string synthetic_answer = "0";
  int max_in_flight = 4;
  int timeout_s = 30;

  // policy and loop
  double epsilon = 0.25;
  int max_steps = 16;
  int max_chains = 16;
  int stop_k = 2;
  std::string metric_mode = "both";
  bool no_expand = false;
  std::uint64_t seed = 0;
  std::string entropy_mode = "contribution";
  int parallel_chains = 1;

  // generation
  double temperature = 0.7;
  int max_tokens = 128;
  int top_logprobs = 5;
  std::string answer_pattern{kDefaultAnswerPattern};
  std::optional<std::string> system_prompt;
  std::optional<std::string> step_instruction;
  std::optional<std::string> conclusion_instruction;

  // run
  std::string task;
  std::string task_id = "task";
  std::string run_out;
  std::string summary_csv;

  // bench
  std::string dataset;
  std::string task_kind = "math";
  std::string method = "entropy";
  bool strict = false;
  int workers = 1;
  std::string position_rule = "auto";
  std::string preset = "math";
  std::optional<int> steps, chains, branching, layers, vote_n;
  std::string bench_out;
  std::string trace_out;

  // trace
  std::string trace_in;
  std::string trace_csv;
  std::string trace_reexport;
};

namespace detail {

inline TokenEntropyMode entropy_mode_from_string(const std::string& s) {
  if (s == "contribution") return TokenEntropyMode::Contribution;
  if (s == "surprisal") return TokenEntropyMode::Surprisal;
  if (s == "topk") return TokenEntropyMode::VocabTopK;
  throw ConfigError("unknown entropy mode: " + s);
}

inline PositionRule position_rule_from_string(const std::string& s) {
  if (s == "first") return PositionRule::First;
  if (s == "last") return PositionRule::Last;
  if (s == "auto") return PositionRule::Auto;
  throw ConfigError("unknown position rule: " + s);
}

inline RunConfig make_run_config(const CliOptions& o) {
  RunConfig c;
  c.max_steps = o.max_steps;
  c.max_chains = o.max_chains;
  c.policy.epsilon = o.epsilon;
  c.policy.stop_k = o.stop_k;
  try {
    c.policy.metric_mode = metric_mode_from_string(o.metric_mode);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  c.policy.expand_enabled = !o.no_expand;
  c.policy.seed = o.seed;
  c.entropy_mode = entropy_mode_from_string(o.entropy_mode);
  c.parallel_chains = o.parallel_chains;
  c.answer_pattern = o.answer_pattern;
  c.generation.temperature = o.temperature;
  c.generation.max_tokens = o.max_tokens;
  c.generation.top_logprobs = o.top_logprobs;
  if (o.system_prompt) c.generation.system_prompt = *o.system_prompt;
  if (o.step_instruction) c.generation.step_instruction = *o.step_instruction;
  if (o.conclusion_instruction) c.generation.conclusion_instruction = *o.conclusion_instruction;
  c.validate();
  return c;
}

inline std::unique_ptr<Backend> make_backend(const CliOptions& o) {
  if (o.backend == "http") {
    auto cfg = HttpBackendConfig::from_environment();
    if (!o.endpoint.empty()) cfg.endpoint = o.endpoint;
    if (!o.model.empty()) cfg.model = o.model;
    if (!o.api_key.empty()) cfg.api_key = o.api_key;
    cfg.max_in_flight = o.max_in_flight;
    cfg.timeout = std::chrono::seconds(o.timeout_s);
    cfg.answer_pattern = o.answer_pattern;
    return std::make_unique<HttpBackend>(cfg);
  }
  if (o.backend == "scripted") {
    if (o.fixture.empty()) throw ConfigError("--fixture is required for the scripted backend");
    return std::make_unique<ScriptedBackend>(load_fixture_file(o.fixture));
  }
  if (o.backend == "synthetic") {
    if (o.synthetic_entropies.empty()) throw ConfigError("--synthetic-entropies must not be empty");
    std::vector<SyntheticStep> schedule;
    try {
      for (double h : o.synthetic_entropies) schedule.push_back(SyntheticStep::with_entropy(o.synthetic_tokens, h));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    return std::make_unique<SyntheticBackend>(std::move(schedule), o.synthetic_answer);
  }
  throw ConfigError("unknown backend: " + o.backend);
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write: " + path);
  return f;
}

inline int run_command(const CliOptions& o, std::ostream& out) {
  if (o.task.empty()) throw ConfigError("--task is required");
  auto config = make_run_config(o);
  auto backend = make_backend(o);
  const RunResult result = run_task(o.task, config, *backend);
  if (const auto& path = o.run_out.empty() ? o.trace_out : o.run_out; !path.empty()) {
    auto f = open_out(path);
    export_trace(result, o.task_id, f);
  }
  if (!o.summary_csv.empty()) {
    auto f = open_out(o.summary_csv);
    export_chain_summary_csv(result, o.task_id, f);
  }
  nlohmann::json summary{{"task_id", o.task_id},
                         {"conclusion", result.conclusion},
                         {"no_conclusion", result.no_conclusion},
                         {"total_steps", result.total_steps},
                         {"conclusion_calls", result.conclusion_calls},
                         {"depth", result.depth()},
                         {"chains", result.structure.chain_count()},
                         {"mean_nodes_per_chain", result.mean_chain_length()},
                         {"wall_ms", std::chrono::duration<double, std::milli>(result.wall_time).count()},
                         {"aborted", result.aborted()},
                         {"error", result.error}};
  out << summary.dump(2) << '\n';
  switch (result.abort_kind) {
    case AbortKind::None: return kExitOk;
    case AbortKind::Config: return kExitConfig;
    case AbortKind::Backend: return kExitBackend;
  }
  return kExitOk;
}

inline int bench_command(const CliOptions& o, std::ostream& out, std::ostream& err) {
  if (o.dataset.empty()) throw ConfigError("--dataset is required");
  BenchmarkConfig config;
  config.method = method_from_string(o.method);
  config.run = make_run_config(o);
  config.numeric_rule = position_rule_from_string(o.position_rule);
  config.workers = o.workers;
  if (o.preset == "math") {
    config.baseline = BaselineParams::math();
  } else if (o.preset == "commonsense") {
    config.baseline = BaselineParams::commonsense();
  } else {
    throw ConfigError("unknown preset: " + o.preset);
  }
  if (o.steps) config.baseline.steps = *o.steps;
  if (o.chains) config.baseline.chains = *o.chains;
  if (o.branching) config.baseline.branching = *o.branching;
  if (o.layers) config.baseline.layers = *o.layers;
  if (o.vote_n) config.baseline.vote_n = *o.vote_n;

  const auto kind = task_kind_from_string(o.task_kind);
  const DatasetLoad load = load_dataset(o.dataset, kind, o.strict);
  for (const auto& w : load.warnings) err << "warning: " << w << '\n';

  auto backend = make_backend(o);
  std::ofstream trace;
  if (!o.trace_out.empty()) {
    trace = open_out(o.trace_out);
    config.on_run = [&trace](const TaskInstance& t, const RunResult& r) { export_trace(r, t.id, trace); };
  }
  const BenchmarkReport report = run_benchmark(load.tasks, config, *backend);
  if (!o.bench_out.empty()) write_report(report, o.bench_out);

  out << "method " << report.method << ": accuracy " << std::fixed << std::setprecision(4) << report.accuracy
      << " (" << report.correct_count() << "/" << report.records.size() << "), mean steps/task "
      << report.mean_steps << ", mean nodes/chain " << report.mean_chain_length << '\n';
  for (const auto& r : report.records)
    if (r.error_kind != TaskErrorKind::None) err << "task " << r.id << " failed: " << r.error << '\n';
  if (report.any_error(TaskErrorKind::Config)) return kExitConfig;
  if (report.any_error(TaskErrorKind::Backend)) return kExitBackend;
  return kExitOk;
}

inline int trace_command(const CliOptions& o, std::ostream& out) {
  std::ifstream in(o.trace_in);
  if (!in) throw ConfigError("cannot read trace: " + o.trace_in);
  const auto records = read_trace(in);
  const auto summary = summarize_trace(records);
  if (!o.trace_csv.empty()) {
    auto f = open_out(o.trace_csv);
    write_trace_summary_csv(summary, f);
  }
  if (!o.trace_reexport.empty()) {
    auto f = open_out(o.trace_reexport);
    for (const auto& r : records) f << trace_event_to_json(r.event, r.task_id).dump() << '\n';
  }
  out << records.size() << " events, " << summary.size() << " chains\n";
  write_trace_summary_csv(summary, out);
  return kExitOk;
}

}  // namespace detail

/// Parses argv and runs the selected subcommand.
inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CliOptions o;
  CLI::App app{"Entropy-guided multi-step reasoning"};
  app.set_config("--config", "", "key = value configuration file");
  app.fallthrough();
  app.require_subcommand(1);

  app.add_option("--backend", o.backend, "http | scripted | synthetic")
      ->check(CLI::IsMember({"http", "scripted", "synthetic"}));
  app.add_option("--endpoint", o.endpoint, "OpenAI-compatible base URL")->envname("ENTROGUIDE_ENDPOINT");
  app.add_option("--model", o.model, "model name sent to the endpoint")->envname("ENTROGUIDE_MODEL");
  app.add_option("--api-key", o.api_key, "bearer token")->envname("ENTROGUIDE_API_KEY");
  app.add_option("--fixture", o.fixture, "JSONL fixture for the scripted backend");
  app.add_option("--synthetic-entropies", o.synthetic_entropies, "normalized entropy per step")->delimiter(',');
  app.add_option("--synthetic-tokens", o.synthetic_tokens, "tokens per synthetic step");
  app.add_option("--synthetic-answer", o.synthetic_answer, "answer returned to conclusion requests");
  app.add_option("--max-in-flight", o.max_in_flight, "concurrent HTTP requests");
  app.add_option("--timeout", o.timeout_s, "HTTP timeout in seconds");

  app.add_option("--epsilon", o.epsilon, "exploration rate")->check(CLI::Range(0.0, 1.0));
  app.add_option("--max-steps", o.max_steps, "step limit J");
  app.add_option("--max-chains", o.max_chains, "chain budget");
  app.add_option("--stop-k", o.stop_k, "Stop@k (1 = hard stop)");
  app.add_option("--metric-mode", o.metric_mode, "both | entropy | variance | none")
      ->check(CLI::IsMember({"both", "entropy", "variance", "none"}));
  app.add_flag("--no-expand", o.no_expand, "disable Expand");
  app.add_option("--seed", o.seed, "random seed");
  app.add_option("--entropy-mode", o.entropy_mode, "contribution | surprisal | topk")
      ->check(CLI::IsMember({"contribution", "surprisal", "topk"}));
  app.add_option("--parallel-chains", o.parallel_chains, "concurrent step requests per iteration");
  app.add_option("--temperature", o.temperature, "sampling temperature");
  app.add_option("--max-tokens", o.max_tokens, "token limit per step");
  app.add_option("--top-logprobs", o.top_logprobs, "alternatives per position");
  app.add_option("--answer-pattern", o.answer_pattern, "final-answer regex (case-insensitive)");
  app.add_option("--system-prompt", o.system_prompt, "system message");
  app.add_option("--step-instruction", o.step_instruction, "instruction for each step request");
  app.add_option("--conclusion-instruction", o.conclusion_instruction, "instruction for answer requests");
  app.add_option("--trace-out", o.trace_out, "write trace JSONL here");

  auto* run = app.add_subcommand("run", "reason about a single task");
  run->add_option("--task,task", o.task, "question text")->required();
  run->add_option("--task-id", o.task_id, "id written into the trace");
  run->add_option("--out", o.run_out, "trace JSONL output");
  run->add_option("--summary-csv", o.summary_csv, "per-chain CSV output");

  auto* bench = app.add_subcommand("bench", "evaluate a method on a dataset");
  bench->add_option("--dataset", o.dataset, "JSONL dataset")->required();
  bench->add_option("--task-kind", o.task_kind, "math | choice | boolean")
      ->check(CLI::IsMember({"math", "numeric", "choice", "mc", "boolean", "bool"}));
  bench->add_option("--method", o.method, "entropy | cot | cotsc | tot")
      ->check(CLI::IsMember({"entropy", "entroduction", "cot", "cotsc", "cot-sc", "tot"}));
  bench->add_flag("--strict", o.strict, "reject malformed dataset rows");
  bench->add_option("--workers", o.workers, "tasks run concurrently");
  bench->add_option("--position-rule", o.position_rule, "auto | first | last")
      ->check(CLI::IsMember({"auto", "first", "last"}));
  bench->add_option("--preset", o.preset, "baseline preset: math | commonsense")
      ->check(CLI::IsMember({"math", "commonsense"}));
  bench->add_option("--steps", o.steps, "baseline chain length");
  bench->add_option("--chains", o.chains, "CoT-SC chains");
  bench->add_option("--branching", o.branching, "ToT branching");
  bench->add_option("--layers", o.layers, "ToT layers");
  bench->add_option("--vote-n", o.vote_n, "CoT-SC answers voted");
  bench->add_option("--out", o.bench_out, "report JSON output");

  auto* trace = app.add_subcommand("trace", "inspect or re-export a trace");
  trace->add_option("--in,input", o.trace_in, "trace JSONL")->required();
  trace->add_option("--csv", o.trace_csv, "per-chain summary CSV output");
  trace->add_option("--out", o.trace_reexport, "re-exported JSONL output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (run->parsed()) return detail::run_command(o, out);
    if (bench->parsed()) return detail::bench_command(o, out, err);
    return detail::trace_command(o, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const BackendError& e) {
    err << "backend failure: " << e.what() << '\n';
    return kExitBackend;
  } catch (const DatasetError& e) {
    err << "dataset error: " << e.what() << '\n';
    return kExitDataset;
  } catch (const std::invalid_argument& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace entroguide
