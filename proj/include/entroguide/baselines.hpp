#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file baselines.hpp
 * @brief Fixed-structure reasoning baselines: CoT, CoT-SC and ToT
 *
 * Every baseline generates a predetermined number of steps:
 *   CoT     one chain of `steps` nodes
 *   CoT-SC  `chains` independent chains of `steps` nodes, answers voted
 *   ToT     a full tree, one root and `branching` children per node,
 *           `layers` levels deep: sum_{k<layers} branching^k nodes
 *
 * Answer requests made after the chains finish are not reasoning steps and
 * are counted separately.
 */

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "entroguide/backend.hpp"
#include "entroguide/engine.hpp"
#include "entroguide/errors.hpp"
#include "entroguide/metrics.hpp"

namespace entroguide {

enum class BaselineMethod { CoT, CoTSC, ToT };

struct BaselineParams {
  int steps = 8;
  int chains = 3;
  int branching = 3;
  int layers = 5;
  int vote_n = 8;  ///< answers sampled for the CoT-SC vote

  static BaselineParams math() { return {8, 3, 3, 5, 8}; }
  static BaselineParams commonsense() { return {5, 3, 3, 5, 8}; }

  void validate(BaselineMethod method) const {
    switch (method) {
      case BaselineMethod::CoT:
        if (steps < 1) throw ConfigError("CoT needs steps >= 1");
        break;
      case BaselineMethod::CoTSC:
        if (steps < 1 || chains < 1 || vote_n < 1)
          throw ConfigError("CoT-SC needs steps, chains and vote_n >= 1");
        break;
      case BaselineMethod::ToT:
        if (branching < 1 || layers < 1) throw ConfigError("ToT needs branching and layers >= 1");
        if (layers > 12 || branching > 16) throw ConfigError("ToT tree too large");
        break;
    }
  }
};

/// Reasoning steps a baseline generates per task.
inline std::int64_t baseline_step_count(BaselineMethod method, const BaselineParams& p) {
  p.validate(method);
  switch (method) {
    case BaselineMethod::CoT:
      return p.steps;
    case BaselineMethod::CoTSC:
      return static_cast<std::int64_t>(p.chains) * p.steps;
    case BaselineMethod::ToT: {
      std::int64_t total = 0, level = 1;
      for (int k = 0; k < p.layers; ++k) {
        total += level;
        level *= p.branching;
      }
      return total;
    }
  }
  return 0;
}

struct BaselineOutcome {
  std::string answer;                ///< voted cleansed answer, "" when none
  std::vector<std::string> answers;  ///< cleansed answers that entered the vote
  std::int64_t steps = 0;
  int conclusion_calls = 0;
};

namespace detail {

struct BaselinePath {
  std::vector<std::string> texts;
  std::vector<double> normalized_entropies;
  std::optional<std::string> answer;  ///< last answer stated along the path

  double mean_normalized_entropy() const {
    if (normalized_entropies.empty()) return 0.0;
    double s = 0.0;
    for (double h : normalized_entropies) s += h;
    return s / static_cast<double>(normalized_entropies.size());
  }
};

class BaselineRunner {
 public:
  BaselineRunner(const std::string& task, const RunConfig& config, Backend& backend)
      : task_(task), config_(config), backend_(backend) {}

  BaselinePath extend(BaselinePath path, int step_index, int requester) {
    auto g = backend_.generate_step(request(path, RequestKind::Step, step_index, requester));
    if (g.tokens.empty()) throw BackendError("empty step", false);
    ++steps_;
    path.normalized_entropies.push_back(
        compute_step_metrics(g.tokens, config_.entropy_mode).normalized_entropy);
    if (auto a = detect_answer_marker(g.text, config_.answer_pattern)) path.answer = *a;
    path.texts.push_back(std::move(g.text));
    return path;
  }

  std::string conclude(const BaselinePath& path, int requester) {
    auto g = backend_.generate_step(
        request(path, RequestKind::Conclusion, static_cast<int>(path.texts.size()) + 1, requester));
    ++conclusion_calls_;
    auto a = detect_answer_marker(g.text, config_.answer_pattern);
    return a ? *a : trim(g.text);
  }

  std::string cleanse(const std::string& raw) const {
    return config_.cleanse ? config_.cleanse(raw) : trim(raw);
  }

  std::int64_t steps() const { return steps_; }
  int conclusion_calls() const { return conclusion_calls_; }

 private:
  GenerationRequest request(const BaselinePath& path, RequestKind kind, int step_index,
                            int requester) const {
    const auto& g = config_.generation;
    GenerationRequest r;
    r.system_prompt = g.system_prompt;
    r.task = task_;
    r.prior_steps = path.texts;
    r.instruction = kind == RequestKind::Step ? g.step_instruction : g.conclusion_instruction;
    r.temperature = g.temperature;
    r.max_tokens = g.max_tokens;
    r.top_logprobs = g.top_logprobs;
    r.stop_sequences = g.stop_sequences;
    r.kind = kind;
    r.chain_id = requester;
    r.step_index = step_index;
    return r;
  }

  const std::string& task_;
  const RunConfig& config_;
  Backend& backend_;
  std::int64_t steps_ = 0;
  int conclusion_calls_ = 0;
};

}  // namespace detail

/// Runs one baseline on one task. Generation settings, answer pattern,
/// entropy mode and cleansing come from `config`; policy fields are unused.
inline BaselineOutcome run_baseline_task(BaselineMethod method, const BaselineParams& params,
                                         const std::string& task, const RunConfig& config,
                                         Backend& backend) {
  params.validate(method);
  detail::BaselineRunner runner(task, config, backend);
  BaselineOutcome out;
  std::vector<VoteCandidate> votes;
  const auto add_vote = [&](const std::string& raw, double entropy) {
    auto c = runner.cleanse(raw);
    if (c.empty()) return;
    out.answers.push_back(c);
    votes.push_back({std::move(c), entropy});
  };

  switch (method) {
    case BaselineMethod::CoT: {
      detail::BaselinePath path;
      for (int j = 1; j <= params.steps; ++j) path = runner.extend(std::move(path), j, 0);
      add_vote(path.answer ? *path.answer : runner.conclude(path, 0), path.mean_normalized_entropy());
      break;
    }
    case BaselineMethod::CoTSC: {
      std::vector<detail::BaselinePath> paths(static_cast<std::size_t>(params.chains));
      for (int c = 0; c < params.chains; ++c)
        for (int j = 1; j <= params.steps; ++j)
          paths[static_cast<std::size_t>(c)] = runner.extend(std::move(paths[static_cast<std::size_t>(c)]), j, c);
      for (int v = 0; v < params.vote_n; ++v) {
        const int c = v % params.chains;
        const auto& p = paths[static_cast<std::size_t>(c)];
        const bool first_pass = v < params.chains;
        add_vote(first_pass && p.answer ? *p.answer : runner.conclude(p, c), p.mean_normalized_entropy());
      }
      break;
    }
    case BaselineMethod::ToT: {
      std::vector<detail::BaselinePath> layer{runner.extend({}, 1, 0)};
      for (int depth = 2; depth <= params.layers; ++depth) {
        std::vector<detail::BaselinePath> next;
        next.reserve(layer.size() * static_cast<std::size_t>(params.branching));
        int requester = 0;
        for (const auto& parent : layer)
          for (int b = 0; b < params.branching; ++b) next.push_back(runner.extend(parent, depth, requester++));
        layer = std::move(next);
      }
      for (const auto& leaf : layer)
        if (leaf.answer) add_vote(*leaf.answer, leaf.mean_normalized_entropy());
      if (votes.empty()) {
        const auto best = std::min_element(layer.begin(), layer.end(), [](const auto& a, const auto& b) {
          return a.mean_normalized_entropy() < b.mean_normalized_entropy();
        });
        add_vote(runner.conclude(*best, static_cast<int>(best - layer.begin())), best->mean_normalized_entropy());
      }
      break;
    }
  }
  out.answer = majority_vote(votes);
  out.steps = runner.steps();
  out.conclusion_calls = runner.conclusion_calls();
  return out;
}

inline const char* to_string(BaselineMethod m) {
  switch (m) {
    case BaselineMethod::CoT: return "cot";
    case BaselineMethod::CoTSC: return "cotsc";
    case BaselineMethod::ToT: return "tot";
  }
  return "?";
}

}  // namespace entroguide
