#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file engine.hpp
 * @brief Entropy-guided reasoning loop and conclusion voting
 *
 * Iteration j visits every open chain in ascending id order:
 *
 *   1. generate step j from the chain's prior step texts
 *   2. compute its StepMetrics
 *   3. steps 1 and 2 are forced deepens; from step 3 the state is the metric
 *      delta against step j - 1, classified and sampled epsilon-greedily
 *   4. execute: Deepen appends the step; Expand appends it and forks a sibling
 *      chain whose step j is a second independent sample; Stop appends it and
 *      finalizes (or starts the Stop@k grace period)
 *
 * A chain also finalizes when its step states an answer, and every chain
 * finalizes after step J. Chains created by Expand first act in the next
 * iteration. Finished chains without an answer get one conclusion request;
 * the cleansed answers are put to a majority vote.
 */

#include <algorithm>
#include <chrono>
#include <functional>
#include <future>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "entroguide/backend.hpp"
#include "entroguide/errors.hpp"
#include "entroguide/metrics.hpp"
#include "entroguide/policy.hpp"
#include "entroguide/structure.hpp"

namespace entroguide {

struct GenerationSettings {
  std::string system_prompt =
      "You are a careful problem solver. Solve the question one reasoning step at a time.";
  std::string step_instruction =
      "Write only the next single reasoning step as one sentence. When you know the final "
      "answer, write \"The answer is X.\"";
  std::string conclusion_instruction = "State the final answer in the form \"The answer is X.\"";
  double temperature = 0.7;
  int max_tokens = 128;
  int top_logprobs = 5;
  std::vector<std::string> stop_sequences = {"\n"};
};

struct RunConfig {
  int max_steps = 16;  ///< J
  int max_chains = ReasoningStructure::kDefaultMaxChains;
  PolicyConfig policy;
  GenerationSettings generation;
  TokenEntropyMode entropy_mode = TokenEntropyMode::Contribution;
  std::string answer_pattern{kDefaultAnswerPattern};
  bool conclude_unanswered = true;
  int parallel_chains = 1;  ///< > 1 generates each iteration's steps concurrently
  /// Maps a raw chain answer to its vote key; empty result means no answer.
  /// Defaults to whitespace trimming.
  std::function<std::string(const std::string&)> cleanse;

  void validate() const {
    if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
    if (max_chains < 1) throw ConfigError("max_chains must be >= 1");
    if (parallel_chains < 1) throw ConfigError("parallel_chains must be >= 1");
    if (generation.temperature < 0.0) throw ConfigError("temperature must be >= 0");
    if (generation.max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
    if (generation.top_logprobs < 0) throw ConfigError("top_logprobs must be >= 0");
    try {
      policy.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
};

enum class Behavior { Deepen, Expand, Stop, ForcedDeepen };

struct TraceEvent {
  int step_index = 0;
  ChainId chain_id = 0;
  StepMetrics metrics;
  std::optional<PolicyState> state;  ///< absent on steps 1 and 2
  std::optional<Action> best_action;
  std::optional<Action> sampled_action;  ///< absent on forced steps
  Behavior executed = Behavior::ForcedDeepen;
  std::optional<int> stop_pending_remaining;
  std::optional<ChainId> new_chain;  ///< sibling created by Expand
  bool degraded = false;             ///< Expand fell back to Deepen at the chain budget
  bool answer_detected = false;

  /// Nodes this event added to the structure.
  int generated_nodes() const { return executed == Behavior::Expand ? 2 : 1; }
};

struct ChainConclusion {
  ChainId chain = 0;
  std::string raw;
  std::string cleansed;
  double mean_normalized_entropy = 0.0;
};

enum class AbortKind { None, Backend, Config };

struct RunResult {
  explicit RunResult(ReasoningStructure s) : structure(std::move(s)) {}

  ReasoningStructure structure;
  std::string conclusion;
  bool no_conclusion = true;
  std::vector<TraceEvent> trace;
  std::vector<ChainConclusion> conclusions;
  int total_steps = 0;       ///< reasoning nodes generated (step requests that succeeded)
  int conclusion_calls = 0;  ///< extra answer requests for unanswered chains
  std::chrono::nanoseconds wall_time{0};
  AbortKind abort_kind = AbortKind::None;
  std::string error;

  bool aborted() const { return abort_kind != AbortKind::None; }
  int depth() const { return structure.depth(); }

  double mean_chain_length() const {
    const auto& cs = structure.chains();
    if (cs.empty()) return 0.0;
    double s = 0.0;
    for (const auto& c : cs) s += static_cast<double>(c.length());
    return s / static_cast<double>(cs.size());
  }
};

// ---------------------------------------------------------------------------
// Voting
// ---------------------------------------------------------------------------

struct VoteCandidate {
  std::string answer;
  double mean_normalized_entropy = 0.0;
};

/// Most frequent answer. Ties go to the value held by the chain with the
/// lowest mean normalized step entropy, then to the value seen first.
inline std::string majority_vote(std::span<const VoteCandidate> candidates) {
  struct Tally {
    int count = 0;
    double best_entropy = 0.0;
    std::size_t first_seen = 0;
  };
  std::unordered_map<std::string, Tally> tallies;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    auto [it, inserted] = tallies.try_emplace(c.answer, Tally{0, c.mean_normalized_entropy, i});
    ++it->second.count;
    it->second.best_entropy = std::min(it->second.best_entropy, c.mean_normalized_entropy);
  }
  const std::string* winner = nullptr;
  const Tally* best = nullptr;
  for (const auto& [answer, t] : tallies) {
    const bool better =
        !best || t.count > best->count ||
        (t.count == best->count &&
         (t.best_entropy < best->best_entropy ||
          (t.best_entropy == best->best_entropy && t.first_seen < best->first_seen)));
    if (better) {
      winner = &answer;
      best = &t;
    }
  }
  return winner ? *winner : std::string{};
}

/// Plain count vote; ties go to the value seen first.
inline std::string majority_vote(std::span<const std::string> answers) {
  std::vector<VoteCandidate> c;
  c.reserve(answers.size());
  for (const auto& a : answers) c.push_back({a, 0.0});
  return majority_vote(std::span<const VoteCandidate>(c));
}

inline std::string majority_vote(const std::vector<std::string>& answers) {
  return majority_vote(std::span<const std::string>(answers));
}

inline std::string majority_vote(const std::vector<VoteCandidate>& candidates) {
  return majority_vote(std::span<const VoteCandidate>(candidates));
}

// ---------------------------------------------------------------------------
// Control loop
// ---------------------------------------------------------------------------

namespace detail {

class RunState {
 public:
  RunState(const std::string& task, const RunConfig& config, Backend& backend)
      : config_(config), backend_(backend), result_(ReasoningStructure(task, config.max_chains)) {}

  RunResult run() {
    const auto start = std::chrono::steady_clock::now();
    try {
      loop();
      conclude();
    } catch (const BackendError& e) {
      abort(AbortKind::Backend, e.what());
    } catch (const ConfigError& e) {
      abort(AbortKind::Config, e.what());
    }
    vote();
    result_.total_steps = static_cast<int>(result_.structure.node_count());
    result_.wall_time = std::chrono::steady_clock::now() - start;
    return std::move(result_);
  }

 private:
  ReasoningStructure& s() { return result_.structure; }

  GenerationRequest request_for(const Chain& chain, RequestKind kind, int step_index,
                                ChainId requester) const {
    const auto& g = config_.generation;
    GenerationRequest r;
    r.system_prompt = g.system_prompt;
    r.task = result_.structure.task();
    r.prior_steps = chain.step_texts();
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

  StepGeneration generate(const GenerationRequest& r) {
    StepGeneration g = backend_.generate_step(r);
    if (g.tokens.empty()) throw BackendError("empty step", false);
    return g;
  }

  NodePtr to_node(int j, StepGeneration g) {
    std::string text = g.text.empty() ? std::string(" ") : std::move(g.text);
    try {
      return s().make_node(j, std::move(text), std::move(g.tokens), config_.entropy_mode);
    } catch (const MetricsError& e) {
      throw BackendError(std::string("unusable step: ") + e.what(), false);
    }
  }

  ActionStream& stream(ChainId id) {
    auto it = streams_.find(id);
    if (it == streams_.end()) it = streams_.emplace(id, ActionStream(config_.policy.seed, id)).first;
    return it->second;
  }

  void loop() {
    for (int j = 1; j <= config_.max_steps; ++j) {
      const auto ids = s().open_chain_ids();
      if (ids.empty()) break;
      if (config_.parallel_chains > 1) {
        auto gens = generate_parallel(ids, j);
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (!gens[i].first) std::rethrow_exception(gens[i].second);
          process(ids[i], j, std::move(*gens[i].first));
        }
      } else {
        for (ChainId id : ids)
          process(id, j, generate(request_for(s().chain(id), RequestKind::Step, j, id)));
      }
      if (j == config_.max_steps)
        for (ChainId id : s().open_chain_ids()) s().finalize(id);
      if (!s().any_open()) break;
    }
  }

  std::vector<std::pair<std::optional<StepGeneration>, std::exception_ptr>> generate_parallel(
      const std::vector<ChainId>& ids, int j) {
    std::vector<std::pair<std::optional<StepGeneration>, std::exception_ptr>> out(ids.size());
    for (std::size_t begin = 0; begin < ids.size();
         begin += static_cast<std::size_t>(config_.parallel_chains)) {
      const std::size_t end =
          std::min(ids.size(), begin + static_cast<std::size_t>(config_.parallel_chains));
      std::vector<std::future<StepGeneration>> futures;
      for (std::size_t i = begin; i < end; ++i) {
        auto req = request_for(s().chain(ids[i]), RequestKind::Step, j, ids[i]);
        futures.push_back(std::async(std::launch::async,
                                     [this, req = std::move(req)] { return generate(req); }));
      }
      for (std::size_t i = begin; i < end; ++i) {
        try {
          out[i].first = futures[i - begin].get();
        } catch (...) {
          out[i].second = std::current_exception();
        }
      }
    }
    return out;
  }

  void process(ChainId id, int j, StepGeneration gen) {
    auto answer = detect_answer_marker(gen.text, config_.answer_pattern);
    NodePtr node = to_node(j, std::move(gen));
    Chain& chain = s().chain(id);

    TraceEvent ev;
    ev.step_index = j;
    ev.chain_id = id;
    ev.metrics = node->metrics;
    if (chain.length() >= 2) ev.state = make_state(chain.nodes().back()->metrics, node->metrics);

    if (chain.status() == ChainStatus::StopPending) {
      ev.best_action = classify(masked_state(*ev.state, config_.policy.metric_mode));
      chain.deepen(node);
      apply_stop(chain, config_.policy);
      ev.executed = Behavior::ForcedDeepen;
      ev.stop_pending_remaining = chain.stop_remaining();
    } else if (!ev.state) {
      chain.deepen(node);
      ev.executed = Behavior::ForcedDeepen;
    } else {
      const Selection sel = select_action(*ev.state, config_.policy, stream(id));
      ev.best_action = sel.best;
      ev.sampled_action = sel.sampled;
      if (answer) {
        chain.deepen(node);
        ev.executed = Behavior::Stop;
      } else {
        execute(chain, sel.sampled, node, j, ev);
      }
    }

    if (answer) {
      ev.answer_detected = true;
      if (ev.executed == Behavior::Deepen || ev.executed == Behavior::ForcedDeepen)
        ev.executed = Behavior::Stop;
      Chain& c = s().chain(id);
      c.set_final_answer(*answer);
      c.finalize();
      ev.stop_pending_remaining.reset();
    }
    result_.trace.push_back(ev);
  }

  void execute(Chain& chain, Action action, const NodePtr& node, int j, TraceEvent& ev) {
    switch (action) {
      case Action::Deepen:
        chain.deepen(node);
        ev.executed = Behavior::Deepen;
        return;
      case Action::Stop:
        chain.deepen(node);
        apply_stop(chain, config_.policy);
        ev.executed = Behavior::Stop;
        if (chain.status() == ChainStatus::StopPending) ev.stop_pending_remaining = chain.stop_remaining();
        return;
      case Action::Expand:
        break;
    }
    if (s().at_budget()) {
      chain.deepen(node);
      ev.executed = Behavior::Deepen;
      ev.degraded = true;
      return;
    }
    const ChainId id = chain.id();
    const auto sibling_id = static_cast<ChainId>(s().chain_count());
    StepGeneration sibling;
    try {
      sibling = generate(request_for(chain, RequestKind::Step, j, sibling_id));
    } catch (...) {
      chain.deepen(node);
      ev.executed = Behavior::Deepen;
      result_.trace.push_back(ev);
      throw;
    }
    auto sibling_answer = detect_answer_marker(sibling.text, config_.answer_pattern);
    NodePtr b = to_node(j, std::move(sibling));
    ev.new_chain = s().expand(id, node, std::move(b));
    ev.executed = Behavior::Expand;
    if (sibling_answer && ev.new_chain) {
      Chain& c = s().chain(*ev.new_chain);
      c.set_final_answer(*sibling_answer);
      c.finalize();
    }
  }

  void conclude() {
    if (!config_.conclude_unanswered) return;
    for (const auto& c : s().chains()) {
      if (c.final_answer() || c.length() == 0) continue;
      auto req = request_for(c, RequestKind::Conclusion, static_cast<int>(c.length()) + 1, c.id());
      StepGeneration g = generate(req);
      ++result_.conclusion_calls;
      auto answer = detect_answer_marker(g.text, config_.answer_pattern);
      s().chain(c.id()).set_final_answer(answer ? *answer : detail::trim(g.text));
    }
  }

  void vote() {
    std::vector<VoteCandidate> candidates;
    for (const auto& c : s().chains()) {
      if (!c.final_answer()) continue;
      ChainConclusion cc{c.id(), *c.final_answer(),
                         config_.cleanse ? config_.cleanse(*c.final_answer()) : detail::trim(*c.final_answer()),
                         c.mean_normalized_entropy()};
      if (!cc.cleansed.empty()) candidates.push_back({cc.cleansed, cc.mean_normalized_entropy});
      result_.conclusions.push_back(std::move(cc));
    }
    result_.conclusion = majority_vote(candidates);
    result_.no_conclusion = result_.conclusion.empty();
  }

  void abort(AbortKind kind, std::string message) {
    result_.abort_kind = kind;
    result_.error = std::move(message);
    for (ChainId id : s().open_chain_ids()) s().finalize(id);
  }

  const RunConfig& config_;
  Backend& backend_;
  RunResult result_;
  std::map<ChainId, ActionStream> streams_;
};

}  // namespace detail

/// Runs the full reasoning loop for one task. Backend failures do not throw:
/// the returned result carries the partial trace and abort_kind/error.
inline RunResult run_task(const std::string& task, const RunConfig& config, Backend& backend) {
  config.validate();
  return detail::RunState(task, config, backend).run();
}

inline const char* to_string(Behavior b) {
  switch (b) {
    case Behavior::Deepen: return "deepen";
    case Behavior::Expand: return "expand";
    case Behavior::Stop: return "stop";
    case Behavior::ForcedDeepen: return "forced_deepen";
  }
  return "?";
}

inline Behavior behavior_from_string(std::string_view s) {
  if (s == "deepen") return Behavior::Deepen;
  if (s == "expand") return Behavior::Expand;
  if (s == "stop") return Behavior::Stop;
  if (s == "forced_deepen") return Behavior::ForcedDeepen;
  throw std::invalid_argument("unknown behavior: " + std::string(s));
}

}  // namespace entroguide
