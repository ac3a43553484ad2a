#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file policy.hpp
 * @brief Behavior selection from entropy deltas
 *
 * The state is the change in step entropy and in variance entropy between the
 * two most recent steps of a chain. A fixed sign map picks the best action:
 *
 *   dH <= 0, dVar <= 0  -> Deepen
 *   dH  > 0, dVar <= 0  -> Deepen
 *   dH <= 0, dVar  > 0  -> Expand
 *   dH  > 0, dVar  > 0  -> Stop
 *
 * Zero deltas fall on the non-positive side. The executed action is then drawn
 * epsilon-greedily: best action with 1 - eps, each other with eps / 2.
 */

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include "entroguide/metrics.hpp"
#include "entroguide/structure.hpp"

namespace entroguide {

enum class Action { Deepen = 0, Expand = 1, Stop = 2 };

inline constexpr std::array<Action, 3> kAllActions = {Action::Deepen, Action::Expand, Action::Stop};

struct PolicyState {
  double delta_entropy = 0.0;
  double delta_variance = 0.0;

  bool operator==(const PolicyState&) const = default;
};

/// Which metric deltas feed the classifier.
enum class MetricMode { Both, EntropyOnly, VarianceOnly, None };

struct PolicyConfig {
  double epsilon = 0.25;
  int stop_k = 2;  ///< Stop@k: 1 is a hard stop, k >= 2 allows k - 1 grace steps
  MetricMode metric_mode = MetricMode::Both;
  bool expand_enabled = true;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must be in [0, 1]");
    if (stop_k < 1) throw std::invalid_argument("stop_k must be >= 1");
  }
};

/// Probability per action, indexed by static_cast<int>(Action).
using ActionDistribution = std::array<double, 3>;

inline PolicyState make_state(const StepMetrics& previous, const StepMetrics& current) {
  return {current.entropy_bits - previous.entropy_bits,
          current.variance_entropy - previous.variance_entropy};
}

inline Action classify(const PolicyState& s) {
  const bool entropy_up = s.delta_entropy > 0.0;
  const bool variance_up = s.delta_variance > 0.0;
  if (!variance_up) return Action::Deepen;
  return entropy_up ? Action::Stop : Action::Expand;
}

inline ActionDistribution action_distribution(Action best, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must be in [0, 1]");
  const double other = epsilon / static_cast<double>(kAllActions.size() - 1);
  ActionDistribution d{other, other, other};
  d[static_cast<int>(best)] = 1.0 - epsilon;
  return d;
}

/// Zeroes the deltas the metric mode ignores.
inline PolicyState masked_state(PolicyState s, MetricMode mode) {
  switch (mode) {
    case MetricMode::Both: break;
    case MetricMode::EntropyOnly: s.delta_variance = 0.0; break;
    case MetricMode::VarianceOnly: s.delta_entropy = 0.0; break;
    case MetricMode::None: s = {}; break;
  }
  return s;
}

/// Deterministic per-chain random stream.
///
/// Each chain gets its own engine derived from (run seed, chain id), so draws
/// do not depend on the order in which chains are processed.
class ActionStream {
 public:
  ActionStream(std::uint64_t run_seed, ChainId chain)
      : engine_(mix(run_seed ^ mix(static_cast<std::uint64_t>(chain) + 0x632be59bd9b4e019ull))) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
};

inline Action draw(const ActionDistribution& d, double u) {
  double cum = 0.0;
  for (Action a : kAllActions) {
    cum += d[static_cast<int>(a)];
    if (u < cum) return a;
  }
  // u landed in the rounding gap above the cumulative sum; take the last action with mass.
  for (auto it = kAllActions.rbegin(); it != kAllActions.rend(); ++it)
    if (d[static_cast<int>(*it)] > 0.0) return *it;
  return Action::Deepen;
}

struct Selection {
  Action best = Action::Deepen;
  Action sampled = Action::Deepen;  ///< after the expand_enabled remap
};

inline Selection select_action(const PolicyState& state, const PolicyConfig& config,
                               ActionStream& stream) {
  if (config.metric_mode == MetricMode::None) return {Action::Deepen, Action::Deepen};
  const Action best = classify(masked_state(state, config.metric_mode));
  Action sampled = draw(action_distribution(best, config.epsilon), stream.uniform());
  if (!config.expand_enabled && sampled == Action::Expand) sampled = Action::Deepen;
  return {best, sampled};
}

inline Action sample_action(const PolicyState& state, const PolicyConfig& config,
                            ActionStream& stream) {
  return select_action(state, config, stream).sampled;
}

enum class StopOutcome { Continue, Terminate };

/// Soft-stop bookkeeping. Call on the step where Stop was sampled (chain
/// Active) and again after every grace step (chain StopPending). Once pending,
/// the stop cannot be cancelled.
inline StopOutcome apply_stop(Chain& chain, const PolicyConfig& config) {
  if (chain.is_finalized()) return StopOutcome::Terminate;
  if (chain.status() == ChainStatus::StopPending) {
    if (chain.consume_stop_grace() == 0) {
      chain.finalize();
      return StopOutcome::Terminate;
    }
    return StopOutcome::Continue;
  }
  if (config.stop_k <= 1) {
    chain.finalize();
    return StopOutcome::Terminate;
  }
  chain.enter_stop_pending(config.stop_k - 1);
  return StopOutcome::Continue;
}

inline const char* to_string(Action a) {
  switch (a) {
    case Action::Deepen: return "deepen";
    case Action::Expand: return "expand";
    case Action::Stop: return "stop";
  }
  return "?";
}

inline Action action_from_string(std::string_view s) {
  if (s == "deepen") return Action::Deepen;
  if (s == "expand") return Action::Expand;
  if (s == "stop") return Action::Stop;
  throw std::invalid_argument("unknown action: " + std::string(s));
}

inline const char* to_string(MetricMode m) {
  switch (m) {
    case MetricMode::Both: return "both";
    case MetricMode::EntropyOnly: return "entropy";
    case MetricMode::VarianceOnly: return "variance";
    case MetricMode::None: return "none";
  }
  return "?";
}

inline MetricMode metric_mode_from_string(std::string_view s) {
  if (s == "both") return MetricMode::Both;
  if (s == "entropy") return MetricMode::EntropyOnly;
  if (s == "variance") return MetricMode::VarianceOnly;
  if (s == "none") return MetricMode::None;
  throw std::invalid_argument("unknown metric mode: " + std::string(s));
}

}  // namespace entroguide
