#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file metrics.hpp
 * @brief Step-level entropy and variance-entropy kernels
 *
 * A reasoning step is a sentence of n tokens. Each token contributes one
 * log-probability value; a softmax over those n values yields a distribution
 * whose Shannon entropy (bits) measures how spread the step's evidence is.
 * Token-level entropies feed a population variance that tracks how unevenly
 * uncertainty is distributed within the step.
 *
 * All logarithms are base 2. Both normalized forms divide by log2(n) and are
 * defined as 0 for single-token steps.
 *
 * Everything here is a pure function; no shared state.
 */

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace entroguide {

/// One of the top-K alternatives the model considered at a position.
struct TokenAlternative {
  std::string token;
  double logprob = 0.0;
};

/// One generated token with its log-probability evidence.
struct TokenRecord {
  std::string text;
  double chosen_logprob = 0.0;  ///< natural-log probability of the sampled token
  std::optional<std::vector<TokenAlternative>> top_alternatives;
};

/// Entropy bundle for one reasoning step.
struct StepMetrics {
  int n = 0;
  double entropy_bits = 0.0;
  double normalized_entropy = 0.0;
  double mean_token_entropy = 0.0;
  double variance_entropy = 0.0;
  double normalized_variance_entropy = 0.0;

  bool operator==(const StepMetrics&) const = default;
};

/// How a single token's entropy H(t) is read.
enum class TokenEntropyMode {
  Contribution,  ///< -p log2 p under the step softmax; sums to the step entropy
  Surprisal,     ///< -log2 p under the step softmax
  VocabTopK,     ///< entropy of the renormalized top-K alternatives at that position
};

/// Thrown for malformed metric inputs.
class MetricsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

constexpr double kLn2 = 0.693147180559945309417232121458176568;

inline double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline void require_finite(std::span<const double> logits) {
  if (logits.empty()) throw MetricsError("empty step");
  for (double x : logits)
    if (!std::isfinite(x)) throw MetricsError("non-finite logit");
}

inline double log2_length(int n) { return std::log2(static_cast<double>(n)); }

/// -p log2 p from log p (natural), with 0 log 0 = 0.
inline double contribution_from_log(double log_p) {
  if (std::isinf(log_p)) return 0.0;
  const double p = std::exp(log_p);
  if (p == 0.0) return 0.0;
  return -p * log_p / kLn2;
}

/// Natural-log softmax, computed as l - logsumexp(l).
inline std::vector<double> log_softmax(std::span<const double> logits) {
  require_finite(logits);
  const double lse = log_sum_exp(logits);
  std::vector<double> out(logits.size());
  std::transform(logits.begin(), logits.end(), out.begin(),
                 [lse](double x) { return x - lse; });
  return out;
}

inline double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline std::vector<double> chosen_logprobs(std::span<const TokenRecord> records) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.chosen_logprob);
  return out;
}

inline double topk_entropy(const std::vector<TokenAlternative>& alts) {
  if (alts.empty()) throw MetricsError("alternatives unavailable");
  std::vector<double> lp;
  lp.reserve(alts.size());
  for (const auto& a : alts) lp.push_back(a.logprob);
  double h = 0.0;
  for (double l : log_softmax(lp)) h += contribution_from_log(l);
  return h;
}

}  // namespace detail

/// Softmax over a step's logit values (max-subtracted).
inline std::vector<double> step_softmax(std::span<const double> logits) {
  auto out = detail::log_softmax(logits);
  for (double& x : out) x = std::exp(x);
  return out;
}

/// Shannon entropy in bits, 0 log 0 = 0.
inline double step_entropy(std::span<const double> p) {
  if (p.empty()) throw MetricsError("empty step");
  double total = 0.0;
  for (double x : p) {
    if (!(x >= 0.0) || x > 1.0) throw MetricsError("not a distribution");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-9) throw MetricsError("not a distribution");
  double h = 0.0;
  for (double x : p)
    if (x > 0.0) h -= x * std::log2(x);
  return std::max(h, 0.0);
}

inline double normalized_step_entropy(double entropy_bits, int n) {
  if (n <= 0) throw MetricsError("invalid length");
  if (n == 1) return 0.0;
  return std::clamp(entropy_bits / detail::log2_length(n), 0.0, 1.0);
}

/// Per-position token entropies for the given mode.
///
/// Contribution and Surprisal read the step softmax `p`; VocabTopK ignores it
/// and needs every record to carry its top-K alternatives.
inline std::vector<double> token_entropies(std::span<const double> p,
                                           std::span<const TokenRecord> records,
                                           TokenEntropyMode mode) {
  if (p.size() != records.size())
    throw MetricsError("probability and token counts differ");
  std::vector<double> out;
  out.reserve(p.size());
  switch (mode) {
    case TokenEntropyMode::Contribution:
      for (double x : p) out.push_back(x > 0.0 ? -x * std::log2(x) : 0.0);
      break;
    case TokenEntropyMode::Surprisal:
      for (double x : p) {
        if (!(x > 0.0)) throw MetricsError("zero probability has unbounded surprisal");
        out.push_back(-std::log2(x));
      }
      break;
    case TokenEntropyMode::VocabTopK:
      for (const auto& r : records) {
        if (!r.top_alternatives) throw MetricsError("alternatives unavailable");
        out.push_back(detail::topk_entropy(*r.top_alternatives));
      }
      break;
  }
  return out;
}

/// Population variance (divide by n) of token entropies.
inline double variance_entropy(std::span<const double> token_h) {
  if (token_h.empty()) throw MetricsError("empty step");
  const double m = detail::mean(token_h);
  double acc = 0.0;
  for (double x : token_h) acc += (x - m) * (x - m);
  return acc / static_cast<double>(token_h.size());
}

inline double normalized_variance_entropy(double var, int n) {
  if (n <= 0) throw MetricsError("invalid length");
  if (var < 0.0) throw MetricsError("negative variance");
  if (n == 1) return 0.0;
  return var / detail::log2_length(n);
}

/// Full metric bundle for one step, using chosen log-probabilities as logits.
///
/// Contribution and Surprisal terms are evaluated from log-softmax values
/// directly rather than from rounded probabilities.
inline StepMetrics compute_step_metrics(std::span<const TokenRecord> records,
                                        TokenEntropyMode mode = TokenEntropyMode::Contribution) {
  if (records.empty()) throw MetricsError("empty step");
  const int n = static_cast<int>(records.size());
  const auto logits = detail::chosen_logprobs(records);
  const auto log_p = detail::log_softmax(logits);

  std::vector<double> contrib(log_p.size());
  std::transform(log_p.begin(), log_p.end(), contrib.begin(), detail::contribution_from_log);
  const double h = n == 1 ? 0.0 : std::accumulate(contrib.begin(), contrib.end(), 0.0);

  std::vector<double> token_h;
  switch (mode) {
    case TokenEntropyMode::Contribution:
      token_h = std::move(contrib);
      break;
    case TokenEntropyMode::Surprisal:
      token_h.reserve(log_p.size());
      for (double l : log_p) token_h.push_back(-l / detail::kLn2);
      break;
    case TokenEntropyMode::VocabTopK:
      token_h = token_entropies(std::vector<double>(log_p.size(), 0.0), records, mode);
      break;
  }

  StepMetrics m;
  m.n = n;
  m.entropy_bits = h;
  m.normalized_entropy = normalized_step_entropy(h, n);
  m.mean_token_entropy = detail::mean(token_h);
  m.variance_entropy = n == 1 ? 0.0 : variance_entropy(token_h);
  m.normalized_variance_entropy = normalized_variance_entropy(m.variance_entropy, n);
  return m;
}

inline StepMetrics compute_step_metrics(const std::vector<TokenRecord>& records,
                                        TokenEntropyMode mode = TokenEntropyMode::Contribution) {
  return compute_step_metrics(std::span<const TokenRecord>(records), mode);
}

inline const char* to_string(TokenEntropyMode mode) {
  switch (mode) {
    case TokenEntropyMode::Contribution: return "contribution";
    case TokenEntropyMode::Surprisal: return "surprisal";
    case TokenEntropyMode::VocabTopK: return "topk";
  }
  return "?";
}

}  // namespace entroguide
