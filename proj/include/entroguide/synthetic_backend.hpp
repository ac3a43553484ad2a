#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file synthetic_backend.hpp
 * @brief Model-free backend that realizes a requested entropy schedule
 *
 * Each step is a token log-probability vector chosen by the test or tool.
 * Vectors can be given directly, as probabilities, or as a target normalized
 * entropy: the latter uses the geometric family p_k ~ exp(-beta * k) and
 * bisects beta until the softmax entropy matches the target.
 */

#include <cmath>
#include <functional>
#include <mutex>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "entroguide/backend.hpp"
#include "entroguide/metrics.hpp"

namespace entroguide {

struct SyntheticStep {
  std::vector<double> logprobs;
  std::optional<std::string> answer;  ///< if set, the step states this answer

  static SyntheticStep from_logprobs(std::vector<double> lp, std::optional<std::string> answer = {}) {
    if (lp.empty()) throw std::invalid_argument("synthetic step needs at least one token");
    return {std::move(lp), std::move(answer)};
  }

  /// `p` must be strictly positive; it is used as-is (softmax of log p is p
  /// when p sums to one).
  static SyntheticStep from_probabilities(const std::vector<double>& p,
                                          std::optional<std::string> answer = {}) {
    std::vector<double> lp;
    lp.reserve(p.size());
    for (double x : p) {
      if (!(x > 0.0)) throw std::invalid_argument("probabilities must be positive");
      lp.push_back(std::log(x));
    }
    return from_logprobs(std::move(lp), std::move(answer));
  }

  /// n tokens whose step softmax has the requested normalized entropy.
  static SyntheticStep with_entropy(int n, double normalized_entropy,
                                    std::optional<std::string> answer = {}) {
    if (n < 1) throw std::invalid_argument("synthetic step needs at least one token");
    if (!(normalized_entropy >= 0.0 && normalized_entropy <= 1.0))
      throw std::invalid_argument("normalized entropy must be in [0, 1]");
    if (n == 1) return from_logprobs({0.0}, std::move(answer));
    double lo = 0.0, hi = 1.0;
    while (hi < 1e4 && geometric_entropy(n, hi) > normalized_entropy) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (geometric_entropy(n, mid) > normalized_entropy ? lo : hi) = mid;
    }
    return from_logprobs(geometric_logprobs(n, 0.5 * (lo + hi)), std::move(answer));
  }

  static std::vector<double> geometric_logprobs(int n, double beta) {
    std::vector<double> l(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) l[static_cast<std::size_t>(k)] = -beta * k;
    const double lse = detail::log_sum_exp(l);
    for (double& x : l) x -= lse;
    return l;
  }

  static double geometric_entropy(int n, double beta) {
    const auto lp = geometric_logprobs(n, beta);
    double h = 0.0;
    for (double l : lp) h += detail::contribution_from_log(l);
    return h / std::log2(static_cast<double>(n));
  }
};

class SyntheticBackend : public Backend {
 public:
  using Schedule = std::function<SyntheticStep(const GenerationRequest&)>;

  /// Step j of every chain uses schedule[j - 1]; the last entry repeats.
  explicit SyntheticBackend(std::vector<SyntheticStep> schedule, std::string conclusion_answer = "0")
      : conclusion_answer_(std::move(conclusion_answer)) {
    if (schedule.empty()) throw std::invalid_argument("empty synthetic schedule");
    schedule_ = [steps = std::move(schedule)](const GenerationRequest& r) {
      const auto idx = static_cast<std::size_t>(std::max(r.step_index, 1) - 1);
      return steps[std::min(idx, steps.size() - 1)];
    };
  }

  SyntheticBackend(Schedule schedule, std::string conclusion_answer)
      : schedule_(std::move(schedule)), conclusion_answer_(std::move(conclusion_answer)) {}

  StepGeneration generate_step(const GenerationRequest& request) override {
    std::lock_guard lock(mu_);
    ++calls_;
    if (request.kind == RequestKind::Conclusion) {
      return render(SyntheticStep::from_logprobs({-0.05, -0.05, -0.05}, conclusion_answer_),
                    request.step_index);
    }
    return render(schedule_(request), request.step_index);
  }

  int calls() const {
    std::lock_guard lock(mu_);
    return calls_;
  }

  /// Token texts are "s<j>w<k> " so concatenation reconstructs the step text.
  static StepGeneration render(const SyntheticStep& step, int step_index) {
    StepGeneration g;
    const std::size_t n = step.logprobs.size();
    for (std::size_t k = 0; k < n; ++k) {
      TokenRecord t;
      t.text = "s" + std::to_string(step_index) + "w" + std::to_string(k);
      t.text += (k + 1 == n) ? "." : " ";
      t.chosen_logprob = step.logprobs[k];
      g.tokens.push_back(std::move(t));
    }
    if (step.answer) g.tokens.back().text = " The answer is " + *step.answer + ".";
    for (const auto& t : g.tokens) g.text += t.text;
    g.finish_reason = step.answer ? FinishReason::AnswerMarker : FinishReason::StopSequence;
    return g;
  }

 private:
  Schedule schedule_;
  std::string conclusion_answer_;
  mutable std::mutex mu_;
  int calls_ = 0;
};

}  // namespace entroguide
