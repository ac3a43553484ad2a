// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <map>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "entroguide/engine.hpp"
#include "entroguide/scripted_backend.hpp"
#include "entroguide/synthetic_backend.hpp"
#include "entroguide/trace.hpp"
#include "oracle.hpp"

using namespace entroguide;

namespace {

const std::vector<double> kUniform2{0.5, 0.5};
const std::vector<double> kUniform4{0.25, 0.25, 0.25, 0.25};
const std::vector<double> kSpiky3{0.49, 0.49, 0.02};

SyntheticStep step(const std::vector<double>& p) { return SyntheticStep::from_probabilities(p); }

std::vector<double> logs(const std::vector<double>& p) {
  std::vector<double> out;
  for (double x : p) out.push_back(std::log(x));
  return out;
}

// Signs of (dH, dVar) from the extended-precision oracle.
std::pair<int, int> oracle_signs(const std::vector<double>& prev, const std::vector<double>& cur) {
  const auto a = oracle::metrics(logs(prev)), b = oracle::metrics(logs(cur));
  const auto sign = [](const oracle::Real& x) { return x > 0 ? 1 : (x < 0 ? -1 : 0); };
  return {sign(b.entropy - a.entropy), sign(b.variance - a.variance)};
}

RunConfig greedy(int stop_k, int max_steps = 8) {
  RunConfig c;
  c.max_steps = max_steps;
  c.policy.epsilon = 0.0;
  c.policy.stop_k = stop_k;
  c.policy.seed = 1;
  return c;
}

std::vector<Behavior> behaviors(const RunResult& r, ChainId chain) {
  std::vector<Behavior> out;
  for (const auto& e : r.trace)
    if (e.chain_id == chain) out.push_back(e.executed);
  return out;
}

std::string trace_text(const RunResult& r) {
  std::ostringstream os;
  export_trace(r, "t", os);
  return os.str();
}

int generated_nodes(const RunResult& r) {
  int n = 0;
  for (const auto& e : r.trace) n += e.generated_nodes();
  return n;
}

}  // namespace

TEST(Schedules, HitIntendedQuadrants) {
  EXPECT_EQ(oracle_signs(kUniform2, kSpiky3), std::make_pair(1, 1));   // Stop
  EXPECT_EQ(oracle_signs(kUniform4, kSpiky3), std::make_pair(-1, 1));  // Expand
  EXPECT_EQ(oracle_signs(kSpiky3, kUniform2).second, -1);              // Deepen
}

TEST(RunTask, StopAtStepThreeHardStop) {
  SyntheticBackend b({step(kUniform2), step(kUniform2), step(kSpiky3)}, "4");
  const auto r = run_task("2+2?", greedy(1), b);
  ASSERT_FALSE(r.aborted()) << r.error;
  EXPECT_EQ(r.structure.chain_count(), 1u);
  EXPECT_EQ(r.structure.chain(0).length(), 3u);
  EXPECT_EQ(behaviors(r, 0), (std::vector<Behavior>{Behavior::ForcedDeepen, Behavior::ForcedDeepen, Behavior::Stop}));
  EXPECT_EQ(r.total_steps, 3);
  EXPECT_EQ(r.conclusion_calls, 1);
  EXPECT_EQ(r.conclusion, "4.");
  EXPECT_FALSE(r.no_conclusion);
  ASSERT_TRUE(r.trace[2].state.has_value());
  EXPECT_GT(r.trace[2].state->delta_entropy, 0.0);
  EXPECT_GT(r.trace[2].state->delta_variance, 0.0);
}

TEST(RunTask, SoftStopAddsGraceNodes) {
  for (int k : {2, 3}) {
    SyntheticBackend b({step(kUniform2), step(kUniform2), step(kSpiky3)});
    const auto r = run_task("q", greedy(k), b);
    EXPECT_EQ(r.structure.chain(0).length(), static_cast<std::size_t>(3 + k - 1)) << "k=" << k;
    const auto bs = behaviors(r, 0);
    EXPECT_EQ(bs[2], Behavior::Stop);
    for (std::size_t i = 3; i < bs.size(); ++i) EXPECT_EQ(bs[i], Behavior::ForcedDeepen);
    EXPECT_EQ(r.trace[2].stop_pending_remaining, std::optional<int>(k - 1));
    EXPECT_EQ(r.trace.back().stop_pending_remaining, std::optional<int>(0));
  }
}

TEST(RunTask, ExpandQuadrantForksChain) {
  SyntheticBackend b({step(kUniform4), step(kUniform4), step(kSpiky3)});
  const auto r = run_task("q", greedy(2, 4), b);
  ASSERT_EQ(r.structure.chain_count(), 2u);
  const auto& e3 = r.trace[2];
  EXPECT_EQ(e3.step_index, 3);
  EXPECT_EQ(e3.executed, Behavior::Expand);
  EXPECT_EQ(e3.new_chain, std::optional<ChainId>(1));
  const auto& c0 = r.structure.chain(0);
  const auto& c1 = r.structure.chain(1);
  ASSERT_EQ(c1.parent(), (std::optional<ChainOrigin>{ChainOrigin{0, 2}}));
  for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(c0.nodes()[k].get(), c1.nodes()[k].get());
  EXPECT_NE(c0.nodes()[2].get(), c1.nodes()[2].get());

  std::vector<ChainId> at4;
  for (const auto& e : r.trace)
    if (e.step_index == 4) at4.push_back(e.chain_id);
  EXPECT_EQ(at4, (std::vector<ChainId>{0, 1}));
  EXPECT_EQ(r.total_steps, 6);
  EXPECT_EQ(generated_nodes(r), r.total_steps);
  EXPECT_EQ(b.calls() - r.conclusion_calls, r.total_steps);
}

TEST(RunTask, DeepenQuadrantRunsToLimit) {
  SyntheticBackend b({step(kUniform2)});
  const auto r = run_task("q", greedy(1, 6), b);
  EXPECT_EQ(r.structure.chain_count(), 1u);
  EXPECT_EQ(r.structure.chain(0).length(), 6u);
  for (std::size_t i = 2; i < r.trace.size(); ++i) EXPECT_EQ(r.trace[i].executed, Behavior::Deepen);
  EXPECT_EQ(r.conclusion_calls, 1);
}

TEST(RunTask, ExpandDegradesAtBudget) {
  SyntheticBackend b({step(kUniform4), step(kUniform4), step(kSpiky3)});
  auto c = greedy(2, 4);
  c.max_chains = 1;
  const auto r = run_task("q", c, b);
  EXPECT_EQ(r.structure.chain_count(), 1u);
  EXPECT_EQ(r.trace[2].executed, Behavior::Deepen);
  EXPECT_TRUE(r.trace[2].degraded);
  EXPECT_EQ(r.trace[2].sampled_action, std::optional<Action>(Action::Expand));
}

TEST(RunTask, AnswerMarkerFinalizes) {
  SyntheticBackend b({step(kUniform2), SyntheticStep::from_probabilities(kUniform4, "17")});
  const auto r = run_task("q", greedy(2), b);
  EXPECT_EQ(r.structure.chain(0).length(), 2u);
  EXPECT_TRUE(r.trace.back().answer_detected);
  EXPECT_EQ(r.trace.back().executed, Behavior::Stop);
  EXPECT_EQ(r.conclusion_calls, 0);
  EXPECT_EQ(r.conclusion, "17.");
}

TEST(RunTask, BackendFailureAbortsWithPartialTrace) {
  std::vector<StepGeneration> fixtures;
  for (int j = 1; j <= 2; ++j) fixtures.push_back(SyntheticBackend::render(step(kUniform2), j));
  ScriptedBackend b(fixtures);
  RunResult r = run_task("q", greedy(2), b);
  EXPECT_TRUE(r.aborted());
  EXPECT_EQ(r.abort_kind, AbortKind::Backend);
  EXPECT_EQ(r.error, "fixture exhausted");
  EXPECT_EQ(r.trace.size(), 2u);
  EXPECT_EQ(r.total_steps, 2);
  EXPECT_TRUE(r.no_conclusion);
  EXPECT_EQ(r.conclusion, "");
  EXPECT_FALSE(r.structure.any_open());
}

TEST(RunTask, InvalidConfigThrows) {
  SyntheticBackend b({step(kUniform2)});
  RunConfig c;
  c.max_steps = 0;
  EXPECT_THROW(run_task("q", c, b), ConfigError);
  c = RunConfig{};
  c.policy.epsilon = 3;
  EXPECT_THROW(run_task("q", c, b), ConfigError);
}

TEST(RunTask, CleanserFeedsVote) {
  SyntheticBackend b({step(kUniform2)}, "1,234 apples");
  auto c = greedy(1, 3);
  c.cleanse = [](const std::string& s) {
    std::string out;
    for (char ch : s)
      if (std::isdigit(static_cast<unsigned char>(ch))) out += ch;
    return out;
  };
  const auto r = run_task("q", c, b);
  EXPECT_EQ(r.conclusion, "1234");
  ASSERT_EQ(r.conclusions.size(), 1u);
  EXPECT_EQ(r.conclusions[0].raw, "1,234 apples.");
}

namespace {

SyntheticBackend random_backend(std::uint64_t seed) {
  auto schedule = [seed](const GenerationRequest& r) {
    std::mt19937_64 rng(seed * 1000003 + static_cast<std::uint64_t>(r.step_index) * 7919 +
                        static_cast<std::uint64_t>(r.chain_id));
    const int n = 1 + static_cast<int>(rng() % 12);
    std::uniform_real_distribution<double> u(-6.0, 0.0);
    std::vector<double> lp(static_cast<std::size_t>(n));
    for (auto& x : lp) x = u(rng);
    std::optional<std::string> answer;
    if (rng() % 23 == 0) answer = std::to_string(rng() % 3);
    return SyntheticStep::from_logprobs(lp, answer);
  };
  return SyntheticBackend(schedule, "1");
}

}  // namespace

TEST(RunTask, ReproducibleAcrossRunsAndParallelism) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    RunConfig c;
    c.max_steps = 10;
    c.max_chains = 6;
    c.policy.seed = seed;
    auto b1 = random_backend(seed), b2 = random_backend(seed), b3 = random_backend(seed);
    const auto r1 = run_task("q", c, b1);
    const auto r2 = run_task("q", c, b2);
    c.parallel_chains = 4;
    const auto r3 = run_task("q", c, b3);
    EXPECT_EQ(trace_text(r1), trace_text(r2));
    EXPECT_EQ(trace_text(r1), trace_text(r3));
    EXPECT_EQ(r1.conclusion, r2.conclusion);
    EXPECT_EQ(r1.total_steps, r3.total_steps);
  }
}

TEST(RunTask, BoundsAndAccountingFuzz) {
  std::mt19937_64 rng(77);
  for (int run = 0; run < 200; ++run) {
    RunConfig c;
    c.max_steps = 1 + static_cast<int>(rng() % 12);
    c.max_chains = 1 + static_cast<int>(rng() % 6);
    c.policy.epsilon = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    c.policy.stop_k = 1 + static_cast<int>(rng() % 3);
    c.policy.seed = rng();
    auto b = random_backend(rng());
    const auto r = run_task("q", c, b);
    ASSERT_FALSE(r.aborted()) << r.error;
    EXPECT_LE(r.structure.chain_count(), static_cast<std::size_t>(c.max_chains));
    for (const auto& ch : r.structure.chains()) {
      EXPECT_LE(ch.length(), static_cast<std::size_t>(c.max_steps));
      EXPECT_TRUE(ch.is_finalized());
    }
    EXPECT_LE(r.depth(), c.max_steps);
    EXPECT_EQ(generated_nodes(r), r.total_steps);
    EXPECT_EQ(b.calls() - r.conclusion_calls, r.total_steps);
    for (const auto& e : r.trace) {
      EXPECT_LE(e.step_index, c.max_steps);
      if (e.degraded) {
        EXPECT_EQ(r.structure.chain_count(), static_cast<std::size_t>(c.max_chains));
      }
      if (e.executed == Behavior::Expand) {
        EXPECT_TRUE(e.new_chain.has_value());
      }
    }
  }
}

TEST(MajorityVote, Examples) {
  EXPECT_EQ(majority_vote(std::vector<std::string>{"4", "4", "5"}), "4");
  EXPECT_EQ(majority_vote(std::vector<std::string>{"7"}), "7");
  EXPECT_EQ(majority_vote(std::vector<std::string>{}), "");
  EXPECT_EQ(majority_vote(std::vector<VoteCandidate>{{"3", 0.2}, {"8", 0.6}}), "3");
  EXPECT_EQ(majority_vote(std::vector<VoteCandidate>{{"8", 0.6}, {"3", 0.2}}), "3");
  EXPECT_EQ(majority_vote(std::vector<VoteCandidate>{{"8", 0.6}, {"3", 0.6}}), "8");
  EXPECT_EQ(majority_vote(std::vector<VoteCandidate>{{"8", 0.1}, {"3", 0.2}, {"3", 0.9}}), "3");
}

TEST(MajorityVote, BruteForceOracle) {
  std::mt19937_64 rng(88);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = static_cast<int>(rng() % 12);
    std::vector<VoteCandidate> c;
    for (int i = 0; i < n; ++i)
      c.push_back({std::to_string(rng() % 4), static_cast<double>(rng() % 5) / 4.0});
    const auto w = majority_vote(c);
    if (c.empty()) {
      EXPECT_EQ(w, "");
      continue;
    }
    std::map<std::string, int> count;
    std::map<std::string, double> best;
    for (const auto& x : c) {
      ++count[x.answer];
      best[x.answer] = best.count(x.answer) ? std::min(best[x.answer], x.mean_normalized_entropy)
                                            : x.mean_normalized_entropy;
    }
    int top = 0;
    for (const auto& [a, k] : count) top = std::max(top, k);
    ASSERT_TRUE(count.count(w));
    EXPECT_EQ(count[w], top);
    for (const auto& [a, k] : count)
      if (k == top) {
        EXPECT_LE(best[w], best[a]);
      }
  }
}
