// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "entroguide/metrics.hpp"
#include "oracle.hpp"

using namespace entroguide;

namespace {

std::vector<TokenRecord> records_from(const std::vector<double>& lp) {
  std::vector<TokenRecord> out;
  for (double l : lp) out.push_back({"t", l, std::nullopt});
  return out;
}

std::vector<double> random_logits(std::mt19937_64& rng, int n, double lo = -12.0, double hi = 0.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace

// Reference values below were computed with 50-digit arithmetic (mpmath and
// Boost.Multiprecision agree) and frozen here.

TEST(StepSoftmax, Examples) {
  auto p = step_softmax(std::vector<double>{0.0, 0.0});
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);

  p = step_softmax(std::vector<double>{2.0, 0.0});
  EXPECT_NEAR(p[0], 0.88079707797788244, 1e-15);
  EXPECT_NEAR(p[1], 0.11920292202211756, 1e-15);

  p = step_softmax(std::vector<double>{5.0, 5.0, 5.0});
  for (double x : p) EXPECT_NEAR(x, 1.0 / 3.0, 1e-15);
}

TEST(StepSoftmax, Errors) {
  try {
    step_softmax(std::vector<double>{});
    FAIL();
  } catch (const MetricsError& e) {
    EXPECT_STREQ(e.what(), "empty step");
  }
  try {
    step_softmax(std::vector<double>{0.0, NAN});
    FAIL();
  } catch (const MetricsError& e) {
    EXPECT_STREQ(e.what(), "non-finite logit");
  }
  EXPECT_THROW(step_softmax(std::vector<double>{-INFINITY}), MetricsError);
}

TEST(StepSoftmax, ShiftInvariance) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> shift(-50.0, 50.0);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 64);
    auto l = random_logits(rng, n);
    const double c = shift(rng);
    auto shifted = l;
    for (auto& x : shifted) x += c;
    const auto a = step_softmax(l), b = step_softmax(shifted);
    double sum = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      EXPECT_NEAR(a[k], b[k], 1e-12);
      EXPECT_GT(a[k], 0.0);
      sum += a[k];
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(StepEntropy, Examples) {
  EXPECT_DOUBLE_EQ(step_entropy(std::vector<double>{0.25, 0.25, 0.25, 0.25}), 2.0);
  EXPECT_DOUBLE_EQ(step_entropy(std::vector<double>{1.0}), 0.0);
  const auto p = step_softmax(std::vector<double>{2.0, 0.0});
  EXPECT_NEAR(step_entropy(p), 0.52706534100316161, 1e-12);
  EXPECT_DOUBLE_EQ(step_entropy(std::vector<double>{1.0, 0.0}), 0.0);
}

TEST(StepEntropy, NotADistribution) {
  try {
    step_entropy(std::vector<double>{0.5, 0.4});
    FAIL();
  } catch (const MetricsError& e) {
    EXPECT_STREQ(e.what(), "not a distribution");
  }
  EXPECT_THROW(step_entropy(std::vector<double>{1.2, -0.2}), MetricsError);
  EXPECT_NO_THROW(step_entropy(std::vector<double>{0.5, 0.5 + 5e-10}));
}

TEST(StepEntropy, BoundsAndUniformMaximum) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 64);
    const auto p = step_softmax(random_logits(rng, n, -6.0, 0.0));
    const double h = step_entropy(p);
    const double cap = std::log2(static_cast<double>(n));
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, cap + 1e-12);
  }
  for (int n = 1; n <= 64; ++n) {
    std::vector<double> u(static_cast<std::size_t>(n), 1.0 / n);
    EXPECT_NEAR(step_entropy(u), std::log2(static_cast<double>(n)), 1e-12);
  }
}

TEST(NormalizedStepEntropy, Examples) {
  EXPECT_DOUBLE_EQ(normalized_step_entropy(2.0, 4), 1.0);
  EXPECT_DOUBLE_EQ(normalized_step_entropy(0.0, 1), 0.0);
  EXPECT_DOUBLE_EQ(normalized_step_entropy(0.52706534100316161, 2), 0.52706534100316161);
  try {
    normalized_step_entropy(1.0, 0);
    FAIL();
  } catch (const MetricsError& e) {
    EXPECT_STREQ(e.what(), "invalid length");
  }
}

TEST(TokenEntropies, Examples) {
  auto h = token_entropies(std::vector<double>{0.5, 0.5}, records_from({0, 0}), TokenEntropyMode::Contribution);
  EXPECT_DOUBLE_EQ(h[0], 0.5);
  EXPECT_DOUBLE_EQ(h[1], 0.5);

  const auto p = step_softmax(std::vector<double>{2.0, 0.0});
  h = token_entropies(p, records_from({2, 0}), TokenEntropyMode::Contribution);
  EXPECT_NEAR(h[0], 0.16129016228541953, 1e-12);
  EXPECT_NEAR(h[1], 0.36577517871774209, 1e-12);
  EXPECT_NEAR(h[0] + h[1], step_entropy(p), 1e-12);

  h = token_entropies(std::vector<double>{0.5, 0.5}, records_from({0, 0}), TokenEntropyMode::Surprisal);
  EXPECT_DOUBLE_EQ(h[0], 1.0);
  EXPECT_DOUBLE_EQ(h[1], 1.0);
}

TEST(TokenEntropies, VocabTopK) {
  auto recs = records_from({-0.1, -0.3});
  try {
    token_entropies(std::vector<double>{0.5, 0.5}, recs, TokenEntropyMode::VocabTopK);
    FAIL();
  } catch (const MetricsError& e) {
    EXPECT_STREQ(e.what(), "alternatives unavailable");
  }
  recs[0].top_alternatives = std::vector<TokenAlternative>{{"a", std::log(0.5)}, {"b", std::log(0.5)}};
  recs[1].top_alternatives = std::vector<TokenAlternative>{{"a", std::log(0.3)}, {"b", std::log(0.3)},
                                                           {"c", std::log(0.3)}, {"d", std::log(0.1)}};
  const auto h = token_entropies(std::vector<double>{0.5, 0.5}, recs, TokenEntropyMode::VocabTopK);
  EXPECT_NEAR(h[0], 1.0, 1e-12);
  // renormalized [0.3, 0.3, 0.3, 0.1]
  const double expect = -3 * 0.3 * std::log2(0.3) - 0.1 * std::log2(0.1);
  EXPECT_NEAR(h[1], expect, 1e-12);
}

TEST(TokenEntropies, ContributionSumsToStepEntropy) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 64);
    const auto lp = random_logits(rng, n);
    const auto p = step_softmax(lp);
    const auto h = token_entropies(p, records_from(lp), TokenEntropyMode::Contribution);
    const double sum = std::accumulate(h.begin(), h.end(), 0.0);
    EXPECT_NEAR(sum, step_entropy(p), 1e-9);
  }
}

TEST(VarianceEntropy, Examples) {
  EXPECT_DOUBLE_EQ(variance_entropy(std::vector<double>{0.5, 0.5, 0.5}), 0.0);
  EXPECT_DOUBLE_EQ(variance_entropy(std::vector<double>{0.0, 2.0}), 1.0);
  // mean 0.2635485, deviations +-0.1022565
  EXPECT_NEAR(variance_entropy(std::vector<double>{0.161292, 0.365805}), 0.1022565 * 0.1022565, 1e-15);
  EXPECT_NEAR(variance_entropy(std::vector<double>{0.16129016228541953, 0.36577517871774209}),
              0.010453530486331807, 1e-15);
  try {
    variance_entropy(std::vector<double>{});
    FAIL();
  } catch (const MetricsError& e) {
    EXPECT_STREQ(e.what(), "empty step");
  }
}

TEST(VarianceEntropy, NonNegativeAndZeroIffConstant) {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 32);
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = u(rng);
    const double var = variance_entropy(v);
    EXPECT_GE(var, 0.0);
    const bool constant = std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; });
    EXPECT_EQ(var <= 1e-12, constant) << "n=" << n;
    std::vector<double> flat(v.size(), v[0]);
    EXPECT_LE(variance_entropy(flat), 1e-12);
  }
}

TEST(NormalizedVarianceEntropy, Examples) {
  EXPECT_DOUBLE_EQ(normalized_variance_entropy(1.0, 2), 1.0);
  EXPECT_DOUBLE_EQ(normalized_variance_entropy(0.0, 7), 0.0);
  EXPECT_DOUBLE_EQ(normalized_variance_entropy(0.010456, 2), 0.010456);
  EXPECT_DOUBLE_EQ(normalized_variance_entropy(0.5, 1), 0.0);
  EXPECT_THROW(normalized_variance_entropy(0.1, 0), MetricsError);
}

TEST(ComputeStepMetrics, Examples) {
  auto m = compute_step_metrics(records_from({-0.4, -0.4}));
  EXPECT_EQ(m.n, 2);
  EXPECT_DOUBLE_EQ(m.entropy_bits, 1.0);
  EXPECT_DOUBLE_EQ(m.normalized_entropy, 1.0);
  EXPECT_DOUBLE_EQ(m.variance_entropy, 0.0);

  m = compute_step_metrics(records_from({-1.3}));
  EXPECT_EQ(m.n, 1);
  EXPECT_EQ(m.entropy_bits, 0.0);
  EXPECT_EQ(m.normalized_entropy, 0.0);
  EXPECT_EQ(m.mean_token_entropy, 0.0);
  EXPECT_EQ(m.variance_entropy, 0.0);
  EXPECT_EQ(m.normalized_variance_entropy, 0.0);

  m = compute_step_metrics(records_from({-0.2, -1.6, -0.7}));
  EXPECT_NEAR(m.entropy_bits, 1.3948326457967769, 1e-12);
  EXPECT_NEAR(m.normalized_entropy, 0.88004141748598443, 1e-12);
  EXPECT_NEAR(m.mean_token_entropy, 0.4649442152655923, 1e-12);
  EXPECT_NEAR(m.variance_entropy, 0.0033923240843920666, 1e-14);
  EXPECT_NEAR(m.normalized_variance_entropy, 0.0021403181986000066, 1e-14);

  EXPECT_THROW(compute_step_metrics(std::vector<TokenRecord>{}), MetricsError);
}

TEST(ComputeStepMetrics, MatchesExtendedPrecisionOracle) {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 64);
    const auto lp = random_logits(rng, n, -15.0, 0.0);
    const auto m = compute_step_metrics(records_from(lp));
    const auto o = oracle::metrics(lp);
    ASSERT_EQ(m.n, n);
    EXPECT_TRUE(oracle::rel_close(m.entropy_bits, o.entropy, 1e-9));
    EXPECT_TRUE(oracle::rel_close(m.normalized_entropy, o.normalized_entropy, 1e-9));
    EXPECT_TRUE(oracle::rel_close(m.mean_token_entropy, o.mean_token_entropy, 1e-9));
    EXPECT_TRUE(oracle::rel_close(m.variance_entropy, o.variance, 1e-9))
        << m.variance_entropy << " vs " << oracle::to_double(o.variance);
    EXPECT_TRUE(oracle::rel_close(m.normalized_variance_entropy, o.normalized_variance, 1e-9));
  }
}

TEST(ComputeStepMetrics, SurprisalModeMatchesOracle) {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 40);
    const auto lp = random_logits(rng, n, -8.0, 0.0);
    const auto m = compute_step_metrics(records_from(lp), TokenEntropyMode::Surprisal);
    const auto o = oracle::metrics(lp, oracle::TokenMode::Surprisal);
    EXPECT_TRUE(oracle::rel_close(m.entropy_bits, o.entropy, 1e-9));
    EXPECT_TRUE(oracle::rel_close(m.mean_token_entropy, o.mean_token_entropy, 1e-9));
    EXPECT_TRUE(oracle::rel_close(m.variance_entropy, o.variance, 1e-9));
  }
}

TEST(ComputeStepMetrics, PermutationInvariance) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 64);
    auto lp = random_logits(rng, n);
    const auto a = compute_step_metrics(records_from(lp));
    std::shuffle(lp.begin(), lp.end(), rng);
    const auto b = compute_step_metrics(records_from(lp));
    EXPECT_NEAR(a.entropy_bits, b.entropy_bits, 1e-12);
    EXPECT_NEAR(a.normalized_entropy, b.normalized_entropy, 1e-12);
    EXPECT_NEAR(a.mean_token_entropy, b.mean_token_entropy, 1e-12);
    EXPECT_NEAR(a.variance_entropy, b.variance_entropy, 1e-12);
    EXPECT_NEAR(a.normalized_variance_entropy, b.normalized_variance_entropy, 1e-12);
  }
}

TEST(ComputeStepMetrics, MeanTimesLengthIsEntropy) {
  std::mt19937_64 rng(18);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 64);
    const auto m = compute_step_metrics(records_from(random_logits(rng, n)));
    if (n > 1) {
      EXPECT_NEAR(m.mean_token_entropy * n, m.entropy_bits, 1e-9);
    }
  }
}
