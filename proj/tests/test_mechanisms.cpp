// Copyright 2026 The partsel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "partsel/mechanisms.hpp"

#include <algorithm>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "partsel/data.hpp"

namespace partsel::mechanisms {
namespace {

Dataset identical_users(int count, const std::vector<std::string>& tokens) {
  Dataset d;
  for (int u = 0; u < count; ++u) {
    std::vector<ItemId> items;
    for (const std::string& t : tokens) items.push_back(d.intern(t));
    d.add_user(std::to_string(u + 1), std::move(items));
  }
  return d;
}

bool is_subset_of_support(const ReleaseResult& result, const Dataset& d) {
  const std::vector<ItemId> support = dataset_support(d);
  return std::includes(support.begin(), support.end(), result.released.begin(),
                       result.released.end());
}

std::int64_t count_sum(const ReleaseResult& r) {
  std::int64_t sum = 0;
  for (std::int64_t c : r.per_iteration_counts) sum += c;
  return sum;
}

// ---------------------------------------------------------------------------
// Weighted Gaussian
// ---------------------------------------------------------------------------

TEST(WeightedGaussian, EmptyDatasetReleasesNothing) {
  Dataset d;
  MechanismConfig cfg;
  cfg.delta0 = 3;
  const ReleaseResult r = weighted_gaussian(d, {0.1, 1e-5}, cfg);
  EXPECT_TRUE(r.released.empty());
  EXPECT_EQ(count_sum(r), 0);
  EXPECT_EQ(r.engine_stages, 2);
}

TEST(WeightedGaussian, WeightAtThresholdReleasesHalfTheTime) {
  // One user, one item, delta = 1/2, enormous budget: the weight is exactly
  // 1 and the threshold is exactly 1, so the release is a fair coin.
  const Dataset d = identical_users(1, {"a"});
  const PrivacyBudget budget{1e8, 0.5};
  int released_runs = 0;
  for (int seed = 0; seed < 10000; ++seed) {
    MechanismConfig cfg;
    cfg.delta0 = 1;
    cfg.seed = static_cast<std::uint64_t>(seed);
    released_runs += !weighted_gaussian(d, budget, cfg).released.empty();
  }
  EXPECT_NEAR(released_runs / 10000.0, 0.5, 0.02);
}

TEST(WeightedGaussian, ReleasesSubsetOfSupportAndIsDeterministic) {
  data::SyntheticSpec spec;
  spec.num_users = 3000;
  spec.seed = 41;
  const Dataset d = data::generate_synthetic(spec);
  MechanismConfig cfg;
  cfg.delta0 = 20;
  cfg.seed = 6;
  const ReleaseResult a = weighted_gaussian(d, {0.5, 1e-3}, cfg);
  const ReleaseResult b = weighted_gaussian(d, {0.5, 1e-3}, cfg);
  EXPECT_FALSE(a.released.empty());
  EXPECT_TRUE(is_subset_of_support(a, d));
  EXPECT_EQ(a.released, b.released);
  cfg.workers = 4;
  EXPECT_EQ(weighted_gaussian(d, {0.5, 1e-3}, cfg).released, a.released);
}

TEST(WeightedGaussian, InvariantUnderUserPermutation) {
  data::SyntheticSpec spec;
  spec.num_users = 1000;
  spec.seed = 42;
  const Dataset d = data::generate_synthetic(spec);
  std::vector<std::size_t> order(d.user_count());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(12);
  std::shuffle(order.begin(), order.end(), shuffle_rng);
  Dataset permuted;
  for (std::size_t u : order) {
    std::vector<ItemId> items;
    for (ItemId id : d.items_of(u)) items.push_back(permuted.intern(d.token(id)));
    permuted.add_user(std::string(d.user_id(u)), std::move(items));
  }
  MechanismConfig cfg;
  cfg.delta0 = 30;
  cfg.seed = 9;
  const ReleaseResult a = weighted_gaussian(d, {0.5, 1e-3}, cfg);
  const ReleaseResult b = weighted_gaussian(permuted, {0.5, 1e-3}, cfg);
  std::set<std::string_view> tokens_a, tokens_b;
  for (ItemId id : a.released) tokens_a.insert(d.token(id));
  for (ItemId id : b.released) tokens_b.insert(permuted.token(id));
  EXPECT_FALSE(tokens_a.empty());
  EXPECT_EQ(tokens_a, tokens_b);
}

TEST(WeightedGaussian, RejectsInvalidParameters) {
  const Dataset d = identical_users(2, {"a"});
  MechanismConfig cfg;
  EXPECT_THROW(weighted_gaussian(d, {0.0, 1e-5}, cfg), std::invalid_argument);
  EXPECT_THROW(weighted_gaussian(d, {0.1, 0.0}, cfg), std::invalid_argument);
  EXPECT_THROW(weighted_gaussian(d, {0.1, 1.0}, cfg), std::invalid_argument);
  cfg.delta0 = 0;
  EXPECT_THROW(weighted_gaussian(d, {0.1, 1e-5}, cfg), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Iterative mechanism
// ---------------------------------------------------------------------------

TEST(DpSips, OneIterationIsExactlyWeightedGaussian) {
  data::SyntheticSpec spec;
  spec.num_users = 1500;
  spec.seed = 51;
  const Dataset d = data::generate_synthetic(spec);
  MechanismConfig cfg;
  cfg.delta0 = 10;
  cfg.iterations = 1;
  cfg.ratio = 0.7;
  cfg.seed = 13;
  const auto [sips_result, trace] = dp_sips(d, {0.2, 1e-4}, cfg);
  const ReleaseResult wg = weighted_gaussian(d, {0.2, 1e-4}, cfg);
  EXPECT_EQ(sips_result.released, wg.released);
  EXPECT_EQ(sips_result.per_iteration_counts, wg.per_iteration_counts);
  EXPECT_EQ(sips_result.engine_stages, 2);
  ASSERT_EQ(trace.iterations.size(), 1u);
  EXPECT_DOUBLE_EQ(trace.iterations[0].budget.rho, 0.2);
}

TEST(DpSips, RemovalEmptiesSecondIteration) {
  // Every user holds only the shared item, which the huge first-iteration
  // budget certainly releases; the second iteration then sees empty lists.
  const Dataset d = identical_users(30, {"hot"});
  MechanismConfig cfg;
  cfg.delta0 = 1;
  cfg.iterations = 2;
  cfg.ratio = 1.0;
  cfg.seed = 77;
  const auto [result, trace] = dp_sips(d, {1e8, 0.5}, cfg);
  EXPECT_EQ(result.per_iteration_counts, (std::vector<std::int64_t>{1, 0}));
  EXPECT_EQ(result.released.size(), 1u);
  ASSERT_EQ(trace.iterations.size(), 2u);
  EXPECT_EQ(trace.iterations[0].support_size, 1u);
  EXPECT_EQ(trace.iterations[1].support_size, 0u);
  EXPECT_EQ(result.engine_stages, 5);  // 2 + join + 2
}

TEST(DpSips, IterationReleasesAreDisjointAndSumUp) {
  data::SyntheticSpec spec;
  spec.num_users = 4000;
  spec.seed = 61;
  const Dataset d = data::generate_synthetic(spec);
  MechanismConfig cfg;
  cfg.delta0 = 50;
  cfg.iterations = 3;
  cfg.ratio = 1.0 / 3.0;
  cfg.seed = 3;
  const auto [result, trace] = dp_sips(d, {0.5, 1e-3}, cfg);
  EXPECT_TRUE(is_subset_of_support(result, d));
  EXPECT_EQ(count_sum(result), static_cast<std::int64_t>(result.released.size()));
  // released is sorted; disjointness across iterations means no duplicates.
  EXPECT_TRUE(std::adjacent_find(result.released.begin(),
                                 result.released.end()) ==
              result.released.end());
  EXPECT_EQ(result.engine_stages, 8);
  ASSERT_EQ(trace.iterations.size(), 3u);
  EXPECT_LT(trace.iterations[0].budget.rho, trace.iterations[2].budget.rho);
}

TEST(DpSips, DeterministicAcrossWorkerCounts) {
  data::SyntheticSpec spec;
  spec.num_users = 2000;
  spec.seed = 71;
  const Dataset d = data::generate_synthetic(spec);
  MechanismConfig cfg;
  cfg.delta0 = 25;
  cfg.iterations = 3;
  cfg.ratio = 1.0 / 3.0;
  cfg.seed = 8;
  cfg.workers = 1;
  const auto reference = dp_sips(d, {0.5, 1e-3}, cfg).first.released;
  EXPECT_FALSE(reference.empty());
  for (int workers : {2, 4, 8}) {
    cfg.workers = workers;
    EXPECT_EQ(dp_sips(d, {0.5, 1e-3}, cfg).first.released, reference);
  }
}

// ---------------------------------------------------------------------------
// Policy gaussian (DPSU)
// ---------------------------------------------------------------------------

TEST(PolicyGaussian, FirstUserFundsSingleItemToExactlyOne) {
  // With T* > 1 the one-item gap vector has norm T* > 1, so the funded
  // amount is exactly 1; the probe sees a unit l2 update.
  const Dataset d = identical_users(1, {"a"});
  MechanismConfig cfg;
  cfg.delta0 = 1;
  cfg.seed = 4;
  MechanismProbe probe;
  dpsu_policy_gaussian(d, {0.1, 1e-5}, cfg, &probe);
  EXPECT_NEAR(probe.max_update_l2, 1.0, 1e-12);
}

TEST(PolicyGaussian, SaturatedItemsReceiveNothing) {
  // delta = 1/2 and a huge budget make T = 1 exactly; with a zero buffer the
  // first user funds the item to T* = T = 1 and every later user sees zero
  // gap and contributes nothing, so the noisy release stays a fair coin no
  // matter how many identical users follow.
  for (int users : {1, 2, 5}) {
    const Dataset d = identical_users(users, {"a"});
    int released_runs = 0;
    for (int seed = 0; seed < 10000; ++seed) {
      MechanismConfig cfg;
      cfg.delta0 = 1;
      cfg.seed = static_cast<std::uint64_t>(seed);
      cfg.threshold_buffer = 0.0;
      released_runs +=
          !dpsu_policy_gaussian(d, {1e8, 0.5}, cfg).released.empty();
    }
    EXPECT_NEAR(released_runs / 10000.0, 0.5, 0.02) << "users=" << users;
  }
}

TEST(PolicyGaussian, BufferedItemSurvivesNoiseMoreOften) {
  // With the default one-sigma buffer a second user tops the item up from 1
  // to T* = T + sigma, lifting the release rate from 1/2 to Phi(1).
  const Dataset d = identical_users(2, {"a"});
  int released_runs = 0;
  for (int seed = 0; seed < 10000; ++seed) {
    MechanismConfig cfg;
    cfg.delta0 = 1;
    cfg.seed = static_cast<std::uint64_t>(seed);
    released_runs +=
        !dpsu_policy_gaussian(d, {1e8, 0.5}, cfg).released.empty();
  }
  EXPECT_NEAR(released_runs / 10000.0, 0.8413, 0.02);
}

TEST(PolicyGaussian, UnitUpdateNormBound) {
  data::SyntheticSpec spec;
  spec.num_users = 5000;
  spec.seed = 81;
  const Dataset d = data::generate_synthetic(spec);
  for (PolicyAllocation allocation :
       {PolicyAllocation::kWaterFill, PolicyAllocation::kProportional}) {
    MechanismConfig cfg;
    cfg.delta0 = 40;
    cfg.seed = 15;
    cfg.dpsu_allocation = allocation;
    MechanismProbe probe;
    const ReleaseResult r = dpsu_policy_gaussian(d, {0.1, 1e-5}, cfg, &probe);
    EXPECT_TRUE(is_subset_of_support(r, d));
    EXPECT_LE(probe.max_update_l2, 1.0 + 1e-12);
    EXPECT_GT(probe.max_update_l2, 0.0);
  }
}

TEST(PolicyGaussian, WaterfillLevelClosesSmallGapsFirst) {
  // Gaps (0.1, 0.2, 3.0) with unit budget: the small gaps are funded in
  // full and the rest tops up to sqrt(1 - 0.01 - 0.04).
  const std::vector<double> gaps = {0.1, 0.2, 3.0};
  const double level = detail::waterfill_level(gaps);
  EXPECT_NEAR(level, std::sqrt(1.0 - 0.01 - 0.04), 1e-12);
  const double spent_sq = 0.01 + 0.04 + level * level;
  EXPECT_NEAR(spent_sq, 1.0, 1e-12);
}

// ---------------------------------------------------------------------------
// Greedy frequency mechanism (GW)
// ---------------------------------------------------------------------------

TEST(GreedyFundUser, HandTraceWithLowBufferedThreshold) {
  // Items {a, a, b} against an empty histogram with T* = 0.4: a gets 0.4,
  // b gets 0.4, and the loop stops with 0.2 budget left and nothing below
  // the buffered threshold.
  WeightedHistogram hist(2);
  const std::vector<std::pair<std::uint32_t, ItemId>> candidates = {
      {2, 0},  // a, frequency 2
      {1, 1},  // b
  };
  const double spent = detail::greedy_fund_user(hist, candidates, 0.4);
  EXPECT_DOUBLE_EQ(hist.weight(0), 0.4);
  EXPECT_DOUBLE_EQ(hist.weight(1), 0.4);
  EXPECT_DOUBLE_EQ(spent, 0.8);
}

TEST(GreedyFundUser, TerminatesWithBudgetLeftWhenEverythingIsSaturated) {
  WeightedHistogram hist(2);
  hist.add(0, 5.0);
  hist.add(1, 5.0);
  const std::vector<std::pair<std::uint32_t, ItemId>> candidates = {{3, 0},
                                                                    {1, 1}};
  EXPECT_DOUBLE_EQ(detail::greedy_fund_user(hist, candidates, 5.0), 0.0);
  EXPECT_DOUBLE_EQ(hist.weight(0), 5.0);
}

TEST(GreedyFundUser, MostFrequentFirst) {
  WeightedHistogram hist(2);
  const std::vector<std::pair<std::uint32_t, ItemId>> candidates = {
      {5, 1},  // most frequent, higher id
      {2, 0},
  };
  detail::greedy_fund_user(hist, candidates, 10.0);
  EXPECT_DOUBLE_EQ(hist.weight(1), 1.0);  // unit budget all spent on it
  EXPECT_DOUBLE_EQ(hist.weight(0), 0.0);
}

TEST(GwThreshold, ScansContributionCounts) {
  const ApproxDpParams dp{1.7, 8.1142e-5};
  double expected = -1e300;
  for (int k = 1; k <= 100; ++k)
    expected = std::max(expected,
                        1.0 / k + std::log(k / (2.0 * dp.delta_dp)) / dp.epsilon);
  EXPECT_DOUBLE_EQ(gw_release_threshold(dp, 100), expected);
  EXPECT_THROW(gw_release_threshold({0.0, 1e-5}, 10), std::invalid_argument);
  EXPECT_THROW(gw_release_threshold({1.0, 0.0}, 10), std::invalid_argument);
}

TEST(GwGreedy, FrequencyTruncationDropsRareItems) {
  // Each user holds a twice, b twice, c once; with delta0 = 2 the frequency
  // truncation always keeps {a, b}, so c's histogram weight stays zero and
  // it is (essentially) never released.
  Dataset d;
  for (int u = 0; u < 12; ++u) {
    std::vector<ItemId> items = {d.intern("a"), d.intern("b"), d.intern("a"),
                                 d.intern("c"), d.intern("b")};
    d.add_user(std::to_string(u + 1), std::move(items));
  }
  const ItemId c = *d.find("c");
  const ApproxDpParams dp{1.7, 1e-5};
  for (int seed = 0; seed < 100; ++seed) {
    MechanismConfig cfg;
    cfg.delta0 = 2;
    cfg.seed = static_cast<std::uint64_t>(seed);
    const ReleaseResult r = gw_greedy(d, dp, cfg);
    EXPECT_TRUE(is_subset_of_support(r, d));
    EXPECT_FALSE(std::binary_search(r.released.begin(), r.released.end(), c));
  }
}

TEST(GwGreedy, UnitL1Bound) {
  data::SyntheticSpec spec;
  spec.num_users = 5000;
  spec.seed = 91;
  const Dataset d = data::generate_synthetic(spec);
  for (bool frequency : {true, false}) {
    MechanismConfig cfg;
    cfg.delta0 = 40;
    cfg.seed = 5;
    cfg.gw_frequency_truncation = frequency;
    MechanismProbe probe;
    const ReleaseResult r = gw_greedy(d, {1.7, 8.1142e-5}, cfg, &probe);
    EXPECT_TRUE(is_subset_of_support(r, d));
    EXPECT_LE(probe.max_user_l1, 1.0 + 1e-12);
    EXPECT_GT(probe.max_user_l1, 0.0);
  }
}

TEST(GwGreedy, DeterministicGivenSeed) {
  data::SyntheticSpec spec;
  spec.num_users = 2000;
  spec.seed = 95;
  const Dataset d = data::generate_synthetic(spec);
  MechanismConfig cfg;
  cfg.delta0 = 20;
  cfg.seed = 31;
  const ReleaseResult a = gw_greedy(d, {2.0, 1e-4}, cfg);
  EXPECT_EQ(gw_greedy(d, {2.0, 1e-4}, cfg).released, a.released);
}

// ---------------------------------------------------------------------------
// Cross-mechanism properties
// ---------------------------------------------------------------------------

TEST(Mechanisms, AllReleaseSubsetsOfSupport) {
  data::SyntheticSpec spec;
  spec.num_users = 2000;
  spec.seed = 99;
  const Dataset d = data::generate_synthetic(spec);
  MechanismConfig cfg;
  cfg.delta0 = 30;
  cfg.iterations = 2;
  cfg.ratio = 0.5;
  cfg.seed = 1;
  const PrivacyBudget budget{0.5, 1e-3};
  EXPECT_TRUE(is_subset_of_support(weighted_gaussian(d, budget, cfg), d));
  EXPECT_TRUE(is_subset_of_support(dp_sips(d, budget, cfg).first, d));
  EXPECT_TRUE(is_subset_of_support(dpsu_policy_gaussian(d, budget, cfg), d));
  EXPECT_TRUE(is_subset_of_support(gw_greedy(d, {2.0, 1e-4}, cfg), d));
}

TEST(IteratedPolicyGaussian, RunsBehindExperimentalSurface) {
  data::SyntheticSpec spec;
  spec.num_users = 1000;
  spec.seed = 23;
  const Dataset d = data::generate_synthetic(spec);
  MechanismConfig cfg;
  cfg.delta0 = 20;
  cfg.iterations = 3;
  cfg.ratio = 1.0 / 3.0;
  cfg.seed = 2;
  const auto [result, trace] = experimental::iterated_dpsu(d, {0.5, 1e-3}, cfg);
  EXPECT_TRUE(is_subset_of_support(result, d));
  EXPECT_EQ(count_sum(result), static_cast<std::int64_t>(result.released.size()));
  EXPECT_EQ(trace.iterations.size(), 3u);
  EXPECT_EQ(result.engine_stages, 0);
}

TEST(ConfigWarnings, FlagsUndefinedUtilityRegime) {
  const Dataset d = identical_users(3, {"a", "b"});
  MechanismConfig cfg;
  cfg.delta0 = 100;
  EXPECT_FALSE(config_warnings(d, {0.1, 0.95}, cfg).empty());
  EXPECT_TRUE(config_warnings(d, {0.1, 1e-5}, cfg).empty());
  cfg.delta0 = 2;
  EXPECT_TRUE(config_warnings(d, {0.1, 0.95}, cfg).empty());
}

}  // namespace
}  // namespace partsel::mechanisms
