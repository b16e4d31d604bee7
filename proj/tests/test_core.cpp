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

#include "partsel/core.hpp"

#include <algorithm>
#include <cstdlib>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "partsel/data.hpp"

namespace partsel {
namespace {

TEST(Dataset, InternAssignsDenseStableIds) {
  Dataset d;
  const ItemId a = d.intern("alpha");
  const ItemId b = d.intern("beta");
  EXPECT_EQ(a, 0u);
  EXPECT_EQ(b, 1u);
  EXPECT_EQ(d.intern("alpha"), a);
  EXPECT_EQ(d.token(a), "alpha");
  EXPECT_EQ(d.find("beta"), std::optional<ItemId>(b));
  EXPECT_EQ(d.find("gamma"), std::nullopt);
  EXPECT_EQ(d.vocab_size(), 2u);
  EXPECT_EQ(d.token_hashes()[a], fnv1a64("alpha"));
}

TEST(DatasetSupport, EmptyDataset) {
  Dataset d;
  EXPECT_TRUE(dataset_support(d).empty());
}

TEST(DatasetSupport, UnionCollapsesDuplicates) {
  Dataset d;
  d.add_user("1", {d.intern("a"), d.intern("b")});
  d.add_user("2", {d.intern("b"), d.intern("c")});
  EXPECT_EQ(dataset_support(d).size(), 3u);
}

TEST(DatasetSupport, OrderIndependentAndIdempotent) {
  data::SyntheticSpec spec;
  spec.num_users = 200;
  spec.seed = 17;
  const Dataset d = data::generate_synthetic(spec);
  const std::vector<ItemId> support = dataset_support(d);
  EXPECT_EQ(support, dataset_support(d));

  // Rebuild with users permuted and each user's items shuffled; the support
  // (as tokens) must be unchanged.
  std::vector<std::size_t> order(d.user_count());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(3);
  std::shuffle(order.begin(), order.end(), shuffle_rng);
  Dataset permuted;
  for (std::size_t u : order) {
    std::vector<ItemId> items;
    for (ItemId id : d.items_of(u)) items.push_back(permuted.intern(d.token(id)));
    std::shuffle(items.begin(), items.end(), shuffle_rng);
    permuted.add_user(std::string(d.user_id(u)), std::move(items));
  }
  std::vector<std::string_view> tokens_a, tokens_b;
  for (ItemId id : support) tokens_a.push_back(d.token(id));
  for (ItemId id : dataset_support(permuted)) tokens_b.push_back(permuted.token(id));
  std::sort(tokens_a.begin(), tokens_a.end());
  std::sort(tokens_b.begin(), tokens_b.end());
  EXPECT_EQ(tokens_a, tokens_b);
}

// Optional check against a user-supplied corpus export; skipped unless the
// PARTSEL_REDDIT_PATH environment variable names a user_lines file.
TEST(DatasetSupport, RedditCorpusVocabulary) {
  const char* path = std::getenv("PARTSEL_REDDIT_PATH");
  if (!path) GTEST_SKIP() << "set PARTSEL_REDDIT_PATH to run";
  const Dataset d = data::load_dataset(path, data::Format::kUserLines);
  EXPECT_EQ(d.user_count(), 223388u);
  EXPECT_EQ(d.observation_count(), 373983u);
  EXPECT_EQ(dataset_support(d).size(), 155701u);
}

TEST(WeightedHistogram, MergeOrderInsensitiveWithinTolerance) {
  // Sums of the same local histograms in shuffled orders agree per entry.
  constexpr std::size_t kVocab = 512;
  constexpr int kLocals = 8;
  std::vector<WeightedHistogram> locals;
  CounterRng rng(55);
  for (int l = 0; l < kLocals; ++l) {
    WeightedHistogram h(kVocab);
    for (std::size_t i = 0; i < kVocab; ++i)
      h.add(static_cast<ItemId>(i), rng.next_unit() * 100.0);
    locals.push_back(std::move(h));
  }
  const auto merged_in = [&](const std::vector<int>& order) {
    WeightedHistogram total(kVocab);
    for (int l : order) total.merge(locals[static_cast<std::size_t>(l)]);
    return total;
  };
  std::vector<int> order(kLocals);
  std::iota(order.begin(), order.end(), 0);
  const WeightedHistogram reference = merged_in(order);
  std::mt19937_64 shuffle_rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const WeightedHistogram shuffled = merged_in(order);
    for (std::size_t i = 0; i < kVocab; ++i)
      EXPECT_NEAR(shuffled.weight(static_cast<ItemId>(i)),
                  reference.weight(static_cast<ItemId>(i)), 1e-9);
  }
}

TEST(WeightedHistogram, SupportSkipsZeroEntries) {
  WeightedHistogram h(4);
  h.add(1, 0.5);
  h.add(3, 2.0);
  EXPECT_EQ(h.support_size(), 2u);
  std::vector<ItemId> seen;
  h.for_each_support([&](ItemId id, double) { seen.push_back(id); });
  EXPECT_EQ(seen, (std::vector<ItemId>{1, 3}));
}

}  // namespace
}  // namespace partsel
