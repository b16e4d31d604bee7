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

#pragma once

#include <algorithm>
#include <unordered_set>
#include <utility>
#include <vector>

#include "partsel/core.hpp"
#include "partsel/rng.hpp"

namespace partsel::mechanisms {

/// Epoch-stamped membership marks over a dense id space. Lets a tight loop
/// dedup one user after another without clearing anything between users.
class DedupScratch {
 public:
  void ensure(std::size_t vocab_size) {
    if (stamps_.size() < vocab_size) stamps_.resize(vocab_size, 0);
  }

  void next_user() {
    if (++epoch_ == 0) {
      std::fill(stamps_.begin(), stamps_.end(), 0);
      epoch_ = 1;
    }
  }

  /// Marks id for the current user; false if already marked.
  bool mark(ItemId id) {
    if (stamps_[id] == epoch_) return false;
    stamps_[id] = epoch_;
    return true;
  }

 private:
  std::vector<std::uint32_t> stamps_;
  std::uint32_t epoch_ = 0;
};

namespace detail {

// Keeps a uniform random subset of exactly delta0 entries (partial
// Fisher-Yates), preserving nothing about the original order.
inline void truncate_uniform(std::vector<ItemId>& items, int delta0,
                             CounterRng& rng) {
  const auto n = items.size();
  if (n <= static_cast<std::size_t>(delta0)) return;
  for (int i = 0; i < delta0; ++i) {
    const std::size_t j = i + rng.next_below(n - i);
    std::swap(items[i], items[j]);
  }
  items.resize(static_cast<std::size_t>(delta0));
}

}  // namespace detail

/// Per-user preprocessing: optionally remove duplicates (keeping first
/// occurrences in order), then uniformly sample at most delta0 of the
/// remaining items. Scratch must be sized to the id space.
inline void preprocess_user_into(std::span<const ItemId> items, int delta0,
                                 bool dedup, CounterRng& rng,
                                 DedupScratch& scratch,
                                 std::vector<ItemId>& out) {
  out.clear();
  if (dedup) {
    scratch.next_user();
    for (ItemId id : items)
      if (scratch.mark(id)) out.push_back(id);
  } else {
    out.assign(items.begin(), items.end());
  }
  detail::truncate_uniform(out, delta0, rng);
}

/// Convenience form for call sites without a scratch.
inline std::vector<ItemId> preprocess_user(std::span<const ItemId> items,
                                           int delta0, CounterRng& rng,
                                           bool dedup = true) {
  std::vector<ItemId> out;
  if (dedup) {
    std::unordered_set<ItemId> seen;
    for (ItemId id : items)
      if (seen.insert(id).second) out.push_back(id);
  } else {
    out.assign(items.begin(), items.end());
  }
  detail::truncate_uniform(out, delta0, rng);
  return out;
}

}  // namespace partsel::mechanisms
