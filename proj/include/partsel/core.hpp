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

#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "partsel/rng.hpp"

namespace partsel {

/// Dense handle for an interned item token. Ids are assigned in first-intern
/// order and define the total item order used for deterministic tie-breaking.
using ItemId = std::uint32_t;

/// Error raised by dataset loading/writing (unreadable files, bad rows).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// DataError with a 1-based source line attached.
struct ParseError : DataError {
  ParseError(const std::string& message, std::size_t line)
      : DataError(message + " (line " + std::to_string(line) + ")"),
        line_number(line) {}
  std::size_t line_number;
};

/// A collection of per-user item lists. Items are interned to dense integer
/// ids so histograms index by integer; token bytes stay available for output
/// and for the stable hashes that key noise streams. Instances are built by
/// loaders or the synthetic generator and treated as immutable afterwards;
/// const access is safe to share across threads.
class Dataset {
 public:
  Dataset() = default;

  /// Returns the id for `token`, interning it on first sight.
  ItemId intern(std::string_view token) {
    if (auto it = index_.find(token); it != index_.end()) return it->second;
    if (tokens_.size() > std::numeric_limits<ItemId>::max())
      throw std::length_error("dataset vocabulary exceeds ItemId range");
    tokens_.emplace_back(token);
    token_hashes_.push_back(fnv1a64(token));
    const ItemId id = static_cast<ItemId>(tokens_.size() - 1);
    index_.emplace(tokens_.back(), id);
    return id;
  }

  std::optional<ItemId> find(std::string_view token) const {
    if (auto it = index_.find(token); it != index_.end()) return it->second;
    return std::nullopt;
  }

  /// Appends a user record. Caller guarantees user_id uniqueness.
  void add_user(std::string user_id, std::vector<ItemId> items) {
    user_hashes_.push_back(fnv1a64(user_id));
    user_ids_.push_back(std::move(user_id));
    items_.insert(items_.end(), items.begin(), items.end());
    offsets_.push_back(items_.size());
  }

  std::size_t user_count() const { return user_ids_.size(); }
  std::size_t vocab_size() const { return tokens_.size(); }
  std::size_t observation_count() const { return items_.size(); }

  std::string_view token(ItemId id) const { return tokens_[id]; }
  std::string_view user_id(std::size_t user) const { return user_ids_[user]; }
  std::uint64_t user_hash(std::size_t user) const { return user_hashes_[user]; }

  std::span<const ItemId> items_of(std::size_t user) const {
    const std::size_t begin = user == 0 ? 0 : offsets_[user - 1];
    return {items_.data() + begin, offsets_[user] - begin};
  }

  /// Stable per-id token hashes, indexed by ItemId.
  std::span<const std::uint64_t> token_hashes() const {
    return {token_hashes_.data(), token_hashes_.size()};
  }

 private:
  std::deque<std::string> tokens_;  // stable addresses for the index views
  std::vector<std::uint64_t> token_hashes_;
  std::unordered_map<std::string_view, ItemId> index_;
  std::vector<std::string> user_ids_;
  std::vector<std::uint64_t> user_hashes_;
  std::vector<ItemId> items_;
  std::vector<std::size_t> offsets_;
};

/// Item -> weight map over a dataset's vocabulary, stored dense. The
/// histogram's support is the set of ids with weight > 0.
class WeightedHistogram {
 public:
  WeightedHistogram() = default;
  explicit WeightedHistogram(std::size_t vocab_size) : weights_(vocab_size, 0.0) {}

  void add(ItemId id, double weight) { weights_[id] += weight; }
  double weight(ItemId id) const { return weights_[id]; }
  std::size_t size() const { return weights_.size(); }

  /// Elementwise sum with another histogram over the same vocabulary.
  void merge(const WeightedHistogram& other) {
    for (std::size_t i = 0; i < weights_.size(); ++i)
      weights_[i] += other.weights_[i];
  }

  std::size_t support_size() const {
    std::size_t n = 0;
    for (double w : weights_) n += (w > 0.0);
    return n;
  }

  template <class Fn>  // Fn(ItemId, double)
  void for_each_support(Fn&& fn) const {
    for (std::size_t i = 0; i < weights_.size(); ++i)
      if (weights_[i] > 0.0) fn(static_cast<ItemId>(i), weights_[i]);
  }

 private:
  std::vector<double> weights_;
};

/// (rho, delta) of delta-approximate rho-zCDP.
struct PrivacyBudget {
  double rho = 0.0;
  double delta = 0.0;
};

/// (epsilon, delta) of approximate differential privacy.
struct ApproxDpParams {
  double epsilon = 0.0;
  double delta_dp = 0.0;
};

/// Allocation rule for the policy-gaussian histogram update. Water-filling
/// tops up the smallest gaps to a common level under the unit l2 budget
/// (the behavior of the original policy mechanism); proportional splits the
/// budget in proportion to the gaps.
enum class PolicyAllocation { kWaterFill, kProportional };

/// Mechanism hyperparameters shared by all mechanisms.
struct MechanismConfig {
  /// Maximum number of distinct items one user contributes to a histogram.
  int delta0 = 100;
  /// Iteration count for the iterated mechanisms.
  int iterations = 1;
  /// Budget allocation factor between consecutive iterations.
  double ratio = 1.0 / 3.0;
  /// Root seed; every random stream in a run derives from it.
  std::uint64_t seed = 0;
  /// Worker threads for the parallel engine; 0 means the engine default.
  int workers = 0;
  /// Override for the buffered-threshold margin; defaults to one noise
  /// standard deviation (policy mechanisms) when unset.
  std::optional<double> threshold_buffer;
  /// Keep the highest-frequency items when truncating for the greedy
  /// frequency mechanism; false selects uniformly instead.
  bool gw_frequency_truncation = true;
  /// Policy-gaussian allocation rule.
  PolicyAllocation dpsu_allocation = PolicyAllocation::kWaterFill;
};

/// Output of one mechanism run. `released` holds ids into the input
/// dataset's vocabulary, sorted ascending.
struct ReleaseResult {
  std::vector<ItemId> released;
  std::vector<std::int64_t> per_iteration_counts;
  std::int64_t elapsed_ms = 0;
  int engine_stages = 0;
};

/// Exact union of all items across all users, sorted by id. Idempotent and
/// invariant under user or item permutation.
inline std::vector<ItemId> dataset_support(const Dataset& d) {
  std::vector<bool> seen(d.vocab_size(), false);
  for (std::size_t u = 0; u < d.user_count(); ++u)
    for (ItemId id : d.items_of(u)) seen[id] = true;
  std::vector<ItemId> support;
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (seen[i]) support.push_back(static_cast<ItemId>(i));
  return support;
}

}  // namespace partsel
