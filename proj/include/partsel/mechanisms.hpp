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
#include <chrono>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "partsel/accounting.hpp"
#include "partsel/core.hpp"
#include "partsel/engine.hpp"
#include "partsel/noise.hpp"
#include "partsel/preprocess.hpp"
#include "partsel/rng.hpp"

namespace partsel::mechanisms {

/// Release cutoff plus the margin at which greedy policies stop funding an
/// item: anything at base + buffer survives noising with high probability.
struct BufferedThreshold {
  accounting::Threshold base;
  double buffer = 0.0;
  double effective() const { return base.value + buffer; }
};

/// Per-iteration diagnostics of an iterated run.
struct IterationRecord {
  PrivacyBudget budget;
  double threshold = 0.0;
  std::int64_t released_count = 0;
  std::size_t support_size = 0;
};

struct IterationTrace {
  std::vector<IterationRecord> iterations;
};

/// Optional observer for the per-user sensitivity bounds maintained by the
/// sequential mechanisms.
struct MechanismProbe {
  double max_update_l2 = 0.0;  // largest single-user l2 update (policy gaussian)
  double max_user_l1 = 0.0;    // largest single-user total weight (greedy)
};

// Stream-purpose words; all randomness in a run derives from
// (seed, mechanism, iteration, purpose, entity).
inline constexpr std::uint64_t kStreamWeightedGaussian = 0x77676175;
inline constexpr std::uint64_t kStreamPolicyGaussian = 0x64707375;
inline constexpr std::uint64_t kStreamGreedy = 0x67772020;
inline constexpr std::uint64_t kPurposeUserSample = 1;
inline constexpr std::uint64_t kPurposeItemNoise = 2;

inline std::uint64_t mechanism_stream(std::uint64_t seed, std::uint64_t mech,
                                      std::uint64_t iteration,
                                      std::uint64_t purpose) {
  return derive_key(derive_key(derive_key(seed, mech), iteration), purpose);
}

namespace detail {

inline void validate_zcdp_inputs(const PrivacyBudget& budget,
                                 const MechanismConfig& cfg) {
  if (!(budget.rho > 0.0))
    throw std::invalid_argument("mechanism: rho must be positive");
  if (!(budget.delta > 0.0 && budget.delta < 1.0))
    throw std::invalid_argument("mechanism: delta must lie in (0, 1)");
  if (cfg.delta0 < 1)
    throw std::invalid_argument("mechanism: delta0 must be >= 1");
}

struct PassResult {
  std::vector<ItemId> released;
  double threshold = 0.0;
  std::size_t support_size = 0;
};

// One weighted-histogram release: dedup + uniform truncation to delta0,
// per-item weight 1/sqrt(|W|), Gaussian noise N(0, 1/(2 rho)), threshold.
inline PassResult weighted_gaussian_pass(
    std::span<const engine::UserView> users, std::size_t vocab_size,
    std::span<const std::uint64_t> item_hashes, const PrivacyBudget& budget,
    const MechanismConfig& cfg, std::uint64_t iteration,
    engine::StageCounter& stages) {
  const accounting::Threshold threshold =
      accounting::release_threshold(budget, cfg.delta0);
  const double sigma = accounting::gaussian_sigma(budget, 1.0).sigma;
  const engine::HistogramJob job{
      cfg.delta0, /*dedup=*/true,
      mechanism_stream(cfg.seed, kStreamWeightedGaussian, iteration,
                       kPurposeUserSample),
      cfg.workers};
  const WeightedHistogram hist = engine::parallel_histogram(
      users, vocab_size, job,
      [](std::size_t m) { return 1.0 / std::sqrt(static_cast<double>(m)); },
      &stages);
  std::vector<ItemId> released = engine::parallel_noise_threshold(
      hist, GaussianNoise{sigma}, threshold.value,
      mechanism_stream(cfg.seed, kStreamWeightedGaussian, iteration,
                       kPurposeItemNoise),
      item_hashes, cfg.workers);
  return {std::move(released), threshold.value, hist.support_size()};
}

// Common top-up level nu with sum_i min(g_i, nu)^2 == 1, for sorted
// ascending gaps with sum of squares > 1.
inline double waterfill_level(std::span<const double> sorted_gaps) {
  const std::size_t m = sorted_gaps.size();
  double funded_sq = 0.0;  // squares of gaps funded in full
  for (std::size_t j = 0; j < m; ++j) {
    const double level =
        std::sqrt((1.0 - funded_sq) / static_cast<double>(m - j));
    if (level <= sorted_gaps[j]) return level;
    funded_sq += sorted_gaps[j] * sorted_gaps[j];
  }
  return sorted_gaps.back();
}

// Sequential policy-gaussian histogram pass. Each user funds the gaps of its
// items below the buffered threshold with an update of l2 norm at most 1:
// under water-filling the smallest gaps are closed in full and the rest are
// topped up to a common level; under the proportional rule the budget is
// split in proportion to the gaps. Items at or above T* get nothing. The
// usual noise-and-threshold release follows.
inline PassResult policy_gaussian_pass(std::span<const engine::UserView> users,
                                       std::size_t vocab_size,
                                       std::span<const std::uint64_t> item_hashes,
                                       const PrivacyBudget& budget,
                                       const MechanismConfig& cfg,
                                       std::uint64_t iteration,
                                       MechanismProbe* probe) {
  const accounting::Threshold threshold =
      accounting::release_threshold(budget, cfg.delta0);
  const double sigma = accounting::gaussian_sigma(budget, 1.0).sigma;
  const BufferedThreshold buffered{threshold,
                                   cfg.threshold_buffer.value_or(sigma)};
  const double t_star = buffered.effective();

  WeightedHistogram hist(vocab_size);
  DedupScratch scratch;
  scratch.ensure(vocab_size);
  std::vector<ItemId> kept;
  std::vector<double> gaps;
  std::vector<double> sorted;
  const std::uint64_t sample_stream = mechanism_stream(
      cfg.seed, kStreamPolicyGaussian, iteration, kPurposeUserSample);

  // One user after another: each update depends on all previous users.
  for (const engine::UserView& user : users) {
    CounterRng rng(derive_key(sample_stream, user.hash));
    preprocess_user_into(user.items, cfg.delta0, /*dedup=*/true, rng, scratch,
                         kept);
    if (kept.empty()) continue;
    gaps.clear();
    double norm_sq = 0.0;
    for (ItemId id : kept) {
      const double gap = std::max(0.0, t_star - hist.weight(id));
      gaps.push_back(gap);
      norm_sq += gap * gap;
    }
    if (norm_sq == 0.0) continue;  // everything already funded to T*
    double update_sq = 0.0;
    if (cfg.dpsu_allocation == PolicyAllocation::kProportional) {
      const double scale = 1.0 / std::max(1.0, std::sqrt(norm_sq));
      for (std::size_t i = 0; i < kept.size(); ++i)
        if (gaps[i] > 0.0) hist.add(kept[i], gaps[i] * scale);
      update_sq = std::min(norm_sq, 1.0);
    } else if (norm_sq <= 1.0) {
      // The whole gap vector fits in the unit ball; close every gap.
      for (std::size_t i = 0; i < kept.size(); ++i)
        if (gaps[i] > 0.0) hist.add(kept[i], gaps[i]);
      update_sq = norm_sq;
    } else {
      sorted = gaps;
      std::sort(sorted.begin(), sorted.end());
      const double level = waterfill_level(sorted);
      for (std::size_t i = 0; i < kept.size(); ++i) {
        const double add = std::min(gaps[i], level);
        if (add > 0.0) {
          hist.add(kept[i], add);
          update_sq += add * add;
        }
      }
    }
    if (probe)
      probe->max_update_l2 =
          std::max(probe->max_update_l2, std::sqrt(update_sq));
  }

  // The whole mechanism is single-threaded: the histogram loop is
  // sequential by nature and the release scan stays on one worker so the
  // runtime is insensitive to the workers knob. The counter-keyed noise
  // makes the released set identical either way.
  std::vector<ItemId> released = engine::parallel_noise_threshold(
      hist, GaussianNoise{sigma}, threshold.value,
      mechanism_stream(cfg.seed, kStreamPolicyGaussian, iteration,
                       kPurposeItemNoise),
      item_hashes, /*workers_requested=*/1);
  return {std::move(released), threshold.value, hist.support_size()};
}

// One user's greedy funding pass. Candidates arrive sorted by (frequency
// desc, id asc); funding an item never changes the other candidates'
// weights, so a single pass in that order is the greedy loop: fund the most
// frequent item still below t_star by min(1, gap, remaining budget), until
// the unit budget is spent or no below-t_star items remain. Returns the
// total weight spent.
inline double greedy_fund_user(
    WeightedHistogram& hist,
    std::span<const std::pair<std::uint32_t, ItemId>> candidates,
    double t_star) {
  double budget_left = 1.0;
  double spent = 0.0;
  for (const auto& [count, id] : candidates) {
    const double gap = t_star - hist.weight(id);
    if (gap <= 0.0) continue;
    const double add = std::min({1.0, gap, budget_left});
    hist.add(id, add);
    budget_left -= add;
    spent += add;
    if (budget_left <= 0.0) break;
  }
  return spent;
}

inline ReleaseResult finish(std::vector<ItemId> released,
                            std::vector<std::int64_t> counts, int stages,
                            std::chrono::steady_clock::time_point start) {
  ReleaseResult result;
  result.released = std::move(released);
  result.per_iteration_counts = std::move(counts);
  result.engine_stages = stages;
  result.elapsed_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - start)
                          .count();
  return result;
}

}  // namespace detail

/// Baseline mechanism: uniform per-item weights 1/sqrt(|W|) aggregated in
/// parallel, Gaussian noise, calibrated threshold. Satisfies
/// delta-approximate rho-zCDP. Empty datasets release nothing.
inline ReleaseResult weighted_gaussian(const Dataset& d,
                                       const PrivacyBudget& budget,
                                       const MechanismConfig& cfg) {
  detail::validate_zcdp_inputs(budget, cfg);
  const auto start = std::chrono::steady_clock::now();
  engine::StageCounter stages;
  const std::vector<engine::UserView> views = engine::dataset_views(d);
  detail::PassResult pass = detail::weighted_gaussian_pass(
      views, d.vocab_size(), d.token_hashes(), budget, cfg, /*iteration=*/0,
      stages);
  const auto n = static_cast<std::int64_t>(pass.released.size());
  return detail::finish(std::move(pass.released), {n}, stages.map_reduce_rounds,
                        start);
}

/// Scalable iterative partition selection: runs the weighted-gaussian
/// release repeatedly under a geometric budget split, removing the already
/// released items from every user's list between iterations (re-truncating
/// each time). Iteration release sets are pairwise disjoint by construction.
inline std::pair<ReleaseResult, IterationTrace> dp_sips(
    const Dataset& d, const PrivacyBudget& budget, const MechanismConfig& cfg) {
  detail::validate_zcdp_inputs(budget, cfg);
  if (cfg.iterations < 1)
    throw std::invalid_argument("dp_sips: iterations must be >= 1");
  if (!(cfg.ratio > 0.0))
    throw std::invalid_argument("dp_sips: ratio must be positive");
  const auto start = std::chrono::steady_clock::now();
  const std::vector<PrivacyBudget> parts =
      accounting::split_budget(budget, cfg.iterations, cfg.ratio);

  // Working copy of the user lists; items are deleted in place as they are
  // released.
  std::vector<std::vector<ItemId>> work(d.user_count());
  std::vector<engine::UserView> views(d.user_count());
  for (std::size_t u = 0; u < d.user_count(); ++u) {
    const auto items = d.items_of(u);
    work[u].assign(items.begin(), items.end());
  }

  engine::StageCounter stages;
  IterationTrace trace;
  std::vector<ItemId> all_released;
  std::vector<std::int64_t> counts;
  for (int i = 0; i < cfg.iterations; ++i) {
    for (std::size_t u = 0; u < d.user_count(); ++u)
      views[u] = {d.user_hash(u), std::span<const ItemId>(work[u])};
    detail::PassResult pass = detail::weighted_gaussian_pass(
        views, d.vocab_size(), d.token_hashes(), parts[i], cfg,
        static_cast<std::uint64_t>(i), stages);
    counts.push_back(static_cast<std::int64_t>(pass.released.size()));
    trace.iterations.push_back({parts[i], pass.threshold,
                                counts.back(), pass.support_size});
    if (i + 1 < cfg.iterations)
      engine::parallel_remove_items(work, pass.released, d.vocab_size(),
                                    cfg.workers, &stages);
    all_released.insert(all_released.end(), pass.released.begin(),
                        pass.released.end());
  }
  std::sort(all_released.begin(), all_released.end());
  return {detail::finish(std::move(all_released), std::move(counts),
                         stages.map_reduce_rounds, start),
          std::move(trace)};
}

/// Policy mechanism with unit-l2 user updates and Gaussian noise. The
/// histogram loop is inherently sequential (every user's update depends on
/// all previous users), so the mechanism runs single-threaded by contract
/// and its runtime does not respond to the workers knob.
inline ReleaseResult dpsu_policy_gaussian(const Dataset& d,
                                          const PrivacyBudget& budget,
                                          const MechanismConfig& cfg,
                                          MechanismProbe* probe = nullptr) {
  detail::validate_zcdp_inputs(budget, cfg);
  const auto start = std::chrono::steady_clock::now();
  const std::vector<engine::UserView> views = engine::dataset_views(d);
  detail::PassResult pass =
      detail::policy_gaussian_pass(views, d.vocab_size(), d.token_hashes(),
                                   budget, cfg, /*iteration=*/0, probe);
  const auto n = static_cast<std::int64_t>(pass.released.size());
  return detail::finish(std::move(pass.released), {n}, /*stages=*/0, start);
}

/// Release cutoff for the greedy frequency mechanism under Laplace(1/eps)
/// noise: max_{k in [delta0]} { 1/k + ln(k / (2 delta_dp)) / eps }, the
/// union bound over a new user splitting unit l1 mass across k items.
inline double gw_release_threshold(const ApproxDpParams& dp, int delta0) {
  if (!(dp.epsilon > 0.0))
    throw std::invalid_argument("gw_release_threshold: epsilon must be positive");
  if (!(dp.delta_dp > 0.0 && dp.delta_dp < 1.0))
    throw std::invalid_argument("gw_release_threshold: delta_dp must lie in (0, 1)");
  if (delta0 < 1 || delta0 > accounting::kMaxDelta0)
    throw std::invalid_argument("gw_release_threshold: delta0 out of range");
  double best = -std::numeric_limits<double>::infinity();
  for (int k = 1; k <= delta0; ++k) {
    const double t = 1.0 / k +
                     std::log(k / (2.0 * dp.delta_dp)) / dp.epsilon;
    best = std::max(best, t);
  }
  return best;
}

/// Greedy frequency mechanism: duplicates within a user's list are kept and
/// drive the funding order. Each user spends a unit l1 budget on its most
/// frequent items still below the buffered threshold (ties broken by item
/// order), then Laplace(1/eps) noise and the threshold decide the release.
/// The histogram loop is sequential by contract, as for the policy gaussian.
inline ReleaseResult gw_greedy(const Dataset& d, const ApproxDpParams& dp,
                               const MechanismConfig& cfg,
                               MechanismProbe* probe = nullptr) {
  if (cfg.delta0 < 1)
    throw std::invalid_argument("gw_greedy: delta0 must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  const double threshold = gw_release_threshold(dp, cfg.delta0);
  const double scale = 1.0 / dp.epsilon;
  const double t_star =
      threshold + cfg.threshold_buffer.value_or(std::numbers::ln2 * scale);

  WeightedHistogram hist(d.vocab_size());
  std::vector<std::uint32_t> stamp(d.vocab_size(), 0);
  std::vector<std::uint32_t> freq(d.vocab_size(), 0);
  std::uint32_t epoch = 0;
  std::vector<std::pair<std::uint32_t, ItemId>> candidates;  // (count, id)
  const std::uint64_t sample_stream =
      mechanism_stream(cfg.seed, kStreamGreedy, 0, kPurposeUserSample);

  for (std::size_t u = 0; u < d.user_count(); ++u) {
    ++epoch;
    candidates.clear();
    for (ItemId id : d.items_of(u)) {
      if (stamp[id] != epoch) {
        stamp[id] = epoch;
        freq[id] = 0;
        candidates.emplace_back(0, id);
      }
      ++freq[id];
    }
    if (candidates.empty()) continue;
    for (auto& c : candidates) c.first = freq[c.second];

    if (candidates.size() > static_cast<std::size_t>(cfg.delta0)) {
      if (cfg.gw_frequency_truncation) {
        // Keep the delta0 most frequent distinct items.
        std::sort(candidates.begin(), candidates.end(),
                  [](const auto& a, const auto& b) {
                    return a.first != b.first ? a.first > b.first
                                              : a.second < b.second;
                  });
        candidates.resize(static_cast<std::size_t>(cfg.delta0));
      } else {
        CounterRng rng(derive_key(sample_stream, d.user_hash(u)));
        for (int i = 0; i < cfg.delta0; ++i) {
          const std::size_t j = i + rng.next_below(candidates.size() - i);
          std::swap(candidates[i], candidates[j]);
        }
        candidates.resize(static_cast<std::size_t>(cfg.delta0));
      }
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const auto& a, const auto& b) {
                return a.first != b.first ? a.first > b.first
                                          : a.second < b.second;
              });

    const double spent = detail::greedy_fund_user(hist, candidates, t_star);
    if (probe) probe->max_user_l1 = std::max(probe->max_user_l1, spent);
  }

  // Single-threaded end to end, like the policy mechanism.
  std::vector<ItemId> released = engine::parallel_noise_threshold(
      hist, LaplaceNoise{scale}, threshold,
      mechanism_stream(cfg.seed, kStreamGreedy, 0, kPurposeItemNoise),
      d.token_hashes(), /*workers_requested=*/1);
  const auto n = static_cast<std::int64_t>(released.size());
  return detail::finish(std::move(released), {n}, /*stages=*/0, start);
}

/// Warnings for parameter regimes the mechanisms accept but whose utility is
/// undefined; surfaced by the CLI before a run.
inline std::vector<std::string> config_warnings(const Dataset& d,
                                                const PrivacyBudget& budget,
                                                const MechanismConfig& cfg) {
  std::vector<std::string> warnings;
  std::size_t longest = 0;
  for (std::size_t u = 0; u < d.user_count(); ++u)
    longest = std::max(longest, d.items_of(u).size());
  if (budget.delta > 0.9 &&
      static_cast<std::size_t>(cfg.delta0) > longest)
    warnings.push_back(
        "delta is close to 1 while delta0 exceeds every user's list length; "
        "the release threshold still evaluates but utility in this regime is "
        "undefined");
  return warnings;
}

namespace experimental {

/// Iterated policy gaussian: splits the budget and removes released items
/// between rounds, mirroring the iterative scheme on top of the policy
/// updates. Kept only to reproduce the observation that iterating does not
/// help the policy mechanism; not part of the supported surface.
inline std::pair<ReleaseResult, IterationTrace> iterated_dpsu(
    const Dataset& d, const PrivacyBudget& budget, const MechanismConfig& cfg,
    MechanismProbe* probe = nullptr) {
  detail::validate_zcdp_inputs(budget, cfg);
  if (cfg.iterations < 1)
    throw std::invalid_argument("iterated_dpsu: iterations must be >= 1");
  if (!(cfg.ratio > 0.0))
    throw std::invalid_argument("iterated_dpsu: ratio must be positive");
  const auto start = std::chrono::steady_clock::now();
  const std::vector<PrivacyBudget> parts =
      accounting::split_budget(budget, cfg.iterations, cfg.ratio);
  std::vector<std::vector<ItemId>> work(d.user_count());
  for (std::size_t u = 0; u < d.user_count(); ++u) {
    const auto items = d.items_of(u);
    work[u].assign(items.begin(), items.end());
  }
  std::vector<engine::UserView> views(d.user_count());
  IterationTrace trace;
  std::vector<ItemId> all_released;
  std::vector<std::int64_t> counts;
  for (int i = 0; i < cfg.iterations; ++i) {
    for (std::size_t u = 0; u < d.user_count(); ++u)
      views[u] = {d.user_hash(u), std::span<const ItemId>(work[u])};
    detail::PassResult pass = detail::policy_gaussian_pass(
        views, d.vocab_size(), d.token_hashes(), parts[i], cfg,
        static_cast<std::uint64_t>(i), probe);
    counts.push_back(static_cast<std::int64_t>(pass.released.size()));
    trace.iterations.push_back({parts[i], pass.threshold, counts.back(),
                                pass.support_size});
    if (i + 1 < cfg.iterations)
      engine::parallel_remove_items(work, pass.released, d.vocab_size(),
                                    cfg.workers);
    all_released.insert(all_released.end(), pass.released.begin(),
                        pass.released.end());
  }
  std::sort(all_released.begin(), all_released.end());
  return {detail::finish(std::move(all_released), std::move(counts),
                         /*stages=*/0, start),
          std::move(trace)};
}

}  // namespace experimental

}  // namespace partsel::mechanisms
