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

#include <cstdlib>
#include <exception>
#include <mutex>
#include <span>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include "partsel/core.hpp"
#include "partsel/noise.hpp"
#include "partsel/preprocess.hpp"
#include "partsel/rng.hpp"

namespace partsel::engine {

/// Worker-count default: PARTSEL_WORKERS when set, else hardware concurrency.
inline int default_workers() {
  if (const char* env = std::getenv("PARTSEL_WORKERS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

inline int resolve_workers(int requested) {
  return requested >= 1 ? requested : default_workers();
}

/// Bookkeeping that mirrors the run's cost in shuffle-synchronized
/// map-reduce rounds: a distributed execution of the same plan would spend
/// one round per shuffle counted here. Not a network layer.
struct StageCounter {
  int map_reduce_rounds = 0;
  int shuffles = 0;

  /// One histogram build: shuffle by user (truncate) + shuffle by item
  /// (count, noise, threshold).
  void count_histogram_build() {
    map_reduce_rounds += 2;
    shuffles += 2;
  }

  /// Join that removes released items from the user lists.
  void count_removal_join() {
    map_reduce_rounds += 1;
    shuffles += 1;
  }
};

/// Rounds for an I-iteration run: every iteration costs 2 (truncate + count),
/// plus a removal join after each non-final iteration, so 3(I-1) + 2.
inline int stage_count(int iterations) {
  if (iterations < 1)
    throw std::invalid_argument("stage_count: iterations must be >= 1");
  return 3 * (iterations - 1) + 2;
}

/// Equal chunks over an index range; chunk c is processed by worker
/// c mod workers, in ascending c per worker, so the schedule is static and
/// runs are reproducible.
struct ChunkPlan {
  std::size_t total = 0;
  std::size_t chunk_size = 1;
  int workers = 1;

  static ChunkPlan make(std::size_t total, int workers) {
    // ~4 chunks per worker balances skewed per-user list lengths.
    std::size_t per = (total + 4 * static_cast<std::size_t>(workers) - 1) /
                      (4 * static_cast<std::size_t>(workers));
    if (per == 0) per = 1;
    return {total, per, workers};
  }

  std::size_t chunk_count() const {
    return total == 0 ? 0 : (total + chunk_size - 1) / chunk_size;
  }

  std::pair<std::size_t, std::size_t> chunk_range(std::size_t c) const {
    const std::size_t begin = c * chunk_size;
    const std::size_t end = std::min(begin + chunk_size, total);
    return {begin, end};
  }
};

/// Runs body(worker_index) on `workers` threads (the calling thread counts
/// as worker 0) and rethrows the first exception after joining.
template <class Fn>
void run_on_workers(int workers, Fn&& body) {
  if (workers <= 1) {
    body(0);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mu;
  auto guarded = [&](int w) {
    try {
      body(w);
    } catch (...) {
      const std::scoped_lock lock(error_mu);
      if (!error) error = std::current_exception();
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(workers) - 1);
  for (int w = 1; w < workers; ++w) threads.emplace_back(guarded, w);
  guarded(0);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

/// One user's inputs to a histogram build: the stable hash keying its
/// sampling stream, and its item list.
struct UserView {
  std::uint64_t hash = 0;
  std::span<const ItemId> items;
};

inline std::vector<UserView> dataset_views(const Dataset& d) {
  std::vector<UserView> views(d.user_count());
  for (std::size_t u = 0; u < d.user_count(); ++u)
    views[u] = {d.user_hash(u), d.items_of(u)};
  return views;
}

/// Parameters of one parallel histogram build.
struct HistogramJob {
  int delta0 = 1;
  bool dedup = true;
  /// Stream key for per-user sampling; each user's generator is
  /// derive_key(user_sample_stream, user_hash).
  std::uint64_t user_sample_stream = 0;
  int workers = 0;
};

/// Data-parallel weighted histogram: each worker preprocesses the users of
/// its chunks and accumulates a vocabulary-dense local histogram; locals are
/// combined by pairwise tree reduction. The result matches a single-threaded
/// build to within 1e-9 per entry for any worker count.
///
/// WeightFn maps the preprocessed list size |W| to the per-item weight.
template <class WeightFn>
WeightedHistogram parallel_histogram(std::span<const UserView> users,
                                     std::size_t vocab_size,
                                     const HistogramJob& job,
                                     WeightFn weight_for_size,
                                     StageCounter* stages = nullptr) {
  if (job.delta0 < 1)
    throw std::invalid_argument("parallel_histogram: delta0 must be >= 1");
  const int workers = resolve_workers(job.workers);
  if (stages) stages->count_histogram_build();
  const ChunkPlan plan = ChunkPlan::make(users.size(), workers);

  std::vector<WeightedHistogram> locals;
  locals.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) locals.emplace_back(vocab_size);

  run_on_workers(workers, [&](int w) {
    mechanisms::DedupScratch scratch;
    scratch.ensure(vocab_size);
    std::vector<ItemId> kept;
    WeightedHistogram& local = locals[static_cast<std::size_t>(w)];
    const std::size_t chunks = plan.chunk_count();
    for (std::size_t c = static_cast<std::size_t>(w); c < chunks;
         c += static_cast<std::size_t>(workers)) {
      const auto [begin, end] = plan.chunk_range(c);
      for (std::size_t u = begin; u < end; ++u) {
        CounterRng rng(derive_key(job.user_sample_stream, users[u].hash));
        mechanisms::preprocess_user_into(users[u].items, job.delta0, job.dedup,
                                         rng, scratch, kept);
        if (kept.empty()) continue;
        const double weight = weight_for_size(kept.size());
        for (ItemId id : kept) local.add(id, weight);
      }
    }
  });

  // Pairwise tree reduction of the locals; pairs merge in parallel.
  for (int stride = 1; stride < workers; stride *= 2) {
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i + stride < workers; i += 2 * stride)
      pairs.emplace_back(i, i + stride);
    run_on_workers(static_cast<int>(pairs.size()), [&](int p) {
      locals[static_cast<std::size_t>(pairs[p].first)].merge(
          locals[static_cast<std::size_t>(pairs[p].second)]);
    });
  }
  return std::move(locals[0]);
}

/// Convenience overload over a whole dataset.
template <class WeightFn>
WeightedHistogram parallel_histogram(const Dataset& d, const HistogramJob& job,
                                     WeightFn weight_for_size,
                                     StageCounter* stages = nullptr) {
  const std::vector<UserView> views = dataset_views(d);
  return parallel_histogram(std::span<const UserView>(views), d.vocab_size(),
                            job, weight_for_size, stages);
}

/// Noise-and-threshold over a histogram's support. The per-item draw is
/// keyed by mix64(noise_stream ^ item_hash), so it does not depend on the
/// visit schedule; output is the ascending id list of items whose noisy
/// weight reaches the threshold.
inline std::vector<ItemId> parallel_noise_threshold(
    const WeightedHistogram& hist, const NoiseKind& kind, double threshold,
    std::uint64_t noise_stream, std::span<const std::uint64_t> item_hashes,
    int workers_requested = 0) {
  const int workers = resolve_workers(workers_requested);
  const ChunkPlan plan = ChunkPlan::make(hist.size(), workers);
  const std::size_t chunks = plan.chunk_count();
  std::vector<std::vector<ItemId>> chunk_out(chunks);
  run_on_workers(workers, [&](int w) {
    for (std::size_t c = static_cast<std::size_t>(w); c < chunks;
         c += static_cast<std::size_t>(workers)) {
      const auto [begin, end] = plan.chunk_range(c);
      auto& out = chunk_out[c];
      for (std::size_t i = begin; i < end; ++i) {
        const ItemId id = static_cast<ItemId>(i);
        const double w_i = hist.weight(id);
        if (w_i <= 0.0) continue;  // support only
        const double noise =
            noise_from_bits(kind, mix64(noise_stream ^ item_hashes[i]));
        if (w_i + noise >= threshold) out.push_back(id);
      }
    }
  });
  std::vector<ItemId> released;
  for (auto& part : chunk_out)
    released.insert(released.end(), part.begin(), part.end());
  return released;
}

/// Removes every occurrence of the released items from each user's list
/// (the set-difference join between iterations).
inline void parallel_remove_items(std::vector<std::vector<ItemId>>& users,
                                  std::span<const ItemId> released,
                                  std::size_t vocab_size, int workers_requested,
                                  StageCounter* stages = nullptr) {
  if (stages) stages->count_removal_join();
  std::vector<std::uint8_t> is_released(vocab_size, 0);
  for (ItemId id : released) is_released[id] = 1;
  const int workers = resolve_workers(workers_requested);
  const ChunkPlan plan = ChunkPlan::make(users.size(), workers);
  const std::size_t chunks = plan.chunk_count();
  run_on_workers(workers, [&](int w) {
    for (std::size_t c = static_cast<std::size_t>(w); c < chunks;
         c += static_cast<std::size_t>(workers)) {
      const auto [begin, end] = plan.chunk_range(c);
      for (std::size_t u = begin; u < end; ++u) {
        auto& items = users[u];
        std::erase_if(items, [&](ItemId id) { return is_released[id] != 0; });
      }
    }
  });
}

}  // namespace partsel::engine
