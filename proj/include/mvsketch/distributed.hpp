#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mvsketch/detection.hpp"
#include "mvsketch/sketch.hpp"

namespace mvsketch {

// q detectors; each flow is pinned to a deterministic subset of d of them.
struct ScalableConfig {
  std::uint32_t detectors = 1;
  std::uint32_t replication = 1;
  std::uint64_t selection_seed = 0;

  void validate() const {
    if (detectors < 1) throw std::invalid_argument("need at least one detector");
    if (replication < 1 || replication > detectors) {
      throw std::invalid_argument("replication degree must be in [1, detectors]");
    }
  }

  // The d detectors responsible for `key`, in selection order.
  std::vector<std::uint32_t> detectors_for(const FlowKey& key) const {
    std::vector<std::uint32_t> ids(detectors);
    for (std::uint32_t i = 0; i < detectors; ++i) ids[i] = i;
    std::uint64_t state = murmur64a(key.bytes(), splitmix64(selection_seed));
    // Partial Fisher-Yates driven by a key-seeded splitmix stream.
    for (std::uint32_t i = 0; i < replication; ++i) {
      state = splitmix64(state);
      const std::uint32_t j = i + reduce_range(state, detectors - i);
      std::swap(ids[i], ids[j]);
    }
    ids.resize(replication);
    return ids;
  }
};

using CandidateTuple = HeavyEntry;

inline std::vector<CandidateTuple> sorted_candidates(std::vector<CandidateTuple> out) {
  std::sort(out.begin(), out.end(), [](const CandidateTuple& a, const CandidateTuple& b) {
    return a.estimate != b.estimate ? a.estimate > b.estimate : a.key < b.key;
  });
  return out;
}

// Detector side of scalable heavy-hitter detection: every stored candidate
// whose point estimate reaches the local threshold.
inline std::vector<CandidateTuple> detector_candidates_hh(const Sketch& sketch, std::uint64_t local_threshold) {
  require_positive_threshold(local_threshold);
  std::vector<CandidateTuple> out;
  std::unordered_set<FlowKey, FlowKeyHash> seen;
  for (const Bucket& b : sketch.buckets()) {
    // The bucket holding x as candidate bounds Ŝ(x) by V, so this skips nothing.
    if (b.sum < local_threshold || !seen.insert(b.key).second) continue;
    const std::uint64_t est = sketch.query(b.key);
    if (est >= local_threshold) out.push_back({b.key, est});
  }
  return sorted_candidates(std::move(out));
}

inline std::vector<CandidateTuple> detector_candidates_hc(const Sketch& before, const Sketch& after,
                                                          std::uint64_t local_threshold) {
  return detect_heavy_changers(before, after, local_threshold).entries;
}

// Sums per-key estimates across detectors and keeps keys reaching the global threshold.
inline HeavyReport controller_aggregate(std::span<const std::vector<CandidateTuple>> lists,
                                        std::uint64_t global_threshold) {
  require_positive_threshold(global_threshold);
  std::unordered_map<FlowKey, std::uint64_t, FlowKeyHash> sums;
  for (const auto& list : lists) {
    for (const auto& c : list) {
      auto& s = sums[c.key];
      s = (c.estimate > std::numeric_limits<std::uint64_t>::max() - s) ? std::numeric_limits<std::uint64_t>::max()
                                                                        : s + c.estimate;
    }
  }
  HeavyReport report{{}, global_threshold};
  for (const auto& [key, sum] : sums) {
    if (sum >= global_threshold) report.entries.push_back({key, sum});
  }
  report.sort();
  return report;
}

// Network-wide merge of sketches that saw disjoint traffic under identical
// configs. Per bucket: V is summed; each candidate x gets the network-wide
// upper bound e(x) = sum over inputs of that input's bucket bound for x; the
// largest e(x) wins (ties go to the smallest key) and C = 2 e(x*) - V.
//
// When 2 e(x*) - V < 0 the counter is clamped to V mod 2 rather than 0 so the
// merged buckets keep (V + C) even; both values give valid bounds.
inline Sketch merge(std::span<const Sketch> sketches) {
  if (sketches.empty()) throw std::invalid_argument("merge needs at least one sketch");
  const SketchConfig& config = sketches.front().config();
  std::uint64_t total = 0;
  for (const Sketch& s : sketches) {
    if (!(s.config() == config)) throw std::invalid_argument("sketch configs are not compatible");
    if (s.total() > std::numeric_limits<std::uint64_t>::max() - total) {
      throw std::overflow_error("merged total overflows");
    }
    total += s.total();
  }

  const std::size_t n = sketches.front().buckets().size();
  std::vector<Bucket> merged(n);
  std::vector<FlowKey> candidates;
  for (std::size_t idx = 0; idx < n; ++idx) {
    std::uint64_t sum = 0;
    candidates.clear();
    for (const Sketch& s : sketches) {
      const Bucket& b = s.buckets()[idx];
      sum += b.sum;
      candidates.push_back(b.key);
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    const FlowKey* best = nullptr;
    std::uint64_t best_e = 0;
    // Ascending key order plus strict '>' keeps the smallest key on ties.
    for (const FlowKey& x : candidates) {
      std::uint64_t e = 0;
      for (const Sketch& s : sketches) {
        const Bucket& b = s.buckets()[idx];
        e += (b.sum - b.indicator) / 2 + (b.key == x ? b.indicator : 0);
      }
      if (best == nullptr || e > best_e) {
        best = &x;
        best_e = e;
      }
    }
    Bucket& out = merged[idx];
    out.sum = sum;
    out.key = *best;
    out.indicator = best_e >= sum - best_e ? best_e - (sum - best_e) : sum % 2;
  }
  return Sketch::from_state(config, std::move(merged), total);
}

}  // namespace mvsketch
