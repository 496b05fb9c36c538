#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "mvsketch/flow_key.hpp"
#include "mvsketch/hash.hpp"
#include "mvsketch/sketch.hpp"
#include "mvsketch/traffic.hpp"

// Exact ground truth. Shares only the hash derivation with the sketch code.
namespace mvsketch::oracle {

struct FlowTable {
  FlowCounts sums;
  std::uint64_t total = 0;

  std::uint64_t at(const FlowKey& key) const {
    auto it = sums.find(key);
    return it == sums.end() ? 0 : it->second;
  }
};

struct ChangeTable {
  FlowCounts changes;
  std::uint64_t total = 0;
  std::uint64_t total_before = 0;
  std::uint64_t total_after = 0;

  std::uint64_t at(const FlowKey& key) const {
    auto it = changes.find(key);
    return it == changes.end() ? 0 : it->second;
  }
};

inline FlowTable exact_counts(std::span<const PacketRecord> stream) {
  FlowTable t;
  for (const auto& p : stream) {
    t.sums[p.key] += p.value;
    t.total += p.value;
  }
  return t;
}

inline ChangeTable exact_changes(const FlowTable& before, const FlowTable& after) {
  ChangeTable c;
  c.total_before = before.total;
  c.total_after = after.total;
  for (const auto& [key, s1] : before.sums) {
    const std::uint64_t s2 = after.at(key);
    c.changes[key] = s1 > s2 ? s1 - s2 : s2 - s1;
  }
  for (const auto& [key, s2] : after.sums) {
    if (!before.sums.contains(key)) c.changes[key] = s2;
  }
  for (const auto& [key, d] : c.changes) c.total += d;
  return c;
}

// Flows whose value is at least `threshold`, sorted by key.
inline std::vector<FlowKey> heavy_at_least(const FlowCounts& counts, std::uint64_t threshold) {
  std::vector<FlowKey> out;
  for (const auto& [key, v] : counts) {
    if (v >= threshold) out.push_back(key);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Flows with value >= phi * total. Compared in long double so φ·𝒮 is not rounded up.
inline std::vector<FlowKey> true_heavy(const FlowCounts& counts, std::uint64_t total, double phi) {
  std::vector<FlowKey> out;
  const long double cut = static_cast<long double>(phi) * static_cast<long double>(total);
  for (const auto& [key, v] : counts) {
    if (static_cast<long double>(v) >= cut) out.push_back(key);
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<FlowKey> true_heavy(const FlowTable& t, double phi) { return true_heavy(t.sums, t.total, phi); }
inline std::vector<FlowKey> true_heavy(const ChangeTable& t, double phi) {
  return true_heavy(t.changes, t.total, phi);
}

// Flow carrying strictly more than half of the traffic that hashes to
// (row, col), if any.
inline std::optional<FlowKey> bucket_majority(std::span<const PacketRecord> stream, const SketchConfig& config,
                                              std::size_t row, std::size_t col) {
  const std::uint64_t seed = row_seed(config.seed, row);
  FlowCounts restricted;
  std::uint64_t total = 0;
  for (const auto& p : stream) {
    if (hash_column(p.key.bytes(), seed, config.cols) != col) continue;
    restricted[p.key] += p.value;
    total += p.value;
  }
  for (const auto& [key, v] : restricted) {
    if (v > total - v) return key;
  }
  return std::nullopt;
}

// bucket_majority for every column of `row` at once, from a flow table.
inline std::vector<std::optional<FlowKey>> bucket_majorities(const FlowTable& table, const SketchConfig& config,
                                                             std::size_t row) {
  const std::uint64_t seed = row_seed(config.seed, row);
  std::vector<std::uint64_t> totals(config.cols, 0);
  std::vector<std::uint64_t> best(config.cols, 0);
  std::vector<std::optional<FlowKey>> owner(config.cols);
  for (const auto& [key, v] : table.sums) {
    const auto col = hash_column(key.bytes(), seed, config.cols);
    totals[col] += v;
    if (v > best[col]) {
      best[col] = v;
      owner[col] = key;
    }
  }
  for (std::size_t c = 0; c < config.cols; ++c) {
    if (!(owner[c] && best[c] > totals[c] - best[c])) owner[c].reset();
  }
  return owner;
}

inline void write_flow_table_csv(std::ostream& out, const FlowCounts& counts) {
  std::vector<std::pair<FlowKey, std::uint64_t>> rows(counts.begin(), counts.end());
  std::sort(rows.begin(), rows.end());
  out << "key_hex,sum\n";
  for (const auto& [key, v] : rows) out << key.hex() << ',' << v << '\n';
}

}  // namespace mvsketch::oracle
