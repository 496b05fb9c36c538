#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "mvsketch/sketch.hpp"

namespace mvsketch {

struct HeavyEntry {
  FlowKey key;
  std::uint64_t estimate = 0;

  friend bool operator==(const HeavyEntry&, const HeavyEntry&) = default;
};

// Detected heavy flows, ordered by estimate descending then key ascending.
struct HeavyReport {
  std::vector<HeavyEntry> entries;
  std::uint64_t threshold = 0;

  bool contains(const FlowKey& key) const {
    return std::any_of(entries.begin(), entries.end(), [&](const HeavyEntry& e) { return e.key == key; });
  }

  std::vector<FlowKey> keys() const {
    std::vector<FlowKey> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.key);
    return out;
  }

  void sort() {
    std::sort(entries.begin(), entries.end(), [](const HeavyEntry& a, const HeavyEntry& b) {
      return a.estimate != b.estimate ? a.estimate > b.estimate : a.key < b.key;
    });
  }

  friend bool operator==(const HeavyReport&, const HeavyReport&) = default;
};

struct ChangeEstimate {
  std::uint64_t dhat = 0;
};

inline void require_same_config(const Sketch& a, const Sketch& b) {
  if (!(a.config() == b.config())) throw std::invalid_argument("sketch configs are not compatible");
}

inline void require_positive_threshold(std::uint64_t threshold) {
  if (threshold == 0) throw std::invalid_argument("threshold must be positive");
}

// Scans every bucket with V >= threshold and keeps its candidate when the
// point estimate also clears the threshold.
inline HeavyReport detect_heavy_hitters(const Sketch& sketch, std::uint64_t threshold) {
  require_positive_threshold(threshold);
  HeavyReport report{{}, threshold};
  std::unordered_set<FlowKey, FlowKeyHash> seen;
  for (const Bucket& b : sketch.buckets()) {
    if (b.sum < threshold || !seen.insert(b.key).second) continue;
    const std::uint64_t est = sketch.query(b.key);
    if (est >= threshold) report.entries.push_back({b.key, est});
  }
  report.sort();
  return report;
}

inline std::uint64_t abs_diff(std::uint64_t a, std::uint64_t b) { return a > b ? a - b : b - a; }

// D^(x) = max(|U1 - L2|, |L1 - U2|).
inline ChangeEstimate estimated_max_change(const Sketch& before, const Sketch& after, const FlowKey& key) {
  require_same_config(before, after);
  const FlowEstimate e1 = before.bounds(key);
  const FlowEstimate e2 = after.bounds(key);
  return {std::max(abs_diff(e1.upper, e2.lower), abs_diff(e1.lower, e2.upper))};
}

inline HeavyReport detect_heavy_changers(const Sketch& before, const Sketch& after, std::uint64_t threshold) {
  require_same_config(before, after);
  require_positive_threshold(threshold);
  HeavyReport report{{}, threshold};
  std::unordered_set<FlowKey, FlowKeyHash> seen;
  for (const Sketch* s : {&before, &after}) {
    for (const Bucket& b : s->buckets()) {
      if (b.sum < threshold || !seen.insert(b.key).second) continue;
      const std::uint64_t dhat = estimated_max_change(before, after, b.key).dhat;
      if (dhat >= threshold) report.entries.push_back({b.key, dhat});
    }
  }
  report.sort();
  return report;
}

// CSV with header "key_hex,estimate". Also the wire format for detector
// candidate lists.
inline void write_report_csv(std::ostream& out, const std::vector<HeavyEntry>& entries) {
  out << "key_hex,estimate\n";
  for (const auto& e : entries) out << e.key.hex() << ',' << e.estimate << '\n';
}

inline void write_report_csv(std::ostream& out, const HeavyReport& report) {
  write_report_csv(out, report.entries);
}

inline std::vector<HeavyEntry> read_report_csv(std::istream& in, std::size_t key_bytes) {
  std::vector<HeavyEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1 && line == "key_hex,estimate") continue;
    const auto comma = line.find(',');
    try {
      if (comma == std::string::npos) throw std::invalid_argument("expected key_hex,estimate");
      const std::string value = line.substr(comma + 1);
      if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos) {
        throw std::invalid_argument("estimate is not an unsigned integer");
      }
      entries.push_back({FlowKey::from_hex(line.substr(0, comma), key_bytes), std::stoull(value)});
    } catch (const std::exception& e) {
      throw FormatError("report line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return entries;
}

}  // namespace mvsketch
