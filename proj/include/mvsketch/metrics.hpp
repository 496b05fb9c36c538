#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "mvsketch/detection.hpp"
#include "mvsketch/flow_key.hpp"

namespace mvsketch {

// Precision is 1 when nothing is reported and nothing is true, 0 when nothing
// is reported but true flows exist. Recall is 1 when there are no true flows.
// Relative error averages |S - Ŝ| / S over correctly reported true flows only.
struct MetricsReport {
  double precision = 1.0;
  double recall = 1.0;
  double f1 = 1.0;
  double relative_error = 0.0;
  std::size_t true_count = 0;
  std::size_t reported_count = 0;
  std::size_t correct_count = 0;
};

inline MetricsReport compute_metrics(const HeavyReport& report, std::span<const FlowKey> truth,
                                     const FlowCounts& exact) {
  MetricsReport m;
  const std::unordered_set<FlowKey, FlowKeyHash> truth_set(truth.begin(), truth.end());
  m.true_count = truth_set.size();
  m.reported_count = report.entries.size();
  double err_sum = 0.0;
  for (const auto& e : report.entries) {
    if (!truth_set.contains(e.key)) continue;
    ++m.correct_count;
    auto it = exact.find(e.key);
    const double s = it == exact.end() ? 0.0 : static_cast<double>(it->second);
    if (s > 0) err_sum += std::abs(s - static_cast<double>(e.estimate)) / s;
  }
  if (m.reported_count > 0) {
    m.precision = static_cast<double>(m.correct_count) / static_cast<double>(m.reported_count);
  } else {
    m.precision = m.true_count == 0 ? 1.0 : 0.0;
  }
  m.recall = m.true_count == 0 ? 1.0 : static_cast<double>(m.correct_count) / static_cast<double>(m.true_count);
  m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  m.relative_error = m.correct_count > 0 ? err_sum / static_cast<double>(m.correct_count) : 0.0;
  return m;
}

// Bytes charged per bucket against a memory budget: V (8) + C (8) + key.
// Struct padding is not counted.
inline std::size_t bucket_bytes(std::size_t key_bytes) { return 16 + key_bytes; }

inline std::uint32_t cols_for_budget(std::uint64_t budget_bytes, std::uint32_t rows, std::size_t key_bytes) {
  if (rows < 1) throw std::invalid_argument("rows must be >= 1");
  const std::uint64_t cols = budget_bytes / (static_cast<std::uint64_t>(rows) * bucket_bytes(key_bytes));
  if (cols < 1) throw std::invalid_argument("memory budget too small for one bucket per row");
  if (cols > UINT32_MAX) throw std::invalid_argument("memory budget too large");
  return static_cast<std::uint32_t>(cols);
}

// Smallest integer T with T >= phi * total (so S >= T iff S >= phi * total), at least 1.
inline std::uint64_t threshold_from_phi(double phi, std::uint64_t total) {
  if (!(phi > 0.0 && phi <= 1.0)) throw std::invalid_argument("phi must be in (0, 1]");
  const long double exact = static_cast<long double>(phi) * static_cast<long double>(total);
  return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(exact)));
}

// Largest threshold that makes at least `target` flows heavy: the value of the
// target-th largest flow. Equivalent to searching phi against the exact table.
inline std::uint64_t threshold_for_target(const FlowCounts& exact, std::size_t target) {
  if (target < 1) throw std::invalid_argument("target heavy count must be >= 1");
  std::vector<std::uint64_t> values;
  values.reserve(exact.size());
  for (const auto& [key, v] : exact) {
    if (v > 0) values.push_back(v);
  }
  if (values.empty()) return 1;
  const std::size_t k = std::min(target, values.size());
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k - 1), values.end(),
                   std::greater<>());
  return std::max<std::uint64_t>(1, values[k - 1]);
}

}  // namespace mvsketch
