// Builds a sketch over one synthetic epoch and lists the heavy hitters it
// recovers next to their exact sizes.
#include <cstdio>

#include "mvsketch/mvsketch.hpp"

using namespace mvsketch;

int main() {
  ZipfParams params;
  params.flows = 50000;
  params.packets = 500000;
  params.seed = 7;
  const auto gen = gen_zipf(params);
  const auto& exact = gen.exact.front();

  const SketchConfig config{4, cols_for_budget(256 * 1024, 4, params.key_bytes), params.key_bytes, 1};
  Sketch sketch(config);
  for (const auto& p : gen.trace.records) sketch.update(p.key, p.value);

  const std::uint64_t threshold = threshold_from_phi(0.001, sketch.total());
  const auto report = detect_heavy_hitters(sketch, threshold);
  const auto truth = oracle::heavy_at_least(exact, threshold);
  const auto m = compute_metrics(report, truth, exact);

  std::printf("sketch %ux%u, %llu packets, threshold %llu\n", config.rows, config.cols,
              static_cast<unsigned long long>(sketch.total()), static_cast<unsigned long long>(threshold));
  std::printf("%-18s %10s %10s %10s\n", "flow", "estimate", "lower", "exact");
  for (std::size_t i = 0; i < report.entries.size() && i < 15; ++i) {
    const auto& e = report.entries[i];
    std::printf("%-18s %10llu %10llu %10llu\n", e.key.hex().c_str(), static_cast<unsigned long long>(e.estimate),
                static_cast<unsigned long long>(sketch.bounds(e.key).lower),
                static_cast<unsigned long long>(exact.at(e.key)));
  }
  std::printf("reported %zu, true %zu, precision %.3f, recall %.3f\n", m.reported_count, m.true_count, m.precision,
              m.recall);
}
