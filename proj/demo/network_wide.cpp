// Splits two epochs of traffic across four detectors, merges their sketches
// and compares the merged result with a single sketch that saw everything.
#include <cstdio>

#include "mvsketch/mvsketch.hpp"

using namespace mvsketch;

int main() {
  ZipfParams params;
  params.flows = 50000;
  params.packets = 400000;
  params.epochs = 2;
  params.churn = 0.05;
  params.seed = 11;
  const auto gen = gen_zipf(params);
  const auto epochs = split_epochs(gen.trace.records);

  const SketchConfig config{4, 4096, params.key_bytes, 3};
  std::vector<Sketch> merged, whole;
  for (const auto& e : epochs) {
    const auto parts = partition(e.records, NetworkWidePolicy{4}, 100 + e.epoch);
    merged.push_back(merge(build_sketches(config, parts)));
    whole.push_back(build_sketch(config, e.records));
    std::printf("epoch %u: detector loads", e.epoch);
    for (const auto& p : parts) std::printf(" %zu", p.size());
    std::printf("\n");
  }

  const auto t1 = oracle::exact_counts(epochs[1].records);
  const std::uint64_t hh_t = threshold_for_target(t1.sums, 50);
  const auto hh_truth = oracle::heavy_at_least(t1.sums, hh_t);
  const auto hh_merged = compute_metrics(detect_heavy_hitters(merged[1], hh_t), hh_truth, t1.sums);
  const auto hh_whole = compute_metrics(detect_heavy_hitters(whole[1], hh_t), hh_truth, t1.sums);

  const auto changes = oracle::exact_changes(oracle::exact_counts(epochs[0].records), t1);
  const std::uint64_t hc_t = threshold_for_target(changes.changes, 50);
  const auto hc_truth = oracle::heavy_at_least(changes.changes, hc_t);
  const auto hc_merged =
      compute_metrics(detect_heavy_changers(merged[0], merged[1], hc_t), hc_truth, changes.changes);
  const auto hc_whole = compute_metrics(detect_heavy_changers(whole[0], whole[1], hc_t), hc_truth, changes.changes);

  std::printf("%-16s %9s %9s %9s\n", "", "precision", "recall", "rel.err");
  std::printf("%-16s %9.3f %9.3f %9.4f\n", "hh merged", hh_merged.precision, hh_merged.recall,
              hh_merged.relative_error);
  std::printf("%-16s %9.3f %9.3f %9.4f\n", "hh single", hh_whole.precision, hh_whole.recall,
              hh_whole.relative_error);
  std::printf("%-16s %9.3f %9.3f %9.4f\n", "hc merged", hc_merged.precision, hc_merged.recall,
              hc_merged.relative_error);
  std::printf("%-16s %9.3f %9.3f %9.4f\n", "hc single", hc_whole.precision, hc_whole.recall,
              hc_whole.relative_error);
}
