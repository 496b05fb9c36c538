#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvsketch/detection.hpp"
#include "mvsketch/distributed.hpp"
#include "mvsketch/metrics.hpp"
#include "mvsketch/oracle.hpp"
#include "mvsketch/pisa.hpp"
#include "mvsketch/sketch.hpp"
#include "mvsketch/traffic.hpp"

namespace mvsketch {

enum class Task { hh, hc, scalable_hh, scalable_hc, networkwide_hh, networkwide_hc, pisa };

inline const char* task_name(Task t) {
  switch (t) {
    case Task::hh: return "hh";
    case Task::hc: return "hc";
    case Task::scalable_hh: return "scalable-hh";
    case Task::scalable_hc: return "scalable-hc";
    case Task::networkwide_hh: return "networkwide-hh";
    case Task::networkwide_hc: return "networkwide-hc";
    case Task::pisa: return "pisa";
  }
  return "?";
}

inline bool is_change_task(Task t) {
  return t == Task::hc || t == Task::scalable_hc || t == Task::networkwide_hc;
}

// How the absolute detection threshold is chosen per epoch from exact ground truth.
struct ThresholdRule {
  enum class Kind { target_heavy, phi, absolute };
  Kind kind = Kind::target_heavy;
  std::size_t target = 80;
  double phi = 0.0;
  std::uint64_t absolute = 0;

  static ThresholdRule with_target(std::size_t n) { return {Kind::target_heavy, n, 0.0, 0}; }
  static ThresholdRule with_phi(double phi) { return {Kind::phi, 0, phi, 0}; }
  static ThresholdRule with_absolute(std::uint64_t t) { return {Kind::absolute, 0, 0.0, t}; }

  std::uint64_t resolve(const FlowCounts& exact, std::uint64_t total) const {
    switch (kind) {
      case Kind::target_heavy: return threshold_for_target(exact, target);
      case Kind::phi: return threshold_from_phi(phi, total);
      case Kind::absolute:
        if (absolute == 0) throw std::invalid_argument("threshold must be positive");
        return absolute;
    }
    return 1;
  }
};

struct ExperimentSpec {
  Task task = Task::hh;
  std::uint32_t rows = 4;
  // Sketch widths to sweep; if empty, derived from memory_bytes.
  std::vector<std::uint32_t> cols;
  std::vector<std::uint64_t> memory_bytes;
  std::uint64_t seed = 1;
  std::uint32_t repetitions = 1;
  ThresholdRule threshold;
  // Scalable and network-wide detection.
  std::uint32_t detectors = 1;
  std::uint32_t replication = 1;
  std::uint64_t partition_seed = 1;
  NetworkWidePolicy::Assignment assignment = NetworkWidePolicy::Assignment::per_packet;
  // Switch simulation.
  pisa::Mode pisa_mode = pisa::Mode::size_32;
  std::uint32_t pisa_delay = 0;
  // Keep per-detector sketches (network-wide tasks) in the result.
  bool keep_sketches = false;

  void validate(std::size_t key_bytes) const {
    if (rows < 1) throw std::invalid_argument("rows must be >= 1");
    if (cols.empty() && memory_bytes.empty()) throw std::invalid_argument("need --cols or --memory-bytes");
    if (repetitions < 1) throw std::invalid_argument("repetitions must be >= 1");
    if (detectors < 1) throw std::invalid_argument("detectors must be >= 1");
    if (task == Task::scalable_hh || task == Task::scalable_hc) ScalableConfig{detectors, replication, 0}.validate();
    if (key_bytes < 1) throw std::invalid_argument("trace has no key width");
  }
};

struct ExperimentRow {
  std::uint32_t epoch = 0;
  std::uint64_t memory_bytes = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::uint64_t seed = 0;
  std::uint64_t threshold = 0;
  MetricsReport metrics;
  HeavyReport report;
};

struct PisaRow {
  std::string mode;
  std::uint32_t epoch = 0;
  std::uint64_t packets = 0;
  std::uint64_t recirculated = 0;
  double ratio = 0.0;
};

struct SavedSketch {
  std::uint32_t epoch = 0;
  std::uint32_t cols = 0;
  std::uint32_t detector = 0;
  Sketch sketch;
};

struct ExperimentResult {
  std::vector<ExperimentRow> rows;
  std::vector<PisaRow> pisa_rows;
  std::vector<SavedSketch> sketches;
};

inline Sketch build_sketch(const SketchConfig& config, std::span<const PacketRecord> records) {
  Sketch s(config);
  for (const auto& r : records) s.update(r.key, r.value);
  return s;
}

inline std::vector<Sketch> build_sketches(const SketchConfig& config,
                                          const std::vector<std::vector<PacketRecord>>& parts) {
  std::vector<Sketch> out;
  out.reserve(parts.size());
  for (const auto& p : parts) out.push_back(build_sketch(config, p));
  return out;
}

inline std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return a / b + (a % b != 0); }

namespace detail {

struct Width {
  std::uint32_t cols;
  std::uint64_t memory_bytes;
};

inline std::vector<Width> widths(const ExperimentSpec& spec, std::size_t key_bytes) {
  std::vector<Width> out;
  for (auto c : spec.cols) out.push_back({c, static_cast<std::uint64_t>(c) * spec.rows * bucket_bytes(key_bytes)});
  for (auto m : spec.memory_bytes) out.push_back({cols_for_budget(m, spec.rows, key_bytes), m});
  return out;
}

inline std::vector<PisaRow> run_pisa(const ExperimentSpec& spec, const std::vector<EpochSlice>& epochs) {
  std::vector<PisaRow> out;
  const std::uint32_t cols = spec.cols.empty() ? 2048 : spec.cols.front();
  for (const auto& slice : epochs) {
    pisa::PisaState sim(spec.pisa_mode, cols, spec.seed, pisa::RecircPolicy::delayed(spec.pisa_delay));
    for (const auto& p : slice.records) sim.process(p);
    sim.drain();
    out.push_back({pisa::mode_name(spec.pisa_mode), slice.epoch, sim.packets(), sim.recirculated(), sim.recirc_ratio()});
  }
  return out;
}

}  // namespace detail

// Runs one detection task over every epoch (or consecutive epoch pair for
// change tasks) and every sketch width, scoring against exact ground truth.
inline ExperimentResult run_experiment(const ExperimentSpec& spec, const Trace& trace) {
  const std::size_t key_bytes = trace.meta.key_bytes;
  ExperimentResult result;
  const auto epochs = split_epochs(trace.records);
  if (spec.task == Task::pisa) {
    result.pisa_rows = detail::run_pisa(spec, epochs);
    return result;
  }
  spec.validate(key_bytes);
  const auto widths = detail::widths(spec, key_bytes);

  std::vector<oracle::FlowTable> tables;
  tables.reserve(epochs.size());
  for (const auto& e : epochs) tables.push_back(oracle::exact_counts(e.records));

  const bool change = is_change_task(spec.task);
  const ScalableConfig scalable{spec.detectors, spec.replication, spec.partition_seed};
  const NetworkWidePolicy networkwide{spec.detectors, spec.assignment};

  auto parts_of = [&](std::size_t e) {
    const std::uint64_t pseed = spec.partition_seed + epochs[e].epoch;
    if (spec.task == Task::scalable_hh || spec.task == Task::scalable_hc) {
      return partition(epochs[e].records, scalable, pseed);
    }
    return partition(epochs[e].records, networkwide, pseed);
  };

  for (std::size_t e = change ? 1 : 0; e < epochs.size(); ++e) {
    const FlowCounts* exact = nullptr;
    oracle::ChangeTable changes;
    std::uint64_t threshold = 0;
    if (change) {
      changes = oracle::exact_changes(tables[e - 1], tables[e]);
      exact = &changes.changes;
      threshold = spec.threshold.resolve(changes.changes, changes.total);
    } else {
      exact = &tables[e].sums;
      threshold = spec.threshold.resolve(tables[e].sums, tables[e].total);
    }
    const auto truth = oracle::heavy_at_least(*exact, threshold);

    const bool distributed = spec.task != Task::hh && spec.task != Task::hc;
    std::vector<std::vector<PacketRecord>> parts_now, parts_prev;
    if (distributed) {
      parts_now = parts_of(e);
      if (change) parts_prev = parts_of(e - 1);
    }

    for (const auto& width : widths) {
      for (std::uint32_t rep = 0; rep < spec.repetitions; ++rep) {
        const SketchConfig config{spec.rows, width.cols, static_cast<std::uint8_t>(key_bytes), spec.seed + rep};
        HeavyReport report;
        switch (spec.task) {
          case Task::hh:
            report = detect_heavy_hitters(build_sketch(config, epochs[e].records), threshold);
            break;
          case Task::hc:
            report = detect_heavy_changers(build_sketch(config, epochs[e - 1].records),
                                           build_sketch(config, epochs[e].records), threshold);
            break;
          case Task::scalable_hh: {
            const auto sketches = build_sketches(config, parts_now);
            const std::uint64_t local = ceil_div(threshold, spec.replication);
            std::vector<std::vector<CandidateTuple>> lists;
            for (const auto& s : sketches) lists.push_back(detector_candidates_hh(s, local));
            report = controller_aggregate(lists, threshold);
            break;
          }
          case Task::scalable_hc: {
            const auto before = build_sketches(config, parts_prev);
            const auto after = build_sketches(config, parts_now);
            const std::uint64_t local = ceil_div(threshold, spec.replication);
            std::vector<std::vector<CandidateTuple>> lists;
            for (std::size_t k = 0; k < before.size(); ++k) {
              lists.push_back(detector_candidates_hc(before[k], after[k], local));
            }
            report = controller_aggregate(lists, threshold);
            break;
          }
          case Task::networkwide_hh: {
            const auto sketches = build_sketches(config, parts_now);
            report = detect_heavy_hitters(merge(sketches), threshold);
            if (spec.keep_sketches) {
              for (std::uint32_t k = 0; k < sketches.size(); ++k) {
                result.sketches.push_back({epochs[e].epoch, width.cols, k, sketches[k]});
              }
            }
            break;
          }
          case Task::networkwide_hc: {
            const auto before = build_sketches(config, parts_prev);
            const auto after = build_sketches(config, parts_now);
            report = detect_heavy_changers(merge(before), merge(after), threshold);
            if (spec.keep_sketches) {
              for (std::uint32_t k = 0; k < after.size(); ++k) {
                if (e == 1) result.sketches.push_back({epochs[0].epoch, width.cols, k, before[k]});
                result.sketches.push_back({epochs[e].epoch, width.cols, k, after[k]});
              }
            }
            break;
          }
          case Task::pisa: break;
        }
        ExperimentRow row;
        row.epoch = epochs[e].epoch;
        row.memory_bytes = width.memory_bytes;
        row.rows = spec.rows;
        row.cols = width.cols;
        row.seed = config.seed;
        row.threshold = threshold;
        row.metrics = compute_metrics(report, truth, *exact);
        row.report = std::move(report);
        result.rows.push_back(std::move(row));
      }
    }
  }
  return result;
}

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline void write_experiment_csv(std::ostream& out, const ExperimentResult& r) {
  if (!r.pisa_rows.empty()) {
    out << "mode,epoch,packets,recirculated,ratio\n";
    for (const auto& p : r.pisa_rows) {
      out << p.mode << ',' << p.epoch << ',' << p.packets << ',' << p.recirculated << ',' << fixed6(p.ratio) << '\n';
    }
    return;
  }
  out << "# precision=1 when nothing reported and nothing true; precision=0 when nothing reported but true>0;"
         " relative_error averages over correctly reported true flows\n";
  out << "epoch,memory_bytes,rows,cols,seed,threshold,true,reported,correct,precision,recall,f1,relative_error\n";
  for (const auto& row : r.rows) {
    const auto& m = row.metrics;
    out << row.epoch << ',' << row.memory_bytes << ',' << row.rows << ',' << row.cols << ',' << row.seed << ','
        << row.threshold << ',' << m.true_count << ',' << m.reported_count << ',' << m.correct_count << ','
        << fixed6(m.precision) << ',' << fixed6(m.recall) << ',' << fixed6(m.f1) << ',' << fixed6(m.relative_error)
        << '\n';
  }
}

// ---------------------------------------------------------------------------
// Update throughput.

struct BenchSpec {
  std::uint32_t rows = 4;
  std::vector<std::uint64_t> memory_bytes{1 << 20};
  std::vector<std::uint8_t> key_bytes{4, 8, 13};
  std::uint64_t packets = 1000000;
  std::uint64_t flows = 100000;
  double skew = 1.1;
  std::uint32_t runs = 10;
  std::uint64_t seed = 1;
  bool batched = false;
};

struct BenchRow {
  std::uint8_t key_bytes = 0;
  std::uint64_t memory_bytes = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::uint64_t packets = 0;
  bool batched = false;
  std::vector<double> rates;  // updates per second, one per run
  double mean = 0.0;
  double stddev = 0.0;
  Sketch last{SketchConfig{}};
};

// Times sketch updates over a stream held in memory. One untimed warm-up run
// precedes the measured runs; every run starts from an empty sketch.
inline std::vector<BenchRow> bench_update(const BenchSpec& spec) {
  if (spec.runs < 1) throw std::invalid_argument("bench needs at least one run");
  std::vector<BenchRow> out;
  for (auto kb : spec.key_bytes) {
    ZipfParams zp;
    zp.flows = spec.flows;
    zp.packets = spec.packets;
    zp.skew = spec.skew;
    zp.seed = spec.seed;
    zp.key_bytes = kb;
    auto gen = gen_zipf(zp);
    std::vector<FlowKey> keys;
    std::vector<std::uint64_t> values;
    keys.reserve(gen.trace.records.size());
    values.reserve(gen.trace.records.size());
    for (const auto& r : gen.trace.records) {
      keys.push_back(r.key);
      values.push_back(r.value);
    }
    gen = {};
    for (auto mem : spec.memory_bytes) {
      const SketchConfig config{spec.rows, cols_for_budget(mem, spec.rows, kb), kb, spec.seed};
      BenchRow row;
      row.key_bytes = kb;
      row.memory_bytes = mem;
      row.rows = config.rows;
      row.cols = config.cols;
      row.packets = keys.size();
      row.batched = spec.batched;
      for (std::uint32_t run = 0; run <= spec.runs; ++run) {
        Sketch s(config);
        const auto t0 = std::chrono::steady_clock::now();
        if (spec.batched) {
          s.update_batch(keys, values);
        } else {
          for (std::size_t i = 0; i < keys.size(); ++i) s.update(keys[i], values[i]);
        }
        const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
        if (run > 0) row.rates.push_back(static_cast<double>(keys.size()) / dt.count());
        row.last = std::move(s);
      }
      row.mean = std::accumulate(row.rates.begin(), row.rates.end(), 0.0) / static_cast<double>(row.rates.size());
      double var = 0.0;
      for (double r : row.rates) var += (r - row.mean) * (r - row.mean);
      row.stddev = row.rates.size() > 1 ? std::sqrt(var / static_cast<double>(row.rates.size() - 1)) : 0.0;
      out.push_back(std::move(row));
    }
  }
  return out;
}

inline void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "key_bytes,memory_bytes,rows,cols,packets,batched,runs,mean_updates_per_sec,stddev,per_run\n";
  for (const auto& r : rows) {
    out << static_cast<int>(r.key_bytes) << ',' << r.memory_bytes << ',' << r.rows << ',' << r.cols << ','
        << r.packets << ',' << (r.batched ? 1 : 0) << ',' << r.rates.size() << ',' << fixed6(r.mean) << ','
        << fixed6(r.stddev) << ',';
    for (std::size_t i = 0; i < r.rates.size(); ++i) out << (i ? ";" : "") << fixed6(r.rates[i]);
    out << '\n';
  }
}

}  // namespace mvsketch
