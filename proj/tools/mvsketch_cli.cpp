#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mvsketch/mvsketch.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace mvsketch;

namespace {

// Flags shared by the detection subcommands.
struct Common {
  std::string trace;
  std::optional<std::size_t> key_bytes;
  std::uint32_t rows = 4;
  std::vector<std::uint32_t> cols;
  std::vector<std::uint64_t> memory_bytes;
  std::uint64_t seed = 1;
  std::uint32_t repetitions = 1;
  std::optional<double> phi;
  std::optional<std::uint64_t> threshold;
  std::optional<std::size_t> target_heavy;
  std::string out;
  std::string format = "csv";
  std::string report_dir;
};

void add_output(CLI::App* cmd, Common& c) {
  cmd->add_option("--out", c.out, "Output file (default: stdout)");
  cmd->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--trace", c.trace, "Input trace (CSV, optionally .gz)")->required();
  cmd->add_option("--key-bytes", c.key_bytes, "Key width for traces without a header")->check(CLI::Range(1, 16));
  cmd->add_option("--rows", c.rows, "Sketch rows")->check(CLI::PositiveNumber);
  auto* cols = cmd->add_option("--cols", c.cols, "Sketch widths to sweep");
  auto* mem = cmd->add_option("--memory-bytes", c.memory_bytes, "Memory budgets to sweep (bytes)");
  cols->excludes(mem);
  cmd->add_option("--seed", c.seed, "Hash seed");
  cmd->add_option("--repetitions", c.repetitions, "Hash seeds per width (seed, seed+1, ...)")
      ->check(CLI::PositiveNumber);
  auto* phi = cmd->add_option("--phi", c.phi, "Threshold as a fraction of total (change) volume");
  auto* thr = cmd->add_option("--threshold", c.threshold, "Absolute threshold");
  auto* tgt = cmd->add_option("--target-heavy", c.target_heavy, "Pick the threshold giving N true heavy flows");
  phi->excludes(thr)->excludes(tgt);
  thr->excludes(tgt);
  cmd->add_option("--report-dir", c.report_dir, "Also write each detected report as CSV into this directory");
  add_output(cmd, c);
}

ThresholdRule threshold_rule(const Common& c) {
  if (c.phi) return ThresholdRule::with_phi(*c.phi);
  if (c.threshold) return ThresholdRule::with_absolute(*c.threshold);
  return ThresholdRule::with_target(c.target_heavy.value_or(80));
}

ExperimentSpec base_spec(const Common& c, Task task) {
  ExperimentSpec spec;
  spec.task = task;
  spec.rows = c.rows;
  spec.cols = c.cols;
  spec.memory_bytes = c.memory_bytes;
  if (spec.cols.empty() && spec.memory_bytes.empty()) spec.memory_bytes = {1 << 20};
  spec.seed = c.seed;
  spec.repetitions = c.repetitions;
  spec.threshold = threshold_rule(c);
  return spec;
}

// Writes to --out, or stdout when it is empty.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty()) return;
    file_ = std::make_unique<std::ofstream>(path);
    if (!*file_) throw std::runtime_error("cannot open " + path + " for writing");
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

json entries_json(const std::vector<HeavyEntry>& entries) {
  json arr = json::array();
  for (const auto& e : entries) arr.push_back({{"key", e.key.hex()}, {"estimate", e.estimate}});
  return arr;
}

json metrics_json(const MetricsReport& m) {
  return {{"true", m.true_count},       {"reported", m.reported_count}, {"correct", m.correct_count},
          {"precision", m.precision},   {"recall", m.recall},           {"f1", m.f1},
          {"relative_error", m.relative_error}};
}

void write_result(const Common& c, Task task, const ExperimentResult& r) {
  Output out(c.out);
  if (c.format == "csv") {
    write_experiment_csv(out.stream(), r);
  } else if (!r.pisa_rows.empty()) {
    json rows = json::array();
    for (const auto& p : r.pisa_rows) {
      rows.push_back({{"mode", p.mode},
                      {"epoch", p.epoch},
                      {"packets", p.packets},
                      {"recirculated", p.recirculated},
                      {"ratio", p.ratio}});
    }
    out.stream() << json{{"task", task_name(task)}, {"rows", rows}}.dump(2) << '\n';
  } else {
    json rows = json::array();
    for (const auto& row : r.rows) {
      json j = {{"epoch", row.epoch},         {"memory_bytes", row.memory_bytes}, {"rows", row.rows},
                {"cols", row.cols},           {"seed", row.seed},                 {"threshold", row.threshold}};
      j["metrics"] = metrics_json(row.metrics);
      j["report"] = entries_json(row.report.entries);
      rows.push_back(std::move(j));
    }
    out.stream() << json{{"task", task_name(task)}, {"rows", rows}}.dump(2) << '\n';
  }

  if (!c.report_dir.empty()) {
    fs::create_directories(c.report_dir);
    for (const auto& row : r.rows) {
      const std::string name = std::string(task_name(task)) + "_epoch" + std::to_string(row.epoch) + "_cols" +
                               std::to_string(row.cols) + "_seed" + std::to_string(row.seed) + ".csv";
      std::ofstream f(fs::path(c.report_dir) / name);
      if (!f) throw std::runtime_error("cannot write into " + c.report_dir);
      write_report_csv(f, row.report);
    }
  }
}

void run_task(const Common& c, const ExperimentSpec& spec) {
  const Trace trace = read_trace(c.trace, c.key_bytes);
  write_result(c, spec.task, run_experiment(spec, trace));
}

Task pick(const std::string& kind, Task hh, Task hc) { return kind == "hh" ? hh : hc; }

void save_sketches(const std::string& dir, const ExperimentResult& r) {
  fs::create_directories(dir);
  for (const auto& s : r.sketches) {
    const std::string name = "epoch" + std::to_string(s.epoch) + "_cols" + std::to_string(s.cols) + "_det" +
                             std::to_string(s.detector) + ".mvsk";
    save_sketch((fs::path(dir) / name).string(), s.sketch);
  }
}

void write_entries(const std::string& path, const std::string& format, std::uint64_t threshold,
                   const std::vector<HeavyEntry>& entries) {
  Output out(path);
  if (format == "csv") {
    write_report_csv(out.stream(), entries);
  } else {
    out.stream() << json{{"threshold", threshold}, {"report", entries_json(entries)}}.dump(2) << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heavy-hitter and heavy-changer detection with invertible majority-vote sketches"};
  app.require_subcommand(1);

  // gen
  ZipfParams zp;
  std::string values = "unit";
  std::string gen_out;
  std::string gen_table;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic Zipf trace");
  gen->add_option("--flows", zp.flows, "Flow universe size")->check(CLI::PositiveNumber);
  gen->add_option("--packets", zp.packets, "Packets per epoch")->check(CLI::PositiveNumber);
  gen->add_option("--skew", zp.skew, "Zipf exponent");
  gen->add_option("--values", values, "Per-packet value model")->check(CLI::IsMember({"unit", "size"}));
  gen->add_option("--seed", zp.seed, "Generator seed");
  gen->add_option("--key-bytes", zp.key_bytes, "Key width")->check(CLI::Range(1, 16));
  gen->add_option("--epochs", zp.epochs, "Number of epochs")->check(CLI::PositiveNumber);
  gen->add_option("--churn", zp.churn, "Per-epoch probability that a rank swaps flows")->check(CLI::Range(0.0, 1.0));
  gen->add_option("--out", gen_out, "Trace output file (default: stdout)");
  gen->add_option("--flow-table", gen_table, "Also write the exact per-flow sums of the last epoch as CSV");

  // hh
  Common hh_c;
  std::string hh_sketch;
  auto* hh = app.add_subcommand("hh", "Heavy-hitter detection, scored against exact counts");
  add_common(hh, hh_c);
  hh->add_option("--sketch", hh_sketch, "Detect from a saved sketch instead (needs --threshold or --phi)");
  hh->get_option("--trace")->required(false);

  // hc
  Common hc_c;
  auto* hc = app.add_subcommand("hc", "Heavy-changer detection across consecutive epochs");
  add_common(hc, hc_c);

  // scalable
  Common sc_c;
  std::string sc_task = "hh";
  std::uint32_t sc_q = 5, sc_d = 3;
  std::uint64_t sc_pseed = 1;
  auto* sc = app.add_subcommand("scalable", "Scalable detection: flows spread over d of q detectors");
  add_common(sc, sc_c);
  sc->add_option("--task", sc_task, "Detection task")->check(CLI::IsMember({"hh", "hc"}));
  sc->add_option("--detectors", sc_q, "Number of detectors q")->check(CLI::PositiveNumber);
  sc->add_option("--replication", sc_d, "Detectors per flow d")->check(CLI::PositiveNumber);
  sc->add_option("--partition-seed", sc_pseed, "Seed for flow and packet assignment");

  // networkwide
  Common nw_c;
  std::string nw_task = "hh";
  std::uint32_t nw_q = 4;
  std::uint64_t nw_pseed = 1;
  std::string nw_assign = "packet";
  std::string nw_save;
  auto* nw = app.add_subcommand("networkwide", "Network-wide detection over merged detector sketches");
  add_common(nw, nw_c);
  nw->add_option("--task", nw_task, "Detection task")->check(CLI::IsMember({"hh", "hc"}));
  nw->add_option("--detectors", nw_q, "Number of detectors q")->check(CLI::PositiveNumber);
  nw->add_option("--assignment", nw_assign, "Packet-to-detector rule")->check(CLI::IsMember({"packet", "flow"}));
  nw->add_option("--partition-seed", nw_pseed, "Seed for packet assignment");
  nw->add_option("--save-sketches", nw_save, "Write every detector sketch into this directory");

  // merge
  std::vector<std::string> merge_in;
  std::string merge_out;
  std::optional<std::uint64_t> merge_thr;
  std::string merge_report;
  std::string merge_format = "csv";
  auto* mg = app.add_subcommand("merge", "Merge sketches that saw disjoint traffic");
  mg->add_option("--inputs", merge_in, "Sketch files")->required();
  mg->add_option("--out", merge_out, "Merged sketch file")->required();
  mg->add_option("--threshold", merge_thr, "Also detect heavy hitters on the merged sketch");
  mg->add_option("--report", merge_report, "Where to write that report (default: stdout)");
  mg->add_option("--format", merge_format, "Report format")->check(CLI::IsMember({"csv", "json"}));

  // pisa-sim
  Common ps_c;
  std::string ps_mode = "size32";
  std::uint32_t ps_cols = 2048, ps_delay = 0;
  bool ps_check = false;
  auto* ps = app.add_subcommand("pisa-sim", "Simulate the switch pipeline and report recirculation");
  ps->add_option("--trace", ps_c.trace, "Input trace")->required();
  ps->add_option("--key-bytes", ps_c.key_bytes, "Key width for traces without a header");
  ps->add_option("--mode", ps_mode, "Pipeline variant")->check(CLI::IsMember({"full", "size32", "pkt32"}));
  ps->add_option("--cols", ps_cols, "Register array width")->check(CLI::PositiveNumber);
  ps->add_option("--delay", ps_delay, "Packets between a first pass and its second pass");
  ps->add_option("--seed", ps_c.seed, "Hash seed");
  ps->add_flag("--check", ps_check, "Compare against a one-row sketch and report the first divergence");
  add_output(ps, ps_c);

  // bench
  BenchSpec bs;
  std::vector<int> bench_kb = {4, 8, 13};
  std::string bench_out, bench_format = "csv";
  auto* bn = app.add_subcommand("bench", "Measure sketch update throughput");
  bn->add_option("--rows", bs.rows, "Sketch rows")->check(CLI::PositiveNumber);
  bn->add_option("--memory-bytes", bs.memory_bytes, "Memory budgets (bytes)");
  bn->add_option("--key-bytes", bench_kb, "Key widths")->check(CLI::Range(1, 16));
  bn->add_option("--packets", bs.packets, "Packets per run")->check(CLI::PositiveNumber);
  bn->add_option("--flows", bs.flows, "Flow universe size")->check(CLI::PositiveNumber);
  bn->add_option("--skew", bs.skew, "Zipf exponent");
  bn->add_option("--runs", bs.runs, "Timed runs")->check(CLI::PositiveNumber);
  bn->add_option("--seed", bs.seed, "Seed");
  bn->add_flag("--batched", bs.batched, "Use the batched update path");
  bn->add_option("--out", bench_out, "Output file (default: stdout)");
  bn->add_option("--format", bench_format, "Output format")->check(CLI::IsMember({"csv", "json"}));

  // metrics
  Common mt_c;
  std::string mt_report, mt_task = "hh", mt_table;
  std::uint32_t mt_epoch = 0;
  auto* mt = app.add_subcommand("metrics", "Score a report file against a trace's exact counts");
  mt->add_option("--trace", mt_c.trace, "Input trace")->required();
  mt->add_option("--key-bytes", mt_c.key_bytes, "Key width for traces without a header");
  mt->add_option("--report", mt_report, "Report CSV (key_hex,estimate)");
  mt->add_option("--task", mt_task, "hh scores epoch E; hc scores the change from E-1 to E")
      ->check(CLI::IsMember({"hh", "hc"}));
  mt->add_option("--epoch", mt_epoch, "Epoch to score");
  auto* mt_phi = mt->add_option("--phi", mt_c.phi, "Threshold fraction");
  auto* mt_thr = mt->add_option("--threshold", mt_c.threshold, "Absolute threshold");
  auto* mt_tgt = mt->add_option("--target-heavy", mt_c.target_heavy, "Threshold giving N true heavy flows");
  mt_phi->excludes(mt_thr)->excludes(mt_tgt);
  mt_thr->excludes(mt_tgt);
  mt->add_option("--flow-table", mt_table, "Write the exact per-flow table (key_hex,sum) to this file");
  add_output(mt, mt_c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed()) {
      zp.values = values == "size" ? ValueModel::size : ValueModel::unit;
      const auto g = gen_zipf(zp);
      if (gen_out.empty()) {
        write_trace(std::cout, g.trace);
      } else {
        save_trace(gen_out, g.trace);
      }
      if (!gen_table.empty()) {
        Output t(gen_table);
        oracle::write_flow_table_csv(t.stream(), g.exact.back());
      }
    } else if (hh->parsed()) {
      if (!hh_sketch.empty()) {
        const Sketch s = load_sketch(hh_sketch);
        std::uint64_t t = 0;
        if (hh_c.threshold) {
          t = *hh_c.threshold;
        } else if (hh_c.phi) {
          t = threshold_from_phi(*hh_c.phi, s.total());
        } else {
          throw std::invalid_argument("--sketch needs --threshold or --phi");
        }
        write_entries(hh_c.out, hh_c.format, t, detect_heavy_hitters(s, t).entries);
      } else {
        if (hh_c.trace.empty()) throw std::invalid_argument("hh needs --trace or --sketch");
        run_task(hh_c, base_spec(hh_c, Task::hh));
      }
    } else if (hc->parsed()) {
      run_task(hc_c, base_spec(hc_c, Task::hc));
    } else if (sc->parsed()) {
      auto spec = base_spec(sc_c, pick(sc_task, Task::scalable_hh, Task::scalable_hc));
      spec.detectors = sc_q;
      spec.replication = sc_d;
      spec.partition_seed = sc_pseed;
      run_task(sc_c, spec);
    } else if (nw->parsed()) {
      auto spec = base_spec(nw_c, pick(nw_task, Task::networkwide_hh, Task::networkwide_hc));
      spec.detectors = nw_q;
      spec.partition_seed = nw_pseed;
      spec.assignment =
          nw_assign == "flow" ? NetworkWidePolicy::Assignment::per_flow : NetworkWidePolicy::Assignment::per_packet;
      spec.keep_sketches = !nw_save.empty();
      const Trace trace = read_trace(nw_c.trace, nw_c.key_bytes);
      const auto result = run_experiment(spec, trace);
      write_result(nw_c, spec.task, result);
      if (!nw_save.empty()) save_sketches(nw_save, result);
    } else if (mg->parsed()) {
      std::vector<Sketch> sketches;
      for (const auto& path : merge_in) sketches.push_back(load_sketch(path));
      const Sketch merged = merge(sketches);
      save_sketch(merge_out, merged);
      if (merge_thr) write_entries(merge_report, merge_format, *merge_thr, detect_heavy_hitters(merged, *merge_thr).entries);
    } else if (ps->parsed()) {
      const Trace trace = read_trace(ps_c.trace, ps_c.key_bytes);
      const auto mode = pisa::parse_mode(ps_mode);
      if (ps_check) {
        Output out(ps_c.out);
        json rows = json::array();
        if (ps_c.format == "csv") out.stream() << "mode,epoch,packets,recirculated,pass,first_divergence\n";
        for (const auto& slice : split_epochs(trace.records)) {
          const auto r = pisa::equivalence_check(slice.records, mode, ps_cols, ps_c.seed,
                                                 pisa::RecircPolicy::delayed(ps_delay));
          const std::string div = r.first_divergence ? std::to_string(*r.first_divergence) : "";
          if (ps_c.format == "csv") {
            out.stream() << ps_mode << ',' << slice.epoch << ',' << r.packets << ',' << r.recirculated << ','
                         << (r.pass ? 1 : 0) << ',' << div << '\n';
          } else {
            rows.push_back({{"mode", ps_mode},
                            {"epoch", slice.epoch},
                            {"packets", r.packets},
                            {"recirculated", r.recirculated},
                            {"pass", r.pass},
                            {"first_divergence", r.first_divergence ? json(*r.first_divergence) : json(nullptr)}});
          }
        }
        if (ps_c.format == "json") out.stream() << json{{"rows", rows}}.dump(2) << '\n';
      } else {
        ExperimentSpec spec;
        spec.task = Task::pisa;
        spec.cols = {ps_cols};
        spec.seed = ps_c.seed;
        spec.pisa_mode = mode;
        spec.pisa_delay = ps_delay;
        write_result(ps_c, Task::pisa, run_experiment(spec, trace));
      }
    } else if (bn->parsed()) {
      bs.key_bytes.assign(bench_kb.begin(), bench_kb.end());
      const auto rows = bench_update(bs);
      Output out(bench_out);
      if (bench_format == "csv") {
        write_bench_csv(out.stream(), rows);
      } else {
        json arr = json::array();
        for (const auto& r : rows) {
          arr.push_back({{"key_bytes", r.key_bytes},
                         {"memory_bytes", r.memory_bytes},
                         {"rows", r.rows},
                         {"cols", r.cols},
                         {"packets", r.packets},
                         {"batched", r.batched},
                         {"mean_updates_per_sec", r.mean},
                         {"stddev", r.stddev},
                         {"per_run", r.rates}});
        }
        out.stream() << json{{"rows", arr}}.dump(2) << '\n';
      }
    } else if (mt->parsed()) {
      const Trace trace = read_trace(mt_c.trace, mt_c.key_bytes);
      const auto epochs = split_epochs(trace.records);
      auto table_of = [&](std::uint32_t epoch) {
        for (const auto& e : epochs) {
          if (e.epoch == epoch) return oracle::exact_counts(e.records);
        }
        throw std::invalid_argument("trace has no epoch " + std::to_string(epoch));
      };
      FlowCounts exact;
      std::uint64_t total = 0;
      if (mt_task == "hh") {
        auto t = table_of(mt_epoch);
        exact = std::move(t.sums);
        total = t.total;
      } else {
        if (mt_epoch == 0) throw std::invalid_argument("hc scoring needs --epoch >= 1");
        auto c = oracle::exact_changes(table_of(mt_epoch - 1), table_of(mt_epoch));
        exact = std::move(c.changes);
        total = c.total;
      }
      if (!mt_table.empty()) {
        Output t(mt_table);
        oracle::write_flow_table_csv(t.stream(), exact);
      }
      if (!mt_report.empty()) {
        std::ifstream in(mt_report);
        if (!in) throw std::runtime_error("cannot open " + mt_report);
        HeavyReport report;
        report.entries = read_report_csv(in, trace.meta.key_bytes);
        const std::uint64_t threshold = threshold_rule(mt_c).resolve(exact, total);
        const auto truth = oracle::heavy_at_least(exact, threshold);
        const auto m = compute_metrics(report, truth, exact);
        Output out(mt_c.out);
        if (mt_c.format == "csv") {
          out.stream() << "threshold,true,reported,correct,precision,recall,f1,relative_error\n"
                       << threshold << ',' << m.true_count << ',' << m.reported_count << ',' << m.correct_count
                       << ',' << fixed6(m.precision) << ',' << fixed6(m.recall) << ',' << fixed6(m.f1) << ','
                       << fixed6(m.relative_error) << '\n';
        } else {
          json j = metrics_json(m);
          j["threshold"] = threshold;
          out.stream() << j.dump(2) << '\n';
        }
      } else if (mt_table.empty()) {
        throw std::invalid_argument("metrics needs --report or --flow-table");
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "mvsketch: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
