#pragma once

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <variant>
#include <vector>

#include "mvsketch/distributed.hpp"
#include "mvsketch/flow_key.hpp"
#include "mvsketch/hash.hpp"
#include "mvsketch/sketch.hpp"

namespace mvsketch {

struct PacketRecord {
  std::uint32_t epoch = 0;
  FlowKey key;
  std::uint64_t value = 1;

  friend bool operator==(const PacketRecord&, const PacketRecord&) = default;
};

struct EpochStats {
  std::uint32_t epoch = 0;
  std::uint64_t packets = 0;
  std::uint64_t flows = 0;
  std::uint64_t volume = 0;

  friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

struct TraceMeta {
  std::uint8_t key_bytes = 0;
  std::vector<EpochStats> epochs;
  // Free-form "# ..." lines, e.g. generator parameters.
  std::vector<std::string> notes;
};

struct Trace {
  TraceMeta meta;
  std::vector<PacketRecord> records;
};

inline std::vector<EpochStats> epoch_stats(std::span<const PacketRecord> records) {
  std::vector<EpochStats> out;
  std::unordered_set<FlowKey, FlowKeyHash> flows;
  for (const auto& r : records) {
    if (out.empty() || out.back().epoch != r.epoch) {
      if (!out.empty()) out.back().flows = flows.size();
      flows.clear();
      out.push_back({r.epoch, 0, 0, 0});
    }
    out.back().packets += 1;
    out.back().volume += r.value;
    flows.insert(r.key);
  }
  if (!out.empty()) out.back().flows = flows.size();
  return out;
}

// ---------------------------------------------------------------------------
// CSV trace format:
//   #mvsketch-trace v1 key_bytes=<k>
//   # optional note lines
//   <epoch>,<key hex, exactly 2k lowercase digits>,<value>
// Epochs must be non-decreasing; values must be >= 1.

inline constexpr std::string_view kTraceHeader = "#mvsketch-trace v1 key_bytes=";

inline Trace parse_trace(std::istream& in, std::optional<std::size_t> key_bytes = std::nullopt) {
  Trace trace;
  std::string line;
  std::size_t lineno = 0;
  bool seen_data = false;
  auto fail = [&](const std::string& what) {
    throw FormatError("trace line " + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.starts_with(kTraceHeader)) {
      if (seen_data) fail("header after data");
      std::size_t k = 0;
      try {
        k = std::stoul(line.substr(kTraceHeader.size()));
      } catch (const std::exception&) {
        fail("bad key_bytes in header");
      }
      if (k < 1 || k > FlowKey::kMaxBytes) fail("key_bytes out of range");
      if (key_bytes && *key_bytes != k) fail("header key_bytes disagrees with expected width");
      key_bytes = k;
      continue;
    }
    if (line.front() == '#') {
      trace.meta.notes.push_back(line.substr(1));
      continue;
    }
    if (!key_bytes) fail("data before '#mvsketch-trace' header and no key width given");
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos) {
      fail("expected epoch,key_hex,value");
    }
    auto parse_uint = [&](const std::string& field, const char* name) -> std::uint64_t {
      if (field.empty() || field.size() > 20 || field.find_first_not_of("0123456789") != std::string::npos) {
        fail(std::string("non-numeric ") + name);
      }
      try {
        return std::stoull(field);
      } catch (const std::exception&) {
        fail(std::string(name) + " out of range");
      }
      return 0;
    };
    PacketRecord rec;
    const std::uint64_t epoch = parse_uint(line.substr(0, c1), "epoch");
    if (epoch > UINT32_MAX) fail("epoch out of range");
    rec.epoch = static_cast<std::uint32_t>(epoch);
    try {
      rec.key = FlowKey::from_hex(line.substr(c1 + 1, c2 - c1 - 1), *key_bytes);
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
    rec.value = parse_uint(line.substr(c2 + 1), "value");
    if (rec.value == 0) fail("value must be >= 1");
    if (!trace.records.empty() && rec.epoch < trace.records.back().epoch) fail("epoch went backwards");
    trace.records.push_back(rec);
    seen_data = true;
  }
  trace.meta.key_bytes = static_cast<std::uint8_t>(key_bytes.value_or(0));
  trace.meta.epochs = epoch_stats(trace.records);
  return trace;
}

inline void write_trace(std::ostream& out, const Trace& trace) {
  out << kTraceHeader << static_cast<int>(trace.meta.key_bytes) << '\n';
  for (const auto& note : trace.meta.notes) out << '#' << note << '\n';
  for (const auto& r : trace.records) out << r.epoch << ',' << r.key.hex() << ',' << r.value << '\n';
}

// Reads a trace file; names ending in ".gz" are gunzipped first.
inline Trace read_trace(const std::string& path, std::optional<std::size_t> key_bytes = std::nullopt) {
  if (path.ends_with(".gz")) {
    gzFile gz = gzopen(path.c_str(), "rb");
    if (gz == nullptr) throw std::runtime_error("cannot open " + path);
    std::string data;
    char buf[1 << 16];
    int n = 0;
    while ((n = gzread(gz, buf, sizeof(buf))) > 0) data.append(buf, static_cast<std::size_t>(n));
    const bool failed = n < 0;
    gzclose(gz);
    if (failed) throw std::runtime_error("failed to decompress " + path);
    std::istringstream in(data);
    return parse_trace(in, key_bytes);
  }
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return parse_trace(in, key_bytes);
}

inline void save_trace(const std::string& path, const Trace& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_trace(out, trace);
}

// ---------------------------------------------------------------------------
// Synthetic Zipf traces.

enum class ValueModel { unit, size };

// Packet sizes for ValueModel::size: 40% U[64,127], 15% U[128,1023], 45% U[1024,1500].
inline constexpr const char* kSizeModelDescription = "size_mix=0.40*U[64,127]+0.15*U[128,1023]+0.45*U[1024,1500]";

struct ZipfParams {
  std::uint64_t flows = 100000;
  std::uint64_t packets = 1000000;  // per epoch
  double skew = 1.1;
  ValueModel values = ValueModel::unit;
  std::uint64_t seed = 1;
  std::uint8_t key_bytes = 8;
  std::uint32_t epochs = 1;
  // Per-epoch probability that a rank swaps its flow with a random other rank.
  double churn = 0.0;
};

struct GeneratedTrace {
  Trace trace;
  // Exact per-flow sums per epoch, accumulated by rank during generation.
  std::vector<FlowCounts> exact;
};

namespace detail {

inline double unit_double(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

inline std::uint64_t packet_size(std::mt19937_64& rng) {
  const double u = unit_double(rng);
  if (u < 0.40) return 64 + uniform_below(rng, 64);
  if (u < 0.55) return 128 + uniform_below(rng, 896);
  return 1024 + uniform_below(rng, 477);
}

// Distinct pseudo-random keys, one per rank, derived from the trace seed.
inline std::vector<FlowKey> flow_keys(std::uint64_t count, std::size_t width, std::uint64_t seed) {
  std::vector<FlowKey> keys;
  keys.reserve(count);
  std::unordered_set<FlowKey, FlowKeyHash> used;
  used.reserve(count * 2);
  const std::uint64_t base = splitmix64(seed ^ 0x6b657973ULL);
  for (std::uint64_t rank = 0; rank < count; ++rank) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      std::uint8_t bytes[16];
      std::uint64_t word = 0;
      for (std::size_t i = 0; i < width; ++i) {
        if (i % 8 == 0) word = splitmix64(splitmix64(base ^ rank) + (attempt << 8) + i / 8);
        bytes[i] = static_cast<std::uint8_t>(word >> (8 * (i % 8)));
      }
      FlowKey key = FlowKey::from_bytes({bytes, width});
      if (used.insert(key).second) {
        keys.push_back(key);
        break;
      }
      if (attempt > 1000) throw std::invalid_argument("key space too small for requested flow count");
    }
  }
  return keys;
}

}  // namespace detail

inline std::string describe(const ZipfParams& p) {
  std::ostringstream s;
  s << " generator=zipf flows=" << p.flows << " packets_per_epoch=" << p.packets << " skew=" << p.skew
    << " epochs=" << p.epochs << " churn=" << p.churn << " seed=" << p.seed
    << " values=" << (p.values == ValueModel::unit ? std::string("unit") : kSizeModelDescription);
  return s.str();
}

// Rank-frequency Zipf over a fixed universe of `flows` keys. Deterministic
// given the parameters.
inline GeneratedTrace gen_zipf(const ZipfParams& p) {
  if (p.flows < 1) throw std::invalid_argument("zipf: flows must be >= 1");
  if (p.packets < 1) throw std::invalid_argument("zipf: packets must be >= 1");
  if (!(p.skew > 0.0)) throw std::invalid_argument("zipf: skew must be > 0");
  if (p.epochs < 1) throw std::invalid_argument("zipf: epochs must be >= 1");
  if (!(p.churn >= 0.0 && p.churn <= 1.0)) throw std::invalid_argument("zipf: churn must be in [0, 1]");
  if (p.key_bytes < 8 && std::ldexp(1.0, 8 * p.key_bytes) < 2.0 * static_cast<double>(p.flows)) {
    throw std::invalid_argument("zipf: key width too small for flow count");
  }

  std::vector<double> cdf(p.flows);
  double acc = 0.0;
  for (std::uint64_t i = 0; i < p.flows; ++i) {
    acc += std::pow(static_cast<double>(i + 1), -p.skew);
    cdf[i] = acc;
  }
  for (auto& c : cdf) c /= acc;

  const auto keys = detail::flow_keys(p.flows, p.key_bytes, p.seed);
  std::vector<std::uint64_t> flow_of_rank(p.flows);
  for (std::uint64_t i = 0; i < p.flows; ++i) flow_of_rank[i] = i;

  std::mt19937_64 rng(p.seed);
  GeneratedTrace out;
  out.trace.meta.key_bytes = p.key_bytes;
  out.trace.meta.notes.push_back(describe(p));
  out.trace.records.reserve(p.packets * p.epochs);
  std::vector<std::uint64_t> sums(p.flows);

  for (std::uint32_t e = 0; e < p.epochs; ++e) {
    if (e > 0 && p.churn > 0.0) {
      for (std::uint64_t r = 0; r < p.flows; ++r) {
        if (detail::unit_double(rng) < p.churn) std::swap(flow_of_rank[r], flow_of_rank[detail::uniform_below(rng, p.flows)]);
      }
    }
    std::fill(sums.begin(), sums.end(), 0);
    for (std::uint64_t n = 0; n < p.packets; ++n) {
      const double u = detail::unit_double(rng);
      auto rank = static_cast<std::uint64_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
      rank = std::min(rank, p.flows - 1);
      const std::uint64_t flow = flow_of_rank[rank];
      const std::uint64_t value = p.values == ValueModel::unit ? 1 : detail::packet_size(rng);
      out.trace.records.push_back({e, keys[flow], value});
      sums[flow] += value;
    }
    FlowCounts table;
    for (std::uint64_t f = 0; f < p.flows; ++f) {
      if (sums[f] > 0) table.emplace(keys[f], sums[f]);
    }
    out.exact.push_back(std::move(table));
  }
  out.trace.meta.epochs = epoch_stats(out.trace.records);
  return out;
}

// ---------------------------------------------------------------------------

struct EpochSlice {
  std::uint32_t epoch = 0;
  std::vector<PacketRecord> records;
};

// Stable grouping by epoch, in ascending epoch order.
inline std::vector<EpochSlice> split_epochs(std::span<const PacketRecord> stream) {
  std::map<std::uint32_t, std::vector<PacketRecord>> groups;
  for (const auto& r : stream) groups[r.epoch].push_back(r);
  std::vector<EpochSlice> out;
  out.reserve(groups.size());
  for (auto& [epoch, records] : groups) out.push_back({epoch, std::move(records)});
  return out;
}

struct NetworkWidePolicy {
  enum class Assignment { per_packet, per_flow };
  std::uint32_t detectors = 1;
  Assignment assignment = Assignment::per_packet;
};

using PartitionPolicy = std::variant<ScalableConfig, NetworkWidePolicy>;

// Splits a stream across detectors. Every packet lands in exactly one output.
inline std::vector<std::vector<PacketRecord>> partition(std::span<const PacketRecord> stream,
                                                        const PartitionPolicy& policy, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  if (const auto* sc = std::get_if<ScalableConfig>(&policy)) {
    sc->validate();
    std::vector<std::vector<PacketRecord>> out(sc->detectors);
    std::unordered_map<FlowKey, std::vector<std::uint32_t>, FlowKeyHash> subsets;
    for (const auto& r : stream) {
      auto it = subsets.find(r.key);
      if (it == subsets.end()) it = subsets.emplace(r.key, sc->detectors_for(r.key)).first;
      const auto& ids = it->second;
      out[ids[detail::uniform_below(rng, ids.size())]].push_back(r);
    }
    return out;
  }
  const auto& nw = std::get<NetworkWidePolicy>(policy);
  if (nw.detectors < 1) throw std::invalid_argument("need at least one detector");
  std::vector<std::vector<PacketRecord>> out(nw.detectors);
  const std::uint64_t flow_seed = splitmix64(seed);
  for (const auto& r : stream) {
    const std::uint64_t h = nw.assignment == NetworkWidePolicy::Assignment::per_flow ? murmur64a(r.key.bytes(), flow_seed)
                                                                                     : rng();
    out[reduce_range(h, nw.detectors)].push_back(r);
  }
  return out;
}

}  // namespace mvsketch
