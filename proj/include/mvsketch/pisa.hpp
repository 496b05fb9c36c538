#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mvsketch/hash.hpp"
#include "mvsketch/sketch.hpp"
#include "mvsketch/traffic.hpp"

// Software model of the single-row switch-pipeline update variants:
//   full_5tuple  two-pass update with the 104-bit key split over two paired
//                register arrays (K1,K2) and (K3,K4);
//   size_32      byte counting on 32-bit keys, (K,C) updated by one paired atom,
//                counter negation deferred to a second pass;
//   packet_32    packet counting on 32-bit keys in a single pass.
//
// Every branch within a pass is evaluated against the register values read at
// stage entry, and each register is written at most once per pass. Registers
// are 64-bit and wrap on underflow, which can only happen when a delayed
// second pass races with later packets.
namespace mvsketch::pisa {

enum class Mode { full_5tuple, size_32, packet_32 };

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::full_5tuple: return "full";
    case Mode::size_32: return "size32";
    case Mode::packet_32: return "pkt32";
  }
  return "?";
}

inline Mode parse_mode(const std::string& s) {
  if (s == "full") return Mode::full_5tuple;
  if (s == "size32") return Mode::size_32;
  if (s == "pkt32") return Mode::packet_32;
  throw std::invalid_argument("unknown pisa mode '" + s + "' (expected full, size32 or pkt32)");
}

inline std::size_t key_bytes_for(Mode m) { return m == Mode::full_5tuple ? 13 : 4; }

// Second passes run `delay` packets after the one that triggered them; 0 means
// before the next packet enters the pipeline.
struct RecircPolicy {
  std::uint32_t delay = 0;

  static RecircPolicy immediate() { return {0}; }
  static RecircPolicy delayed(std::uint32_t packets) { return {packets}; }
};

// 13-byte key layout: src ip (4) | dst ip (4) | src port (2) | dst port (2) | proto (1).
struct FiveTuple {
  std::uint32_t src_ip = 0;
  std::uint32_t dst_ip = 0;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint8_t proto = 0;

  static FiveTuple from_key(const FlowKey& key) {
    if (key.size() != 13) throw std::invalid_argument("5-tuple keys are 13 bytes");
    auto b = key.bytes();
    auto be = [&](std::size_t at, std::size_t n) {
      std::uint32_t v = 0;
      for (std::size_t i = 0; i < n; ++i) v = (v << 8) | b[at + i];
      return v;
    };
    return {be(0, 4), be(4, 4), static_cast<std::uint16_t>(be(8, 2)), static_cast<std::uint16_t>(be(10, 2)),
            b[12]};
  }

  // x1 = src ip, x2 = dst ip, x3 = ports, x4 = proto zero-padded to 32 bits.
  std::array<std::uint32_t, 4> sub_keys() const {
    return {src_ip, dst_ip, (static_cast<std::uint32_t>(src_port) << 16) | dst_port, proto};
  }

  static FlowKey key_from_sub_keys(const std::array<std::uint32_t, 4>& s) {
    std::uint8_t b[13];
    for (int i = 0; i < 4; ++i) {
      b[i] = static_cast<std::uint8_t>(s[0] >> (24 - 8 * i));
      b[4 + i] = static_cast<std::uint8_t>(s[1] >> (24 - 8 * i));
      b[8 + i] = static_cast<std::uint8_t>(s[2] >> (24 - 8 * i));
    }
    b[12] = static_cast<std::uint8_t>(s[3]);
    return FlowKey::from_bytes(b);
  }
};

class PisaState {
 public:
  PisaState(Mode mode, std::uint32_t cols, std::uint64_t seed, RecircPolicy policy = RecircPolicy::immediate())
      : mode_(mode), cols_(cols), row_seed_(row_seed(seed, 0)), policy_(policy), sum_(cols), counter_(cols) {
    if (cols < 1) throw std::invalid_argument("pisa: cols must be >= 1");
    for (auto& k : key_) k.assign(cols, 0);
  }

  Mode mode() const { return mode_; }
  std::uint32_t cols() const { return cols_; }

  std::uint32_t column_of(const FlowKey& key) const { return hash_column(key.bytes(), row_seed_, cols_); }

  void update_full(const FlowKey& key, std::uint64_t value) {
    require(Mode::full_5tuple);
    const auto sub = FiveTuple::from_key(key).sub_keys();
    const std::uint32_t col = column_of(key);
    begin_packet(col);
    // Stage 1: V and (K1, K2). Stage 2: (K3, K4). Both only compare.
    sum_[col] += value;
    const bool flag = key_[0][col] != sub[0] || key_[1][col] != sub[1] || key_[2][col] != sub[2] ||
                      key_[3][col] != sub[3];
    // Stage 3: C.
    const std::uint64_t c_read = counter_[col];
    if (!flag) {
      counter_[col] = c_read + value;
    } else if (c_read >= value) {
      counter_[col] = c_read - value;
    }
    const bool repass = flag && c_read < value;
    end_packet(repass, {col, sub, value});
  }

  void update_size32(std::uint32_t key, std::uint64_t value) {
    require(Mode::size_32);
    const std::uint32_t col = column_of(FlowKey::from_uint(key, 4));
    begin_packet(col);
    sum_[col] += value;
    // One paired atom over (K, C).
    const std::uint32_t k_read = key_[0][col];
    const std::uint64_t c_read = counter_[col];
    if (k_read == key) {
      counter_[col] = c_read + value;
    } else if (c_read >= value) {
      counter_[col] = c_read - value;
    }
    const bool repass = k_read != key && c_read < value;
    if (repass) key_[0][col] = key;
    end_packet(repass, {col, {key, 0, 0, 0}, value});
  }

  void update_pkt32(std::uint32_t key) {
    require(Mode::packet_32);
    const std::uint32_t col = column_of(FlowKey::from_uint(key, 4));
    begin_packet(col);
    sum_[col] += 1;
    const std::uint32_t k_read = key_[0][col];
    const std::uint64_t c_read = counter_[col];
    counter_[col] = (k_read == key || c_read == 0) ? c_read + 1 : c_read - 1;
    if (k_read != key && c_read == 0) key_[0][col] = key;
    end_packet(false, {});
  }

  // Dispatches on mode. Packet counting ignores record values.
  void process(const PacketRecord& p) {
    if (p.key.size() != key_bytes_for(mode_)) {
      throw std::invalid_argument(std::string("pisa ") + mode_name(mode_) + " mode expects " +
                                  std::to_string(key_bytes_for(mode_)) + "-byte keys");
    }
    switch (mode_) {
      case Mode::full_5tuple: update_full(p.key, p.value); break;
      case Mode::size_32: update_size32(static_cast<std::uint32_t>(p.key.to_uint()), p.value); break;
      case Mode::packet_32: update_pkt32(static_cast<std::uint32_t>(p.key.to_uint())); break;
    }
  }

  // Runs every outstanding second pass.
  void drain() {
    while (!pending_.empty()) second_pass();
  }

  bool quiescent() const { return pending_.empty(); }
  std::uint64_t packets() const { return packets_; }
  std::uint64_t recirculated() const { return recirculated_; }
  double recirc_ratio() const {
    return packets_ == 0 ? 0.0 : static_cast<double>(recirculated_) / static_cast<double>(packets_);
  }

  // Register contents of a column, in sketch-bucket form.
  Bucket column_state(std::uint32_t col) const {
    Bucket b;
    b.sum = sum_[col];
    b.indicator = counter_[col];
    b.key = mode_ == Mode::full_5tuple
                ? FiveTuple::key_from_sub_keys({key_[0][col], key_[1][col], key_[2][col], key_[3][col]})
                : FlowKey::from_uint(key_[0][col], 4);
    return b;
  }

  // When enabled, take_touched() returns the columns written since its last call.
  void track_touched(bool on) { track_touched_ = on; }
  std::vector<std::uint32_t> take_touched() { return std::exchange(touched_, {}); }

 private:
  struct PendingPass {
    std::uint32_t col = 0;
    std::array<std::uint32_t, 4> sub{};
    std::uint64_t value = 0;
    std::uint32_t remaining = 0;
  };

  void require(Mode m) const {
    if (mode_ != m) {
      throw std::logic_error(std::string("pisa state is in ") + mode_name(mode_) + " mode, not " + mode_name(m));
    }
  }

  void begin_packet(std::uint32_t col) {
    ++packets_;
    if (track_touched_) touched_.push_back(col);
  }

  void end_packet(bool repass, PendingPass pass) {
    for (auto& p : pending_) --p.remaining;
    if (repass) {
      ++recirculated_;
      pass.remaining = policy_.delay;
      pending_.push_back(pass);
    }
    while (!pending_.empty() && pending_.front().remaining == 0) second_pass();
  }

  void second_pass() {
    const PendingPass p = pending_.front();
    pending_.pop_front();
    if (track_touched_) touched_.push_back(p.col);
    if (mode_ == Mode::full_5tuple) {
      for (int i = 0; i < 4; ++i) key_[i][p.col] = p.sub[i];
    }
    counter_[p.col] = p.value - counter_[p.col];
  }

  Mode mode_;
  std::uint32_t cols_;
  std::uint64_t row_seed_;
  RecircPolicy policy_;
  std::vector<std::uint64_t> sum_;
  std::vector<std::uint64_t> counter_;
  std::array<std::vector<std::uint32_t>, 4> key_;
  std::deque<PendingPass> pending_;
  std::vector<std::uint32_t> touched_;
  bool track_touched_ = false;
  std::uint64_t packets_ = 0;
  std::uint64_t recirculated_ = 0;
};

struct EquivalenceResult {
  bool pass = true;
  std::optional<std::size_t> first_divergence;
  std::size_t packets = 0;
  std::uint64_t recirculated = 0;
};

// Runs the pipeline model next to a one-row sketch with the same hash and
// compares the touched columns whenever no second pass is outstanding, then
// every column after draining. Packet counting feeds the sketch unit values.
inline EquivalenceResult equivalence_check(std::span<const PacketRecord> stream, Mode mode, std::uint32_t cols,
                                           std::uint64_t seed, RecircPolicy policy = RecircPolicy::immediate()) {
  PisaState sim(mode, cols, seed, policy);
  sim.track_touched(true);
  Sketch ref(SketchConfig{1, cols, static_cast<std::uint8_t>(key_bytes_for(mode)), seed});
  EquivalenceResult result;
  std::vector<std::uint32_t> dirty;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    sim.process(stream[i]);
    ref.update(stream[i].key, mode == Mode::packet_32 ? 1 : stream[i].value);
    auto touched = sim.take_touched();
    dirty.insert(dirty.end(), touched.begin(), touched.end());
    if (!sim.quiescent()) continue;
    for (const auto col : dirty) {
      if (!(sim.column_state(col) == ref.bucket(0, col))) {
        result.pass = false;
        result.first_divergence = i;
        result.packets = i + 1;
        result.recirculated = sim.recirculated();
        return result;
      }
    }
    dirty.clear();
  }
  sim.drain();
  for (std::uint32_t col = 0; col < cols; ++col) {
    if (!(sim.column_state(col) == ref.bucket(0, col))) {
      result.pass = false;
      result.first_divergence = stream.empty() ? 0 : stream.size() - 1;
      break;
    }
  }
  result.packets = stream.size();
  result.recirculated = sim.recirculated();
  return result;
}

}  // namespace mvsketch::pisa
