#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mvsketch/flow_key.hpp"
#include "mvsketch/hash.hpp"

namespace mvsketch {

// Malformed serialized sketch, trace, or report input.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SketchConfig {
  std::uint32_t rows = 4;
  std::uint32_t cols = 1024;
  std::uint8_t key_bytes = 8;
  std::uint64_t seed = 1;

  void validate() const {
    if (rows < 1) throw std::invalid_argument("sketch rows must be >= 1");
    if (cols < 1) throw std::invalid_argument("sketch cols must be >= 1");
    if (key_bytes < 1 || key_bytes > FlowKey::kMaxBytes) {
      throw std::invalid_argument("sketch key_bytes must be in [1, 16]");
    }
  }

  // Merge-compatible iff equal.
  friend bool operator==(const SketchConfig&, const SketchConfig&) = default;
};

// One cell of the sketch: V (sum of everything hashed here), K (candidate
// heavy flow) and C (majority-vote indicator counter).
// Invariant: indicator <= sum and (sum + indicator) is even.
struct Bucket {
  std::uint64_t sum = 0;
  std::uint64_t indicator = 0;
  FlowKey key;

  friend bool operator==(const Bucket&, const Bucket&) = default;
};

struct FlowEstimate {
  std::uint64_t point = 0;
  std::uint64_t upper = 0;
  std::uint64_t lower = 0;

  friend bool operator==(const FlowEstimate&, const FlowEstimate&) = default;
};

// (epsilon, delta) -> (rows, cols) with rows = ceil(log2(1/delta)), cols = ceil(2/epsilon).
inline std::pair<std::uint32_t, std::uint32_t> params_from_error(double epsilon, double delta) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must be in (0, 1)");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must be in (0, 1)");
  // Absorb representation error so that e.g. 2/0.001 gives 2000, not 2001.
  auto ceil_tol = [](double x) { return std::ceil(x - 1e-9 * std::max(1.0, x)); };
  const double rows = std::max(1.0, ceil_tol(std::log2(1.0 / delta)));
  const double cols = ceil_tol(2.0 / epsilon);
  return {static_cast<std::uint32_t>(rows), static_cast<std::uint32_t>(cols)};
}

class Sketch {
 public:
  explicit Sketch(const SketchConfig& config) : config_(config) {
    config_.validate();
    init_seeds();
    buckets_.assign(static_cast<std::size_t>(config_.rows) * config_.cols,
                    Bucket{0, 0, FlowKey(config_.key_bytes)});
  }

  // Rebuilds a sketch from raw state; throws FormatError unless the state
  // satisfies the bucket and row-conservation invariants.
  static Sketch from_state(const SketchConfig& config, std::vector<Bucket> buckets,
                           std::uint64_t total) {
    Sketch s(config);
    if (buckets.size() != s.buckets_.size()) throw FormatError("bucket count does not match config");
    s.buckets_ = std::move(buckets);
    s.total_ = total;
    s.check_invariants();
    return s;
  }

  const SketchConfig& config() const { return config_; }
  std::uint64_t total() const { return total_; }
  std::uint32_t rows() const { return config_.rows; }
  std::uint32_t cols() const { return config_.cols; }

  // 0-based column of `key` in 0-based `row`.
  std::uint32_t column(std::size_t row, const FlowKey& key) const {
    return hash_column(key.bytes(), row_seeds_[row], config_.cols);
  }

  const Bucket& bucket(std::size_t row, std::size_t col) const {
    return buckets_[row * config_.cols + col];
  }
  std::span<const Bucket> row(std::size_t row) const {
    return {buckets_.data() + row * config_.cols, config_.cols};
  }
  std::span<const Bucket> buckets() const { return buckets_; }

  void update(const FlowKey& key, std::uint64_t value) {
    check_key(key);
    add_to_total(value);
    for (std::uint32_t i = 0; i < config_.rows; ++i) {
      apply(buckets_[i * config_.cols + column(i, key)], key, value);
    }
  }

  // Same result as calling update() on each pair in order. Hashes a block of
  // packets before touching any bucket.
  void update_batch(std::span<const FlowKey> keys, std::span<const std::uint64_t> values) {
    if (keys.size() != values.size()) throw std::invalid_argument("keys and values differ in length");
    for (const FlowKey& key : keys) check_key(key);
    constexpr std::size_t kBlock = 32;
    std::vector<std::uint32_t> offsets(kBlock * config_.rows);
    for (std::size_t start = 0; start < keys.size(); start += kBlock) {
      const std::size_t n = std::min(kBlock, keys.size() - start);
      for (std::size_t p = 0; p < n; ++p) {
        const FlowKey& key = keys[start + p];
        for (std::uint32_t i = 0; i < config_.rows; ++i) {
          offsets[p * config_.rows + i] = i * config_.cols + column(i, key);
        }
      }
      for (std::size_t p = 0; p < n; ++p) {
        const std::uint64_t value = values[start + p];
        add_to_total(value);
        for (std::uint32_t i = 0; i < config_.rows; ++i) {
          apply(buckets_[offsets[p * config_.rows + i]], keys[start + p], value);
        }
      }
    }
  }

  // Minimum over rows of the per-bucket upper bound. Never below the true sum.
  std::uint64_t query(const FlowKey& key) const {
    check_key(key);
    std::uint64_t best = std::numeric_limits<std::uint64_t>::max();
    for (std::uint32_t i = 0; i < config_.rows; ++i) {
      best = std::min(best, row_upper(bucket(i, column(i, key)), key));
    }
    return best;
  }

  FlowEstimate bounds(const FlowKey& key) const {
    check_key(key);
    FlowEstimate est{std::numeric_limits<std::uint64_t>::max(), 0, 0};
    for (std::uint32_t i = 0; i < config_.rows; ++i) {
      const Bucket& b = bucket(i, column(i, key));
      est.point = std::min(est.point, row_upper(b, key));
      if (b.key == key) est.lower = std::max(est.lower, b.indicator);
    }
    est.upper = est.point;
    return est;
  }

  // Throws FormatError on the first violated invariant.
  void check_invariants() const {
    for (std::uint32_t i = 0; i < config_.rows; ++i) {
      std::uint64_t row_sum = 0;
      for (const Bucket& b : row(i)) {
        if (b.key.size() != config_.key_bytes) throw FormatError("bucket key width mismatch");
        if (b.indicator > b.sum) throw FormatError("bucket indicator exceeds bucket sum");
        if ((b.sum + b.indicator) % 2 != 0) throw FormatError("bucket sum and indicator differ in parity");
        if (row_sum + b.sum < row_sum) throw FormatError("row sum overflows");
        row_sum += b.sum;
      }
      if (row_sum != total_) throw FormatError("row " + std::to_string(i) + " does not sum to total");
    }
  }

  friend bool operator==(const Sketch& a, const Sketch& b) {
    return a.config_ == b.config_ && a.total_ == b.total_ && a.buckets_ == b.buckets_;
  }

 private:
  static std::uint64_t row_upper(const Bucket& b, const FlowKey& key) {
    assert((b.sum + b.indicator) % 2 == 0);
    // (V + C) / 2 written so it cannot overflow.
    return (b.sum - b.indicator) / 2 + (b.key == key ? b.indicator : 0);
  }

  // Majority-vote step with general non-negative values. The candidate is
  // replaced only when the decremented counter would go strictly negative.
  static void apply(Bucket& b, const FlowKey& key, std::uint64_t value) {
    b.sum += value;
    if (b.key == key) {
      b.indicator += value;
    } else if (b.indicator < value) {
      b.key = key;
      b.indicator = value - b.indicator;
    } else {
      b.indicator -= value;
    }
  }

  void add_to_total(std::uint64_t value) {
    // Every bucket sum is bounded by total, so one check covers all counters.
    if (value > std::numeric_limits<std::uint64_t>::max() - total_) {
      throw std::overflow_error("sketch counter overflow");
    }
    total_ += value;
  }

  void check_key(const FlowKey& key) const {
    if (key.size() != config_.key_bytes) {
      throw std::invalid_argument("flow key has " + std::to_string(key.size()) + " bytes, sketch expects " +
                                  std::to_string(config_.key_bytes));
    }
  }

  void init_seeds() {
    row_seeds_.resize(config_.rows);
    for (std::uint32_t i = 0; i < config_.rows; ++i) row_seeds_[i] = row_seed(config_.seed, i);
  }

  SketchConfig config_;
  std::vector<std::uint64_t> row_seeds_;
  std::vector<Bucket> buckets_;
  std::uint64_t total_ = 0;
};

// Serialized layout, all integers little-endian:
//   "MVSK" | version:u16 | rows:u32 | cols:u32 | key_bytes:u8 | seed:u64 | total:u64
//   then rows*cols buckets in row-major order, each V:u64 | C:u64 | K:key_bytes raw bytes.
inline constexpr std::uint16_t kSketchFormatVersion = 1;
inline constexpr std::string_view kSketchMagic = "MVSK";

namespace detail {

inline void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint64_t le(int bytes) {
    need(bytes);
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += bytes;
    return v;
  }

  std::span<const std::uint8_t> raw(std::size_t n) {
    need(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError("truncated sketch data");
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize(const Sketch& sketch) {
  const SketchConfig& c = sketch.config();
  std::vector<std::uint8_t> out;
  out.reserve(31 + sketch.buckets().size() * (16 + c.key_bytes));
  for (char ch : kSketchMagic) out.push_back(static_cast<std::uint8_t>(ch));
  detail::put_le(out, kSketchFormatVersion, 2);
  detail::put_le(out, c.rows, 4);
  detail::put_le(out, c.cols, 4);
  detail::put_le(out, c.key_bytes, 1);
  detail::put_le(out, c.seed, 8);
  detail::put_le(out, sketch.total(), 8);
  for (const Bucket& b : sketch.buckets()) {
    detail::put_le(out, b.sum, 8);
    detail::put_le(out, b.indicator, 8);
    out.insert(out.end(), b.key.bytes().begin(), b.key.bytes().end());
  }
  return out;
}

inline Sketch deserialize(std::span<const std::uint8_t> data) {
  detail::ByteReader in(data);
  auto magic = in.raw(4);
  if (!std::equal(magic.begin(), magic.end(), kSketchMagic.begin())) throw FormatError("bad sketch magic");
  const auto version = in.le(2);
  if (version != kSketchFormatVersion) {
    throw FormatError("unsupported sketch format version " + std::to_string(version));
  }
  SketchConfig c;
  c.rows = static_cast<std::uint32_t>(in.le(4));
  c.cols = static_cast<std::uint32_t>(in.le(4));
  c.key_bytes = static_cast<std::uint8_t>(in.le(1));
  c.seed = in.le(8);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid sketch config: ") + e.what());
  }
  const std::uint64_t total = in.le(8);
  const std::uint64_t count = static_cast<std::uint64_t>(c.rows) * c.cols;
  if (count > (data.size() / (16 + c.key_bytes)) + 1) throw FormatError("truncated sketch data");
  std::vector<Bucket> buckets;
  buckets.reserve(count);
  for (std::uint64_t n = 0; n < count; ++n) {
    Bucket b;
    b.sum = in.le(8);
    b.indicator = in.le(8);
    b.key = FlowKey::from_bytes(in.raw(c.key_bytes));
    buckets.push_back(b);
  }
  if (!in.done()) throw FormatError("trailing bytes after sketch data");
  return Sketch::from_state(c, std::move(buckets), total);
}

inline void save_sketch(const std::string& path, const Sketch& sketch) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  const auto bytes = serialize(sketch);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path);
}

inline Sketch load_sketch(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace mvsketch
