#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "mvsketch/mvsketch.hpp"
#include "reference_mjrty.hpp"
#include "test_util.hpp"

namespace mvsketch {
namespace {

using testing::key4;

const FlowKey A = key4(0xa);
const FlowKey B = key4(0xb);

Sketch one_by_one() { return Sketch(SketchConfig{1, 1, 4, 1}); }

Sketch hand_trace() {
  Sketch s = one_by_one();
  s.update(A, 3);
  s.update(B, 1);
  s.update(A, 2);
  return s;
}

TEST(FlowKey, HexRoundTripAndOrdering) {
  const FlowKey k = FlowKey::from_hex("00000001", 4);
  EXPECT_EQ(k, key4(1));
  EXPECT_EQ(k.hex(), "00000001");
  EXPECT_EQ(FlowKey::from_hex("DeadBeef", 4).hex(), "deadbeef");
  EXPECT_LT(key4(1), key4(2));
  EXPECT_LT(FlowKey::from_hex("00ff", 2), FlowKey::from_hex("0100", 2));
  EXPECT_THROW(FlowKey::from_hex("000001", 4), std::invalid_argument);
  EXPECT_THROW(FlowKey::from_hex("0000000g", 4), std::invalid_argument);
  EXPECT_THROW(FlowKey(17), std::invalid_argument);
  EXPECT_THROW(FlowKey(0), std::invalid_argument);
}

TEST(SketchConstruction, ZeroInitialised) {
  Sketch s(SketchConfig{4, 1024, 8, 1});
  EXPECT_EQ(s.buckets().size(), 4096u);
  EXPECT_EQ(s.total(), 0u);
  for (const auto& b : s.buckets()) {
    EXPECT_EQ(b.sum, 0u);
    EXPECT_EQ(b.indicator, 0u);
    EXPECT_TRUE(b.key.is_zero());
  }
}

TEST(SketchConstruction, HardwareShape) {
  Sketch s(SketchConfig{1, 2048, 4, 7});
  EXPECT_EQ(s.rows(), 1u);
  EXPECT_EQ(s.cols(), 2048u);
}

TEST(SketchConstruction, RejectsInvalidConfig) {
  EXPECT_THROW(Sketch(SketchConfig{0, 16, 8, 1}), std::invalid_argument);
  EXPECT_THROW(Sketch(SketchConfig{4, 0, 8, 1}), std::invalid_argument);
  EXPECT_THROW(Sketch(SketchConfig{4, 16, 0, 1}), std::invalid_argument);
  EXPECT_THROW(Sketch(SketchConfig{4, 16, 17, 1}), std::invalid_argument);
}

TEST(HashRow, DeterministicAndSharedAcrossEqualConfigs) {
  const SketchConfig c{4, 1000, 8, 99};
  Sketch s1(c), s2(c);
  std::mt19937_64 rng(5);
  for (int n = 0; n < 1000; ++n) {
    const FlowKey k = FlowKey::from_uint(rng(), 8);
    for (std::uint32_t i = 0; i < c.rows; ++i) {
      EXPECT_EQ(s1.column(i, k), s1.column(i, k));
      EXPECT_EQ(s1.column(i, k), s2.column(i, k));
      EXPECT_LT(s1.column(i, k), c.cols);
    }
  }
}

TEST(HashRow, ColumnHistogramPassesChiSquare) {
  // Non-power-of-two width to exercise the multiply-shift reduction.
  const std::uint32_t w = 1000;
  Sketch s(SketchConfig{2, w, 8, 3});
  std::mt19937_64 rng(11);
  for (std::uint32_t row = 0; row < 2; ++row) {
    std::vector<double> hist(w, 0.0);
    const int n = 1000000;
    for (int i = 0; i < n; ++i) hist[s.column(row, FlowKey::from_uint(rng(), 8))] += 1;
    const double expected = static_cast<double>(n) / w;
    double chi2 = 0.0;
    for (double h : hist) chi2 += (h - expected) * (h - expected) / expected;
    // Wilson-Hilferty critical value at 0.01 significance.
    const double df = w - 1, z = 2.326348;
    const double crit = df * std::pow(1 - 2 / (9 * df) + z * std::sqrt(2 / (9 * df)), 3);
    EXPECT_LT(chi2, crit) << "row " << row;
  }
}

TEST(Update, FirstInsertionTakesOver) {
  Sketch s = one_by_one();
  s.update(A, 3);
  EXPECT_EQ(s.bucket(0, 0), (Bucket{3, 3, A}));
}

TEST(Update, HandTraceMatchesReference) {
  const auto ref = testing::run({{"A", 3}, {"B", 1}, {"A", 2}});
  ASSERT_EQ(ref.v, 6);
  ASSERT_EQ(ref.k, "A");
  ASSERT_EQ(ref.c, 4);
  EXPECT_EQ(hand_trace().bucket(0, 0), (Bucket{6, 4, A}));
}

TEST(Update, DecrementToZeroKeepsCandidate) {
  const auto ref = testing::run({{"A", 1}, {"B", 1}});
  ASSERT_EQ(ref.k, "A");
  ASSERT_EQ(ref.c, 0);
  Sketch s = one_by_one();
  s.update(A, 1);
  s.update(B, 1);
  EXPECT_EQ(s.bucket(0, 0), (Bucket{2, 0, A}));
}

TEST(Update, ZeroValueIsNoOp) {
  Sketch s = hand_trace();
  const Sketch before = s;
  s.update(B, 0);
  EXPECT_EQ(s, before);
}

TEST(Update, OverflowIsHardError) {
  Sketch s = one_by_one();
  s.update(A, std::numeric_limits<std::uint64_t>::max() - 1);
  const Sketch before = s;
  EXPECT_THROW(s.update(B, 2), std::overflow_error);
  EXPECT_EQ(s, before);
  s.update(B, 1);
  EXPECT_EQ(s.total(), std::numeric_limits<std::uint64_t>::max());
  EXPECT_EQ(s.query(A), std::numeric_limits<std::uint64_t>::max() - 1);
}

TEST(Update, WrongKeyWidthRejected) {
  Sketch s = one_by_one();
  EXPECT_THROW(s.update(FlowKey::from_uint(1, 8), 1), std::invalid_argument);
  EXPECT_THROW(s.query(FlowKey::from_uint(1, 8)), std::invalid_argument);
}

TEST(Query, HandTrace) {
  const Sketch s = hand_trace();
  EXPECT_EQ(s.query(A), 5u);
  EXPECT_EQ(s.query(B), 1u);
}

TEST(Query, EmptySketchIsZero) {
  Sketch s(SketchConfig{4, 64, 4, 1});
  EXPECT_EQ(s.query(A), 0u);
  EXPECT_EQ(s.bounds(A), (FlowEstimate{0, 0, 0}));
}

TEST(Bounds, HandTrace) {
  const Sketch s = hand_trace();
  EXPECT_EQ(s.bounds(A), (FlowEstimate{5, 5, 4}));
  EXPECT_EQ(s.bounds(B), (FlowEstimate{1, 1, 0}));
}

TEST(ParamsFromError, Formula) {
  EXPECT_EQ(params_from_error(0.5, 0.5), std::make_pair(1u, 4u));
  EXPECT_EQ(params_from_error(0.001, 0.0625), std::make_pair(4u, 2000u));
  EXPECT_EQ(params_from_error(2.0 / 512, 1.0 / 16), std::make_pair(4u, 512u));
  EXPECT_EQ(params_from_error(0.3, 0.1), std::make_pair(4u, 7u));
  EXPECT_THROW(params_from_error(1.5, 0.5), std::invalid_argument);
  EXPECT_THROW(params_from_error(0.5, 0.0), std::invalid_argument);
  EXPECT_THROW(params_from_error(0.0, 0.5), std::invalid_argument);
}

TEST(ZeroKey, GenuineZeroFlowIsTrackedAndDetected) {
  Sketch s(SketchConfig{2, 4, 4, 3});
  const FlowKey zero = key4(0);
  for (int i = 0; i < 10; ++i) s.update(zero, 5);
  for (int i = 0; i < 6; ++i) s.update(key4(i + 1), 1);
  EXPECT_GE(s.query(zero), 50u);
  EXPECT_GE(s.bounds(zero).lower, 44u);
  const auto report = detect_heavy_hitters(s, 40);
  ASSERT_TRUE(report.contains(zero));
}

// Bucket invariants and bounds, plus agreement with the signed reference on every bucket.
TEST(SketchProperties, RandomStreamsAgainstReferenceAndOracle) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 40; ++trial) {
    const SketchConfig c{1 + static_cast<std::uint32_t>(rng() % 4), 1 + static_cast<std::uint32_t>(rng() % 16), 4,
                         rng()};
    const auto stream = testing::random_stream(rng, 2000, 1 + rng() % 40, 1 + rng() % 50);
    Sketch s(c);
    std::vector<testing::RefBucket> ref(c.rows * c.cols);
    for (const auto& p : stream) {
      s.update(p.key, p.value);
      for (std::uint32_t i = 0; i < c.rows; ++i) {
        ref[i * c.cols + s.column(i, p.key)].update(p.key.hex(), static_cast<std::int64_t>(p.value));
      }
    }
    ASSERT_NO_THROW(s.check_invariants());
    for (std::uint32_t i = 0; i < c.rows; ++i) {
      for (std::uint32_t j = 0; j < c.cols; ++j) {
        const Bucket& b = s.bucket(i, j);
        const auto& r = ref[i * c.cols + j];
        ASSERT_EQ(static_cast<std::int64_t>(b.sum), r.v);
        ASSERT_EQ(static_cast<std::int64_t>(b.indicator), r.c);
        if (r.v > 0) {
          ASSERT_EQ(b.key.hex(), r.k);
        }
      }
    }
    const auto truth = oracle::exact_counts(stream);
    for (const auto& [key, sum] : truth.sums) {
      const auto est = s.bounds(key);
      ASSERT_LE(est.lower, sum);
      ASSERT_GE(est.upper, sum);
      ASSERT_EQ(est.upper, s.query(key));
    }
  }
}

// Majority tracking.
TEST(SketchProperties, MajorityFlowIsStoredCandidate) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    const SketchConfig c{3, 8, 4, rng()};
    const auto stream = testing::random_stream(rng, 3000, 30, 20);
    const Sketch s = build_sketch(c, stream);
    for (std::uint32_t i = 0; i < c.rows; ++i) {
      for (std::uint32_t j = 0; j < c.cols; ++j) {
        if (auto maj = oracle::bucket_majority(stream, c, i, j)) {
          ASSERT_EQ(s.bucket(i, j).key, *maj);
        }
      }
    }
  }
}

// Determinism.
TEST(SketchProperties, Deterministic) {
  std::mt19937_64 rng(3);
  const auto stream = testing::random_stream(rng, 5000, 100, 100, 8);
  const SketchConfig c{4, 64, 8, 42};
  EXPECT_EQ(serialize(build_sketch(c, stream)), serialize(build_sketch(c, stream)));
}

TEST(BatchUpdate, BitEquivalentToScalar) {
  std::mt19937_64 rng(8);
  for (std::size_t n : {0, 1, 31, 32, 33, 1000}) {
    const auto stream = testing::random_stream(rng, n, 50, 1500, 8);
    std::vector<FlowKey> keys;
    std::vector<std::uint64_t> values;
    for (const auto& p : stream) {
      keys.push_back(p.key);
      values.push_back(p.value);
    }
    const SketchConfig c{4, 16, 8, 5};
    Sketch batched(c);
    batched.update_batch(keys, values);
    EXPECT_EQ(batched, build_sketch(c, stream)) << n;
  }
}

TEST(Serialization, EmptyRoundTrip) {
  const Sketch s(SketchConfig{3, 17, 5, 123});
  EXPECT_EQ(deserialize(serialize(s)), s);
}

TEST(Serialization, LayoutIsCanonical) {
  const auto bytes = serialize(hand_trace());
  const std::vector<std::uint8_t> expected = {
      'M', 'V', 'S', 'K', 1, 0,           // magic, version
      1, 0, 0, 0, 1, 0, 0, 0, 4,          // rows, cols, key_bytes
      1, 0, 0, 0, 0, 0, 0, 0,             // seed
      6, 0, 0, 0, 0, 0, 0, 0,             // total
      6, 0, 0, 0, 0, 0, 0, 0,             // V
      4, 0, 0, 0, 0, 0, 0, 0,             // C
      0, 0, 0, 0xa};                      // K
  EXPECT_EQ(bytes, expected);
}

TEST(Serialization, RandomRoundTrip) {
  std::mt19937_64 rng(10);
  const SketchConfig c{4, 256, 8, 9};
  const auto stream = testing::random_stream(rng, 100000, 5000, 1500, 8);
  const Sketch s = build_sketch(c, stream);
  EXPECT_EQ(deserialize(serialize(s)), s);
}

TEST(Serialization, RejectsBadInput) {
  auto bytes = serialize(hand_trace());
  EXPECT_THROW(deserialize(std::span(bytes).first(bytes.size() - 1)), FormatError);
  EXPECT_THROW(deserialize(std::span(bytes).first(10)), FormatError);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize(bad_magic), FormatError);

  auto bad_version = bytes;
  bad_version[4] = 2;
  EXPECT_THROW(deserialize(bad_version), FormatError);

  auto zero_rows = bytes;
  zero_rows[6] = 0;
  EXPECT_THROW(deserialize(zero_rows), FormatError);

  auto broken_parity = bytes;
  broken_parity[39] = 5;  // C = 5 with V = 6
  EXPECT_THROW(deserialize(broken_parity), FormatError);

  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(deserialize(trailing), FormatError);
}

}  // namespace
}  // namespace mvsketch
