#include <gtest/gtest.h>

#include <limits>
#include <random>
#include <set>

#include "mvsketch/mvsketch.hpp"
#include "test_util.hpp"

namespace mvsketch {
namespace {

using testing::key4;

const FlowKey A = key4(0xa);
const FlowKey B = key4(0xb);
const FlowKey C = key4(0xc);
const SketchConfig kTiny{1, 1, 4, 1};

Sketch single_bucket(std::uint64_t v, const FlowKey& k, std::uint64_t c) {
  return Sketch::from_state(kTiny, {Bucket{v, c, k}}, v);
}

Sketch hand_trace() {
  Sketch s(kTiny);
  s.update(A, 3);
  s.update(B, 1);
  s.update(A, 2);
  return s;
}

std::vector<std::vector<PacketRecord>> split_random(std::span<const PacketRecord> stream, std::size_t ways,
                                                    std::mt19937_64& rng) {
  std::vector<std::vector<PacketRecord>> parts(ways);
  for (const auto& p : stream) parts[rng() % ways].push_back(p);
  return parts;
}

TEST(ScalableConfig, Validation) {
  EXPECT_THROW((ScalableConfig{0, 1, 0}.validate()), std::invalid_argument);
  EXPECT_THROW((ScalableConfig{3, 0, 0}.validate()), std::invalid_argument);
  EXPECT_THROW((ScalableConfig{3, 4, 0}.validate()), std::invalid_argument);
  EXPECT_NO_THROW((ScalableConfig{3, 3, 0}.validate()));
}

TEST(ScalableConfig, SubsetsAreDistinctDeterministicAndSpread) {
  const ScalableConfig cfg{5, 3, 17};
  std::vector<std::size_t> load(5, 0);
  for (std::uint64_t f = 0; f < 5000; ++f) {
    const auto ids = cfg.detectors_for(FlowKey::from_uint(f, 8));
    ASSERT_EQ(ids.size(), 3u);
    ASSERT_EQ(ids, cfg.detectors_for(FlowKey::from_uint(f, 8)));
    std::set<std::uint32_t> unique(ids.begin(), ids.end());
    ASSERT_EQ(unique.size(), 3u);
    for (auto id : ids) {
      ASSERT_LT(id, 5u);
      ++load[id];
    }
  }
  // Each detector should hold about 3/5 of the flows.
  for (auto l : load) EXPECT_NEAR(static_cast<double>(l), 3000.0, 200.0);
}

TEST(DetectorCandidates, HeavyHitterExamples) {
  EXPECT_TRUE(detector_candidates_hh(Sketch(kTiny), 1).empty());
  EXPECT_EQ(detector_candidates_hh(hand_trace(), 5), (std::vector<CandidateTuple>{{A, 5}}));
  EXPECT_TRUE(detector_candidates_hh(hand_trace(), 6).empty());
}

TEST(DetectorCandidates, HeavyChangerExamples) {
  const Sketch empty(kTiny);
  EXPECT_TRUE(detector_candidates_hc(empty, empty, 1).empty());
  EXPECT_EQ(detector_candidates_hc(hand_trace(), empty, 5), (std::vector<CandidateTuple>{{A, 5}}));
  EXPECT_TRUE(detector_candidates_hc(hand_trace(), empty, 6).empty());
}

TEST(ControllerAggregate, Examples) {
  const std::vector<std::vector<CandidateTuple>> both = {{{A, 5}}, {{A, 4}}, {}};
  const auto r = controller_aggregate(both, 9);
  ASSERT_EQ(r.entries.size(), 1u);
  EXPECT_EQ(r.entries[0], (HeavyEntry{A, 9}));

  const std::vector<std::vector<CandidateTuple>> split = {{{A, 5}}, {{B, 4}}};
  EXPECT_TRUE(controller_aggregate(split, 9).entries.empty());

  const std::vector<std::vector<CandidateTuple>> none = {{}, {}};
  EXPECT_TRUE(controller_aggregate(none, 1).entries.empty());
}

TEST(ControllerAggregate, SaturatesInsteadOfWrapping) {
  const std::uint64_t big = std::numeric_limits<std::uint64_t>::max() - 1;
  const std::vector<std::vector<CandidateTuple>> lists = {{{A, big}}, {{A, big}}};
  const auto r = controller_aggregate(lists, big);
  ASSERT_EQ(r.entries.size(), 1u);
  EXPECT_EQ(r.entries[0].estimate, std::numeric_limits<std::uint64_t>::max());
}

TEST(ScalableDegenerate, SingleDetectorReproducesLocalDetection) {
  std::mt19937_64 rng(31);
  const auto s1 = testing::random_stream(rng, 4000, 80, 20, 4, 0);
  const auto s2 = testing::random_stream(rng, 4000, 80, 20, 4, 1);
  const SketchConfig c{3, 32, 4, 2};
  const Sketch k1 = build_sketch(c, s1), k2 = build_sketch(c, s2);
  const std::vector<std::vector<CandidateTuple>> hh = {detector_candidates_hh(k1, 300)};
  EXPECT_EQ(controller_aggregate(hh, 300), detect_heavy_hitters(k1, 300));
  const std::vector<std::vector<CandidateTuple>> hc = {detector_candidates_hc(k1, k2, 200)};
  EXPECT_EQ(controller_aggregate(hc, 200), detect_heavy_changers(k1, k2, 200));
}

TEST(Merge, SingleSketchIsIdentity) {
  std::mt19937_64 rng(1);
  const Sketch s = build_sketch(SketchConfig{4, 32, 4, 8}, testing::random_stream(rng, 5000, 300, 40));
  const std::vector<Sketch> one = {s};
  EXPECT_EQ(merge(one), s);
}

TEST(Merge, HandExample) {
  // e(A) = 5 + 0, e(B) = 1 + 3, so A wins with C = 2*5 - 9.
  const std::vector<Sketch> in = {single_bucket(6, A, 4), single_bucket(3, B, 3)};
  const Sketch m = merge(in);
  EXPECT_EQ(m.bucket(0, 0), (Bucket{9, 1, A}));
  EXPECT_EQ(m.total(), 9u);
  // The union stream (A,3),(B,1),(A,2),(B,3) has S(A)=5, S(B)=4.
  EXPECT_EQ(m.bounds(A), (FlowEstimate{5, 5, 1}));
  EXPECT_EQ(m.bounds(B), (FlowEstimate{4, 4, 0}));
}

TEST(Merge, EmptySketches) {
  const std::vector<Sketch> in(3, Sketch(SketchConfig{2, 8, 4, 3}));
  EXPECT_EQ(merge(in), Sketch(SketchConfig{2, 8, 4, 3}));
}

TEST(Merge, TieGoesToSmallestKey) {
  // e(A) = e(B) = 2 regardless of input order.
  const std::vector<Sketch> ab = {single_bucket(2, B, 2), single_bucket(2, A, 2)};
  const std::vector<Sketch> ba = {single_bucket(2, A, 2), single_bucket(2, B, 2)};
  EXPECT_EQ(merge(ab).bucket(0, 0), (Bucket{4, 0, A}));
  EXPECT_EQ(merge(ba), merge(ab));
}

TEST(Merge, NegativeCounterKeepsParity) {
  // Three one-packet inputs: e(A) = 1 + 0 + 0, while V = 3.
  const std::vector<Sketch> in = {single_bucket(1, A, 1), single_bucket(1, B, 1), single_bucket(1, C, 1)};
  const Sketch m = merge(in);
  EXPECT_EQ(m.bucket(0, 0), (Bucket{3, 1, A}));
  EXPECT_NO_THROW(m.check_invariants());
  for (const FlowKey& k : {A, B, C}) {
    EXPECT_GE(m.query(k), 1u);
    EXPECT_LE(m.bounds(k).lower, 1u);
  }
}

TEST(Merge, Errors) {
  EXPECT_THROW(merge(std::span<const Sketch>()), std::invalid_argument);
  const std::vector<Sketch> mixed = {Sketch(SketchConfig{1, 4, 4, 1}), Sketch(SketchConfig{1, 4, 4, 2})};
  EXPECT_THROW(merge(mixed), std::invalid_argument);
}

// Merge conserves totals and keeps bounds sound.
TEST(MergeProperties, RandomPartitions) {
  std::mt19937_64 rng(555);
  for (int trial = 0; trial < 30; ++trial) {
    const SketchConfig c{1 + static_cast<std::uint32_t>(rng() % 4), 1 + static_cast<std::uint32_t>(rng() % 32), 4,
                         rng()};
    const auto stream = rng() % 2 ? testing::random_stream(rng, 4000, 60, 50)
                                  : testing::zipf_records(200, 4000, rng(), 4);
    const auto parts = split_random(stream, 1 + rng() % 6, rng);
    std::vector<Sketch> sketches;
    for (const auto& p : parts) sketches.push_back(build_sketch(c, p));
    const Sketch m = merge(sketches);

    ASSERT_NO_THROW(m.check_invariants());
    std::uint64_t total = 0;
    for (const auto& s : sketches) total += s.total();
    ASSERT_EQ(m.total(), total);
    for (std::size_t idx = 0; idx < m.buckets().size(); ++idx) {
      std::uint64_t v = 0;
      for (const auto& s : sketches) v += s.buckets()[idx].sum;
      ASSERT_EQ(m.buckets()[idx].sum, v);
    }

    const auto table = oracle::exact_counts(stream);
    for (const auto& [key, sum] : table.sums) {
      const auto e = m.bounds(key);
      ASSERT_LE(e.lower, sum);
      ASSERT_GE(e.upper, sum);
    }
    for (std::uint32_t i = 0; i < c.rows; ++i) {
      const auto majorities = oracle::bucket_majorities(table, c, i);
      for (std::uint32_t j = 0; j < c.cols; ++j) {
        if (majorities[j]) {
          ASSERT_EQ(m.bucket(i, j).key, *majorities[j]);
        }
      }
    }

    std::vector<Sketch> reversed(sketches.rbegin(), sketches.rend());
    ASSERT_EQ(merge(reversed), m);
  }
}

// Merged detection finds every heavy hitter that whole-stream
// detection finds when the heavy flows dominate their buckets.
TEST(MergeProperties, MergedDetectionMatchesWholeStream) {
  std::mt19937_64 rng(77);
  int exact_matches = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const SketchConfig c{4, 256, 8, rng()};
    const auto stream = testing::zipf_records(2000, 50000, rng());
    const auto parts = split_random(stream, 4, rng);
    std::vector<Sketch> sketches;
    for (const auto& p : parts) sketches.push_back(build_sketch(c, p));
    const Sketch merged = merge(sketches);
    const Sketch whole = build_sketch(c, stream);
    const auto table = oracle::exact_counts(stream);
    const std::uint64_t t = threshold_from_phi(0.005, table.total);
    const auto from_merged = detect_heavy_hitters(merged, t);
    const auto from_whole = detect_heavy_hitters(whole, t);
    for (const FlowKey& x : oracle::heavy_at_least(table.sums, t)) {
      ASSERT_TRUE(from_merged.contains(x));
      ASSERT_TRUE(from_whole.contains(x));
    }
    exact_matches += from_merged.keys() == from_whole.keys();
  }
  EXPECT_GT(exact_matches, 0);
}

}  // namespace
}  // namespace mvsketch
