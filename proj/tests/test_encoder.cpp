#include <aap/encoder.hpp>
#include <aap/pruner.hpp>
#include <aap/synth.hpp>

#include <gtest/gtest.h>

#include <vector>

using namespace aap;

namespace {

// Independent replay of a relative stream: returns the position of every
// non-filler entry.
std::vector<std::size_t> replay_positions(const std::vector<SparseEntry>& stream) {
  std::vector<std::size_t> out;
  std::size_t next = 0;
  for (const auto& e : stream) {
    const std::size_t here = next + e.index;
    if (!e.is_filler)
      out.push_back(here);
    next = here + 1;
  }
  return out;
}

Layer row_layer(std::vector<float> v) {
  const std::size_t n = v.size();
  return {"fc", FcWeights{1, n, std::move(v)}};
}

Mask keep_positions(const Layer& l, std::vector<std::size_t> pos) {
  Mask m{l.name, std::nullopt, 0, 0, std::vector<std::uint8_t>(l.values().size(), 0)};
  for (auto p : pos)
    m.keep[p] = 1;
  m.n_prune = static_cast<std::uint32_t>(m.pruned_count());
  return m;
}

Layer random_layer(NormalSource& rng, LayerShape s) {
  Layer l = make_layer(s, "r");
  for (float& v : l.values())
    v = static_cast<float>(rng());
  return l;
}

} // namespace

TEST(Direct, IndexWidth) {
  EXPECT_EQ(direct_index_bits(16), 4u);
  EXPECT_EQ(direct_index_bits(8), 3u);
  EXPECT_EQ(direct_index_bits(9), 4u);
  EXPECT_EQ(direct_index_bits(2), 1u);
  NormalSource rng(1);
  Layer l = random_layer(rng, {LayerKind::Conv, 2, 32, 1});
  Mask m = prune_balanced(l, {Axis::Channel, 16, 12});
  EXPECT_EQ(encode_direct(l, m, Axis::Channel, 16, 32).index_bits, 4u);
}

TEST(Direct, IndicesArePositionsWithinGroup) {
  Layer l = row_layer({0, 1.5f, 0, 0, -2.5f, 0, 0, 0});
  Mask m = keep_positions(l, {1, 4});
  SparseLayer s = encode_direct(l, m, Axis::Row, 8, 8);
  ASSERT_EQ(s.fetch_groups.size(), 1u);
  const auto& e = s.fetch_groups[0].entries;
  ASSERT_EQ(e.size(), 2u);
  EXPECT_EQ(e[0].index, 1u);
  EXPECT_EQ(e[0].value, 1.5f);
  EXPECT_EQ(e[1].index, 4u);
  EXPECT_EQ(e[1].value, -2.5f);
}

TEST(Direct, AllKeptGroupInOrder) {
  Layer l = row_layer({1, 2, 3, 4, 5, 6, 7, 8});
  SparseLayer s = encode_direct(l, Mask::all_kept("fc", 8), Axis::Row, 8, 8);
  for (std::uint32_t t = 0; t < 8; ++t)
    EXPECT_EQ(s.fetch_groups[0].entries[t].index, t);
}

TEST(Direct, FetchGroupHoldsSeveralPruningGroups) {
  NormalSource rng(2);
  Layer l = random_layer(rng, {LayerKind::Conv, 3, 64, 3});
  Mask m = prune_balanced(l, {Axis::Channel, 16, 12});
  SparseLayer s = encode_direct(l, m, Axis::Channel, 16, 64);
  EXPECT_EQ(s.fetch_groups.size(), 3u * 9u);
  for (const auto& fg : s.fetch_groups) {
    EXPECT_EQ(fg.group_counts, (std::vector<std::uint16_t>{4, 4, 4, 4}));
    EXPECT_EQ(fg.entries.size(), 16u);
  }
}

TEST(Direct, RejectsMismatchedArguments) {
  NormalSource rng(3);
  Layer l = random_layer(rng, {LayerKind::Conv, 2, 16, 1});
  Mask m = prune_balanced(l, {Axis::Channel, 8, 4});
  EXPECT_THROW(encode_direct(l, m, Axis::Channel, 8, 12), ArgumentError);
  EXPECT_THROW(encode_direct(l, m, Axis::Filter, 8, 8), ArgumentError);
  EXPECT_THROW(encode_direct(l, m, Axis::Channel, 4, 8), ArgumentError);
}

TEST(Relative, GapsWithFiller) {
  // Weights at positions 3 and 24: gaps 3 and 20.
  std::vector<float> v(30, 0.0f);
  v[3] = 1.0f;
  v[24] = 2.0f;
  Layer l = row_layer(v);
  SparseLayer s = encode_relative(l, keep_positions(l, {3, 24}));
  const auto& e = s.fetch_groups[0].entries;
  ASSERT_EQ(e.size(), 3u);
  EXPECT_EQ(e[0], (SparseEntry{1.0f, 3, false, false}));
  EXPECT_EQ(e[1], (SparseEntry{0.0f, 15, false, true}));
  EXPECT_EQ(e[2], (SparseEntry{2.0f, 4, false, false}));
  EXPECT_EQ(replay_positions(e), (std::vector<std::size_t>{3, 24}));
  EXPECT_EQ(decode(s), l);
}

TEST(Relative, DenseStreamHasNoFillers) {
  Layer l = row_layer({1, 2, 3, 4, 5});
  SparseLayer s = encode_relative(l, Mask::all_kept("fc", 5));
  EXPECT_EQ(s.filler_count(), 0u);
  for (const auto& e : s.fetch_groups[0].entries)
    EXPECT_EQ(e.index, 0u);
}

TEST(Relative, SixteenZerosThenWeight) {
  std::vector<float> v(17, 0.0f);
  v[16] = 3.0f;
  Layer l = row_layer(v);
  SparseLayer s = encode_relative(l, keep_positions(l, {16}));
  const auto& e = s.fetch_groups[0].entries;
  ASSERT_EQ(e.size(), 2u);
  EXPECT_TRUE(e[0].is_filler);
  EXPECT_EQ(e[1].index, 0u);
  EXPECT_EQ(replay_positions(e), (std::vector<std::size_t>{16}));
}

TEST(Relative, ExactZeroRunLengths) {
  // Gap lengths around the filler boundaries, including several fillers.
  for (std::size_t gap : {0u, 1u, 14u, 15u, 16u, 17u, 31u, 32u, 33u, 47u, 48u, 100u, 255u}) {
    std::vector<float> v(gap + 2, 0.0f);
    v[0] = 1.0f;
    v[gap + 1] = 2.0f;
    Layer l = row_layer(v);
    SparseLayer s = encode_relative(l, keep_positions(l, {0, gap + 1}));
    EXPECT_EQ(s.filler_count(), gap / 16) << gap;
    EXPECT_EQ(replay_positions(s.fetch_groups[0].entries), (std::vector<std::size_t>{0, gap + 1})) << gap;
    EXPECT_EQ(decode(s), l) << gap;
  }
}

TEST(Align, TwelveNonZerosGetFourPadding) {
  NormalSource rng(4);
  Layer l = random_layer(rng, {LayerKind::Conv, 1, 48, 1});
  Mask m = prune_balanced(l, {Axis::Channel, 16, 12});
  auto [s, rep] = align_to_mul(encode_direct(l, m, Axis::Channel, 16, 64), 16);
  ASSERT_EQ(s.fetch_groups.size(), 1u);
  EXPECT_EQ(s.fetch_groups[0].real_count(), 12u);
  EXPECT_EQ(rep.n_padding, 4u);
  EXPECT_EQ(rep.per_group, (std::vector<std::uint32_t>{4}));
  EXPECT_EQ(s.padding_count(), 4u);
  EXPECT_EQ(decode(s), apply_mask(l, m));
}

TEST(Align, BalancedLayerNeedsNoPadding) {
  NormalSource rng(5);
  Layer l = random_layer(rng, {LayerKind::Conv, 4, 128, 3});
  Mask m = prune_balanced(l, {Axis::Channel, 16, 12});
  auto [s, rep] = align_to_mul(encode_direct(l, m, Axis::Channel, 16, 64), 16);
  EXPECT_EQ(rep.n_padding, 0u);
}

TEST(Align, RelativeRejected) {
  Layer l = row_layer({1, 2});
  EXPECT_THROW(align_to_mul(encode_relative(l, Mask::all_kept("fc", 2)), 4), ArgumentError);
}

TEST(Decode, RoundTripAllAxesAndFormats) {
  NormalSource rng(6);
  for (int trial = 0; trial < 60; ++trial) {
    const Axis axis = kAllAxes[trial % 5];
    const bool conv = is_conv_axis(axis);
    LayerShape s = conv ? LayerShape{LayerKind::Conv, 1 + rng.below(12), 1 + rng.below(12), 1 + rng.below(3)}
                        : LayerShape{LayerKind::Fc, 1 + rng.below(30), 1 + rng.below(30)};
    const std::size_t n = 2 + rng.below(7);
    Layer l = random_layer(rng, s);
    Mask m = prune_balanced(l, {axis, n, rng.below(n)});
    const Layer expect = apply_mask(l, m);
    EXPECT_EQ(decode(encode_direct(l, m, axis, n, n * (1 + rng.below(3)))), expect);
    EXPECT_EQ(decode(encode_relative(l, m)), expect);
    EXPECT_EQ(decode_mask(encode_relative(l, m)).keep, m.keep);
  }
}

TEST(Decode, CorruptIndexRejected) {
  NormalSource rng(7);
  Layer l = random_layer(rng, {LayerKind::Conv, 2, 16, 1});
  Mask m = prune_balanced(l, {Axis::Channel, 8, 4});
  SparseLayer s = encode_direct(l, m, Axis::Channel, 8, 8);
  s.fetch_groups[1].entries[0].index = 8;
  EXPECT_THROW(decode(s), FormatError);
  s = encode_direct(l, m, Axis::Channel, 8, 8);
  std::swap(s.fetch_groups[0].entries[0], s.fetch_groups[0].entries[1]);
  EXPECT_THROW(decode(s), FormatError);
}

TEST(Decode, VirtualSlotRejected) {
  NormalSource rng(8);
  Layer l = random_layer(rng, {LayerKind::Conv, 1, 5, 1});
  Mask m = prune_balanced(l, {Axis::Channel, 8, 4});
  SparseLayer s = encode_direct(l, m, Axis::Channel, 8, 8);
  s.fetch_groups[0].entries.back().index = 6;
  try {
    decode(s);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("virtual slot"), std::string::npos);
  }
}

TEST(Decode, RelativeOverrunRejected) {
  Layer l = row_layer({1, 0, 0, 2});
  SparseLayer s = encode_relative(l, keep_positions(l, {0, 3}));
  s.fetch_groups[0].entries[1].index = 5;
  EXPECT_THROW(decode(s), FormatError);
}
