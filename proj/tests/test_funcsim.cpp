#include <aap/accel.hpp>
#include <aap/funcsim.hpp>
#include <aap/pruner.hpp>
#include <aap/synth.hpp>
#include <aap/verify.hpp>

#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <vector>

using namespace aap;

namespace {

// Direct evaluation over an explicitly zero-padded copy of the input, with
// float accumulation in (c, i, j) order.
FeatureMap oracle_conv(const FeatureMap& in, const ConvWeights& w, const std::vector<float>& bias) {
  const std::size_t p = w.zero_pad, s = w.stride, k = w.k_size;
  const std::size_t ph = in.height + 2 * p, pw = in.width + 2 * p;
  std::vector<float> padded(in.channels * ph * pw, 0.0f);
  for (std::size_t c = 0; c < in.channels; ++c)
    for (std::size_t h = 0; h < in.height; ++h)
      for (std::size_t x = 0; x < in.width; ++x)
        padded[(c * ph + h + p) * pw + x + p] = in.values[(c * in.height + h) * in.width + x];
  const std::size_t oh = (ph - k) / s + 1, ow = (pw - k) / s + 1;
  FeatureMap out{w.m_filters, oh, ow, std::vector<float>(w.m_filters * oh * ow)};
  for (std::size_t m = 0; m < w.m_filters; ++m)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        float acc = 0.0f;
        for (std::size_t c = 0; c < w.c_channels; ++c)
          for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j)
              acc += w.values[((m * w.c_channels + c) * k + i) * k + j] * padded[(c * ph + y * s + i) * pw + x * s + j];
        out.values[(m * oh + y) * ow + x] = acc + bias[m];
      }
  return out;
}

bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size())
    return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint32_t>(a[i]) != std::bit_cast<std::uint32_t>(b[i]))
      return false;
  return true;
}

void fill_normal(std::vector<float>& v, NormalSource& rng) {
  for (auto& x : v)
    x = static_cast<float>(rng());
}

} // namespace

TEST(FuncSim, SingleTap) {
  FeatureMap fm{1, 1, 1, {2.0f}};
  ConvWeights w{1, 1, 1, 1, 0, {3.0f}};
  std::vector<float> bias{1.0f};
  EXPECT_EQ(conv_dense(fm, w, bias).values, (std::vector<float>{7.0f}));
}

TEST(FuncSim, IdentityKernel) {
  NormalSource rng(1);
  FeatureMap fm = FeatureMap::zeros(1, 4, 5);
  fill_normal(fm.values, rng);
  ConvWeights w{1, 1, 1, 1, 0, {1.0f}};
  std::vector<float> bias{0.0f};
  EXPECT_EQ(conv_dense(fm, w, bias).values, fm.values);
}

TEST(FuncSim, StridedPaddedMatchesOracle) {
  NormalSource rng(2);
  FeatureMap fm = FeatureMap::zeros(2, 5, 5);
  fill_normal(fm.values, rng);
  ConvWeights w = ConvWeights::zeros(3, 2, 3, 2, 1);
  fill_normal(w.values, rng);
  std::vector<float> bias(3);
  fill_normal(bias, rng);
  const FeatureMap out = conv_dense(fm, w, bias);
  EXPECT_EQ(out.height, 3u);
  EXPECT_EQ(out.width, 3u);
  EXPECT_TRUE(same_bits(out.values, oracle_conv(fm, w, bias).values));
}

TEST(FuncSim, KernelLargerThanInput) {
  FeatureMap fm = FeatureMap::zeros(1, 2, 2);
  ConvWeights w = ConvWeights::zeros(1, 1, 3);
  std::vector<float> bias{0.0f};
  EXPECT_THROW(conv_dense(fm, w, bias), ArgumentError);
}

TEST(FuncSim, MuxSelectsSecondAndFifth) {
  // Eight channels, one filter, kept weights at channel 1 and 4.
  ConvWeights w = ConvWeights::zeros(1, 8, 1);
  w.values = {0, 3, 0, 0, 5, 0, 0, 0};
  Layer l{"c", w};
  Mask m{"c", std::nullopt, 0, 6, {0, 1, 0, 0, 1, 0, 0, 0}};
  SparseLayer s = encode_direct(l, m, Axis::Channel, 8, 8);
  const auto sel = select_weights(s);
  ASSERT_EQ(sel.size(), 2u);
  EXPECT_EQ(sel[0].weight_index, 1u);
  EXPECT_EQ(sel[1].weight_index, 4u);
  FeatureMap fm{8, 1, 1, {10, 20, 30, 40, 50, 60, 70, 80}};
  std::vector<float> bias{0.0f};
  EXPECT_EQ(conv_sparse(fm, s, bias).values, (std::vector<float>{3 * 20 + 5 * 50}));
}

TEST(FuncSim, AllPrunedGivesBias) {
  Layer l = make_layer({LayerKind::Conv, 3, 4, 3, 1, 1}, "c");
  NormalSource rng(3);
  fill_small_integers(l.values(), rng);
  Mask none{"c", std::nullopt, 0, 108, std::vector<std::uint8_t>(108, 0)};
  SparseLayer s = encode_relative(l, none);
  FeatureMap fm = FeatureMap::zeros(4, 4, 4);
  fill_small_integers(fm.values, rng);
  std::vector<float> bias{1.5f, -2.0f, 0.25f};
  const auto out = conv_sparse(fm, s, bias);
  for (std::size_t m = 0; m < 3; ++m)
    for (std::size_t p = 0; p < 16; ++p)
      EXPECT_EQ(out.values[m * 16 + p], bias[m]);
}

TEST(FuncSim, SparseEqualsDenseOnRealValues) {
  NormalSource rng(4);
  for (int trial = 0; trial < 40; ++trial) {
    Layer l = make_layer({LayerKind::Conv, 1 + rng.below(8), 1 + rng.below(20), 1 + rng.below(3), 1 + rng.below(2),
                          rng.below(2)},
                         "c");
    for (float& v : l.values())
      v = static_cast<float>(rng());
    const auto shape = l.shape();
    const std::size_t n = 2 + rng.below(7);
    const Axis axis = kAllAxes[rng.below(3)];
    Mask m = prune_balanced(l, {axis, n, rng.below(n)});
    FeatureMap fm = FeatureMap::zeros(shape.c, shape.k + 3, shape.k + 2);
    fill_normal(fm.values, rng);
    std::vector<float> bias(shape.m);
    fill_normal(bias, rng);
    const FeatureMap dense = conv_dense(fm, apply_mask(l, m).conv(), bias);
    EXPECT_TRUE(same_bits(conv_sparse(fm, encode_direct(l, m, axis, n, n * 2), bias).values, dense.values));
    EXPECT_TRUE(same_bits(conv_sparse(fm, encode_relative(l, m), bias).values, dense.values));
    EXPECT_TRUE(same_bits(dense.values, oracle_conv(fm, apply_mask(l, m).conv(), bias).values));
  }
}

TEST(FuncSim, FcIdentityAndRowGroups) {
  FcWeights eye = FcWeights::zeros(4, 4);
  for (std::size_t i = 0; i < 4; ++i)
    eye.values[i * 4 + i] = 1.0f;
  std::vector<float> x{1, -2, 3.5f, 4}, zero(4, 0.0f);
  EXPECT_EQ(fc_dense(x, eye, zero), x);

  NormalSource rng(5);
  Layer l = make_layer({LayerKind::Fc, 3, 16}, "fc");
  for (float& v : l.values())
    v = static_cast<float>(rng());
  Mask m = prune_balanced(l, {Axis::Row, 8, 6});
  const auto run = run_fc_sparse(std::vector<float>(16, 1.0f), encode_direct(l, m, Axis::Row, 8, 8), {zero.data(), 3});
  EXPECT_EQ(run.products, 3u * 2u * 2u);
}

TEST(FuncSim, FcRowAndColumnMatchDense) {
  NormalSource rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    Layer l = make_layer({LayerKind::Fc, 1 + rng.below(40), 1 + rng.below(40)}, "fc");
    for (float& v : l.values())
      v = static_cast<float>(rng());
    const auto s = l.shape();
    std::vector<float> x(s.c), bias(s.m);
    fill_normal(x, rng);
    fill_normal(bias, rng);
    for (Axis axis : {Axis::Row, Axis::Column}) {
      const std::size_t n = 2 + rng.below(6);
      Mask m = prune_balanced(l, {axis, n, rng.below(n)});
      const auto dense = fc_dense(x, apply_mask(l, m).fc(), bias);
      EXPECT_TRUE(same_bits(fc_sparse(x, encode_direct(l, m, axis, n, n), bias), dense));
      EXPECT_TRUE(same_bits(fc_sparse(x, encode_relative(l, m), bias), dense));
      // Independent row-by-row product in ascending input order.
      std::vector<float> ref(s.m);
      for (std::size_t o = 0; o < s.m; ++o) {
        float acc = 0.0f;
        for (std::size_t i = 0; i < s.c; ++i)
          acc += (m.keep[o * s.c + i] ? l.values()[o * s.c + i] : 0.0f) * x[i];
        ref[o] = acc + bias[o];
      }
      EXPECT_TRUE(same_bits(dense, ref));
    }
  }
}

TEST(FuncSim, ProductsMatchSimulatedMacs) {
  auto set = synthesize_custom("conv:16x48x3:p1:i6", 7);
  auto masks = prune_model(set, {Axis::Channel, 16, 12});
  const Layer& l = set.layers[0];
  SparseLayer s = align_to_mul(encode_direct(l, masks[0], Axis::Channel, 16, 64), 16).first;
  FeatureMap fm = FeatureMap::zeros(48, 6, 6);
  NormalSource rng(8);
  fill_small_integers(fm.values, rng);
  const auto run = run_conv_sparse(fm, s, std::vector<float>(16, 0.0f));
  std::vector<std::size_t> pos{36};
  auto r = simulate_mwma(set, masks, AccelConfig::cambricon_x_reduced(), pos);
  EXPECT_EQ(run.products, r.total.n_mac);
  // Padding occupies multiplier slots: 16 filters x 9 taps x 4 pads per fetch.
  EXPECT_EQ(run.padding_products, 16u * 9u * 4u * 36u);
  EXPECT_EQ(r.total.n_padding * 36, run.padding_products);
}

TEST(FuncSim, LinearityInInput) {
  NormalSource rng(9);
  Layer l = make_layer({LayerKind::Conv, 4, 6, 3, 1, 1}, "c");
  for (float& v : l.values())
    v = static_cast<float>(rng());
  Mask m = prune_balanced(l, {Axis::Channel, 3, 1});
  SparseLayer s = encode_direct(l, m, Axis::Channel, 3, 6);
  FeatureMap fm = FeatureMap::zeros(6, 5, 5);
  fill_normal(fm.values, rng);
  FeatureMap twice = fm;
  for (auto& v : twice.values)
    v *= 2.0f;
  std::vector<float> bias(4, 0.0f);
  const auto a = conv_sparse(fm, s, bias), b = conv_sparse(twice, s, bias);
  for (std::size_t i = 0; i < a.values.size(); ++i)
    EXPECT_EQ(b.values[i], 2.0f * a.values[i]);
}

TEST(FuncSim, OutOfWindowIndexRejected) {
  NormalSource rng(10);
  Layer l = make_layer({LayerKind::Conv, 2, 5, 1}, "c");
  fill_small_integers(l.values(), rng);
  Mask m = prune_balanced(l, {Axis::Channel, 4, 2});
  SparseLayer s = encode_direct(l, m, Axis::Channel, 4, 8);
  s.fetch_groups[0].entries.back().index = 3;
  try {
    select_weights(s);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("channel fiber 0 block 0"), std::string::npos) << e.what();
  }
}

TEST(Verify, RandomCasesPass) {
  for (std::uint64_t i = 0; i < 60; ++i) {
    const auto rc = make_random_case(21, i);
    const auto r = verify_sparse_layer(rc.layer, rc.mask, rc.sparse, std::nullopt, i);
    EXPECT_TRUE(r.ok) << rc.description << ": " << r.message;
  }
}

TEST(Verify, TamperedValueFails) {
  const auto rc = make_random_case(5, 3);
  SparseLayer bad = rc.sparse;
  for (auto& fg : bad.fetch_groups)
    for (auto& e : fg.entries)
      if (!e.is_padding && !e.is_filler) {
        e.value += 1.0f;
        goto done;
      }
done:
  EXPECT_FALSE(verify_sparse_layer(rc.layer, rc.mask, bad, std::nullopt, 0).ok);
}
