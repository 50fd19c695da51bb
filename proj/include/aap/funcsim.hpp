#ifndef AAP_FUNCSIM_HPP
#define AAP_FUNCSIM_HPP

#include "encoder.hpp"
#include "tensor.hpp"

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace aap {

// Functional execution of packed layers. Every path accumulates a given
// output in the same order as the dense reference (input channel, then
// kernel row, then kernel column; ascending input index for FC), so sparse
// and dense results are bit-identical for finite inputs.

namespace detail {

inline void check_bias(std::span<const float> bias, std::size_t n) {
  if (bias.size() != n)
    throw ArgumentError("bias length does not match output count");
}

inline void check_input(const FeatureMap& fm, const LayerShape& s) {
  fm.validate();
  if (fm.channels != s.c)
    throw ArgumentError("feature map channel count does not match the layer");
}

// Activation for weight tap (c, i, j) at output (y, x); zero in the pad border.
inline float tap(const FeatureMap& fm, const LayerShape& s, std::size_t c, std::size_t i, std::size_t j,
                 std::size_t y, std::size_t x) {
  const std::size_t h = y * s.stride + i;
  const std::size_t w = x * s.stride + j;
  if (h < s.pad || w < s.pad || h - s.pad >= fm.height || w - s.pad >= fm.width)
    return 0.0f;
  return fm.at(c, h - s.pad, w - s.pad);
}

} // namespace detail

inline FeatureMap conv_dense(const FeatureMap& fm, const ConvWeights& w, std::span<const float> bias) {
  w.validate();
  const LayerShape s{LayerKind::Conv, w.m_filters, w.c_channels, w.k_size, w.stride, w.zero_pad};
  detail::check_input(fm, s);
  detail::check_bias(bias, w.m_filters);
  const auto out_size = conv_output_size(s, {fm.height, fm.width});
  FeatureMap out = FeatureMap::zeros(w.m_filters, out_size.height, out_size.width);
  for (std::size_t m = 0; m < w.m_filters; ++m)
    for (std::size_t y = 0; y < out_size.height; ++y)
      for (std::size_t x = 0; x < out_size.width; ++x) {
        float acc = 0.0f;
        for (std::size_t c = 0; c < w.c_channels; ++c)
          for (std::size_t i = 0; i < w.k_size; ++i)
            for (std::size_t j = 0; j < w.k_size; ++j)
              acc += w.at(m, c, i, j) * detail::tap(fm, s, c, i, j, y, x);
        out.at(m, y, x) = acc + bias[m];
      }
  return out;
}

inline std::vector<float> fc_dense(std::span<const float> x, const FcWeights& w, std::span<const float> bias) {
  w.validate();
  if (x.size() != w.n_in)
    throw ArgumentError("input length does not match n_in");
  detail::check_bias(bias, w.n_out);
  std::vector<float> out(w.n_out);
  for (std::size_t o = 0; o < w.n_out; ++o) {
    float acc = 0.0f;
    for (std::size_t i = 0; i < w.n_in; ++i)
      acc += w.at(o, i) * x[i];
    out[o] = acc + bias[o];
  }
  return out;
}

/// A stored weight after MUX resolution.
struct SelectedWeight {
  std::size_t weight_index; // linear position in the dense layer
  float value;
};

/// Resolves each stored entry to the weight it multiplies. In direct layers
/// an entry of pruning group p with index idx drives MUX lane
/// p * n_group + idx of its fetch window; relative layers are replayed as a
/// running position. Padding entries select nothing; their products are
/// counted separately by the callers.
inline std::vector<SelectedWeight> select_weights(const SparseLayer& s) {
  std::vector<SelectedWeight> out;
  const std::size_t total = s.shape.element_count();
  auto fail = [&](std::size_t g, std::size_t e, const std::string& what) {
    throw FormatError("layer '" + s.name + "' " + describe_fetch_group(s, g) + " entry " + std::to_string(e) +
                      ": " + what);
  };
  if (s.format == SparseFormat::Relative) {
    std::size_t pos = 0;
    for (std::size_t g = 0; g < s.fetch_groups.size(); ++g) {
      const auto& entries = s.fetch_groups[g].entries;
      for (std::size_t e = 0; e < entries.size(); ++e) {
        const auto& entry = entries[e];
        if (entry.index > kRelativeMaxGap || entry.is_padding)
          fail(g, e, "index outside fetch window");
        pos += entry.index;
        if (pos >= total)
          fail(g, e, "index outside fetch window");
        if (!entry.is_filler)
          out.push_back({pos, entry.value});
        ++pos;
      }
    }
  } else {
    if (s.n_par == 0 || s.n_group == 0 || s.n_par % s.n_group != 0)
      throw FormatError("layer '" + s.name + "': bad group geometry");
    const GroupDirectory fetch = s.fetch_directory();
    if (fetch.size() != s.fetch_groups.size())
      throw FormatError("layer '" + s.name + "': fetch group count does not match the layer shape");
    for (std::size_t g = 0; g < s.fetch_groups.size(); ++g) {
      const auto& fg = s.fetch_groups[g];
      const GroupView window = fetch.group(g);
      std::size_t e = 0;
      for (std::size_t p = 0; p < fg.group_counts.size(); ++p)
        for (std::size_t k = 0; k < fg.group_counts[p]; ++k, ++e) {
          if (e >= fg.entries.size())
            fail(g, e, "missing entry");
          const auto& entry = fg.entries[e];
          const std::size_t lane = p * s.n_group + entry.index;
          if (entry.is_padding || entry.is_filler || entry.index >= s.n_group || lane >= window.real)
            fail(g, e, "index outside fetch window");
          out.push_back({window[lane], entry.value});
        }
      for (; e < fg.entries.size(); ++e)
        if (!fg.entries[e].is_padding)
          fail(g, e, "entry outside any pruning group");
    }
  }
  std::sort(out.begin(), out.end(),
            [](const SelectedWeight& a, const SelectedWeight& b) { return a.weight_index < b.weight_index; });
  for (std::size_t i = 1; i < out.size(); ++i)
    if (out[i].weight_index == out[i - 1].weight_index)
      throw FormatError("layer '" + s.name + "': weight " + std::to_string(out[i].weight_index) +
                        " selected twice");
  return out;
}

struct ConvRun {
  FeatureMap output;
  std::uint64_t products = 0;         // value x activation products of stored weights
  std::uint64_t padding_products = 0; // multiplier slots spent on padding zeros
};

inline ConvRun run_conv_sparse(const FeatureMap& fm, const SparseLayer& s, std::span<const float> bias) {
  if (s.shape.kind != LayerKind::Conv)
    throw ArgumentError("conv_sparse needs a conv layer");
  detail::check_input(fm, s.shape);
  detail::check_bias(bias, s.shape.m);
  const auto selected = select_weights(s);
  const auto out_size = conv_output_size(s.shape, {fm.height, fm.width});
  const std::size_t kk = s.shape.kernel_area();
  const std::size_t per_filter = s.shape.c * kk;

  ConvRun run{FeatureMap::zeros(s.shape.m, out_size.height, out_size.width)};
  const std::size_t positions = out_size.height * out_size.width;
  run.products = selected.size() * positions;
  run.padding_products = s.padding_count() * positions;

  auto it = selected.begin();
  for (std::size_t m = 0; m < s.shape.m; ++m) {
    const auto first = it;
    while (it != selected.end() && it->weight_index < (m + 1) * per_filter)
      ++it;
    for (std::size_t y = 0; y < out_size.height; ++y)
      for (std::size_t x = 0; x < out_size.width; ++x) {
        float acc = 0.0f;
        for (auto w = first; w != it; ++w) {
          const std::size_t r = w->weight_index - m * per_filter;
          const std::size_t c = r / kk, i = (r % kk) / s.shape.k, j = r % s.shape.k;
          acc += w->value * detail::tap(fm, s.shape, c, i, j, y, x);
        }
        run.output.at(m, y, x) = acc + bias[m];
      }
  }
  return run;
}

inline FeatureMap conv_sparse(const FeatureMap& fm, const SparseLayer& s, std::span<const float> bias) {
  return run_conv_sparse(fm, s, bias).output;
}

struct FcRun {
  std::vector<float> output;
  std::uint64_t products = 0;
  std::uint64_t padding_products = 0;
};

/// Accepts row-axis (MWMA) and column-axis (SWSA) direct layers as well as
/// relative streams. In a column layer the MUX lane picks the output row an
/// input is broadcast to rather than an input.
inline FcRun run_fc_sparse(std::span<const float> x, const SparseLayer& s, std::span<const float> bias) {
  if (s.shape.kind != LayerKind::Fc)
    throw ArgumentError("fc_sparse needs an fc layer");
  const std::size_t n_out = s.shape.m, n_in = s.shape.c;
  if (x.size() != n_in)
    throw ArgumentError("input length does not match n_in");
  detail::check_bias(bias, n_out);
  const auto selected = select_weights(s);
  FcRun run;
  run.products = selected.size();
  run.padding_products = s.padding_count();
  // Selected weights are sorted row-major, i.e. by output, then input.
  std::vector<float> acc(n_out, 0.0f);
  for (const auto& w : selected)
    acc[w.weight_index / n_in] += w.value * x[w.weight_index % n_in];
  run.output.resize(n_out);
  for (std::size_t o = 0; o < n_out; ++o)
    run.output[o] = acc[o] + bias[o];
  return run;
}

inline std::vector<float> fc_sparse(std::span<const float> x, const SparseLayer& s, std::span<const float> bias) {
  return run_fc_sparse(x, s, bias).output;
}

} // namespace aap

#endif
