#ifndef AAP_SYNTH_HPP
#define AAP_SYNTH_HPP

#include "parallel.hpp"
#include "tensor.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace aap {

// Portable standard-normal generator. std::normal_distribution is
// implementation-defined, so Box-Muller over raw mt19937_64 output is used to
// keep synthesized files identical across standard libraries.
class NormalSource {
public:
  explicit NormalSource(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
  }

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform(); // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  std::uint64_t bits() { return engine_(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)); }

private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

struct NamedShape {
  std::string name;
  LayerShape shape;
  SpatialSize input{1, 1};
};

inline NamedShape conv_shape(std::string name, std::size_t m, std::size_t c, std::size_t k, std::size_t stride,
                             std::size_t pad, std::size_t in_hw) {
  return {std::move(name), {LayerKind::Conv, m, c, k, stride, pad}, {in_hw, in_hw}};
}

inline NamedShape fc_shape(std::string name, std::size_t n_out, std::size_t n_in) {
  return {std::move(name), {LayerKind::Fc, n_out, n_in, 1, 1, 0}, {1, 1}};
}

inline const std::vector<std::string_view>& template_names() {
  static const std::vector<std::string_view> names{"alexnet-conv", "alexnet-fc", "vgg16-conv", "custom"};
  return names;
}

/// Layer shapes and input spatial sizes of a named model template.
/// AlexNet's two-way grouped convolutions are modeled with the per-group
/// channel extent (conv2 sees 48 input channels per filter).
inline std::vector<NamedShape> template_shapes(std::string_view name) {
  if (name == "alexnet-conv")
    return {conv_shape("conv1", 96, 3, 11, 4, 0, 227), conv_shape("conv2", 256, 48, 5, 1, 2, 27),
            conv_shape("conv3", 384, 256, 3, 1, 1, 13), conv_shape("conv4", 384, 192, 3, 1, 1, 13),
            conv_shape("conv5", 256, 192, 3, 1, 1, 13)};
  if (name == "alexnet-fc")
    return {fc_shape("fc6", 4096, 9216), fc_shape("fc7", 4096, 4096), fc_shape("fc8", 1000, 4096)};
  if (name == "vgg16-conv") {
    struct Row {
      const char* name;
      std::size_t m, c, hw;
    };
    static constexpr Row rows[] = {
        {"conv1_1", 64, 3, 224},    {"conv1_2", 64, 64, 224},   {"conv2_1", 128, 64, 112},
        {"conv2_2", 128, 128, 112}, {"conv3_1", 256, 128, 56},  {"conv3_2", 256, 256, 56},
        {"conv3_3", 256, 256, 56},  {"conv4_1", 512, 256, 28},  {"conv4_2", 512, 512, 28},
        {"conv4_3", 512, 512, 28},  {"conv5_1", 512, 512, 14},  {"conv5_2", 512, 512, 14},
        {"conv5_3", 512, 512, 14}};
    std::vector<NamedShape> out;
    for (const auto& r : rows)
      out.push_back(conv_shape(r.name, r.m, r.c, 3, 1, 1, r.hw));
    return out;
  }
  throw ArgumentError("unknown template '" + std::string(name) + "'");
}

namespace detail {

inline std::size_t parse_count(std::string_view s, std::string_view what) {
  if (s.empty())
    throw ArgumentError("missing " + std::string(what));
  std::size_t v = 0;
  for (char ch : s) {
    if (ch < '0' || ch > '9')
      throw ArgumentError("bad " + std::string(what) + " '" + std::string(s) + "'");
    v = v * 10 + static_cast<std::size_t>(ch - '0');
    if (v > (1u << 30))
      throw ArgumentError(std::string(what) + " too large");
  }
  return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos)
      break;
    start = pos + 1;
  }
  return parts;
}

} // namespace detail

/// Parses a custom stack such as "conv:256x64x5:s1:p2:i27,fc:10x256".
/// conv:MxCxK takes optional :sS (stride), :pP (zero pad) and :iN (input
/// height/width) suffixes; fc:OUTxIN has none.
inline std::vector<NamedShape> parse_custom_layers(std::string_view spec) {
  std::vector<NamedShape> out;
  std::size_t n_conv = 0, n_fc = 0;
  for (auto item : detail::split(spec, ',')) {
    auto fields = detail::split(item, ':');
    if (fields.size() < 2)
      throw ArgumentError("bad layer spec '" + std::string(item) + "'");
    auto dims = detail::split(fields[1], 'x');
    if (fields[0] == "conv") {
      if (dims.size() != 3)
        throw ArgumentError("conv layer needs MxCxK");
      std::size_t stride = 1, pad = 0, in_hw = 0;
      for (std::size_t f = 2; f < fields.size(); ++f) {
        auto opt = fields[f];
        if (opt.empty())
          throw ArgumentError("empty conv option");
        const auto value = detail::parse_count(opt.substr(1), "conv option");
        switch (opt[0]) {
        case 's': stride = value; break;
        case 'p': pad = value; break;
        case 'i': in_hw = value; break;
        default: throw ArgumentError("unknown conv option '" + std::string(opt) + "'");
        }
      }
      const auto k = detail::parse_count(dims[2], "K");
      if (in_hw == 0)
        in_hw = k;
      out.push_back(conv_shape("conv" + std::to_string(++n_conv), detail::parse_count(dims[0], "M"),
                               detail::parse_count(dims[1], "C"), k, stride, pad, in_hw));
    } else if (fields[0] == "fc") {
      if (dims.size() != 2 || fields.size() != 2)
        throw ArgumentError("fc layer needs OUTxIN");
      out.push_back(fc_shape("fc" + std::to_string(++n_fc), detail::parse_count(dims[0], "n_out"),
                             detail::parse_count(dims[1], "n_in")));
    } else {
      throw ArgumentError("unknown layer kind '" + std::string(fields[0]) + "'");
    }
    const auto& s = out.back().shape;
    if (s.m == 0 || s.c == 0 || s.k == 0 || s.stride == 0)
      throw ArgumentError("layer dimensions must be positive");
  }
  if (out.empty())
    throw ArgumentError("empty custom layer list");
  return out;
}

/// Fills a layer with i.i.d. N(0, 1/fan_in) draws. Each layer gets its own
/// stream derived from (seed, position), so layers can be drawn in parallel.
inline LayerSet synthesize_shapes(std::string model, const std::vector<NamedShape>& shapes, std::uint64_t seed) {
  LayerSet set;
  set.model = std::move(model);
  set.seed = seed;
  set.layers.reserve(shapes.size());
  for (const auto& s : shapes)
    set.layers.push_back(make_layer(s.shape, s.name));
  parallel_for(set.layers.size(), [&](std::size_t l) {
    const auto& shape = shapes[l].shape;
    const double scale = 1.0 / std::sqrt(static_cast<double>(shape.c * shape.kernel_area()));
    NormalSource rng(seed, l);
    for (float& v : set.layers[l].values())
      v = static_cast<float>(rng() * scale);
  });
  set.validate();
  return set;
}

inline LayerSet synthesize_model(std::string_view template_name, std::uint64_t seed) {
  return synthesize_shapes(std::string(template_name), template_shapes(template_name), seed);
}

inline LayerSet synthesize_custom(std::string_view layer_spec, std::uint64_t seed) {
  return synthesize_shapes("custom", parse_custom_layers(layer_spec), seed);
}

/// Small integers in [-range, range] stored as floats. Products and sums of
/// such values stay exact, which the bit-exact verification suites rely on.
inline void fill_small_integers(std::span<float> out, NormalSource& rng, int range = 4) {
  const auto span = static_cast<std::uint64_t>(2 * range + 1);
  for (float& v : out)
    v = static_cast<float>(static_cast<int>(rng.below(span)) - range);
}

} // namespace aap

#endif
