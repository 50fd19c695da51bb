#ifndef AAP_TENSOR_HPP
#define AAP_TENSOR_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <variant>
#include <vector>

namespace aap {

// Errors. The CLI maps ArgumentError to exit code 2 and FormatError to 3.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ArgumentError : public Error {
public:
  using Error::Error;
};

class FormatError : public Error {
public:
  using Error::Error;
};

enum class Axis : std::uint8_t { Channel = 0, Filter = 1, Spatial = 2, Row = 3, Column = 4 };

inline constexpr Axis kAllAxes[] = {Axis::Channel, Axis::Filter, Axis::Spatial, Axis::Row,
                                    Axis::Column};

inline std::string_view to_string(Axis axis) {
  switch (axis) {
  case Axis::Channel: return "channel";
  case Axis::Filter: return "filter";
  case Axis::Spatial: return "spatial";
  case Axis::Row: return "row";
  case Axis::Column: return "column";
  }
  return "?";
}

inline Axis parse_axis(std::string_view name) {
  for (Axis a : kAllAxes)
    if (to_string(a) == name)
      return a;
  throw ArgumentError("unknown axis '" + std::string(name) + "'");
}

inline bool is_conv_axis(Axis a) { return a == Axis::Channel || a == Axis::Filter || a == Axis::Spatial; }

/// Convolution weights, row-major (m, c, i, j).
struct ConvWeights {
  std::size_t m_filters = 0;
  std::size_t c_channels = 0;
  std::size_t k_size = 0;
  std::size_t stride = 1;
  std::size_t zero_pad = 0;
  std::vector<float> values;

  static ConvWeights zeros(std::size_t m, std::size_t c, std::size_t k, std::size_t stride = 1,
                           std::size_t pad = 0) {
    ConvWeights w{m, c, k, stride, pad, {}};
    w.values.assign(m * c * k * k, 0.0f);
    return w;
  }

  std::size_t kernel_area() const { return k_size * k_size; }
  std::size_t index(std::size_t m, std::size_t c, std::size_t i, std::size_t j) const {
    return ((m * c_channels + c) * k_size + i) * k_size + j;
  }
  float at(std::size_t m, std::size_t c, std::size_t i, std::size_t j) const {
    return values[index(m, c, i, j)];
  }
  float& at(std::size_t m, std::size_t c, std::size_t i, std::size_t j) {
    return values[index(m, c, i, j)];
  }

  void validate() const {
    if (m_filters == 0 || c_channels == 0 || k_size == 0)
      throw ArgumentError("conv weights need non-zero M, C and K");
    if (stride < 1)
      throw ArgumentError("conv stride must be >= 1");
    if (values.size() != m_filters * c_channels * kernel_area())
      throw ArgumentError("conv value count does not match M*C*K*K");
  }

  bool operator==(const ConvWeights&) const = default;
};

/// Fully-connected weights, row-major (out, in).
struct FcWeights {
  std::size_t n_out = 0;
  std::size_t n_in = 0;
  std::vector<float> values;

  static FcWeights zeros(std::size_t n_out, std::size_t n_in) {
    FcWeights w{n_out, n_in, {}};
    w.values.assign(n_out * n_in, 0.0f);
    return w;
  }

  float at(std::size_t o, std::size_t i) const { return values[o * n_in + i]; }
  float& at(std::size_t o, std::size_t i) { return values[o * n_in + i]; }

  void validate() const {
    if (n_out == 0 || n_in == 0)
      throw ArgumentError("fc weights need non-zero dimensions");
    if (values.size() != n_out * n_in)
      throw ArgumentError("fc value count does not match n_out*n_in");
  }

  bool operator==(const FcWeights&) const = default;
};

/// Activations, row-major (c, h, w).
struct FeatureMap {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> values;

  static FeatureMap zeros(std::size_t c, std::size_t h, std::size_t w) {
    FeatureMap f{c, h, w, {}};
    f.values.assign(c * h * w, 0.0f);
    return f;
  }

  float at(std::size_t c, std::size_t h, std::size_t w) const {
    return values[(c * height + h) * width + w];
  }
  float& at(std::size_t c, std::size_t h, std::size_t w) { return values[(c * height + h) * width + w]; }

  void validate() const {
    if (values.size() != channels * height * width)
      throw ArgumentError("feature map value count does not match C*H*W");
  }

  bool operator==(const FeatureMap&) const = default;
};

using BiasVector = std::vector<float>;

enum class LayerKind : std::uint8_t { Conv = 0, Fc = 1 };

/// Geometry of a weight layer without its values. FC layers are viewed as
/// 1x1 convolutions: m = n_out, c = n_in, k = 1.
struct LayerShape {
  LayerKind kind = LayerKind::Conv;
  std::size_t m = 0;
  std::size_t c = 0;
  std::size_t k = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;

  std::size_t kernel_area() const { return k * k; }
  std::size_t element_count() const { return m * c * k * k; }
  bool operator==(const LayerShape&) const = default;
};

struct Layer {
  std::string name;
  std::variant<ConvWeights, FcWeights> weights;

  LayerKind kind() const { return std::holds_alternative<ConvWeights>(weights) ? LayerKind::Conv : LayerKind::Fc; }
  bool is_conv() const { return kind() == LayerKind::Conv; }
  const ConvWeights& conv() const { return std::get<ConvWeights>(weights); }
  const FcWeights& fc() const { return std::get<FcWeights>(weights); }

  std::span<const float> values() const {
    return std::visit([](const auto& w) { return std::span<const float>(w.values); }, weights);
  }
  std::span<float> values() {
    return std::visit([](auto& w) { return std::span<float>(w.values); }, weights);
  }

  LayerShape shape() const {
    if (is_conv()) {
      const auto& w = conv();
      return {LayerKind::Conv, w.m_filters, w.c_channels, w.k_size, w.stride, w.zero_pad};
    }
    const auto& w = fc();
    return {LayerKind::Fc, w.n_out, w.n_in, 1, 1, 0};
  }

  bool operator==(const Layer&) const = default;
};

inline Layer make_layer(const LayerShape& s, std::string name) {
  if (s.kind == LayerKind::Conv)
    return {std::move(name), ConvWeights::zeros(s.m, s.c, s.k, s.stride, s.pad)};
  return {std::move(name), FcWeights::zeros(s.m, s.c)};
}

struct LayerSet {
  std::string model;
  std::optional<std::uint64_t> seed;
  std::vector<Layer> layers;

  const Layer* find(std::string_view name) const {
    for (const auto& l : layers)
      if (l.name == name)
        return &l;
    return nullptr;
  }

  void validate() const {
    std::unordered_set<std::string_view> seen;
    for (const auto& l : layers) {
      if (!seen.insert(l.name).second)
        throw ArgumentError("duplicate layer name '" + l.name + "'");
      std::visit([](const auto& w) { w.validate(); }, l.weights);
    }
  }

  // Files carry neither the model name nor the seed, so equality is over layers.
  bool operator==(const LayerSet& o) const { return layers == o.layers; }
};

struct SpatialSize {
  std::size_t height = 1;
  std::size_t width = 1;
};

inline SpatialSize conv_output_size(const LayerShape& s, SpatialSize in) {
  if (s.kind == LayerKind::Fc)
    return {1, 1};
  const std::size_t ph = in.height + 2 * s.pad;
  const std::size_t pw = in.width + 2 * s.pad;
  if (s.k > ph || s.k > pw)
    throw ArgumentError("kernel larger than padded input");
  return {(ph - s.k) / s.stride + 1, (pw - s.k) / s.stride + 1};
}

} // namespace aap

#endif
