#ifndef AAP_IO_HPP
#define AAP_IO_HPP

#include "encoder.hpp"
#include "pruner.hpp"
#include "tensor.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

// Binary containers, all little-endian:
//
//   AAPW  layers / feature maps
//     "AAPW" u16 version=1 u16 count
//     per record: u8 kind (0 conv, 1 fc, 2 feature map), u16 name length,
//     name bytes, u32 dims (conv: M C K stride pad; fc: n_out n_in;
//     feature map: C H W), f32 values in row-major order.
//
//   AAPM  masks
//     "AAPM" u16 version=1 u16 count
//     per mask: u16 name length, name, u8 axis (255 = unstructured),
//     u32 n_group, u32 n_prune, u32 entry count, ceil(n/8) bytes of keep
//     bits, LSB first; unused trailing bits are zero.
//
//   AAPS  packed sparse layers
//     "AAPS" u16 version=1 u16 count
//     per layer: u16 name length, name, u8 format, u8 axis, u8 kind,
//     u32 dims x5 (M C K stride pad), u32 n_group, u32 n_par, u8 index_bits,
//     u32 fetch group count, u32 entry count per fetch group, then for
//     direct layers u16 pruning-group count and u16 entries per pruning
//     group for each fetch group, then one bit stream per fetch group:
//     per entry f32 value, index in index_bits bits, padding bit, filler
//     bit; each stream is zero-padded to a byte boundary.

namespace aap {

inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::uint8_t kUnstructuredAxis = 255;

using Bytes = std::vector<std::uint8_t>;

class ByteWriter {
public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void bytes(const Bytes& b) { buf_.insert(buf_.end(), b.begin(), b.end()); }

  void name(std::string_view s) {
    if (s.size() > 0xFFFF)
      throw ArgumentError("name too long");
    u16(static_cast<std::uint16_t>(s.size()));
    raw(s);
  }

  void dim(std::size_t v) {
    if (v > 0xFFFFFFFFu)
      throw ArgumentError("dimension overflow");
    u32(static_cast<std::uint32_t>(v));
  }

  Bytes take() { return std::move(buf_); }

private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i)
      buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  Bytes buf_;
};

class ByteReader {
public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  void need(std::size_t n) const {
    if (data_.size() - pos_ < n)
      throw FormatError("truncated");
  }
  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  float f32() { return std::bit_cast<float>(u32()); }

  std::string raw(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::string name() { return raw(u16()); }

  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  void magic(std::string_view expected) {
    if (data_.size() < expected.size() ||
        std::string_view(reinterpret_cast<const char*>(data_.data()), expected.size()) != expected)
      throw FormatError("bad magic");
    pos_ = expected.size();
    if (u16() != kFormatVersion)
      throw FormatError("unsupported version");
  }

  void finish() const {
    if (pos_ != data_.size())
      throw FormatError("trailing bytes after payload");
  }

private:
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

class BitWriter {
public:
  void put(std::uint64_t v, unsigned bits) {
    for (unsigned b = 0; b < bits; ++b) {
      if (fill_ == 0)
        buf_.push_back(0);
      buf_.back() |= static_cast<std::uint8_t>(((v >> b) & 1u) << fill_);
      fill_ = (fill_ + 1) % 8;
    }
  }
  Bytes take() {
    fill_ = 0;
    return std::move(buf_);
  }

private:
  Bytes buf_;
  unsigned fill_ = 0;
};

class BitReader {
public:
  explicit BitReader(std::span<const std::uint8_t> data) : data_(data) {}
  std::uint64_t get(unsigned bits) {
    std::uint64_t v = 0;
    for (unsigned b = 0; b < bits; ++b, ++pos_) {
      if (pos_ / 8 >= data_.size())
        throw FormatError("truncated");
      v |= static_cast<std::uint64_t>((data_[pos_ / 8] >> (pos_ % 8)) & 1u) << b;
    }
    return v;
  }
  /// Remaining bits in the final partial byte must be zero.
  void finish() const {
    for (std::size_t p = pos_; p < data_.size() * 8; ++p)
      if ((data_[p / 8] >> (p % 8)) & 1u)
        throw FormatError("non-zero padding bits");
  }

private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

namespace detail {

inline constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 36;

inline std::size_t checked_product(std::initializer_list<std::uint64_t> dims) {
  std::uint64_t n = 1;
  for (auto d : dims) {
    if (d != 0 && n > kMaxElements / d)
      throw FormatError("dimension overflow");
    n *= d;
  }
  if (n > kMaxElements)
    throw FormatError("dimension overflow");
  return static_cast<std::size_t>(n);
}

inline std::vector<float> read_values(ByteReader& r, std::size_t n) {
  r.need(n * 4);
  std::vector<float> v(n);
  for (auto& x : v)
    x = r.f32();
  return v;
}

inline void check_count(std::size_t n) {
  if (n > 0xFFFF)
    throw ArgumentError("too many records for one container");
}

} // namespace detail

// ---------------------------------------------------------------------------
// Layer / feature-map container

struct NamedRecord {
  std::string name;
  std::variant<ConvWeights, FcWeights, FeatureMap> body;
  bool operator==(const NamedRecord&) const = default;
};

inline Bytes encode_records(const std::vector<NamedRecord>& records) {
  detail::check_count(records.size());
  ByteWriter w;
  w.raw("AAPW");
  w.u16(kFormatVersion);
  w.u16(static_cast<std::uint16_t>(records.size()));
  for (const auto& rec : records) {
    const std::vector<float>* values = nullptr;
    if (const auto* c = std::get_if<ConvWeights>(&rec.body)) {
      c->validate();
      w.u8(0);
      w.name(rec.name);
      for (auto d : {c->m_filters, c->c_channels, c->k_size, c->stride, c->zero_pad})
        w.dim(d);
      values = &c->values;
    } else if (const auto* f = std::get_if<FcWeights>(&rec.body)) {
      f->validate();
      w.u8(1);
      w.name(rec.name);
      w.dim(f->n_out);
      w.dim(f->n_in);
      values = &f->values;
    } else {
      const auto& fm = std::get<FeatureMap>(rec.body);
      fm.validate();
      w.u8(2);
      w.name(rec.name);
      w.dim(fm.channels);
      w.dim(fm.height);
      w.dim(fm.width);
      values = &fm.values;
    }
    for (float v : *values)
      w.f32(v);
  }
  return w.take();
}

inline std::vector<NamedRecord> decode_records(std::span<const std::uint8_t> data) {
  ByteReader r(data);
  r.magic("AAPW");
  const std::size_t count = r.u16();
  std::vector<NamedRecord> out;
  out.reserve(count);
  for (std::size_t l = 0; l < count; ++l) {
    const std::uint8_t kind = r.u8();
    std::string name = r.name();
    if (kind == 0) {
      ConvWeights c;
      c.m_filters = r.u32();
      c.c_channels = r.u32();
      c.k_size = r.u32();
      c.stride = r.u32();
      c.zero_pad = r.u32();
      const auto n = detail::checked_product({c.m_filters, c.c_channels, c.k_size, c.k_size});
      c.values = detail::read_values(r, n);
      try {
        c.validate();
      } catch (const ArgumentError& e) {
        throw FormatError(e.what());
      }
      out.push_back({std::move(name), std::move(c)});
    } else if (kind == 1) {
      FcWeights f;
      f.n_out = r.u32();
      f.n_in = r.u32();
      f.values = detail::read_values(r, detail::checked_product({f.n_out, f.n_in}));
      if (f.n_out == 0 || f.n_in == 0)
        throw FormatError("fc layer with zero dimension");
      out.push_back({std::move(name), std::move(f)});
    } else if (kind == 2) {
      FeatureMap fm;
      fm.channels = r.u32();
      fm.height = r.u32();
      fm.width = r.u32();
      fm.values = detail::read_values(r, detail::checked_product({fm.channels, fm.height, fm.width}));
      out.push_back({std::move(name), std::move(fm)});
    } else {
      throw FormatError("unknown record kind " + std::to_string(kind));
    }
  }
  r.finish();
  return out;
}

inline Bytes encode_layers(const LayerSet& set) {
  set.validate();
  std::vector<NamedRecord> records;
  records.reserve(set.layers.size());
  for (const auto& l : set.layers)
    std::visit([&](const auto& w) { records.push_back({l.name, w}); }, l.weights);
  return encode_records(records);
}

inline LayerSet decode_layers(std::span<const std::uint8_t> data) {
  LayerSet set;
  for (auto& rec : decode_records(data)) {
    if (auto* c = std::get_if<ConvWeights>(&rec.body))
      set.layers.push_back({std::move(rec.name), std::move(*c)});
    else if (auto* f = std::get_if<FcWeights>(&rec.body))
      set.layers.push_back({std::move(rec.name), std::move(*f)});
    else
      throw FormatError("feature map record in a layer file");
  }
  try {
    set.validate();
  } catch (const ArgumentError& e) {
    throw FormatError(e.what());
  }
  return set;
}

// ---------------------------------------------------------------------------
// Masks

inline Bytes encode_masks(const MaskSet& masks) {
  detail::check_count(masks.size());
  ByteWriter w;
  w.raw("AAPM");
  w.u16(kFormatVersion);
  w.u16(static_cast<std::uint16_t>(masks.size()));
  for (const auto& m : masks) {
    w.name(m.layer);
    w.u8(m.axis ? static_cast<std::uint8_t>(*m.axis) : kUnstructuredAxis);
    w.u32(m.n_group);
    w.u32(m.n_prune);
    w.dim(m.keep.size());
    BitWriter bits;
    for (auto k : m.keep)
      bits.put(k ? 1 : 0, 1);
    w.bytes(bits.take());
  }
  return w.take();
}

inline MaskSet decode_masks(std::span<const std::uint8_t> data) {
  ByteReader r(data);
  r.magic("AAPM");
  const std::size_t count = r.u16();
  MaskSet out;
  for (std::size_t i = 0; i < count; ++i) {
    Mask m;
    m.layer = r.name();
    const std::uint8_t axis = r.u8();
    if (axis != kUnstructuredAxis) {
      if (axis > static_cast<std::uint8_t>(Axis::Column))
        throw FormatError("unknown axis code " + std::to_string(axis));
      m.axis = static_cast<Axis>(axis);
    }
    m.n_group = r.u32();
    m.n_prune = r.u32();
    const std::size_t n = r.u32();
    BitReader bits(r.take((n + 7) / 8));
    m.keep.resize(n);
    for (auto& k : m.keep)
      k = static_cast<std::uint8_t>(bits.get(1));
    bits.finish();
    out.push_back(std::move(m));
  }
  r.finish();
  return out;
}

// ---------------------------------------------------------------------------
// Packed sparse layers

inline Bytes encode_sparse(const std::vector<SparseLayer>& layers) {
  detail::check_count(layers.size());
  ByteWriter w;
  w.raw("AAPS");
  w.u16(kFormatVersion);
  w.u16(static_cast<std::uint16_t>(layers.size()));
  for (const auto& s : layers) {
    if (s.index_bits > 32)
      throw ArgumentError("index width too large");
    w.name(s.name);
    w.u8(static_cast<std::uint8_t>(s.format));
    w.u8(static_cast<std::uint8_t>(s.axis));
    w.u8(static_cast<std::uint8_t>(s.shape.kind));
    for (auto d : {s.shape.m, s.shape.c, s.shape.k, s.shape.stride, s.shape.pad})
      w.dim(d);
    w.u32(s.n_group);
    w.u32(s.n_par);
    w.u8(static_cast<std::uint8_t>(s.index_bits));
    w.dim(s.fetch_groups.size());
    for (const auto& fg : s.fetch_groups)
      w.dim(fg.entries.size());
    if (s.format == SparseFormat::Direct) {
      for (const auto& fg : s.fetch_groups) {
        w.u16(static_cast<std::uint16_t>(fg.group_counts.size()));
        for (auto c : fg.group_counts)
          w.u16(c);
      }
    }
    const std::uint64_t index_limit = std::uint64_t{1} << s.index_bits;
    for (const auto& fg : s.fetch_groups) {
      BitWriter bits;
      for (const auto& e : fg.entries) {
        if (e.index >= index_limit)
          throw ArgumentError("index does not fit in " + std::to_string(s.index_bits) + " bits");
        bits.put(std::bit_cast<std::uint32_t>(e.value), 32);
        bits.put(e.index, s.index_bits);
        bits.put(e.is_padding, 1);
        bits.put(e.is_filler, 1);
      }
      w.bytes(bits.take());
    }
  }
  return w.take();
}

inline std::vector<SparseLayer> decode_sparse(std::span<const std::uint8_t> data) {
  ByteReader r(data);
  r.magic("AAPS");
  const std::size_t count = r.u16();
  std::vector<SparseLayer> out;
  for (std::size_t l = 0; l < count; ++l) {
    SparseLayer s;
    s.name = r.name();
    const auto format = r.u8();
    const auto axis = r.u8();
    const auto kind = r.u8();
    if (format > 1 || axis > static_cast<std::uint8_t>(Axis::Column) || kind > 1)
      throw FormatError("bad sparse layer header");
    s.format = static_cast<SparseFormat>(format);
    s.axis = static_cast<Axis>(axis);
    s.shape.kind = static_cast<LayerKind>(kind);
    s.shape.m = r.u32();
    s.shape.c = r.u32();
    s.shape.k = r.u32();
    s.shape.stride = r.u32();
    s.shape.pad = r.u32();
    detail::checked_product({s.shape.m, s.shape.c, s.shape.k, s.shape.k});
    s.n_group = r.u32();
    s.n_par = r.u32();
    s.index_bits = r.u8();
    if (s.index_bits > 32)
      throw FormatError("index width too large");
    const std::size_t groups = r.u32();
    r.need(groups * 4);
    std::vector<std::size_t> sizes(groups);
    for (auto& n : sizes)
      n = r.u32();
    s.fetch_groups.resize(groups);
    if (s.format == SparseFormat::Direct) {
      for (auto& fg : s.fetch_groups) {
        fg.group_counts.resize(r.u16());
        for (auto& c : fg.group_counts)
          c = r.u16();
      }
    }
    const std::size_t entry_bits = 32 + s.index_bits + 2;
    for (std::size_t g = 0; g < groups; ++g) {
      const std::uint64_t bit_count = static_cast<std::uint64_t>(sizes[g]) * entry_bits;
      BitReader bits(r.take(static_cast<std::size_t>((bit_count + 7) / 8)));
      auto& entries = s.fetch_groups[g].entries;
      entries.resize(sizes[g]);
      for (auto& e : entries) {
        e.value = std::bit_cast<float>(static_cast<std::uint32_t>(bits.get(32)));
        e.index = static_cast<std::uint32_t>(bits.get(s.index_bits));
        e.is_padding = bits.get(1) != 0;
        e.is_filler = bits.get(1) != 0;
      }
      bits.finish();
    }
    out.push_back(std::move(s));
  }
  r.finish();
  return out;
}

// ---------------------------------------------------------------------------
// Files

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw FormatError("cannot open '" + path.string() + "'");
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Writes via a temporary file and rename, so readers never see a partial file.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw FormatError("cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out)
      throw FormatError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec)
    throw FormatError("cannot rename onto '" + path.string() + "': " + ec.message());
}

inline void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline LayerSet load_layers(const std::filesystem::path& path) { return decode_layers(read_file(path)); }
inline void store_layers(const LayerSet& set, const std::filesystem::path& path) {
  write_file_atomic(path, encode_layers(set));
}

inline MaskSet load_masks(const std::filesystem::path& path) { return decode_masks(read_file(path)); }
inline void store_masks(const MaskSet& masks, const std::filesystem::path& path) {
  write_file_atomic(path, encode_masks(masks));
}

inline std::vector<SparseLayer> load_sparse(const std::filesystem::path& path) {
  return decode_sparse(read_file(path));
}
inline void store_sparse(const std::vector<SparseLayer>& layers, const std::filesystem::path& path) {
  write_file_atomic(path, encode_sparse(layers));
}

inline std::vector<FeatureMap> load_feature_maps(const std::filesystem::path& path) {
  std::vector<FeatureMap> out;
  for (auto& rec : decode_records(read_file(path))) {
    auto* fm = std::get_if<FeatureMap>(&rec.body);
    if (!fm)
      throw FormatError("non feature-map record '" + rec.name + "' in feature-map file");
    out.push_back(std::move(*fm));
  }
  return out;
}

inline void store_feature_maps(const std::vector<std::pair<std::string, FeatureMap>>& maps,
                               const std::filesystem::path& path) {
  std::vector<NamedRecord> records;
  for (const auto& [name, fm] : maps)
    records.push_back({name, fm});
  write_file_atomic(path, encode_records(records));
}

} // namespace aap

#endif
