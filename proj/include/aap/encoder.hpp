#ifndef AAP_ENCODER_HPP
#define AAP_ENCODER_HPP

#include "groups.hpp"
#include "pruner.hpp"

#include <bit>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace aap {

enum class SparseFormat : std::uint8_t { Direct = 0, Relative = 1 };

inline std::string_view to_string(SparseFormat f) { return f == SparseFormat::Direct ? "direct" : "relative"; }

inline SparseFormat parse_format(std::string_view s) {
  if (s == "direct")
    return SparseFormat::Direct;
  if (s == "relative")
    return SparseFormat::Relative;
  throw ArgumentError("unknown sparse format '" + std::string(s) + "'");
}

/// Relative indices are 4 bits wide: a gap of up to 15 zeros fits in one entry.
inline constexpr std::uint32_t kRelativeIndexBits = 4;
inline constexpr std::uint32_t kRelativeMaxGap = 15;

inline std::uint32_t direct_index_bits(std::size_t n_group) {
  return static_cast<std::uint32_t>(std::bit_width(n_group - 1));
}

struct SparseEntry {
  float value = 0.0f;
  std::uint32_t index = 0;
  bool is_padding = false;
  bool is_filler = false;

  bool operator==(const SparseEntry& o) const {
    return std::bit_cast<std::uint32_t>(value) == std::bit_cast<std::uint32_t>(o.value) && index == o.index &&
           is_padding == o.is_padding && is_filler == o.is_filler;
  }
};

/// Entries a PE consumes for one activation fetch. Direct fetch groups hold
/// the kept weights of consecutive pruning groups (entry counts per pruning
/// group in `group_counts`), followed by any alignment padding.
struct FetchGroup {
  std::vector<SparseEntry> entries;
  std::vector<std::uint16_t> group_counts;

  std::size_t real_count() const {
    std::size_t n = 0;
    for (const auto& e : entries)
      n += !e.is_padding && !e.is_filler;
    return n;
  }
  std::size_t padding_count() const {
    std::size_t n = 0;
    for (const auto& e : entries)
      n += e.is_padding;
    return n;
  }
  bool operator==(const FetchGroup&) const = default;
};

/// A packed layer. Direct layers have one fetch group per n_par-wide block of
/// each fiber along `axis`; relative layers are a single row-major stream.
struct SparseLayer {
  std::string name;
  SparseFormat format = SparseFormat::Direct;
  Axis axis = Axis::Channel; // meaningful for Direct only
  LayerShape shape;
  std::uint32_t n_group = 0;
  std::uint32_t n_par = 0;
  std::uint32_t index_bits = 0;
  std::vector<FetchGroup> fetch_groups;

  std::size_t entry_count() const {
    std::size_t n = 0;
    for (const auto& f : fetch_groups)
      n += f.entries.size();
    return n;
  }
  std::size_t filler_count() const {
    std::size_t n = 0;
    for (const auto& f : fetch_groups)
      for (const auto& e : f.entries)
        n += e.is_filler;
    return n;
  }
  std::size_t padding_count() const {
    std::size_t n = 0;
    for (const auto& f : fetch_groups)
      n += f.padding_count();
    return n;
  }
  /// Storage cost of one entry in bits (value + index).
  std::size_t bits_per_entry() const { return 32 + index_bits; }

  /// Fetch-group directory over the layer, for Direct layers.
  GroupDirectory fetch_directory() const { return GroupDirectory(shape, axis, n_par); }

  bool operator==(const SparseLayer&) const = default;
};

struct PaddingReport {
  std::size_t n_padding = 0;
  std::size_t n_filler = 0;
  std::vector<std::uint32_t> per_group; // padding entries per fetch group
};

/// Human-readable coordinate of a fetch group, for error messages.
inline std::string describe_fetch_group(const SparseLayer& s, std::size_t g) {
  if (s.format == SparseFormat::Relative)
    return "stream " + std::to_string(g);
  const auto dir = s.fetch_directory();
  const auto v = dir.group(g);
  return std::string(to_string(s.axis)) + " fiber " + std::to_string(v.fiber) + " block " +
         std::to_string(v.offset / s.n_par);
}

inline SparseLayer encode_direct(const Layer& layer, const Mask& mask, Axis axis, std::size_t n_group,
                                 std::size_t n_par) {
  if (n_group < 2)
    throw ArgumentError("n_group must be >= 2");
  if (n_group > 0xFFFF)
    throw ArgumentError("n_group too large for direct indexing");
  if (n_par == 0 || n_par % n_group != 0)
    throw ArgumentError("n_par must be a multiple of n_group");
  detail::check_mask_size(layer, mask);
  if (mask.axis && (*mask.axis != axis || mask.n_group != n_group))
    throw ArgumentError("mask was built for a different axis or group size");
  const auto values = layer.values();
  SparseLayer out;
  out.name = layer.name;
  out.format = SparseFormat::Direct;
  out.axis = axis;
  out.shape = layer.shape();
  out.n_group = static_cast<std::uint32_t>(n_group);
  out.n_par = static_cast<std::uint32_t>(n_par);
  out.index_bits = direct_index_bits(n_group);
  const GroupDirectory fetch(out.shape, axis, n_par);
  out.fetch_groups.resize(fetch.size());
  fetch.for_each([&](std::size_t g, const GroupView& window) {
    FetchGroup& fg = out.fetch_groups[g];
    for (std::size_t base = 0; base < window.real; base += n_group) {
      const std::size_t real = std::min(n_group, window.real - base);
      std::uint16_t count = 0;
      for (std::size_t t = 0; t < real; ++t) {
        const std::size_t idx = window[base + t];
        if (mask.kept(idx)) {
          fg.entries.push_back({values[idx], static_cast<std::uint32_t>(t), false, false});
          ++count;
        }
      }
      fg.group_counts.push_back(count);
    }
  });
  return out;
}

/// Row-major stream; each entry's index is the number of zeros skipped since
/// the previous entry. Gaps over 15 are bridged by filler entries that each
/// consume 16 positions (15 skipped zeros plus the filler's own zero).
inline SparseLayer encode_relative(const Layer& layer, const Mask& mask) {
  detail::check_mask_size(layer, mask);
  const auto values = layer.values();
  SparseLayer out;
  out.name = layer.name;
  out.format = SparseFormat::Relative;
  out.shape = layer.shape();
  out.index_bits = kRelativeIndexBits;
  FetchGroup stream;
  std::size_t gap = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!mask.kept(i)) {
      ++gap;
      continue;
    }
    for (; gap > kRelativeMaxGap; gap -= kRelativeMaxGap + 1)
      stream.entries.push_back({0.0f, kRelativeMaxGap, false, true});
    stream.entries.push_back({values[i], static_cast<std::uint32_t>(gap), false, false});
    gap = 0;
  }
  out.fetch_groups.push_back(std::move(stream));
  return out;
}

/// Pads every fetch group with zero entries up to a multiple of n_mul.
inline std::pair<SparseLayer, PaddingReport> align_to_mul(SparseLayer sparse, std::size_t n_mul) {
  if (sparse.format != SparseFormat::Direct)
    throw ArgumentError("alignment applies to direct-indexed layers only");
  if (n_mul == 0)
    throw ArgumentError("n_mul must be >= 1");
  PaddingReport report;
  report.per_group.reserve(sparse.fetch_groups.size());
  for (auto& fg : sparse.fetch_groups) {
    const std::size_t n = fg.entries.size();
    const std::size_t pad = (n + n_mul - 1) / n_mul * n_mul - n;
    for (std::size_t p = 0; p < pad; ++p)
      fg.entries.push_back({0.0f, 0, true, false});
    report.per_group.push_back(static_cast<std::uint32_t>(pad));
    report.n_padding += pad;
  }
  report.n_filler = sparse.filler_count();
  return {std::move(sparse), report};
}

/// Weight position an entry stands for.
struct ResolvedEntry {
  std::size_t weight_index;
  float value;
};

/// Walks the packed streams and returns every stored weight with its linear
/// position. Padding and filler entries are validated and dropped.
inline std::vector<ResolvedEntry> resolve_entries(const SparseLayer& s) {
  std::vector<ResolvedEntry> out;
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
        if (entry.index > kRelativeMaxGap)
          fail(g, e, "index out of range");
        if (entry.is_padding)
          fail(g, e, "padding in relative stream");
        pos += entry.index;
        if (pos >= total)
          fail(g, e, "stream runs past the layer end");
        if (entry.is_filler) {
          if (entry.index != kRelativeMaxGap || entry.value != 0.0f)
            fail(g, e, "malformed filler");
        } else {
          out.push_back({pos, entry.value});
        }
        ++pos;
      }
    }
    return out;
  }

  if (s.n_group < 2 || s.n_par == 0 || s.n_par % s.n_group != 0)
    throw FormatError("layer '" + s.name + "': bad group geometry");
  const GroupDirectory fetch = s.fetch_directory();
  if (fetch.size() != s.fetch_groups.size())
    throw FormatError("layer '" + s.name + "': fetch group count does not match the layer shape");
  for (std::size_t g = 0; g < s.fetch_groups.size(); ++g) {
    const auto& fg = s.fetch_groups[g];
    const GroupView window = fetch.group(g);
    const std::size_t groups = (window.real + s.n_group - 1) / s.n_group;
    if (fg.group_counts.size() != groups)
      fail(g, 0, "pruning group count does not match the fetch window");
    std::size_t e = 0;
    for (std::size_t p = 0; p < groups; ++p) {
      const std::size_t real = std::min<std::size_t>(s.n_group, window.real - p * s.n_group);
      long last = -1;
      for (std::size_t k = 0; k < fg.group_counts[p]; ++k, ++e) {
        if (e >= fg.entries.size())
          fail(g, e, "entry list shorter than its group counts");
        const auto& entry = fg.entries[e];
        if (entry.is_padding || entry.is_filler)
          fail(g, e, "padding inside a pruning group");
        if (entry.index >= s.n_group)
          fail(g, e, "index out of range");
        if (entry.index >= real)
          fail(g, e, "index selects a virtual slot");
        if (static_cast<long>(entry.index) <= last)
          fail(g, e, "indices not ascending");
        last = entry.index;
        out.push_back({window[p * s.n_group + entry.index], entry.value});
      }
    }
    for (; e < fg.entries.size(); ++e)
      if (!fg.entries[e].is_padding || fg.entries[e].value != 0.0f || fg.entries[e].index != 0)
        fail(g, e, "unexpected entry after the pruning groups");
  }
  return out;
}

/// Dense masked layer reconstructed from a packed one.
inline Layer decode(const SparseLayer& s) {
  Layer out = make_layer(s.shape, s.name);
  auto values = out.values();
  for (const auto& r : resolve_entries(s))
    values[r.weight_index] = r.value;
  return out;
}

/// Mask implied by a packed layer (stored entries are kept).
inline Mask decode_mask(const SparseLayer& s) {
  Mask m{s.name, std::nullopt, 0, 0, std::vector<std::uint8_t>(s.shape.element_count(), 0)};
  for (const auto& r : resolve_entries(s))
    m.keep[r.weight_index] = 1;
  return m;
}

} // namespace aap

#endif
