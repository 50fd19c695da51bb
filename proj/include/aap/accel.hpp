#ifndef AAP_ACCEL_HPP
#define AAP_ACCEL_HPP

#include "groups.hpp"
#include "parallel.hpp"
#include "pruner.hpp"

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace aap {

enum class Arch : std::uint8_t {
  SparseMWMA, // shared activation window, channel-axis fetch (Cambricon-X-like)
  SparseMWSA, // broadcast activation, filter-axis fetch (weight-sparse Cnvlutin)
  SWSA,       // one multiplier per PE, rows spread across PEs (EIE-like)
};
enum class PeAssignment : std::uint8_t { Interleaved, Blocked };
enum class SyncPolicy : std::uint8_t { PerFetchGroup, QueuedPerLayer };

inline std::string_view to_string(Arch a) {
  switch (a) {
  case Arch::SparseMWMA: return "mwma";
  case Arch::SparseMWSA: return "mwsa";
  case Arch::SWSA: return "swsa";
  }
  return "?";
}
inline std::string_view to_string(PeAssignment a) { return a == PeAssignment::Interleaved ? "interleaved" : "blocked"; }
inline std::string_view to_string(SyncPolicy s) { return s == SyncPolicy::PerFetchGroup ? "perfetch" : "queued"; }

inline Arch parse_arch(std::string_view s) {
  if (s == "mwma" || s == "cambricon-x")
    return Arch::SparseMWMA;
  if (s == "mwsa" || s == "cnvlutin")
    return Arch::SparseMWSA;
  if (s == "swsa" || s == "eie")
    return Arch::SWSA;
  throw ArgumentError("unknown architecture '" + std::string(s) + "'");
}
inline PeAssignment parse_assignment(std::string_view s) {
  if (s == "interleaved")
    return PeAssignment::Interleaved;
  if (s == "blocked")
    return PeAssignment::Blocked;
  throw ArgumentError("unknown PE assignment '" + std::string(s) + "'");
}
inline SyncPolicy parse_sync(std::string_view s) {
  if (s == "perfetch" || s == "per-fetch-group")
    return SyncPolicy::PerFetchGroup;
  if (s == "queued" || s == "queued-per-layer")
    return SyncPolicy::QueuedPerLayer;
  throw ArgumentError("unknown sync policy '" + std::string(s) + "'");
}

struct AccelConfig {
  Arch arch = Arch::SparseMWMA;
  std::size_t n_pe = 16;
  std::size_t n_mul = 16;
  std::size_t n_par = 64;
  std::size_t n_group = 16;
  PeAssignment assignment = PeAssignment::Interleaved;
  SyncPolicy sync = SyncPolicy::PerFetchGroup;

  /// 16 PEs of 16 multipliers over a 256-wide activation fetch.
  static AccelConfig cambricon_x() { return {Arch::SparseMWMA, 16, 16, 256, 256}; }
  /// Same PE array with the fetch narrowed to 64 and 16-wide pruning groups.
  static AccelConfig cambricon_x_reduced() { return {Arch::SparseMWMA, 16, 16, 64, 16}; }
  static AccelConfig eie() { return {Arch::SWSA, 64, 1, 16, 16}; }

  void validate() const {
    if (n_pe == 0 || n_mul == 0 || n_par == 0 || n_group == 0)
      throw ArgumentError("accelerator parameters must be positive");
    if (n_par % n_group != 0)
      throw ArgumentError("n_par must be a multiple of n_group");
    if (arch == Arch::SWSA && n_mul != 1)
      throw ArgumentError("SWSA PEs have exactly one multiplier");
  }

  bool operator==(const AccelConfig&) const = default;
};

struct LayerReport {
  std::string name;
  std::uint64_t n_nonzero = 0;
  std::uint64_t n_padding = 0;
  std::uint64_t n_mac = 0;
  std::uint64_t n_cycle = 0;
  double utilization = 0.0;
  bool operator==(const LayerReport&) const = default;
};

struct SimReport {
  AccelConfig config;
  std::vector<LayerReport> layers;
  LayerReport total;
  bool operator==(const SimReport&) const = default;
};

/// Fraction of multiplier-cycles doing valid MACs.
inline double utilization(std::uint64_t n_mac, std::uint64_t n_cycle, std::size_t n_mul, std::size_t n_pe) {
  if (n_cycle == 0)
    return 0.0;
  return static_cast<double>(n_mac) /
         (static_cast<double>(n_cycle) * static_cast<double>(n_mul) * static_cast<double>(n_pe));
}

inline double utilization(const LayerReport& r, const AccelConfig& c) {
  return utilization(r.n_mac, r.n_cycle, c.n_mul, c.n_pe);
}

/// Cycles for a PE to drain one fetch group of `nnz` weights.
inline std::uint64_t group_cycles(std::uint64_t nnz, std::uint64_t n_mul) { return (nnz + n_mul - 1) / n_mul; }

inline std::uint64_t alignment_padding(std::uint64_t nnz, std::uint64_t n_mul) {
  return group_cycles(nnz, n_mul) * n_mul - nnz;
}

/// Non-zeros per (PE unit, step): nnz[unit * steps + step]. A PE unit is the
/// filter (MWMA) or input channel (MWSA) a PE works on; a step is one fetch
/// of n_par activations.
struct FetchCounts {
  std::size_t units = 0;
  std::size_t steps = 0;
  std::vector<std::uint32_t> nnz;

  std::uint32_t at(std::size_t unit, std::size_t step) const { return nnz[unit * steps + step]; }
};

inline FetchCounts fetch_counts(const LayerShape& shape, const Mask& mask, Axis fetch_axis, std::size_t n_par) {
  const GroupDirectory dir(shape, fetch_axis, n_par);
  FetchCounts fc;
  fc.units = fetch_axis == Axis::Channel || fetch_axis == Axis::Row ? shape.m : shape.c;
  fc.steps = dir.size() / fc.units;
  fc.nnz = kept_per_group(mask, dir);
  return fc;
}

/// Cycles for one output position: units are dealt to the PE array in
/// batches of n_pe. PerFetchGroup waits for the slowest PE at every step;
/// QueuedPerLayer lets each PE run ahead and waits once per batch.
inline std::uint64_t schedule_cycles(const FetchCounts& fc, std::size_t n_pe, std::size_t n_mul, SyncPolicy sync) {
  std::uint64_t cycles = 0;
  for (std::size_t u0 = 0; u0 < fc.units; u0 += n_pe) {
    const std::size_t u1 = std::min(fc.units, u0 + n_pe);
    if (sync == SyncPolicy::PerFetchGroup) {
      for (std::size_t s = 0; s < fc.steps; ++s) {
        std::uint64_t worst = 0;
        for (std::size_t u = u0; u < u1; ++u)
          worst = std::max(worst, group_cycles(fc.at(u, s), n_mul));
        cycles += worst;
      }
    } else {
      std::uint64_t worst = 0;
      for (std::size_t u = u0; u < u1; ++u) {
        std::uint64_t own = 0;
        for (std::size_t s = 0; s < fc.steps; ++s)
          own += group_cycles(fc.at(u, s), n_mul);
        worst = std::max(worst, own);
      }
      cycles += worst;
    }
  }
  return cycles;
}

namespace detail {

inline void check_inputs(const LayerSet& set, const MaskSet& masks, std::span<const std::size_t> positions) {
  if (masks.size() != set.layers.size() || positions.size() != set.layers.size())
    throw ArgumentError("layers, masks and output positions differ in count");
  for (std::size_t l = 0; l < set.layers.size(); ++l) {
    if (masks[l].layer != set.layers[l].name)
      throw ArgumentError("mask order does not match layer '" + set.layers[l].name + "'");
    check_mask_size(set.layers[l], masks[l]);
    if (positions[l] == 0)
      throw ArgumentError("zero output size for layer '" + set.layers[l].name + "'");
  }
}

inline void finish_report(SimReport& report) {
  LayerReport total{"total"};
  for (auto& r : report.layers) {
    r.utilization = utilization(r, report.config);
    total.n_nonzero += r.n_nonzero;
    total.n_padding += r.n_padding;
    total.n_mac += r.n_mac;
    total.n_cycle += r.n_cycle;
  }
  total.utilization = utilization(total, report.config);
  report.total = total;
}

// Shared machinery for the two multi-multiplier PE shapes.
inline SimReport simulate_fetch_shared(const LayerSet& set, const MaskSet& masks, const AccelConfig& config,
                                       std::span<const std::size_t> positions, Arch expected) {
  config.validate();
  if (config.arch != expected)
    throw ArgumentError("config architecture does not match the simulator");
  check_inputs(set, masks, positions);
  SimReport report;
  report.config = config;
  report.layers.resize(set.layers.size());
  parallel_for(set.layers.size(), [&](std::size_t l) {
    const Layer& layer = set.layers[l];
    const LayerShape shape = layer.shape();
    Axis fetch_axis;
    if (expected == Arch::SparseMWMA)
      fetch_axis = layer.is_conv() ? Axis::Channel : Axis::Row;
    else
      fetch_axis = layer.is_conv() ? Axis::Filter : Axis::Column;
    const FetchCounts fc = fetch_counts(shape, masks[l], fetch_axis, config.n_par);
    LayerReport& r = report.layers[l];
    r.name = layer.name;
    for (auto n : fc.nnz) {
      r.n_nonzero += n;
      r.n_padding += alignment_padding(n, config.n_mul);
    }
    r.n_mac = r.n_nonzero * positions[l];
    r.n_cycle = schedule_cycles(fc, config.n_pe, config.n_mul, config.sync) * positions[l];
  });
  finish_report(report);
  return report;
}

} // namespace detail

/// Output positions (OutH * OutW) per layer for the given input sizes.
inline std::vector<std::size_t> output_positions(const LayerSet& set, std::span<const SpatialSize> inputs) {
  if (inputs.size() != set.layers.size())
    throw ArgumentError("need one input size per layer");
  std::vector<std::size_t> out;
  for (std::size_t l = 0; l < set.layers.size(); ++l) {
    const auto o = conv_output_size(set.layers[l].shape(), inputs[l]);
    out.push_back(o.height * o.width);
  }
  return out;
}

/// Sparse MWMA: PEs take one filter each and share every fetched window of
/// n_par input channels at one kernel tap. Padding zeros occupy multiplier
/// slots; FC layers are treated as 1x1 convolutions at one position.
inline SimReport simulate_mwma(const LayerSet& set, const MaskSet& masks, const AccelConfig& config,
                               std::span<const std::size_t> positions) {
  return detail::simulate_fetch_shared(set, masks, config, positions, Arch::SparseMWMA);
}

/// Sparse MWSA: PEs take one input channel each; every step broadcasts one
/// activation per PE against weights of n_par consecutive filters.
inline SimReport simulate_mwsa(const LayerSet& set, const MaskSet& masks, const AccelConfig& config,
                               std::span<const std::size_t> positions) {
  return detail::simulate_fetch_shared(set, masks, config, positions, Arch::SparseMWSA);
}

/// Per-PE non-zeros for every input column of an FC layer: nnz[pe * n_in + j].
inline std::vector<std::uint32_t> swsa_pe_counts(const FcWeights& w, const Mask& mask, const AccelConfig& config) {
  const std::size_t n_pe = config.n_pe;
  std::size_t span = 0;
  if (config.assignment == PeAssignment::Blocked) {
    if (w.n_out % (n_pe * config.n_group) != 0)
      throw ArgumentError("blocked assignment needs n_out divisible by n_pe * n_group");
    span = w.n_out / n_pe;
  }
  std::vector<std::uint32_t> counts(n_pe * w.n_in, 0);
  for (std::size_t r = 0; r < w.n_out; ++r) {
    const std::size_t pe = config.assignment == PeAssignment::Interleaved ? r % n_pe : r / span;
    std::uint32_t* row = counts.data() + pe * w.n_in;
    const std::uint8_t* keep = mask.keep.data() + r * w.n_in;
    for (std::size_t j = 0; j < w.n_in; ++j)
      row[j] += keep[j];
  }
  return counts;
}

/// SWSA: output rows are spread over PEs, each with one multiplier; input
/// activations are broadcast one column at a time.
inline SimReport simulate_swsa(const LayerSet& set, const MaskSet& masks, const AccelConfig& config) {
  config.validate();
  if (config.arch != Arch::SWSA)
    throw ArgumentError("config architecture does not match the simulator");
  const std::vector<std::size_t> ones(set.layers.size(), 1);
  detail::check_inputs(set, masks, ones);
  SimReport report;
  report.config = config;
  report.layers.resize(set.layers.size());
  parallel_for(set.layers.size(), [&](std::size_t l) {
    const Layer& layer = set.layers[l];
    if (layer.is_conv())
      throw ArgumentError("SWSA model takes fc layers only ('" + layer.name + "')");
    const FcWeights& w = layer.fc();
    const auto counts = swsa_pe_counts(w, masks[l], config);
    LayerReport& r = report.layers[l];
    r.name = layer.name;
    r.n_nonzero = masks[l].kept_count();
    r.n_mac = r.n_nonzero;
    if (config.sync == SyncPolicy::PerFetchGroup) {
      for (std::size_t j = 0; j < w.n_in; ++j) {
        std::uint32_t worst = 0;
        for (std::size_t pe = 0; pe < config.n_pe; ++pe)
          worst = std::max(worst, counts[pe * w.n_in + j]);
        r.n_cycle += worst;
      }
    } else {
      for (std::size_t pe = 0; pe < config.n_pe; ++pe) {
        std::uint64_t own = 0;
        for (std::size_t j = 0; j < w.n_in; ++j)
          own += counts[pe * w.n_in + j];
        r.n_cycle = std::max(r.n_cycle, own);
      }
    }
  });
  detail::finish_report(report);
  return report;
}

inline SimReport simulate(const LayerSet& set, const MaskSet& masks, const AccelConfig& config,
                          std::span<const std::size_t> positions) {
  switch (config.arch) {
  case Arch::SparseMWMA: return simulate_mwma(set, masks, config, positions);
  case Arch::SparseMWSA: return simulate_mwsa(set, masks, config, positions);
  case Arch::SWSA: return simulate_swsa(set, masks, config);
  }
  throw ArgumentError("unknown architecture");
}

// ---------------------------------------------------------------------------
// Comparison

struct ComparisonRow {
  std::string label;
  std::uint64_t n_cycle = 0;
  double cycle_ratio = 1.0;      // n_cycle / baseline n_cycle
  double cycle_delta_pct = 0.0;  // signed percent change vs baseline
  double utilization = 0.0;
  double utilization_delta_pp = 0.0; // percentage points vs baseline
  double padding_ratio = 0.0;        // n_padding / n_nonzero
};

struct Comparison {
  std::vector<ComparisonRow> rows; // rows[0] is the baseline
};

/// Compares reports against the first one. All reports must cover the same
/// layer names in the same order.
inline Comparison compare(std::span<const SimReport> reports, std::span<const std::string> labels = {}) {
  if (reports.empty())
    throw ArgumentError("nothing to compare");
  if (!labels.empty() && labels.size() != reports.size())
    throw ArgumentError("one label per report");
  const SimReport& base = reports.front();
  Comparison out;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const SimReport& r = reports[i];
    if (r.layers.size() != base.layers.size())
      throw ArgumentError("reports cover different layer sets");
    for (std::size_t l = 0; l < r.layers.size(); ++l)
      if (r.layers[l].name != base.layers[l].name)
        throw ArgumentError("reports cover different layer sets");
    ComparisonRow row;
    row.label = labels.empty() ? "report" + std::to_string(i) : labels[i];
    row.n_cycle = r.total.n_cycle;
    row.cycle_ratio = base.total.n_cycle ? static_cast<double>(r.total.n_cycle) / static_cast<double>(base.total.n_cycle) : 0.0;
    row.cycle_delta_pct = (row.cycle_ratio - 1.0) * 100.0;
    row.utilization = r.total.utilization;
    row.utilization_delta_pp = (r.total.utilization - base.total.utilization) * 100.0;
    row.padding_ratio = r.total.n_nonzero ? static_cast<double>(r.total.n_padding) / static_cast<double>(r.total.n_nonzero) : 0.0;
    out.rows.push_back(row);
  }
  return out;
}

} // namespace aap

#endif
