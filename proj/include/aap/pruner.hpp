#ifndef AAP_PRUNER_HPP
#define AAP_PRUNER_HPP

#include "groups.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <vector>

namespace aap {

struct PruneSpec {
  Axis axis = Axis::Channel;
  std::size_t n_group = 16;
  std::size_t n_prune = 0; // weights removed per group
  bool first_conv_exempt = false;

  double ratio() const { return static_cast<double>(n_prune) / static_cast<double>(n_group); }

  void validate() const {
    if (n_group < 2)
      throw ArgumentError("n_group must be >= 2");
    if (n_prune >= n_group)
      throw ArgumentError("n_prune must be smaller than n_group");
  }
};

/// Keep-mask congruent to a layer's value array. Balanced masks record the
/// axis and group parameters they were built with; unstructured masks have
/// no axis, n_group == 0 and n_prune == number of pruned weights.
struct Mask {
  std::string layer;
  std::optional<Axis> axis;
  std::uint32_t n_group = 0;
  std::uint32_t n_prune = 0;
  std::vector<std::uint8_t> keep; // 1 = kept

  std::size_t size() const { return keep.size(); }
  bool kept(std::size_t i) const { return keep[i] != 0; }
  std::size_t kept_count() const { return static_cast<std::size_t>(std::count(keep.begin(), keep.end(), 1)); }
  std::size_t pruned_count() const { return size() - kept_count(); }

  static Mask all_kept(std::string layer, std::size_t n) { return {std::move(layer), std::nullopt, 0, 0, std::vector<std::uint8_t>(n, 1)}; }

  bool operator==(const Mask&) const = default;
};

using MaskSet = std::vector<Mask>;

inline const Mask& find_mask(const MaskSet& masks, std::string_view layer) {
  for (const auto& m : masks)
    if (m.layer == layer)
      return m;
  throw ArgumentError("no mask for layer '" + std::string(layer) + "'");
}

/// Kept real entries per group of `dir`.
inline std::vector<std::uint32_t> kept_per_group(const Mask& mask, const GroupDirectory& dir) {
  std::vector<std::uint32_t> counts(dir.size());
  dir.for_each([&](std::size_t g, const GroupView& v) {
    std::uint32_t n = 0;
    for (std::size_t t = 0; t < v.real; ++t)
      n += mask.keep[v[t]];
    counts[g] = n;
  });
  return counts;
}

namespace detail {

// Smallest magnitude first; equal magnitudes prune the lower linear index first.
struct PruneOrder {
  std::span<const float> values;
  bool operator()(std::size_t a, std::size_t b) const {
    const float ma = std::fabs(values[a]), mb = std::fabs(values[b]);
    if (ma != mb)
      return ma < mb;
    return a < b;
  }
};

// Real weights a group keeps when `n_prune` slots (virtual ones first) go.
inline std::size_t kept_target(const GroupView& v, std::size_t n_group, std::size_t n_prune) {
  return std::min(v.real, n_group - n_prune);
}

inline void check_mask_size(const Layer& layer, const Mask& mask) {
  if (mask.size() != layer.values().size())
    throw ArgumentError("mask size does not match layer '" + layer.name + "'");
}

} // namespace detail

/// Within every pruning group, prunes the n_prune smallest-magnitude entries.
/// Virtual padding slots count as pruned first, so each group keeps
/// min(real, n_group - n_prune) real weights.
inline Mask prune_balanced(const Layer& layer, const PruneSpec& spec) {
  spec.validate();
  const GroupDirectory dir = enumerate_groups(layer, spec.axis, spec.n_group);
  const auto values = layer.values();
  Mask mask{layer.name, spec.axis, static_cast<std::uint32_t>(spec.n_group),
            static_cast<std::uint32_t>(spec.n_prune), std::vector<std::uint8_t>(values.size(), 1)};
  const detail::PruneOrder order{values};
  std::vector<std::size_t> members;
  dir.for_each([&](std::size_t, const GroupView& v) {
    const std::size_t prune_real = v.real - detail::kept_target(v, spec.n_group, spec.n_prune);
    if (prune_real == 0)
      return;
    members.resize(v.real);
    for (std::size_t t = 0; t < v.real; ++t)
      members[t] = v[t];
    std::partial_sort(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(prune_real), members.end(), order);
    for (std::size_t t = 0; t < prune_real; ++t)
      mask.keep[members[t]] = 0;
  });
  return mask;
}

/// Prunes floor(ratio * n) smallest-magnitude weights of the layer.
inline Mask prune_unstructured(const Layer& layer, double ratio) {
  if (!(ratio >= 0.0 && ratio < 1.0))
    throw ArgumentError("unstructured ratio must be in [0, 1)");
  const auto values = layer.values();
  const std::size_t n = values.size();
  const auto n_prune = static_cast<std::size_t>(std::floor(static_cast<long double>(ratio) * n));
  Mask mask{layer.name, std::nullopt, 0, static_cast<std::uint32_t>(n_prune), std::vector<std::uint8_t>(n, 1)};
  if (n_prune == 0)
    return mask;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_prune - 1), order.end(),
                   detail::PruneOrder{values});
  for (std::size_t t = 0; t < n_prune; ++t)
    mask.keep[order[t]] = 0;
  return mask;
}

inline Layer apply_mask(const Layer& layer, const Mask& mask) {
  detail::check_mask_size(layer, mask);
  Layer out = layer;
  auto values = out.values();
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!mask.kept(i))
      values[i] = 0.0f;
  return out;
}

namespace detail {

inline bool is_first_conv(const LayerSet& set, std::size_t l) {
  for (std::size_t i = 0; i < set.layers.size(); ++i)
    if (set.layers[i].is_conv())
      return i == l;
  return false;
}

} // namespace detail

/// The axis actually used for a layer when one axis is given for a whole
/// model: channel pairs with row and filter with column, so conv and fc
/// layers are grouped along the same fetch direction.
inline Axis axis_for_layer(Axis axis, LayerKind kind) {
  if (is_conv_axis(axis) == (kind == LayerKind::Conv))
    return axis;
  switch (axis) {
  case Axis::Channel: return Axis::Row;
  case Axis::Filter: return Axis::Column;
  case Axis::Row: return Axis::Channel;
  case Axis::Column: return Axis::Filter;
  case Axis::Spatial: break;
  }
  throw ArgumentError("spatial axis does not apply to fc layers");
}

/// Balanced masks for every layer of a set, layers evaluated in parallel.
inline MaskSet prune_model(const LayerSet& set, const PruneSpec& spec) {
  spec.validate();
  MaskSet masks(set.layers.size());
  parallel_for(set.layers.size(), [&](std::size_t l) {
    const Layer& layer = set.layers[l];
    PruneSpec own = spec;
    own.axis = axis_for_layer(spec.axis, layer.kind());
    if (spec.first_conv_exempt && detail::is_first_conv(set, l)) {
      enumerate_groups(layer, own.axis, own.n_group);
      masks[l] = Mask{layer.name, own.axis, static_cast<std::uint32_t>(own.n_group), 0,
                      std::vector<std::uint8_t>(layer.values().size(), 1)};
    } else {
      masks[l] = prune_balanced(layer, own);
    }
  });
  return masks;
}

inline MaskSet prune_model_unstructured(const LayerSet& set, double ratio, bool first_conv_exempt = false) {
  MaskSet masks(set.layers.size());
  parallel_for(set.layers.size(), [&](std::size_t l) {
    const Layer& layer = set.layers[l];
    masks[l] = first_conv_exempt && detail::is_first_conv(set, l) ? Mask::all_kept(layer.name, layer.values().size())
                                                                  : prune_unstructured(layer, ratio);
  });
  return masks;
}

/// Stepwise pruning: start at initial_prune per group and add `increment`
/// per step until target_prune. Retraining between steps is the caller's
/// business (see run_schedule).
struct IncrementalSchedule {
  Axis axis = Axis::Channel;
  std::size_t n_group = 16;
  std::size_t initial_prune = 0;
  std::size_t increment = 1;
  std::size_t target_prune = 0;
  std::vector<Mask> history;

  void validate() const {
    if (n_group < 2)
      throw ArgumentError("n_group must be >= 2");
    if (initial_prune > target_prune)
      throw ArgumentError("initial prune count exceeds target");
    if (target_prune >= n_group)
      throw ArgumentError("target prune count must be smaller than n_group");
  }
};

inline Mask begin_schedule(const Layer& layer, IncrementalSchedule& schedule) {
  schedule.validate();
  Mask first = prune_balanced(layer, {schedule.axis, schedule.n_group, schedule.initial_prune, false});
  schedule.history.assign(1, first);
  return first;
}

/// Prunes `increment` more of the currently kept weights per group, picked by
/// magnitude in `layer` (which may have been retrained since the last step).
/// Pruned entries stay pruned.
inline Mask advance_schedule(const Layer& layer, IncrementalSchedule& schedule, const Mask& current) {
  schedule.validate();
  detail::check_mask_size(layer, current);
  if (schedule.history.empty() || schedule.history.back().keep != current.keep)
    throw ArgumentError("mask does not match the schedule history");
  if (current.n_prune >= schedule.target_prune)
    throw ArgumentError("schedule target already reached");
  if (schedule.increment == 0)
    return current;
  const std::size_t next = std::min(current.n_prune + schedule.increment, schedule.target_prune);
  const GroupDirectory dir = enumerate_groups(layer, schedule.axis, schedule.n_group);
  const auto values = layer.values();
  const detail::PruneOrder order{values};
  Mask mask = current;
  mask.n_prune = static_cast<std::uint32_t>(next);
  std::vector<std::size_t> kept;
  dir.for_each([&](std::size_t, const GroupView& v) {
    kept.clear();
    for (std::size_t t = 0; t < v.real; ++t)
      if (mask.kept(v[t]))
        kept.push_back(v[t]);
    const std::size_t target = detail::kept_target(v, schedule.n_group, next);
    if (kept.size() <= target)
      return;
    const std::size_t extra = kept.size() - target;
    std::partial_sort(kept.begin(), kept.begin() + static_cast<std::ptrdiff_t>(extra), kept.end(), order);
    for (std::size_t t = 0; t < extra; ++t)
      mask.keep[kept[t]] = 0;
  });
  schedule.history.push_back(mask);
  return mask;
}

/// Retraining hook: receives the layer (mutable) and the mask just applied.
using RetrainFn = std::function<void(Layer&, const Mask&)>;

/// Runs a schedule to its target, calling `retrain` after every step.
inline Mask run_schedule(Layer& layer, IncrementalSchedule& schedule, const RetrainFn& retrain = {}) {
  if (schedule.increment == 0 && schedule.initial_prune < schedule.target_prune)
    throw ArgumentError("zero increment never reaches the target");
  Mask mask = begin_schedule(layer, schedule);
  if (retrain)
    retrain(layer, mask);
  while (mask.n_prune < schedule.target_prune) {
    mask = advance_schedule(layer, schedule, mask);
    if (retrain)
      retrain(layer, mask);
  }
  return mask;
}

} // namespace aap

#endif
