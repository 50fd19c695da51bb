#ifndef AAP_VERIFY_HPP
#define AAP_VERIFY_HPP

#include "encoder.hpp"
#include "funcsim.hpp"
#include "pruner.hpp"
#include "synth.hpp"

#include <bit>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace aap {

struct VerifyResult {
  bool ok = true;
  std::string message;
  std::uint64_t products = 0;
};

namespace detail {

inline bool bit_equal(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size())
    return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint32_t>(a[i]) != std::bit_cast<std::uint32_t>(b[i]))
      return false;
  return true;
}

inline std::size_t first_mismatch(std::span<const float> a, std::span<const float> b) {
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i)
    if (std::bit_cast<std::uint32_t>(a[i]) != std::bit_cast<std::uint32_t>(b[i]))
      return i;
  return std::min(a.size(), b.size());
}

// Fetch group holding a weight, for error messages.
inline std::string locate_weight(const SparseLayer& s, std::size_t weight) {
  if (s.format == SparseFormat::Relative)
    return describe_fetch_group(s, 0);
  const GroupDirectory dir = s.fetch_directory();
  for (std::size_t g = 0; g < dir.size(); ++g) {
    const GroupView v = dir.group(g);
    for (std::size_t t = 0; t < v.real; ++t)
      if (v[t] == weight)
        return describe_fetch_group(s, g);
  }
  return "no fetch group";
}

} // namespace detail

/// Default verification input for a conv layer: small-integer activations,
/// large enough for a few output positions.
inline FeatureMap verification_input(const LayerShape& s, NormalSource& rng) {
  const std::size_t hw = s.k + 2 * s.stride;
  FeatureMap fm = FeatureMap::zeros(s.c, hw, hw);
  fill_small_integers(fm.values, rng);
  return fm;
}

/// Checks a packed layer against the original layer and mask: the decoded
/// weights must equal the masked layer, and sparse execution must match the
/// dense reference bit for bit with one product per stored weight and
/// output position.
inline VerifyResult verify_sparse_layer(const Layer& layer, const Mask& mask, const SparseLayer& sparse,
                                        std::optional<FeatureMap> input, std::uint64_t seed) {
  VerifyResult res;
  auto fail = [&](std::string msg) {
    res.ok = false;
    res.message = "layer '" + layer.name + "': " + std::move(msg);
    return res;
  };
  if (sparse.shape != layer.shape())
    return fail("packed shape does not match the layer");
  const Layer reference = apply_mask(layer, mask);
  try {
    const Layer decoded = decode(sparse);
    if (!detail::bit_equal(decoded.values(), reference.values())) {
      const std::size_t w = detail::first_mismatch(decoded.values(), reference.values());
      return fail(detail::locate_weight(sparse, w) + ": decoded weight " + std::to_string(w) +
                  " differs from the masked layer");
    }

    NormalSource rng(seed, 0x5eed);
    const std::size_t kept = mask.kept_count();
    if (layer.is_conv()) {
      FeatureMap fm = input ? *input : verification_input(sparse.shape, rng);
      BiasVector bias(sparse.shape.m);
      fill_small_integers(bias, rng);
      const FeatureMap dense = conv_dense(fm, reference.conv(), bias);
      const ConvRun run = run_conv_sparse(fm, sparse, bias);
      res.products = run.products;
      if (!detail::bit_equal(run.output.values, dense.values))
        return fail("output " + std::to_string(detail::first_mismatch(run.output.values, dense.values)) +
                    " differs from the dense reference");
      if (run.products != kept * dense.height * dense.width)
        return fail("product count does not match kept weights x positions");
    } else {
      std::vector<float> x(sparse.shape.c);
      fill_small_integers(x, rng);
      BiasVector bias(sparse.shape.m);
      fill_small_integers(bias, rng);
      const auto dense = fc_dense(x, reference.fc(), bias);
      const FcRun run = run_fc_sparse(x, sparse, bias);
      res.products = run.products;
      if (!detail::bit_equal(run.output, dense))
        return fail("output " + std::to_string(detail::first_mismatch(run.output, dense)) +
                    " differs from the dense reference");
      if (run.products != kept)
        return fail("product count does not match kept weights");
    }
  } catch (const Error& e) {
    return fail(e.what());
  }
  return res;
}

/// One randomized verification case.
struct RandomCase {
  Layer layer;
  Mask mask;
  SparseLayer sparse;
  std::string description;
};

/// Draws a small random layer (integer-valued weights), a balanced or
/// unstructured mask along a random compatible axis, and packs it in a
/// random format, optionally aligned.
inline RandomCase make_random_case(std::uint64_t seed, std::uint64_t index) {
  NormalSource rng(seed, index);
  const bool conv = rng.below(4) != 0;
  LayerShape shape;
  if (conv) {
    const std::size_t k = 1 + rng.below(3);
    shape = {LayerKind::Conv, 1 + rng.below(24), 1 + rng.below(24), k, 1 + rng.below(2), rng.below(2)};
  } else {
    shape = {LayerKind::Fc, 1 + rng.below(48), 1 + rng.below(48), 1, 1, 0};
  }
  RandomCase rc{make_layer(shape, "rand" + std::to_string(index)), {}, {}, {}};
  fill_small_integers(rc.layer.values(), rng);
  // Integer draws include exact zeros, so some kept weights are 0.0.
  const Axis axis = conv ? kAllAxes[rng.below(3)] : kAllAxes[3 + rng.below(2)];
  std::size_t n_group = 2 + rng.below(15);
  if (axis == Axis::Spatial && shape.k == 3 && rng.below(2) == 0)
    n_group = 9;
  const std::size_t n_par = n_group * (1 + rng.below(4));
  const bool balanced = rng.below(3) != 0;
  if (balanced)
    rc.mask = prune_balanced(rc.layer, {axis, n_group, rng.below(n_group), false});
  else
    rc.mask = prune_unstructured(rc.layer, static_cast<double>(rng.below(20)) / 20.0);
  const bool direct = rng.below(2) == 0;
  if (direct) {
    rc.sparse = encode_direct(rc.layer, rc.mask, axis, n_group, n_par);
    if (rng.below(2) == 0)
      rc.sparse = align_to_mul(std::move(rc.sparse), 1 + rng.below(16)).first;
  } else {
    rc.sparse = encode_relative(rc.layer, rc.mask);
  }
  rc.description = std::string(conv ? "conv " : "fc ") + std::to_string(shape.m) + "x" + std::to_string(shape.c) +
                   "x" + std::to_string(shape.k) + " " + std::string(to_string(axis)) + " g" +
                   std::to_string(n_group) + " p" + std::to_string(n_par) + (balanced ? " balanced " : " unstructured ") +
                   std::string(to_string(rc.sparse.format));
  return rc;
}

} // namespace aap

#endif
