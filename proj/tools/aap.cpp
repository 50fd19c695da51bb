// aap: generate, prune, pack, simulate and verify accelerator-aware sparse layers.
//
// Exit codes: 0 success, 1 verification failure, 2 usage error, 3 I/O or
// format error.

#include <aap/aap.hpp>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using aap::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerify = 1;
constexpr int kExitUsage = 2;
constexpr int kExitFormat = 3;

std::string sha256_hex(std::span<const std::uint8_t> data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw aap::Error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string sha256_hex(std::string_view s) {
  return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

// Everything needed to reproduce one command's outputs.
struct RunManifest {
  std::string command_line;
  json config;
  std::map<std::string, std::string> inputs; // path -> sha256
  std::vector<std::uint64_t> seeds;

  void add_input(const fs::path& p) { inputs[p.string()] = sha256_hex(aap::read_file(p)); }

  void write(const fs::path& output) const {
    json j{{"tool", "aap"},
           {"version", aap::kVersion},
           {"command", command_line},
           {"config", config},
           {"config_hash", sha256_hex(config.dump())},
           {"inputs", inputs},
           {"seeds", seeds},
           {"output", {{"path", output.string()}, {"sha256", sha256_hex(aap::read_file(output))}}}};
    auto path = output;
    path += ".manifest.json";
    aap::write_file_atomic(path, j.dump(2) + "\n");
  }
};

void emit(const json& j, bool pretty_json = true) { std::cout << (pretty_json ? j.dump(2) : j.dump()) << "\n"; }

json layer_summary(const aap::Layer& l) {
  const auto s = l.shape();
  json j{{"name", l.name}, {"kind", l.is_conv() ? "conv" : "fc"}};
  if (l.is_conv())
    j["dims"] = {{"M", s.m}, {"C", s.c}, {"K", s.k}, {"stride", s.stride}, {"pad", s.pad}};
  else
    j["dims"] = {{"n_out", s.m}, {"n_in", s.c}};
  return j;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string template_name;
  std::string layers;
  std::uint64_t seed = 0;
  std::string output;
};

int cmd_gen(const GenArgs& a, RunManifest& manifest) {
  aap::LayerSet set = a.template_name == "custom" ? aap::synthesize_custom(a.layers, a.seed)
                                                  : aap::synthesize_model(a.template_name, a.seed);
  aap::store_layers(set, a.output);
  manifest.config = {{"command", "gen"}, {"template", a.template_name}, {"layers", a.layers}, {"seed", a.seed}};
  manifest.seeds = {a.seed};
  manifest.write(a.output);
  json layers = json::array();
  for (const auto& l : set.layers)
    layers.push_back(layer_summary(l));
  emit({{"model", set.model},
        {"seed", a.seed},
        {"output", a.output},
        {"sha256", sha256_hex(aap::read_file(a.output))},
        {"layers", layers}});
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct PruneArgs {
  std::string input, output;
  std::string mode = "balanced";
  std::string axis = "channel";
  std::size_t group = 16;
  std::size_t nprune = 0;
  double ratio = 0.0;
  bool first_conv_exempt = false;
  std::size_t initial = 0, increment = 1, target = 0;
  bool pretty = false;
};

json mask_summary(const aap::Layer& layer, const aap::Mask& mask, std::size_t n_group) {
  json j{{"layer", mask.layer},
         {"weights", mask.size()},
         {"kept", mask.kept_count()},
         {"pruned", mask.pruned_count()},
         {"ratio", mask.size() ? static_cast<double>(mask.pruned_count()) / static_cast<double>(mask.size()) : 0.0}};
  if (mask.axis) {
    const auto dir = aap::enumerate_groups(layer, *mask.axis, n_group);
    std::map<std::uint32_t, std::uint64_t> hist;
    for (auto k : aap::kept_per_group(mask, dir))
      ++hist[k];
    json h = json::object();
    for (auto [k, n] : hist)
      h[std::to_string(k)] = n;
    j["kept_per_group_histogram"] = h;
  }
  return j;
}

int cmd_prune(const PruneArgs& a, RunManifest& manifest) {
  const aap::LayerSet set = aap::load_layers(a.input);
  manifest.add_input(a.input);
  const aap::Axis axis = aap::parse_axis(a.axis);
  aap::MaskSet masks;
  json extra = json::object();
  if (a.mode == "balanced") {
    masks = aap::prune_model(set, {axis, a.group, a.nprune, a.first_conv_exempt});
  } else if (a.mode == "unstructured") {
    masks = aap::prune_model_unstructured(set, a.ratio, a.first_conv_exempt);
  } else if (a.mode == "incremental") {
    std::vector<std::uint32_t> steps;
    for (std::size_t l = 0; l < set.layers.size(); ++l) {
      aap::Layer layer = set.layers[l];
      const aap::Axis own = aap::axis_for_layer(axis, layer.kind());
      if (a.first_conv_exempt && aap::detail::is_first_conv(set, l)) {
        aap::enumerate_groups(layer, own, a.group);
        masks.push_back({layer.name, own, static_cast<std::uint32_t>(a.group), 0,
                         std::vector<std::uint8_t>(layer.values().size(), 1)});
        continue;
      }
      aap::IncrementalSchedule schedule{own, a.group, a.initial, a.increment, a.target, {}};
      masks.push_back(aap::run_schedule(layer, schedule));
      if (steps.empty())
        for (const auto& m : schedule.history)
          steps.push_back(m.n_prune);
    }
    extra["schedule"] = steps;
  } else {
    throw aap::ArgumentError("unknown prune mode '" + a.mode + "'");
  }
  aap::store_masks(masks, a.output);
  manifest.config = {{"command", "prune"}, {"mode", a.mode},       {"axis", a.axis},
                     {"group", a.group},   {"nprune", a.nprune},   {"ratio", a.ratio},
                     {"first_conv_exempt", a.first_conv_exempt}, {"initial", a.initial},
                     {"increment", a.increment}, {"target", a.target}};
  manifest.write(a.output);

  json layers = json::array();
  std::uint64_t total = 0, pruned = 0;
  for (std::size_t l = 0; l < masks.size(); ++l) {
    layers.push_back(mask_summary(set.layers[l], masks[l], a.group));
    total += masks[l].size();
    pruned += masks[l].pruned_count();
  }
  json out{{"mode", a.mode},
           {"output", a.output},
           {"ratio", total ? static_cast<double>(pruned) / static_cast<double>(total) : 0.0},
           {"layers", layers}};
  if (a.mode == "balanced")
    out["group_ratio"] = static_cast<double>(a.nprune) / static_cast<double>(a.group);
  out.update(extra);
  if (a.pretty) {
    std::printf("%-12s %14s %14s %8s\n", "layer", "weights", "kept", "pruned");
    for (const auto& l : layers)
      std::printf("%-12s %14llu %14llu %7.2f%%\n", l["layer"].get<std::string>().c_str(),
                  l["weights"].get<unsigned long long>(), l["kept"].get<unsigned long long>(),
                  l["ratio"].get<double>() * 100.0);
    std::printf("overall pruned ratio %.4f\n", out["ratio"].get<double>());
  } else {
    emit(out);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EncodeArgs {
  std::string input, masks, output;
  std::string format = "direct";
  std::string axis;
  std::size_t group = 16;
  std::size_t par = 64;
  std::size_t align = 0;
  bool pretty = false;
};

int cmd_encode(const EncodeArgs& a, RunManifest& manifest) {
  const aap::LayerSet set = aap::load_layers(a.input);
  const aap::MaskSet masks = aap::load_masks(a.masks);
  manifest.add_input(a.input);
  manifest.add_input(a.masks);
  const aap::SparseFormat format = aap::parse_format(a.format);
  if (a.align && format != aap::SparseFormat::Direct)
    throw aap::ArgumentError("--align needs the direct format");
  std::vector<aap::SparseLayer> packed(set.layers.size());
  std::vector<aap::PaddingReport> padding(set.layers.size());
  aap::parallel_for(set.layers.size(), [&](std::size_t l) {
    const aap::Layer& layer = set.layers[l];
    const aap::Mask& mask = aap::find_mask(masks, layer.name);
    if (format == aap::SparseFormat::Relative) {
      packed[l] = aap::encode_relative(layer, mask);
      padding[l].n_filler = packed[l].filler_count();
      return;
    }
    std::optional<aap::Axis> axis = a.axis.empty() ? mask.axis : std::optional(aap::axis_for_layer(aap::parse_axis(a.axis), layer.kind()));
    if (!axis)
      throw aap::ArgumentError("mask for '" + layer.name + "' has no axis; pass --axis");
    packed[l] = aap::encode_direct(layer, mask, *axis, a.group, a.par);
    if (a.align)
      std::tie(packed[l], padding[l]) = aap::align_to_mul(std::move(packed[l]), a.align);
  });
  aap::store_sparse(packed, a.output);
  manifest.config = {{"command", "encode"}, {"format", a.format}, {"axis", a.axis},
                     {"group", a.group},    {"par", a.par},       {"align", a.align}};
  manifest.write(a.output);

  json layers = json::array();
  std::uint64_t n_padding = 0, n_filler = 0, entries = 0, real = 0;
  for (std::size_t l = 0; l < packed.size(); ++l) {
    const auto& s = packed[l];
    std::uint64_t nz = 0;
    for (const auto& fg : s.fetch_groups)
      nz += fg.real_count();
    json j{{"layer", s.name},
           {"format", aap::to_string(s.format)},
           {"index_bits", s.index_bits},
           {"bits_per_entry", s.bits_per_entry()},
           {"fetch_groups", s.fetch_groups.size()},
           {"entries", s.entry_count()},
           {"n_nonzero", nz},
           {"n_filler", s.filler_count()},
           {"n_padding", s.padding_count()}};
    layers.push_back(j);
    n_padding += s.padding_count();
    n_filler += s.filler_count();
    entries += s.entry_count();
    real += nz;
  }
  json out{{"format", a.format},
           {"output", a.output},
           {"layers", layers},
           {"padding_report",
            {{"n_padding", n_padding},
             {"n_filler", n_filler},
             {"n_nonzero", real},
             {"entries", entries},
             {"padding_ratio", real ? static_cast<double>(n_padding) / static_cast<double>(real) : 0.0}}}};
  if (a.pretty) {
    std::printf("%-12s %6s %10s %12s %10s %10s\n", "layer", "ibits", "groups", "entries", "filler", "padding");
    for (const auto& l : layers)
      std::printf("%-12s %6u %10llu %12llu %10llu %10llu\n", l["layer"].get<std::string>().c_str(),
                  l["index_bits"].get<unsigned>(), l["fetch_groups"].get<unsigned long long>(),
                  l["entries"].get<unsigned long long>(), l["n_filler"].get<unsigned long long>(),
                  l["n_padding"].get<unsigned long long>());
  } else {
    emit(out);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SimArgs {
  std::string input, masks, output;
  std::string arch = "mwma";
  std::optional<std::size_t> npe, nmul, npar, ngroup;
  std::string sync = "perfetch";
  std::string assign = "interleaved";
  std::vector<std::size_t> in_hw;
  std::string geometry;
  bool csv = false;
  bool pretty = false;
};

int cmd_sim(const SimArgs& a, RunManifest& manifest) {
  const aap::LayerSet set = aap::load_layers(a.input);
  const aap::MaskSet all_masks = aap::load_masks(a.masks);
  manifest.add_input(a.input);
  manifest.add_input(a.masks);

  aap::AccelConfig config;
  config.arch = aap::parse_arch(a.arch);
  if (config.arch == aap::Arch::SWSA)
    config = aap::AccelConfig::eie();
  else
    config = aap::AccelConfig::cambricon_x_reduced(), config.arch = aap::parse_arch(a.arch);
  if (a.npe)
    config.n_pe = *a.npe;
  if (a.nmul)
    config.n_mul = *a.nmul;
  if (a.npar)
    config.n_par = *a.npar;
  if (a.ngroup)
    config.n_group = *a.ngroup;
  config.sync = aap::parse_sync(a.sync);
  config.assignment = aap::parse_assignment(a.assign);
  config.validate();

  aap::MaskSet masks;
  for (const auto& l : set.layers)
    masks.push_back(aap::find_mask(all_masks, l.name));

  std::vector<aap::SpatialSize> inputs(set.layers.size());
  if (!a.geometry.empty()) {
    const auto shapes = aap::template_shapes(a.geometry);
    for (std::size_t l = 0; l < set.layers.size(); ++l) {
      auto it = std::find_if(shapes.begin(), shapes.end(), [&](const auto& s) { return s.name == set.layers[l].name; });
      if (it == shapes.end())
        throw aap::ArgumentError("template '" + a.geometry + "' has no layer '" + set.layers[l].name + "'");
      inputs[l] = it->input;
    }
  } else if (!a.in_hw.empty()) {
    if (a.in_hw.size() != 1 && a.in_hw.size() != set.layers.size())
      throw aap::ArgumentError("--in-hw takes one value or one per layer");
    for (std::size_t l = 0; l < set.layers.size(); ++l) {
      const std::size_t hw = a.in_hw.size() == 1 ? a.in_hw[0] : a.in_hw[l];
      inputs[l] = {hw, hw};
    }
  } else {
    // One output position per layer.
    for (std::size_t l = 0; l < set.layers.size(); ++l) {
      const auto s = set.layers[l].shape();
      inputs[l] = {s.k > 2 * s.pad ? s.k - 2 * s.pad : 1, s.k > 2 * s.pad ? s.k - 2 * s.pad : 1};
    }
  }
  const auto positions = aap::output_positions(set, inputs);
  const aap::SimReport report = aap::simulate(set, masks, config, positions);
  const json j = aap::to_json(report);
  if (!a.output.empty()) {
    aap::write_file_atomic(a.output, j.dump(2) + "\n");
    json hw = json::array();
    for (const auto& s : inputs)
      hw.push_back(s.height);
    manifest.config = {{"command", "sim"}, {"accel", aap::to_json(config)}, {"in_hw", hw}};
    manifest.write(a.output);
  }
  if (a.csv)
    std::cout << aap::csv_header() << aap::to_csv_rows(report);
  else if (a.pretty)
    std::cout << aap::to_text(report);
  else
    emit(j);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct CompareArgs {
  std::vector<std::string> reports;
  std::vector<std::string> labels;
  bool pretty = false;
};

int cmd_compare(const CompareArgs& a) {
  std::vector<aap::SimReport> reports;
  for (const auto& path : a.reports) {
    const auto bytes = aap::read_file(path);
    json j;
    try {
      j = json::parse(bytes.begin(), bytes.end());
      reports.push_back(aap::report_from_json(j));
    } catch (const json::exception& e) {
      throw aap::FormatError("bad report '" + path + "': " + e.what());
    }
  }
  std::vector<std::string> labels = a.labels;
  if (labels.empty())
    for (const auto& p : a.reports)
      labels.push_back(fs::path(p).stem().string());
  const auto cmp = aap::compare(reports, labels);
  if (a.pretty)
    std::cout << aap::to_text(cmp);
  else
    emit(aap::to_json(cmp));
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct VerifyArgs {
  std::string input, masks, sparse, fm;
  std::size_t random = 0;
  std::uint64_t seed = 0;
};

int cmd_verify(const VerifyArgs& a) {
  std::size_t failures = 0, cases = 0;
  auto report = [&](const std::string& what, const aap::VerifyResult& r) {
    ++cases;
    if (r.ok) {
      std::cout << "PASS " << what << " (" << r.products << " products)\n";
    } else {
      ++failures;
      std::cout << "FAIL " << what << ": " << r.message << "\n";
    }
  };
  if (a.random > 0) {
    for (std::size_t i = 0; i < a.random; ++i) {
      const auto rc = aap::make_random_case(a.seed, i);
      report(rc.description, aap::verify_sparse_layer(rc.layer, rc.mask, rc.sparse, std::nullopt, a.seed + i));
    }
  }
  if (!a.input.empty()) {
    if (a.masks.empty() || a.sparse.empty())
      throw aap::ArgumentError("verify needs --input, --masks and --sparse together");
    const auto set = aap::load_layers(a.input);
    const auto masks = aap::load_masks(a.masks);
    const auto packed = aap::load_sparse(a.sparse);
    std::vector<aap::FeatureMap> fms;
    if (!a.fm.empty())
      fms = aap::load_feature_maps(a.fm);
    std::size_t conv_index = 0;
    for (const auto& s : packed) {
      const aap::Layer* layer = set.find(s.name);
      if (!layer)
        throw aap::ArgumentError("sparse layer '" + s.name + "' not in the layer file");
      std::optional<aap::FeatureMap> input;
      if (layer->is_conv() && conv_index < fms.size())
        input = fms[conv_index];
      conv_index += layer->is_conv();
      report(s.name, aap::verify_sparse_layer(*layer, aap::find_mask(masks, s.name), s, input, a.seed));
    }
  }
  if (cases == 0)
    throw aap::ArgumentError("nothing to verify");
  std::cout << (failures ? "FAIL" : "PASS") << " " << cases - failures << "/" << cases << "\n";
  return failures ? kExitVerify : kExitOk;
}

std::string join_args(int argc, char** argv) {
  std::string s = "aap";
  for (int i = 1; i < argc; ++i) {
    s += ' ';
    s += argv[i];
  }
  return s;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Accelerator-aware pruning toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", aap::kVersion);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Synthesize a model's weights");
  gen_cmd->add_option("--template", gen.template_name, "alexnet-conv | alexnet-fc | vgg16-conv | custom")->required();
  gen_cmd->add_option("--layers", gen.layers, "custom stack, e.g. conv:256x64x5:p2:i27,fc:10x256");
  gen_cmd->add_option("--seed", gen.seed, "RNG seed");
  gen_cmd->add_option("-o,--output", gen.output, "layer file (AAPW)")->required();

  PruneArgs prune;
  auto* prune_cmd = app.add_subcommand("prune", "Build keep-masks");
  prune_cmd->add_option("-i,--input", prune.input, "layer file")->required();
  prune_cmd->add_option("-o,--output", prune.output, "mask file (AAPM)")->required();
  prune_cmd->add_option("--mode", prune.mode, "balanced | unstructured | incremental");
  prune_cmd->add_option("--axis", prune.axis, "channel | filter | spatial | row | column");
  prune_cmd->add_option("--group", prune.group, "pruning group size");
  prune_cmd->add_option("--nprune", prune.nprune, "weights pruned per group");
  prune_cmd->add_option("--ratio", prune.ratio, "unstructured pruning ratio");
  prune_cmd->add_flag("--first-conv-exempt", prune.first_conv_exempt, "leave the first conv layer dense");
  prune_cmd->add_option("--initial", prune.initial, "incremental: initial prune count");
  prune_cmd->add_option("--increment", prune.increment, "incremental: prune count step");
  prune_cmd->add_option("--target", prune.target, "incremental: final prune count");
  prune_cmd->add_flag("--pretty", prune.pretty, "human-readable table");

  EncodeArgs enc;
  auto* enc_cmd = app.add_subcommand("encode", "Pack masked layers");
  enc_cmd->add_option("-i,--input", enc.input, "layer file")->required();
  enc_cmd->add_option("-m,--masks", enc.masks, "mask file")->required();
  enc_cmd->add_option("-o,--output", enc.output, "sparse file (AAPS)")->required();
  enc_cmd->add_option("--format", enc.format, "direct | relative");
  enc_cmd->add_option("--axis", enc.axis, "override the mask's axis");
  enc_cmd->add_option("--group", enc.group, "pruning group size");
  enc_cmd->add_option("--par", enc.par, "fetch group size");
  enc_cmd->add_option("--align", enc.align, "pad fetch groups to a multiple of this many multipliers");
  enc_cmd->add_flag("--pretty", enc.pretty, "human-readable table");

  SimArgs sim;
  auto* sim_cmd = app.add_subcommand("sim", "Estimate accelerator cycles and utilization");
  sim_cmd->add_option("-i,--input", sim.input, "layer file")->required();
  sim_cmd->add_option("-m,--masks", sim.masks, "mask file")->required();
  sim_cmd->add_option("-o,--output", sim.output, "write the JSON report here");
  sim_cmd->add_option("--arch", sim.arch, "mwma | mwsa | eie (swsa)");
  sim_cmd->add_option("--npe", sim.npe, "PE count");
  sim_cmd->add_option("--nmul", sim.nmul, "multipliers per PE");
  sim_cmd->add_option("--npar", sim.npar, "activations per fetch");
  sim_cmd->add_option("--ngroup", sim.ngroup, "pruning group size");
  sim_cmd->add_option("--sync", sim.sync, "perfetch | queued");
  sim_cmd->add_option("--assign", sim.assign, "interleaved | blocked");
  sim_cmd->add_option("--in-hw", sim.in_hw, "input height/width, one value or one per layer")->delimiter(',');
  sim_cmd->add_option("--template", sim.geometry, "take input sizes from a model template");
  sim_cmd->add_flag("--csv", sim.csv, "CSV rows instead of JSON");
  sim_cmd->add_flag("--pretty", sim.pretty, "human-readable table");

  CompareArgs cmp;
  auto* cmp_cmd = app.add_subcommand("compare", "Compare reports against the first one");
  cmp_cmd->add_option("reports", cmp.reports, "report JSON files")->required();
  cmp_cmd->add_option("--label", cmp.labels, "row labels, one per report");
  cmp_cmd->add_flag("--pretty", cmp.pretty, "human-readable table");

  VerifyArgs ver;
  auto* ver_cmd = app.add_subcommand("verify", "Check sparse execution against the dense reference");
  ver_cmd->add_option("-i,--input", ver.input, "layer file");
  ver_cmd->add_option("-m,--masks", ver.masks, "mask file");
  ver_cmd->add_option("-s,--sparse", ver.sparse, "sparse file");
  ver_cmd->add_option("--fm", ver.fm, "feature maps (AAPW kind 2), one per conv layer");
  ver_cmd->add_option("--random", ver.random, "also run this many random cases");
  ver_cmd->add_option("--seed", ver.seed, "RNG seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  RunManifest manifest;
  manifest.command_line = join_args(argc, argv);
  try {
    if (*gen_cmd)
      return cmd_gen(gen, manifest);
    if (*prune_cmd)
      return cmd_prune(prune, manifest);
    if (*enc_cmd)
      return cmd_encode(enc, manifest);
    if (*sim_cmd)
      return cmd_sim(sim, manifest);
    if (*cmp_cmd)
      return cmd_compare(cmp);
    if (*ver_cmd)
      return cmd_verify(ver);
  } catch (const aap::ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const aap::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFormat;
  }
  return kExitUsage;
}
