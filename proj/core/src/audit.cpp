#include "svtr/audit.hpp"

#include "svtr/model.hpp"

namespace svtr {

ParamBreakdown param_breakdown(const SvtrConfig& config) {
  ParamBreakdown out;
  for (const auto& spec : parameter_specs(config)) {
    const std::size_t n = numel(spec.shape);
    if (spec.module == "classifier") {
      out.classifier += n;
      continue;
    }
    if (out.modules.empty() || out.modules.back().first != spec.module)
      out.modules.emplace_back(spec.module, 0);
    out.modules.back().second += n;
    out.total += n;
  }
  return out;
}

std::size_t count_params(const SvtrConfig& config) { return param_breakdown(config).total; }

std::string_view to_string(FlopKind kind) {
  switch (kind) {
    case FlopKind::kConv: return "conv";
    case FlopKind::kLinear: return "linear";
    case FlopKind::kAttention: return "attention";
  }
  return "?";
}

FlopReport count_flops(const SvtrConfig& config) {
  FlopReport report;
  auto add = [&report](std::string module, std::string layer, FlopKind kind, std::uint64_t macs) {
    report.entries.push_back({std::move(module), std::move(layer), kind, macs});
  };
  auto conv_macs = [](std::size_t oh, std::size_t ow, std::size_t cin, std::size_t cout) {
    return static_cast<std::uint64_t>(oh) * ow * cin * cout * 9;
  };

  const auto& dims = config.embed_dims;
  const std::size_t half = dims[0] / 2;
  const std::size_t h1 = config.input_h / 2, w1 = config.input_w / 2;
  add("patch_embed", "conv1", FlopKind::kConv, conv_macs(h1, w1, 3, half));
  const auto geo = stage_geometry(config);
  add("patch_embed", "conv2", FlopKind::kConv,
      conv_macs(geo[0].height, geo[0].width, half, dims[0]));

  for (std::size_t s = 0; s < 3; ++s) {
    const std::string module = "stage" + std::to_string(s + 1);
    const std::uint64_t n = geo[s].tokens();
    const std::uint64_t d = dims[s];
    const std::uint64_t hidden = config.mlp_hidden(s);
    for (std::size_t j = 0; j < config.depths[s]; ++j) {
      const std::string block = "blocks." + std::to_string(config.first_block(s) + j);
      add(module, block + ".qkv", FlopKind::kLinear, n * d * 3 * d);
      add(module, block + ".scores", FlopKind::kAttention, n * n * d);
      add(module, block + ".context", FlopKind::kAttention, n * n * d);
      add(module, block + ".proj", FlopKind::kLinear, n * d * d);
      add(module, block + ".fc1", FlopKind::kLinear, n * d * hidden);
      add(module, block + ".fc2", FlopKind::kLinear, n * hidden * d);
    }
    if (s < 2)
      add("merge" + std::to_string(s + 1), "conv", FlopKind::kConv,
          conv_macs(geo[s + 1].height, geo[s + 1].width, dims[s], dims[s + 1]));
  }
  const std::uint64_t width = geo[2].width;
  add("combine", "fc", FlopKind::kLinear, width * dims[2] * config.combined_dim);

  for (const auto& e : report.entries) {
    report.total_macs += e.macs;
    if (e.kind == FlopKind::kAttention) report.attention_macs += e.macs;
  }
  report.classifier_macs = width * config.combined_dim * config.charset_size;
  return report;
}

std::uint64_t count_macs(const SvtrConfig& config) { return count_flops(config).total_macs; }

std::optional<ReferenceSize> reference_size(std::string_view preset) {
  if (preset == "svtr-t") return ReferenceSize{4.15, 0.29};
  if (preset == "svtr-s") return ReferenceSize{8.45, 0.63};
  if (preset == "svtr-b") return ReferenceSize{22.66, 3.55};
  if (preset == "svtr-l") return ReferenceSize{38.81, 6.07};
  return std::nullopt;
}

}  // namespace svtr
