#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "svtr/config.hpp"

namespace svtr {

/// Parameter totals grouped by module, in network order. The classifier is
/// reported separately and excluded from `total`.
struct ParamBreakdown {
  std::vector<std::pair<std::string, std::size_t>> modules;
  std::size_t total = 0;
  std::size_t classifier = 0;
  std::size_t total_with_classifier() const { return total + classifier; }
};

ParamBreakdown param_breakdown(const SvtrConfig& config);

/// Learnable scalars excluding the linear classifier.
std::size_t count_params(const SvtrConfig& config);

enum class FlopKind { kConv, kLinear, kAttention };

std::string_view to_string(FlopKind kind);

struct FlopEntry {
  std::string module;
  std::string layer;
  FlopKind kind;
  std::uint64_t macs;
};

/// Multiply-accumulates per layer for one image at the config's input size.
/// Masked attention scores are still counted. Normalization, activations and
/// softmax are not.
struct FlopReport {
  std::vector<FlopEntry> entries;
  std::uint64_t total_macs = 0;       // excluding the classifier
  std::uint64_t classifier_macs = 0;
  std::uint64_t attention_macs = 0;   // the part quadratic in sequence length
  std::uint64_t total_flops() const { return 2 * total_macs; }
};

FlopReport count_flops(const SvtrConfig& config);

/// MAC total (1 MAC = 1 FLOP convention), classifier excluded.
std::uint64_t count_macs(const SvtrConfig& config);

/// Published variant sizes for comparison in the audit output.
struct ReferenceSize {
  double params_m;
  double flops_g;
};

std::optional<ReferenceSize> reference_size(std::string_view preset);

}  // namespace svtr
