#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace svtr {

enum class BlockKind { kLocal, kGlobal };

/// Full architecture description. Stage i uses embed_dims[i] channels,
/// depths[i] mixing blocks and heads[i] attention heads; `permutation` lists
/// the kind of every block across the whole network, consumed stage by stage.
struct SvtrConfig {
  std::string name = "custom";
  std::array<std::size_t, 3> embed_dims{64, 128, 256};
  std::array<std::size_t, 3> depths{3, 6, 3};
  std::array<std::size_t, 3> heads{2, 4, 8};
  std::size_t combined_dim = 192;
  std::vector<BlockKind> permutation;
  std::size_t window_h = 7;
  std::size_t window_w = 11;
  double mlp_ratio = 4.0;
  std::size_t charset_size = 37;
  std::size_t input_h = 32;
  std::size_t input_w = 128;
  std::size_t max_label_len = 25;
  double dropout_rate = 0.1;
  double attn_dropout_rate = 0.1;

  /// Throws Error(kGeometry) for unusable input sizes and Error(kContract)
  /// for every other broken invariant.
  void validate() const;

  std::size_t total_blocks() const { return depths[0] + depths[1] + depths[2]; }
  std::size_t first_block(std::size_t stage) const;
  std::size_t mlp_hidden(std::size_t stage) const;
  /// Length of the predicted sequence, W/4.
  std::size_t sequence_length() const { return input_w / 4; }

  friend bool operator==(const SvtrConfig&, const SvtrConfig&) = default;
};

struct StageGeometry {
  std::size_t height;
  std::size_t width;
  std::size_t channels;
  std::size_t tokens() const { return height * width; }
};

/// Token grids seen by the mixing blocks of each stage: heights H/4, H/8,
/// H/16 at constant width W/4.
std::array<StageGeometry, 3> stage_geometry(const SvtrConfig& config);

/// Run-length form such as "L6G6"; also accepts spelled-out "LLGG".
std::vector<BlockKind> parse_permutation(std::string_view text);
std::string format_permutation(const std::vector<BlockKind>& permutation);

std::vector<std::string> preset_names();
/// Throws Error(kUsage) for an unknown name.
SvtrConfig preset(std::string_view name);

/// Flat `key = value` text; `#` starts a comment. A `preset` key selects the
/// base the remaining keys override (default svtr-t).
SvtrConfig parse_config(std::string_view text);
std::string format_config(const SvtrConfig& config);

/// A preset name or the path of a config file; the result is validated.
SvtrConfig load_config(const std::string& preset_or_path);

/// Names of the fields in which the two configs differ.
std::vector<std::string> config_differences(const SvtrConfig& a, const SvtrConfig& b);

}  // namespace svtr
