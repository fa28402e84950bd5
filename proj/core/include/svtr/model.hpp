#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "svtr/attention_mask.hpp"
#include "svtr/config.hpp"
#include "svtr/ops.hpp"
#include "svtr/tensor.hpp"

namespace svtr {

enum class Mode { kTraining, kEval };

enum class ParamInit { kTruncatedNormal, kZeros, kOnes };

/// Static description of one learnable tensor; the model is built from this
/// list, so the parameter set is a pure function of the config.
struct ParamSpec {
  std::string name;
  Shape shape;
  ParamInit init;
  bool weight_decay;
  std::string module;  // audit group: patch_embed, stage1, merge1, ..., classifier
};

std::vector<ParamSpec> parameter_specs(const SvtrConfig& config);

/// Tensors of one mixing block. Projection weights are [in, out].
template <typename T>
struct MixingBlockParams {
  BasicTensor<T> norm1_weight, norm1_bias;
  BasicTensor<T> qkv_weight, qkv_bias;
  BasicTensor<T> proj_weight, proj_bias;
  BasicTensor<T> norm2_weight, norm2_bias;
  BasicTensor<T> fc1_weight, fc1_bias;
  BasicTensor<T> fc2_weight, fc2_bias;
};

template <typename T>
struct MergingParams {
  BasicTensor<T> conv_weight, conv_bias;
  BasicTensor<T> norm_weight, norm_bias;
};

template <typename T>
struct CombiningParams {
  BasicTensor<T> fc_weight, fc_bias;
};

/// Dropout placement for one call; rates of 0 or training == false disable it.
struct DropoutContext {
  bool training = false;
  double rate = 0.0;
  double attn_rate = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;  // advanced by every dropout site
};

/// Post-softmax attention of one block for batch item 0, [heads, n, n].
struct AttentionCapture {
  std::size_t heads = 0;
  std::size_t tokens = 0;
  std::vector<double> weights;
};

/// Pre-norm residual block: x + MHSA(LN(x)), then + MLP(LN(.)). A Local
/// block requires `mask`; a Global block ignores it.
template <typename T>
BasicTensor<T> mixing_block(const BasicTensor<T>& x, BlockKind kind, std::size_t heads,
                            const AttentionMask* mask, const MixingBlockParams<T>& params,
                            DropoutContext& dropout, AttentionCapture* capture = nullptr);

/// [b, h*w, d_in] -> [b, (h/2)*w, d_out] via a 3x3 conv with stride (2,1)
/// and a channel-wise layer norm.
template <typename T>
BasicTensor<T> merging(const BasicTensor<T>& x, std::size_t h, std::size_t w,
                       const MergingParams<T>& params);

/// [b, h*w, d] -> [b, w, D3]: mean-pool the height, then linear, GELU,
/// dropout.
template <typename T>
BasicTensor<T> combining(const BasicTensor<T>& x, std::size_t h, std::size_t w,
                         const CombiningParams<T>& params, DropoutContext& dropout);

/// Intermediate shapes of a forward pass, plus an optional attention tap.
struct ForwardTrace {
  Shape embedded;
  std::array<Shape, 3> stage_inputs;
  Shape combined;
  Shape logits;
  // tap: stage in 1..3, block index within that stage
  std::optional<std::pair<std::size_t, std::size_t>> capture_block;
  AttentionCapture attention;
};

template <typename T>
struct NamedTensor {
  std::string name;
  BasicTensor<T> tensor;
  bool weight_decay = true;
  std::string module;
};

template <typename T>
class BasicSvtrModel {
 public:
  BasicSvtrModel(SvtrConfig config, std::uint64_t seed);
  // Parameters are shared handles; a copy would alias them.
  BasicSvtrModel(const BasicSvtrModel&) = delete;
  BasicSvtrModel& operator=(const BasicSvtrModel&) = delete;
  BasicSvtrModel(BasicSvtrModel&&) noexcept = default;
  BasicSvtrModel& operator=(BasicSvtrModel&&) noexcept = default;

  const SvtrConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  Mode mode() const { return mode_; }
  void set_mode(Mode mode) { mode_ = mode; }
  bool training() const { return mode_ == Mode::kTraining; }

  std::vector<NamedTensor<T>>& parameters() { return params_; }
  const std::vector<NamedTensor<T>>& parameters() const { return params_; }
  /// BN running statistics, not learnable.
  std::vector<NamedTensor<T>>& buffers() { return buffers_; }
  const std::vector<NamedTensor<T>>& buffers() const { return buffers_; }

  BasicTensor<T>& param(std::string_view name);
  const BasicTensor<T>& param(std::string_view name) const;
  BasicTensor<T>& buffer(std::string_view name);

  void zero_grad();

  /// images [b, 3, H, W] -> logits [b, W/4, N].
  BasicTensor<T> forward(const BasicTensor<T>& images, ForwardTrace* trace = nullptr);

  /// Stage-local mask for local blocks (stage in 0..2).
  const AttentionMask& stage_mask(std::size_t stage) const { return *masks_[stage]; }

  /// Same architecture, parameters and buffers converted to U.
  template <typename U>
  BasicSvtrModel<U> cast() const {
    BasicSvtrModel<U> out(config_, seed_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto src = params_[i].tensor.data();
      auto dst = out.parameters()[i].tensor.mutable_data();
      std::copy(src.begin(), src.end(), dst.begin());
    }
    for (std::size_t i = 0; i < buffers_.size(); ++i) {
      auto src = buffers_[i].tensor.data();
      auto dst = out.buffers()[i].tensor.mutable_data();
      std::copy(src.begin(), src.end(), dst.begin());
    }
    out.set_mode(mode_);
    return out;
  }

 private:
  MixingBlockParams<T> block_params(std::size_t index) const;
  MergingParams<T> merging_params(std::size_t stage) const;

  SvtrConfig config_;
  std::uint64_t seed_;
  Mode mode_ = Mode::kTraining;
  std::uint64_t forward_calls_ = 0;
  std::vector<NamedTensor<T>> params_;
  std::vector<NamedTensor<T>> buffers_;
  std::unordered_map<std::string, std::size_t> param_index_;
  std::unordered_map<std::string, std::size_t> buffer_index_;
  BatchNormState<T> bn1_;
  BatchNormState<T> bn2_;
  std::array<std::shared_ptr<const AttentionMask>, 3> masks_;
};

using SvtrModel = BasicSvtrModel<float>;
using SvtrModelD = BasicSvtrModel<double>;

/// Attention of one query reshaped to its stage grid.
struct AttentionMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;  // row-major, sums to 1
};

/// Requires eval mode. `stage` is 1..3; block, head and query are 0-based
/// within that stage.
AttentionMap export_attention(SvtrModel& model, const Tensor& image, std::size_t stage,
                              std::size_t block, std::size_t head, std::size_t query);

/// Every head of one block for one query.
std::vector<AttentionMap> export_attention_heads(SvtrModel& model, const Tensor& image,
                                                 std::size_t stage, std::size_t block,
                                                 std::size_t query);

}  // namespace svtr
