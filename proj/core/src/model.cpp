#include "svtr/model.hpp"

#include <cmath>

#include "svtr/error.hpp"
#include "svtr/random.hpp"

namespace svtr {

std::vector<ParamSpec> parameter_specs(const SvtrConfig& config) {
  std::vector<ParamSpec> specs;
  auto weight = [&specs](std::string name, Shape shape, const std::string& module) {
    specs.push_back({std::move(name), std::move(shape), ParamInit::kTruncatedNormal, true, module});
  };
  auto bias = [&specs](std::string name, std::size_t n, const std::string& module) {
    specs.push_back({std::move(name), Shape{n}, ParamInit::kZeros, false, module});
  };
  auto norm = [&specs](const std::string& prefix, std::size_t n, const std::string& module) {
    specs.push_back({prefix + ".weight", Shape{n}, ParamInit::kOnes, false, module});
    specs.push_back({prefix + ".bias", Shape{n}, ParamInit::kZeros, false, module});
  };

  const auto& dims = config.embed_dims;
  const std::size_t half = dims[0] / 2;
  const auto geo = stage_geometry(config);
  const std::string pe = "patch_embed";
  weight(pe + ".conv1.weight", {half, 3, 3, 3}, pe);
  bias(pe + ".conv1.bias", half, pe);
  norm(pe + ".bn1", half, pe);
  weight(pe + ".conv2.weight", {dims[0], half, 3, 3}, pe);
  bias(pe + ".conv2.bias", dims[0], pe);
  norm(pe + ".bn2", dims[0], pe);
  weight("pos_embed", {geo[0].tokens(), dims[0]}, pe);

  for (std::size_t s = 0; s < 3; ++s) {
    const std::string module = "stage" + std::to_string(s + 1);
    const std::size_t d = dims[s];
    const std::size_t hidden = config.mlp_hidden(s);
    for (std::size_t j = 0; j < config.depths[s]; ++j) {
      const std::string p = "blocks." + std::to_string(config.first_block(s) + j);
      norm(p + ".norm1", d, module);
      weight(p + ".attn.qkv.weight", {d, 3 * d}, module);
      bias(p + ".attn.qkv.bias", 3 * d, module);
      weight(p + ".attn.proj.weight", {d, d}, module);
      bias(p + ".attn.proj.bias", d, module);
      norm(p + ".norm2", d, module);
      weight(p + ".mlp.fc1.weight", {d, hidden}, module);
      bias(p + ".mlp.fc1.bias", hidden, module);
      weight(p + ".mlp.fc2.weight", {hidden, d}, module);
      bias(p + ".mlp.fc2.bias", d, module);
    }
    if (s < 2) {
      const std::string m = "merge" + std::to_string(s + 1);
      weight(m + ".conv.weight", {dims[s + 1], d, 3, 3}, m);
      bias(m + ".conv.bias", dims[s + 1], m);
      norm(m + ".norm", dims[s + 1], m);
    }
  }
  weight("combine.fc.weight", {dims[2], config.combined_dim}, "combine");
  bias("combine.fc.bias", config.combined_dim, "combine");
  weight("classifier.weight", {config.combined_dim, config.charset_size}, "classifier");
  bias("classifier.bias", config.charset_size, "classifier");
  return specs;
}

// ---------------------------------------------------------------------------
// blocks

template <typename T>
BasicTensor<T> mixing_block(const BasicTensor<T>& x, BlockKind kind, std::size_t heads,
                            const AttentionMask* mask, const MixingBlockParams<T>& p,
                            DropoutContext& dropout_ctx, AttentionCapture* capture) {
  SVTR_REQUIRE(x.rank() == 3, ErrorKind::kShape,
               "mixing_block expects [b,n,d], got " + shape_str(x.shape()));
  const std::size_t b = x.dim(0), n = x.dim(1), d = x.dim(2);
  SVTR_REQUIRE(heads > 0 && d % heads == 0, ErrorKind::kContract,
               "dim " + std::to_string(d) + " is not divisible by " + std::to_string(heads) +
                   " heads");
  const AttentionMask* active_mask = nullptr;
  if (kind == BlockKind::kLocal) {
    SVTR_REQUIRE(mask != nullptr, ErrorKind::kContract, "local mixing block needs a mask");
    SVTR_REQUIRE(mask->rows() == n && mask->cols() == n, ErrorKind::kShape,
                 "mask [" + std::to_string(mask->rows()) + "," + std::to_string(mask->cols()) +
                     "] does not match " + std::to_string(n) + " tokens");
    active_mask = mask;
  }
  const std::size_t hd = d / heads;
  auto drop = [&dropout_ctx](const BasicTensor<T>& t, double rate) {
    return dropout(t, rate, dropout_ctx.training, dropout_ctx.seed, dropout_ctx.stream++);
  };

  const auto normed = layer_norm(x, p.norm1_weight, p.norm1_bias);
  const auto qkv = linear(normed, p.qkv_weight, p.qkv_bias);
  auto split_heads = [&](std::size_t which) {
    auto part = reshape(slice_last(qkv, which * d, d), Shape{b, n, heads, hd});
    return transpose(part, {0, 2, 1, 3});  // [b, heads, n, hd]
  };
  const auto q = scale(split_heads(0), static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd))));
  const auto k = split_heads(1);
  const auto v = split_heads(2);
  const auto scores = matmul(q, transpose(k, {0, 1, 3, 2}));  // [b, heads, n, n]
  auto attn = masked_softmax(scores, active_mask);
  if (capture != nullptr) {
    capture->heads = heads;
    capture->tokens = n;
    capture->weights.assign(attn.data().begin(), attn.data().begin() + heads * n * n);
  }
  attn = drop(attn, dropout_ctx.attn_rate);
  auto context = transpose(matmul(attn, v), {0, 2, 1, 3});  // [b, n, heads, hd]
  context = reshape(context, Shape{b, n, d});
  const auto attended = drop(linear(context, p.proj_weight, p.proj_bias), dropout_ctx.rate);
  const auto x1 = add(x, attended);

  const auto normed2 = layer_norm(x1, p.norm2_weight, p.norm2_bias);
  auto hidden = drop(gelu(linear(normed2, p.fc1_weight, p.fc1_bias)), dropout_ctx.rate);
  const auto mlp_out = drop(linear(hidden, p.fc2_weight, p.fc2_bias), dropout_ctx.rate);
  return add(x1, mlp_out);
}

template <typename T>
BasicTensor<T> merging(const BasicTensor<T>& x, std::size_t h, std::size_t w,
                       const MergingParams<T>& p) {
  SVTR_REQUIRE(x.rank() == 3 && x.dim(1) == h * w, ErrorKind::kShape,
               "merging: sequence " + shape_str(x.shape()) + " does not match grid " +
                   std::to_string(h) + "x" + std::to_string(w));
  SVTR_REQUIRE(h % 2 == 0, ErrorKind::kGeometry,
               "merging needs an even height, got " + std::to_string(h));
  const std::size_t b = x.dim(0), d = x.dim(2);
  const std::size_t d_out = p.conv_weight.dim(0);
  auto grid = reshape(transpose(x, {0, 2, 1}), Shape{b, d, h, w});
  auto conv = conv2d(grid, p.conv_weight, p.conv_bias, Conv2dGeometry{2, 1, 1, 1});
  const std::size_t h_out = conv.dim(2);
  auto seq = transpose(reshape(conv, Shape{b, d_out, h_out * w}), {0, 2, 1});
  return layer_norm(seq, p.norm_weight, p.norm_bias);
}

template <typename T>
BasicTensor<T> combining(const BasicTensor<T>& x, std::size_t h, std::size_t w,
                         const CombiningParams<T>& p, DropoutContext& dropout_ctx) {
  SVTR_REQUIRE(x.rank() == 3 && x.dim(1) == h * w, ErrorKind::kShape,
               "combining: sequence " + shape_str(x.shape()) + " does not match grid " +
                   std::to_string(h) + "x" + std::to_string(w));
  const std::size_t b = x.dim(0), d = x.dim(2);
  auto grid = reshape(transpose(x, {0, 2, 1}), Shape{b, d, h, w});
  auto pooled = reshape(mean_pool_height(grid), Shape{b, d, w});
  auto seq = transpose(pooled, {0, 2, 1});  // [b, w, d]
  auto out = gelu(linear(seq, p.fc_weight, p.fc_bias));
  return dropout(out, dropout_ctx.rate, dropout_ctx.training, dropout_ctx.seed,
                 dropout_ctx.stream++);
}

// ---------------------------------------------------------------------------
// model

template <typename T>
BasicSvtrModel<T>::BasicSvtrModel(SvtrConfig config, std::uint64_t seed)
    : config_(std::move(config)), seed_(seed) {
  config_.validate();
  Rng rng(seed);
  for (auto& spec : parameter_specs(config_)) {
    BasicTensor<T> t(spec.shape);
    auto data = t.mutable_data();
    switch (spec.init) {
      case ParamInit::kTruncatedNormal:
        for (auto& v : data) v = static_cast<T>(rng.truncated_normal(0.02));
        break;
      case ParamInit::kOnes:
        std::fill(data.begin(), data.end(), T(1));
        break;
      case ParamInit::kZeros:
        break;
    }
    t.set_requires_grad(true);
    param_index_.emplace(spec.name, params_.size());
    params_.push_back({spec.name, t, spec.weight_decay, spec.module});
  }
  bn1_ = BatchNormState<T>(config_.embed_dims[0] / 2);
  bn2_ = BatchNormState<T>(config_.embed_dims[0]);
  auto add_buffer = [this](std::string name, const BasicTensor<T>& t) {
    buffer_index_.emplace(name, buffers_.size());
    buffers_.push_back({std::move(name), t, false, "patch_embed"});
  };
  add_buffer("patch_embed.bn1.running_mean", bn1_.running_mean);
  add_buffer("patch_embed.bn1.running_var", bn1_.running_var);
  add_buffer("patch_embed.bn2.running_mean", bn2_.running_mean);
  add_buffer("patch_embed.bn2.running_var", bn2_.running_var);

  const auto geo = stage_geometry(config_);
  for (std::size_t s = 0; s < 3; ++s)
    masks_[s] = std::make_shared<const AttentionMask>(
        local_attention_mask(geo[s].height, geo[s].width, config_.window_h, config_.window_w));
}

template <typename T>
BasicTensor<T>& BasicSvtrModel<T>::param(std::string_view name) {
  auto it = param_index_.find(std::string(name));
  SVTR_REQUIRE(it != param_index_.end(), ErrorKind::kIndex,
               "no parameter named '" + std::string(name) + "'");
  return params_[it->second].tensor;
}

template <typename T>
const BasicTensor<T>& BasicSvtrModel<T>::param(std::string_view name) const {
  return const_cast<BasicSvtrModel*>(this)->param(name);
}

template <typename T>
BasicTensor<T>& BasicSvtrModel<T>::buffer(std::string_view name) {
  auto it = buffer_index_.find(std::string(name));
  SVTR_REQUIRE(it != buffer_index_.end(), ErrorKind::kIndex,
               "no buffer named '" + std::string(name) + "'");
  return buffers_[it->second].tensor;
}

template <typename T>
void BasicSvtrModel<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <typename T>
MixingBlockParams<T> BasicSvtrModel<T>::block_params(std::size_t index) const {
  const std::string p = "blocks." + std::to_string(index);
  return {param(p + ".norm1.weight"),    param(p + ".norm1.bias"),
          param(p + ".attn.qkv.weight"), param(p + ".attn.qkv.bias"),
          param(p + ".attn.proj.weight"), param(p + ".attn.proj.bias"),
          param(p + ".norm2.weight"),    param(p + ".norm2.bias"),
          param(p + ".mlp.fc1.weight"),  param(p + ".mlp.fc1.bias"),
          param(p + ".mlp.fc2.weight"),  param(p + ".mlp.fc2.bias")};
}

template <typename T>
MergingParams<T> BasicSvtrModel<T>::merging_params(std::size_t stage) const {
  const std::string m = "merge" + std::to_string(stage + 1);
  return {param(m + ".conv.weight"), param(m + ".conv.bias"), param(m + ".norm.weight"),
          param(m + ".norm.bias")};
}

template <typename T>
BasicTensor<T> BasicSvtrModel<T>::forward(const BasicTensor<T>& images, ForwardTrace* trace) {
  SVTR_REQUIRE(images.rank() == 4 && images.dim(1) == 3 && images.dim(2) == config_.input_h &&
                   images.dim(3) == config_.input_w,
               ErrorKind::kGeometry,
               "expected images [b,3," + std::to_string(config_.input_h) + "," +
                   std::to_string(config_.input_w) + "], got " + shape_str(images.shape()));
  const bool train = training();
  DropoutContext ctx{train, config_.dropout_rate, config_.attn_dropout_rate,
                     splitmix64(seed_ ^ 0xD6E8FEB86659FD93ULL), forward_calls_ << 24};
  if (train) ++forward_calls_;

  const std::size_t b = images.dim(0);
  const auto geo = stage_geometry(config_);
  const Conv2dGeometry stride2{2, 2, 1, 1};

  auto x = conv2d(images, param("patch_embed.conv1.weight"), param("patch_embed.conv1.bias"),
                  stride2);
  x = gelu(batch_norm2d(x, param("patch_embed.bn1.weight"), param("patch_embed.bn1.bias"), bn1_,
                        train));
  x = conv2d(x, param("patch_embed.conv2.weight"), param("patch_embed.conv2.bias"), stride2);
  x = gelu(batch_norm2d(x, param("patch_embed.bn2.weight"), param("patch_embed.bn2.bias"), bn2_,
                        train));
  const std::size_t d0 = config_.embed_dims[0];
  x = transpose(reshape(x, Shape{b, d0, geo[0].tokens()}), {0, 2, 1});
  x = add(x, param("pos_embed"));
  x = dropout(x, ctx.rate, ctx.training, ctx.seed, ctx.stream++);
  if (trace) trace->embedded = x.shape();

  for (std::size_t s = 0; s < 3; ++s) {
    if (trace) trace->stage_inputs[s] = x.shape();
    for (std::size_t j = 0; j < config_.depths[s]; ++j) {
      const std::size_t index = config_.first_block(s) + j;
      const BlockKind kind = config_.permutation[index];
      AttentionCapture* capture = nullptr;
      if (trace && trace->capture_block == std::make_pair(s + 1, j)) capture = &trace->attention;
      x = mixing_block(x, kind, config_.heads[s],
                       kind == BlockKind::kLocal ? masks_[s].get() : nullptr,
                       block_params(index), ctx, capture);
    }
    if (s < 2) x = merging(x, geo[s].height, geo[s].width, merging_params(s));
  }
  x = combining(x, geo[2].height, geo[2].width,
                CombiningParams<T>{param("combine.fc.weight"), param("combine.fc.bias")}, ctx);
  if (trace) trace->combined = x.shape();
  auto logits = linear(x, param("classifier.weight"), param("classifier.bias"));
  if (trace) trace->logits = logits.shape();
  return logits;
}

// ---------------------------------------------------------------------------
// attention export

std::vector<AttentionMap> export_attention_heads(SvtrModel& model, const Tensor& image,
                                                 std::size_t stage, std::size_t block,
                                                 std::size_t query) {
  SVTR_REQUIRE(model.mode() == Mode::kEval, ErrorKind::kContract,
               "attention export needs an eval-mode model");
  const auto& config = model.config();
  SVTR_REQUIRE(stage >= 1 && stage <= 3, ErrorKind::kIndex,
               "stage " + std::to_string(stage) + " out of range 1..3");
  SVTR_REQUIRE(block < config.depths[stage - 1], ErrorKind::kIndex,
               "block " + std::to_string(block) + " out of range for stage " +
                   std::to_string(stage) + " with " + std::to_string(config.depths[stage - 1]) +
                   " blocks");
  const auto geo = stage_geometry(config)[stage - 1];
  SVTR_REQUIRE(query < geo.tokens(), ErrorKind::kIndex,
               "query " + std::to_string(query) + " out of range for " +
                   std::to_string(geo.tokens()) + " tokens");
  Tensor batch = image;
  if (image.rank() == 3) batch = reshape(image, Shape{1, image.dim(0), image.dim(1), image.dim(2)});
  ForwardTrace trace;
  trace.capture_block = std::make_pair(stage, block);
  model.forward(batch, &trace);
  const auto& cap = trace.attention;
  std::vector<AttentionMap> maps;
  for (std::size_t h = 0; h < cap.heads; ++h) {
    AttentionMap map{geo.height, geo.width, {}};
    const auto begin = cap.weights.begin() +
                       static_cast<std::ptrdiff_t>((h * cap.tokens + query) * cap.tokens);
    map.values.assign(begin, begin + static_cast<std::ptrdiff_t>(cap.tokens));
    maps.push_back(std::move(map));
  }
  return maps;
}

AttentionMap export_attention(SvtrModel& model, const Tensor& image, std::size_t stage,
                              std::size_t block, std::size_t head, std::size_t query) {
  SVTR_REQUIRE(stage >= 1 && stage <= 3, ErrorKind::kIndex,
               "stage " + std::to_string(stage) + " out of range 1..3");
  SVTR_REQUIRE(head < model.config().heads[stage - 1], ErrorKind::kIndex,
               "head " + std::to_string(head) + " out of range for stage " +
                   std::to_string(stage) + " with " +
                   std::to_string(model.config().heads[stage - 1]) + " heads");
  auto maps = export_attention_heads(model, image, stage, block, query);
  return std::move(maps[head]);
}

#define SVTR_INSTANTIATE_MODEL(T)                                                             \
  template BasicTensor<T> mixing_block(const BasicTensor<T>&, BlockKind, std::size_t,         \
                                       const AttentionMask*, const MixingBlockParams<T>&,     \
                                       DropoutContext&, AttentionCapture*);                   \
  template BasicTensor<T> merging(const BasicTensor<T>&, std::size_t, std::size_t,            \
                                  const MergingParams<T>&);                                   \
  template BasicTensor<T> combining(const BasicTensor<T>&, std::size_t, std::size_t,          \
                                    const CombiningParams<T>&, DropoutContext&);              \
  template class BasicSvtrModel<T>;

SVTR_INSTANTIATE_MODEL(float)
SVTR_INSTANTIATE_MODEL(double)

#undef SVTR_INSTANTIATE_MODEL

}  // namespace svtr
