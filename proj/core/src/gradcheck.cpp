#include "svtr/gradcheck.hpp"

#include <type_traits>

#include "svtr/attention_mask.hpp"
#include "svtr/ctc.hpp"
#include "svtr/model.hpp"

namespace svtr {

namespace {

template <typename V>
using ValueOf = typename std::decay_t<V>::value_type::value_type;

}  // namespace

SvtrConfig gradcheck_micro_config() {
  SvtrConfig c = preset("svtr-micro");
  c.name = "gradcheck-micro";
  c.embed_dims = {8, 16, 24};
  c.heads = {1, 2, 2};
  c.combined_dim = 16;
  c.input_h = 16;
  c.input_w = 32;
  c.max_label_len = 3;
  c.dropout_rate = 0.0;
  c.attn_dropout_rate = 0.0;
  return c;
}

GradCheckResult check_model_gradients(SvtrConfig config, const GradCheckOptions& options) {
  config.dropout_rate = 0.0;
  config.attn_dropout_rate = 0.0;
  config.validate();
  Rng rng(options.seed);
  SvtrModelD model(config, options.seed);
  model.set_mode(Mode::kTraining);
  TensorD images(Shape{2, 3, config.input_h, config.input_w});
  for (auto& v : images.mutable_data()) v = rng.uniform();
  const std::size_t steps = config.sequence_length();
  const std::size_t longest = std::min<std::size_t>(3, (steps - 1) / 2);
  std::vector<LabelSeq> labels(2);
  for (auto& l : labels) {
    const std::size_t len = 1 + rng.index(longest);
    for (std::size_t k = 0; k < len; ++k)
      l.indices.push_back(1 + static_cast<int>(rng.index(config.charset_size - 1)));
  }

  auto loss_of = [&labels](auto& m, const auto& x) {
    return ctc_loss(log_softmax(m.forward(x), 2), labels);
  };
  auto analytic = [&](auto& m, const auto& x) {
    Graph graph;
    {
      GraphScope scope(graph);
      m.zero_grad();
      backward(loss_of(m, x), graph);
    }
    std::vector<std::vector<double>> grads;
    for (const auto& p : m.parameters()) grads.emplace_back(p.tensor.grad().begin(), p.tensor.grad().end());
    return grads;
  };

  SvtrModel model32 = model.cast<float>();
  model32.set_mode(Mode::kTraining);
  const auto grads64 = analytic(model, images);
  const auto grads32 = analytic(model32, images.cast<float>());

  GradCheckResult result;
  result.name = "model:" + config.name;
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    auto data = model.parameters()[i].tensor.mutable_data();
    for (std::size_t j : detail::probe_indices(data.size(), options.max_checks_per_input, rng)) {
      const double numeric = detail::central_difference(
          data[j], options.step, [&] { return loss_of(model, images).item(); });
      result.max_rel_f64 =
          std::max(result.max_rel_f64, detail::rel_error(grads64[i][j], numeric, options.floor_f64));
      result.max_rel_f32 =
          std::max(result.max_rel_f32, detail::rel_error(grads32[i][j], numeric, options.floor_f32));
      ++result.checked;
    }
  }
  return result;
}

std::vector<GradCheckResult> gradcheck_suite(const GradCheckOptions& opt) {
  std::vector<GradCheckResult> out;
  auto run = [&](const std::string& name, const std::vector<Shape>& shapes, auto fn) {
    out.push_back(check_gradients(name, shapes, fn, opt));
  };

  run("matmul", {{3, 4}, {4, 2}}, [](const auto& in) { return matmul(in[0], in[1]); });
  run("matmul_batched", {{2, 2, 3, 4}, {2, 2, 4, 3}}, [](const auto& in) { return matmul(in[0], in[1]); });
  run("matmul_broadcast", {{2, 3, 4}, {4, 5}}, [](const auto& in) { return matmul(in[0], in[1]); });
  run("linear", {{2, 3, 4}, {4, 5}, {5}}, [](const auto& in) { return linear(in[0], in[1], in[2]); });
  run("conv2d", {{2, 2, 5, 7}, {3, 2, 3, 3}, {3}},
      [](const auto& in) { return conv2d(in[0], in[1], in[2], Conv2dGeometry{1, 1, 1, 1}); });
  run("conv2d_stride2", {{2, 2, 5, 7}, {3, 2, 3, 3}, {3}},
      [](const auto& in) { return conv2d(in[0], in[1], in[2], Conv2dGeometry{2, 2, 1, 1}); });
  run("conv2d_stride2x1", {{2, 2, 6, 5}, {3, 2, 3, 3}, {3}},
      [](const auto& in) { return conv2d(in[0], in[1], in[2], Conv2dGeometry{2, 1, 1, 1}); });
  run("layer_norm", {{3, 8}, {8}, {8}}, [](const auto& in) { return layer_norm(in[0], in[1], in[2]); });
  run("batch_norm2d", {{4, 3, 2, 3}, {3}, {3}}, [](const auto& in) {
    using T = ValueOf<decltype(in)>;
    BatchNormState<T> state(3);
    return batch_norm2d(in[0], in[1], in[2], state, true);
  });
  run("softmax", {{3, 5}}, [](const auto& in) { return softmax(in[0], -1); });
  run("softmax_axis0", {{3, 5}}, [](const auto& in) { return softmax(in[0], 0); });
  run("log_softmax", {{2, 3, 5}}, [](const auto& in) { return log_softmax(in[0], 2); });
  run("masked_softmax", {{2, 12, 12}}, [](const auto& in) {
    static const AttentionMask mask = local_attention_mask(3, 4, 3, 3);
    return masked_softmax(in[0], &mask);
  });
  run("gelu", {{4, 6}}, [](const auto& in) { return gelu(in[0]); });
  run("dropout", {{4, 6}}, [](const auto& in) { return dropout(in[0], 0.3, true, 7, 1); });
  run("mean_pool_height", {{2, 3, 4, 5}}, [](const auto& in) { return mean_pool_height(in[0]); });
  run("reshape", {{2, 3, 4}}, [](const auto& in) { return reshape(in[0], Shape{4, 6}); });
  run("transpose", {{2, 3, 4}}, [](const auto& in) { return transpose(in[0], {2, 0, 1}); });
  run("add", {{3, 4}, {3, 4}}, [](const auto& in) { return add(in[0], in[1]); });
  run("add_broadcast", {{2, 3, 4}, {4}}, [](const auto& in) { return add(in[0], in[1]); });
  run("mul", {{3, 4}, {3, 4}}, [](const auto& in) { return mul(in[0], in[1]); });
  run("scale", {{3, 4}}, [](const auto& in) {
    using T = ValueOf<decltype(in)>;
    return scale(in[0], T(0.37));
  });
  run("sum", {{3, 4}}, [](const auto& in) { return sum(in[0]); });
  run("mean", {{3, 4}}, [](const auto& in) { return mean(in[0]); });
  run("slice_last", {{2, 3, 9}}, [](const auto& in) { return slice_last(in[0], 3, 4); });
  run("ctc_loss", {{2, 6, 4}}, [](const auto& in) {
    static const std::vector<LabelSeq> labels{{{1, 2}}, {{3, 3}}};
    return ctc_loss(in[0], labels);
  });

  const std::vector<Shape> block_shapes{{2, 12, 8}, {8},  {8},  {8, 24}, {24}, {8, 8}, {8},
                                        {8},        {8},  {8, 16}, {16}, {16, 8}, {8}};
  auto block = [](BlockKind kind) {
    return [kind](const auto& in) {
      using T = ValueOf<decltype(in)>;
      static const AttentionMask mask = local_attention_mask(3, 4, 3, 3);
      MixingBlockParams<T> p{in[1], in[2], in[3], in[4], in[5], in[6],
                             in[7], in[8], in[9], in[10], in[11], in[12]};
      DropoutContext ctx;
      return mixing_block(in[0], kind, 2, kind == BlockKind::kLocal ? &mask : nullptr, p, ctx);
    };
  };
  run("mixing_block_global", block_shapes, block(BlockKind::kGlobal));
  run("mixing_block_local", block_shapes, block(BlockKind::kLocal));
  run("merging", {{2, 12, 4}, {6, 4, 3, 3}, {6}, {6}, {6}}, [](const auto& in) {
    using T = ValueOf<decltype(in)>;
    return merging(in[0], 4, 3, MergingParams<T>{in[1], in[2], in[3], in[4]});
  });
  run("combining", {{2, 6, 4}, {4, 5}, {5}}, [](const auto& in) {
    using T = ValueOf<decltype(in)>;
    DropoutContext ctx;
    return combining(in[0], 2, 3, CombiningParams<T>{in[1], in[2]}, ctx);
  });

  out.push_back(check_model_gradients(gradcheck_micro_config(), opt));
  return out;
}

}  // namespace svtr
