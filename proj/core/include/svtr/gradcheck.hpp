#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "svtr/config.hpp"
#include "svtr/graph.hpp"
#include "svtr/ops.hpp"
#include "svtr/random.hpp"
#include "svtr/tensor.hpp"

namespace svtr {

struct GradCheckOptions {
  double step = 1e-3;  // h of the five-point central stencil
  std::size_t max_checks_per_input = 48;
  std::uint64_t seed = 42;
  // Denominator floors for the relative error |a - n| / max(|a|, |n|, floor).
  double floor_f64 = 1e-6;
  double floor_f32 = 1e-3;
};

struct GradCheckResult {
  std::string name;
  double max_rel_f64 = 0.0;
  double max_rel_f32 = 0.0;
  std::size_t checked = 0;

  bool passed(double tol_f64 = 1e-4, double tol_f32 = 1e-2) const {
    return max_rel_f64 < tol_f64 && max_rel_f32 < tol_f32;
  }
};

namespace detail {

inline double rel_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline std::vector<std::size_t> probe_indices(std::size_t n, std::size_t limit, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (n <= limit) return idx;
  rng.shuffle(idx.begin(), idx.end());
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

template <typename T, typename Fn>
BasicTensor<T> projected_loss(Fn& fn, const std::vector<BasicTensor<T>>& inputs,
                              const BasicTensor<T>& weights) {
  return sum(mul(fn(inputs), weights));
}

/// (-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h, evaluated by `eval`
/// after writing each abscissa into `slot`.
template <typename Eval>
double central_difference(double& slot, double h, Eval&& eval) {
  const double x = slot;
  double f[4];
  const double offsets[4] = {2 * h, h, -h, -2 * h};
  for (int k = 0; k < 4; ++k) {
    slot = x + offsets[k];
    f[k] = eval();
  }
  slot = x;
  return (-f[0] + 8.0 * f[1] - 8.0 * f[2] + f[3]) / (12.0 * h);
}

template <typename T, typename Fn>
std::vector<std::vector<double>> analytic_grads(Fn& fn, const std::vector<BasicTensor<T>>& inputs,
                                                const BasicTensor<T>& weights) {
  std::vector<BasicTensor<T>> leaves;
  for (const auto& x : inputs) leaves.push_back(x.clone().set_requires_grad(true));
  Graph graph;
  {
    GraphScope scope(graph);
    backward(projected_loss(fn, leaves, weights), graph);
  }
  std::vector<std::vector<double>> out;
  for (const auto& x : leaves) {
    if (x.has_grad())
      out.emplace_back(x.grad().begin(), x.grad().end());
    else
      out.emplace_back(x.numel(), 0.0);
  }
  return out;
}

}  // namespace detail

/// Five-point central differences of sum(fn(inputs) * R) in double precision, with R and
/// the inputs uniform in [-1, 1], against the analytic gradients computed in
/// both double and float. `fn` must accept std::vector<BasicTensor<T>> for
/// T = float and T = double.
template <typename Fn>
GradCheckResult check_gradients(std::string name, const std::vector<Shape>& shapes, Fn fn,
                                const GradCheckOptions& options = {}) {
  Rng rng(options.seed);
  std::vector<TensorD> inputs;
  for (const auto& shape : shapes) {
    TensorD t(shape);
    for (auto& v : t.mutable_data()) v = rng.uniform(-1.0, 1.0);
    inputs.push_back(t);
  }
  const Shape out_shape = fn(inputs).shape();
  TensorD weights(out_shape);
  for (auto& v : weights.mutable_data()) v = rng.uniform(-1.0, 1.0);

  const auto grads64 = detail::analytic_grads(fn, inputs, weights);
  std::vector<Tensor> inputs32;
  for (const auto& x : inputs) inputs32.push_back(x.cast<float>());
  const auto grads32 = detail::analytic_grads(fn, inputs32, weights.cast<float>());

  GradCheckResult result;
  result.name = std::move(name);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto data = inputs[i].mutable_data();
    for (std::size_t j : detail::probe_indices(data.size(), options.max_checks_per_input, rng)) {
      const double numeric = detail::central_difference(
          data[j], options.step, [&] { return detail::projected_loss(fn, inputs, weights).item(); });
      result.max_rel_f64 = std::max(result.max_rel_f64,
                                    detail::rel_error(grads64[i][j], numeric, options.floor_f64));
      result.max_rel_f32 = std::max(result.max_rel_f32,
                                    detail::rel_error(grads32[i][j], numeric, options.floor_f32));
      ++result.checked;
    }
  }
  return result;
}

/// End-to-end check of every parameter of a model built from `config`
/// (dropout forced to 0) under the CTC loss, batch of two in training mode.
GradCheckResult check_model_gradients(SvtrConfig config, const GradCheckOptions& options = {});

/// The micro architecture used for the end-to-end check: dims [8,16,24],
/// depths [1,1,1], heads [1,2,2], D3 = 16, input 16x32.
SvtrConfig gradcheck_micro_config();

/// Every differentiable op plus the end-to-end model.
std::vector<GradCheckResult> gradcheck_suite(const GradCheckOptions& options = {});

}  // namespace svtr
