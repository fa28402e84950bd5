#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "svtr/model.hpp"
#include "svtr/tensor.hpp"

namespace svtr {

struct AdamWParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

struct OptimState {
  AdamWParams hyper;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;
};

/// Zeroed moments shaped like `params`.
OptimState make_optim_state(const std::vector<NamedTensor<float>>& params, AdamWParams hyper = {});

/// Decoupled decay (p -= lr*wd*p, skipped for entries with weight_decay ==
/// false) followed by the bias-corrected Adam update. Every parameter must
/// carry a gradient.
void adamw_step(std::vector<NamedTensor<float>>& params, OptimState& state, double lr);

/// Rescales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(std::vector<NamedTensor<float>>& params, double max_norm);

struct LrSchedule {
  double peak_lr = 0.0;
  std::uint64_t warmup_steps = 0;
  std::uint64_t total_steps = 0;
};

/// Linear ramp from 0 to peak over warmup_steps, then half-cosine down to 0
/// at total_steps. Valid for 0 <= step <= total_steps.
double lr_at(const LrSchedule& schedule, std::uint64_t step);

/// 5e-4 * batch / 2048.
double peak_lr(std::size_t batch_size);

}  // namespace svtr
