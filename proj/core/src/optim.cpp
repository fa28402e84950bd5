#include "svtr/optim.hpp"

#include <cmath>
#include <numbers>

#include "svtr/error.hpp"

namespace svtr {

OptimState make_optim_state(const std::vector<NamedTensor<float>>& params, AdamWParams hyper) {
  OptimState state;
  state.hyper = hyper;
  for (const auto& p : params) {
    state.first_moment.emplace_back(p.tensor.shape(), 0.0f);
    state.second_moment.emplace_back(p.tensor.shape(), 0.0f);
  }
  return state;
}

void adamw_step(std::vector<NamedTensor<float>>& params, OptimState& state, double lr) {
  SVTR_REQUIRE(state.first_moment.size() == params.size() &&
                   state.second_moment.size() == params.size(),
               ErrorKind::kContract,
               "optimizer state tracks " + std::to_string(state.first_moment.size()) +
                   " tensors, got " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    SVTR_REQUIRE(params[i].tensor.has_grad(), ErrorKind::kContract,
                 "no gradient for parameter " + params[i].name);
    SVTR_REQUIRE(state.first_moment[i].shape() == params[i].tensor.shape(), ErrorKind::kShape,
                 "moment shape mismatch for " + params[i].name);
  }
  ++state.step;
  const auto& h = state.hyper;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(h.beta1, t);
  const double correct2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].tensor.mutable_data();
    auto g = params[i].tensor.grad();
    auto m = state.first_moment[i].mutable_data();
    auto v = state.second_moment[i].mutable_data();
    const double decay = params[i].weight_decay ? lr * h.weight_decay : 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      double value = static_cast<double>(p[j]);
      value -= decay * value;
      const double gj = static_cast<double>(g[j]);
      const double mj = h.beta1 * m[j] + (1.0 - h.beta1) * gj;
      const double vj = h.beta2 * v[j] + (1.0 - h.beta2) * gj * gj;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      value -= lr * (mj / correct1) / (std::sqrt(vj / correct2) + h.eps);
      p[j] = static_cast<float>(value);
    }
  }
}

double clip_grad_norm(std::vector<NamedTensor<float>>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    if (p.tensor.has_grad())
      for (float g : p.tensor.grad()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (auto& p : params)
      if (p.tensor.has_grad())
        for (float& g : p.tensor.mutable_grad()) g = static_cast<float>(g * factor);
  }
  return norm;
}

double lr_at(const LrSchedule& s, std::uint64_t step) {
  SVTR_REQUIRE(s.warmup_steps <= s.total_steps && s.peak_lr >= 0.0, ErrorKind::kContract,
               "schedule needs warmup_steps <= total_steps and a non-negative peak");
  SVTR_REQUIRE(step <= s.total_steps, ErrorKind::kContract,
               "step " + std::to_string(step) + " outside [0," + std::to_string(s.total_steps) + "]");
  if (step < s.warmup_steps)
    return s.peak_lr * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
  if (s.total_steps == s.warmup_steps) return step == 0 ? s.peak_lr : 0.0;
  const double progress = static_cast<double>(step - s.warmup_steps) /
                          static_cast<double>(s.total_steps - s.warmup_steps);
  return s.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double peak_lr(std::size_t batch_size) { return 5e-4 * static_cast<double>(batch_size) / 2048.0; }

}  // namespace svtr
