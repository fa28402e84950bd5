#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "svtr/tensor.hpp"

namespace svtr {

class AttentionMask;

// Differentiable operations. Each op records a backward rule into the active
// Graph when any input requires a gradient. Reductions accumulate in double.

/// [..., m, k] x [..., k, n]. Batch dims must match, or one side is rank 2
/// and is broadcast over the other's batch.
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// x[..., in] * weight[in, out] + bias[out]. `bias` may be undefined.
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias);

struct Conv2dGeometry {
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
};

/// Cross-correlation of x[b, c_in, h, w] with weight[c_out, c_in, kh, kw];
/// zero padding. `bias` may be undefined.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, Conv2dGeometry geometry);

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t pad);

template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, T eps = T(1e-5));

/// Running statistics for batch_norm2d; momentum weights the old value.
template <typename T>
struct BatchNormState {
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;
  T momentum = T(0.9);
  T eps = T(1e-5);

  BatchNormState() = default;
  explicit BatchNormState(std::size_t channels)
      : running_mean(Shape{channels}, T(0)), running_var(Shape{channels}, T(1)) {}
};

/// Training mode normalizes with batch statistics (biased variance) and folds
/// them into the running stats (unbiased variance); eval mode uses the
/// running stats and leaves them untouched.
template <typename T>
BasicTensor<T> batch_norm2d(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                            const BasicTensor<T>& beta, BatchNormState<T>& state,
                            bool training);

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x, int axis);

template <typename T>
BasicTensor<T> log_softmax(const BasicTensor<T>& x, int axis);

/// Softmax over the last axis where disallowed (query, key) pairs behave as
/// an additive -inf; `mask` covers the last two dims and may be null.
template <typename T>
BasicTensor<T> masked_softmax(const BasicTensor<T>& x, const AttentionMask* mask);

/// Exact erf form.
template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x);

/// Inverted dropout. The keep decision for element i is a pure function of
/// (seed, stream, i); rate 0 or eval mode returns `x` itself.
template <typename T>
BasicTensor<T> dropout(const BasicTensor<T>& x, double rate, bool training,
                       std::uint64_t seed, std::uint64_t stream);

/// [b, c, h, w] -> [b, c, 1, w]
template <typename T>
BasicTensor<T> mean_pool_height(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);

/// Output axis i is input axis perm[i].
template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& x, const std::vector<std::size_t>& perm);

/// Elementwise; `b` may also match a trailing suffix of a's shape, in which
/// case it is broadcast over the leading dims.
template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor);

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x);

/// Columns [start, start + length) of the last axis.
template <typename T>
BasicTensor<T> slice_last(const BasicTensor<T>& x, std::size_t start, std::size_t length);

}  // namespace svtr
