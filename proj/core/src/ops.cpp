#include "svtr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "svtr/attention_mask.hpp"
#include "svtr/graph.hpp"
#include "svtr/random.hpp"

namespace svtr {
namespace {

template <typename T>
using ImplPtr = std::shared_ptr<detail::TensorImpl<T>>;

template <typename T>
bool tracking(std::initializer_list<const BasicTensor<T>*> inputs) {
  if (Graph::active() == nullptr) return false;
  for (const auto* t : inputs)
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  return false;
}

/// Gradient buffer of `in`, or null when it does not take part in backward.
template <typename T>
T* grad_of(const ImplPtr<T>& in) {
  if (!in || !in->requires_grad) return nullptr;
  in->ensure_grad();
  return in->grad.data();
}

template <typename T, typename Rule>
void record(const char* op, BasicTensor<T>& out, std::vector<ImplPtr<T>> inputs, Rule rule) {
  out.set_requires_grad(true);
  Graph::Node node;
  node.op = op;
  for (const auto& in : inputs)
    if (in) node.inputs.push_back(in->id);
  node.output = out.id();
  node.backward = [o = out.impl(), inputs = std::move(inputs), rule = std::move(rule)]() {
    if (!o->grad.empty()) rule(o->grad);
    for (const auto& in : inputs)
      if (in && in->requires_grad) in->ensure_grad();
  };
  Graph::active()->record(std::move(node));
}

std::size_t normalize_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  SVTR_REQUIRE(a >= 0 && a < r, ErrorKind::kShape,
          "axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  return static_cast<std::size_t>(a);
}

// C[m,n] (+)= A[m,k] * B[k,n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  std::vector<double> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] += av * static_cast<double>(brow[j]);
    }
    T* crow = c + i * n;
    if (accumulate) {
      for (std::size_t j = 0; j < n; ++j) crow[j] += static_cast<T>(acc[j]);
    } else {
      for (std::size_t j = 0; j < n; ++j) crow[j] = static_cast<T>(acc[j]);
    }
  }
}

// C[m,k] += A[m,n] * B[k,n]^T
template <typename T>
void gemm_nt_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        acc += static_cast<double>(arow[j]) * static_cast<double>(brow[j]);
      c[i * k + p] += static_cast<T>(acc);
    }
  }
}

// C[k,n] += A[m,k]^T * B[m,n]
template <typename T>
void gemm_tn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> acc(n);
  for (std::size_t p = 0; p < k; ++p) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const T* brow = b + i * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] += av * static_cast<double>(brow[j]);
    }
    T* crow = c + p * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += static_cast<T>(acc[j]);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// matmul

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  SVTR_REQUIRE(a.rank() >= 2 && b.rank() >= 2, ErrorKind::kShape,
          "matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()));
  const std::size_t m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
  const bool batch_equal =
      a.rank() == b.rank() &&
      std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin());
  SVTR_REQUIRE(b.dim(-2) == k && (batch_equal || a.rank() == 2 || b.rank() == 2), ErrorKind::kShape,
          "matmul dimension mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));

  const std::size_t batch_a = a.numel() / (m * k);
  const std::size_t batch_b = b.numel() / (k * n);
  const std::size_t batch = std::max(batch_a, batch_b);
  const BasicTensor<T>& batched = (a.rank() == 2 && b.rank() > 2) ? b : a;
  Shape out_shape(batched.shape().begin(), batched.shape().end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  BasicTensor<T> out(out_shape);

  const T* ad = a.data().data();
  const T* bd = b.data().data();
  T* od = out.mutable_data().data();
  if (batch_b == 1) {
    // Shared right operand: fold the batch into the row dimension.
    gemm_nn(ad, bd, od, batch_a * m, k, n, false);
  } else {
    for (std::size_t i = 0; i < batch; ++i) {
      const T* ai = ad + (batch_a == 1 ? 0 : i * m * k);
      gemm_nn(ai, bd + i * k * n, od + i * m * n, m, k, n, false);
    }
  }

  if (tracking({&a, &b})) {
    record("matmul", out, {a.impl(), b.impl()},
           [ai = a.impl(), bi = b.impl(), m, k, n, batch_a, batch_b,
            batch](const std::vector<T>& g) {
             T* ga = grad_of(ai);
             T* gb = grad_of(bi);
             const T* ad = ai->data.data();
             const T* bd = bi->data.data();
             if (batch_b == 1) {
               if (ga) gemm_nt_acc(g.data(), bd, ga, batch_a * m, n, k);
               if (gb) gemm_tn_acc(ad, g.data(), gb, batch_a * m, k, n);
               return;
             }
             for (std::size_t i = 0; i < batch; ++i) {
               const std::size_t aoff = batch_a == 1 ? 0 : i * m * k;
               const T* gi = g.data() + i * m * n;
               if (ga) gemm_nt_acc(gi, bd + i * k * n, ga + aoff, m, n, k);
               if (gb) gemm_tn_acc(ad + aoff, gi, gb + i * k * n, m, k, n);
             }
           });
  }
  return out;
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias) {
  SVTR_REQUIRE(weight.rank() == 2 && x.dim(-1) == weight.dim(0), ErrorKind::kShape,
          "linear: input " + shape_str(x.shape()) + " does not match weight " +
              shape_str(weight.shape()));
  BasicTensor<T> y = matmul(x, weight);
  if (bias.defined()) {
    SVTR_REQUIRE(bias.rank() == 1 && bias.dim(0) == weight.dim(1), ErrorKind::kShape,
            "linear: bias " + shape_str(bias.shape()) + " does not match weight " +
                shape_str(weight.shape()));
    y = add(y, bias);
  }
  return y;
}

// ---------------------------------------------------------------------------
// conv2d via im2col

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t pad) {
  const std::ptrdiff_t span = static_cast<std::ptrdiff_t>(in + 2 * pad) -
                              static_cast<std::ptrdiff_t>(kernel);
  if (span < 0 || stride == 0) return 0;
  return static_cast<std::size_t>(span) / stride + 1;
}

namespace {

struct ConvDims {
  std::size_t batch, cin, h, w, cout, kh, kw, oh, ow;
  Conv2dGeometry g;
  std::size_t patch() const { return cin * kh * kw; }
  std::size_t positions() const { return oh * ow; }
};

// cols[patch, positions] for one image
template <typename T>
void im2col(const T* x, const ConvDims& d, T* cols) {
  const std::size_t p = d.positions();
  for (std::size_t c = 0; c < d.cin; ++c)
    for (std::size_t ky = 0; ky < d.kh; ++ky)
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        T* row = cols + ((c * d.kh + ky) * d.kw + kx) * p;
        for (std::size_t oy = 0; oy < d.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * d.g.stride_h + ky) -
                                    static_cast<std::ptrdiff_t>(d.g.pad_h);
          for (std::size_t ox = 0; ox < d.ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * d.g.stride_w + kx) -
                                      static_cast<std::ptrdiff_t>(d.g.pad_w);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(d.h) &&
                                ix < static_cast<std::ptrdiff_t>(d.w);
            row[oy * d.ow + ox] =
                inside ? x[(c * d.h + static_cast<std::size_t>(iy)) * d.w +
                           static_cast<std::size_t>(ix)]
                       : T(0);
          }
        }
      }
}

template <typename T>
void col2im_acc(const T* cols, const ConvDims& d, T* gx) {
  const std::size_t p = d.positions();
  for (std::size_t c = 0; c < d.cin; ++c)
    for (std::size_t ky = 0; ky < d.kh; ++ky)
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        const T* row = cols + ((c * d.kh + ky) * d.kw + kx) * p;
        for (std::size_t oy = 0; oy < d.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * d.g.stride_h + ky) -
                                    static_cast<std::ptrdiff_t>(d.g.pad_h);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
          for (std::size_t ox = 0; ox < d.ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * d.g.stride_w + kx) -
                                      static_cast<std::ptrdiff_t>(d.g.pad_w);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w)) continue;
            gx[(c * d.h + static_cast<std::size_t>(iy)) * d.w + static_cast<std::size_t>(ix)] +=
                row[oy * d.ow + ox];
          }
        }
      }
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, Conv2dGeometry geometry) {
  SVTR_REQUIRE(x.rank() == 4 && weight.rank() == 4 && x.dim(1) == weight.dim(1), ErrorKind::kShape,
          "conv2d: input " + shape_str(x.shape()) + " incompatible with weight " +
              shape_str(weight.shape()));
  ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), weight.dim(0), weight.dim(2),
             weight.dim(3), 0, 0, geometry};
  d.oh = conv_output_size(d.h, d.kh, geometry.stride_h, geometry.pad_h);
  d.ow = conv_output_size(d.w, d.kw, geometry.stride_w, geometry.pad_w);
  SVTR_REQUIRE(d.oh >= 1 && d.ow >= 1, ErrorKind::kGeometry,
          "conv2d: non-positive output size for input " + shape_str(x.shape()) + " and kernel " +
              shape_str(weight.shape()));
  if (bias.defined())
    SVTR_REQUIRE(bias.rank() == 1 && bias.dim(0) == d.cout, ErrorKind::kShape,
            "conv2d: bias " + shape_str(bias.shape()) + " does not match " +
                std::to_string(d.cout) + " output channels");

  BasicTensor<T> out(Shape{d.batch, d.cout, d.oh, d.ow});
  const std::size_t in_stride = d.cin * d.h * d.w;
  const std::size_t out_stride = d.cout * d.positions();
  std::vector<T> cols(d.patch() * d.positions());
  T* od = out.mutable_data().data();
  for (std::size_t b = 0; b < d.batch; ++b) {
    im2col(x.data().data() + b * in_stride, d, cols.data());
    T* ob = od + b * out_stride;
    gemm_nn(weight.data().data(), cols.data(), ob, d.cout, d.patch(), d.positions(), false);
    if (bias.defined()) {
      for (std::size_t co = 0; co < d.cout; ++co) {
        const T bv = bias.data()[co];
        T* row = ob + co * d.positions();
        for (std::size_t p = 0; p < d.positions(); ++p) row[p] += bv;
      }
    }
  }

  if (tracking({&x, &weight, &bias})) {
    record("conv2d", out, {x.impl(), weight.impl(), bias.defined() ? bias.impl() : nullptr},
           [xi = x.impl(), wi = weight.impl(), bi = bias.defined() ? bias.impl() : nullptr, d,
            in_stride, out_stride](const std::vector<T>& g) {
             T* gx = grad_of(xi);
             T* gw = grad_of(wi);
             T* gb = grad_of(bi);
             std::vector<T> cols(d.patch() * d.positions());
             std::vector<T> gcols;
             if (gx) gcols.resize(cols.size());
             for (std::size_t b = 0; b < d.batch; ++b) {
               const T* gb_out = g.data() + b * out_stride;
               if (gw) {
                 im2col(xi->data.data() + b * in_stride, d, cols.data());
                 gemm_nt_acc(gb_out, cols.data(), gw, d.cout, d.positions(), d.patch());
               }
               if (gx) {
                 std::fill(gcols.begin(), gcols.end(), T(0));
                 gemm_tn_acc(wi->data.data(), gb_out, gcols.data(), d.cout, d.patch(),
                             d.positions());
                 col2im_acc(gcols.data(), d, gx + b * in_stride);
               }
               if (gb) {
                 for (std::size_t co = 0; co < d.cout; ++co) {
                   double acc = 0.0;
                   const T* row = gb_out + co * d.positions();
                   for (std::size_t p = 0; p < d.positions(); ++p) acc += row[p];
                   gb[co] += static_cast<T>(acc);
                 }
               }
             }
           });
  }
  return out;
}

// ---------------------------------------------------------------------------
// normalization

template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, T eps) {
  const std::size_t d = x.dim(-1);
  SVTR_REQUIRE(gamma.numel() == d && beta.numel() == d, ErrorKind::kShape,
          "layer_norm: last dim of " + shape_str(x.shape()) + " does not match gamma " +
              shape_str(gamma.shape()) + " / beta " + shape_str(beta.shape()));
  const std::size_t rows = x.numel() / d;
  BasicTensor<T> out(x.shape());
  std::vector<double> mean(rows), rstd(rows);
  const T* xd = x.data().data();
  const T* gd = gamma.data().data();
  const T* bd = beta.data().data();
  T* od = out.mutable_data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xd + r * d;
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += row[j];
    const double mu = s / static_cast<double>(d);
    double v = 0.0;
    for (std::size_t j = 0; j < d; ++j) v += (row[j] - mu) * (row[j] - mu);
    v /= static_cast<double>(d);
    mean[r] = mu;
    rstd[r] = 1.0 / std::sqrt(v + static_cast<double>(eps));
    for (std::size_t j = 0; j < d; ++j)
      od[r * d + j] = static_cast<T>((row[j] - mu) * rstd[r] * gd[j] + bd[j]);
  }

  if (tracking({&x, &gamma, &beta})) {
    record("layer_norm", out, {x.impl(), gamma.impl(), beta.impl()},
           [xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), mean = std::move(mean),
            rstd = std::move(rstd), d, rows](const std::vector<T>& g) {
             T* gx = grad_of(xi);
             T* gg = grad_of(gi);
             T* gb = grad_of(bi);
             std::vector<double> ggamma(d, 0.0), gbeta(d, 0.0);
             std::vector<double> xhat(d), dxhat(d);
             for (std::size_t r = 0; r < rows; ++r) {
               const T* row = xi->data.data() + r * d;
               const T* grow = g.data() + r * d;
               double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
               for (std::size_t j = 0; j < d; ++j) {
                 xhat[j] = (row[j] - mean[r]) * rstd[r];
                 dxhat[j] = static_cast<double>(grow[j]) * gi->data[j];
                 sum_dxhat += dxhat[j];
                 sum_dxhat_xhat += dxhat[j] * xhat[j];
                 ggamma[j] += grow[j] * xhat[j];
                 gbeta[j] += grow[j];
               }
               if (gx) {
                 const double inv_d = 1.0 / static_cast<double>(d);
                 for (std::size_t j = 0; j < d; ++j)
                   gx[r * d + j] += static_cast<T>(
                       rstd[r] * (dxhat[j] - sum_dxhat * inv_d - xhat[j] * sum_dxhat_xhat * inv_d));
               }
             }
             for (std::size_t j = 0; j < d; ++j) {
               if (gg) gg[j] += static_cast<T>(ggamma[j]);
               if (gb) gb[j] += static_cast<T>(gbeta[j]);
             }
           });
  }
  return out;
}

template <typename T>
BasicTensor<T> batch_norm2d(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                            const BasicTensor<T>& beta, BatchNormState<T>& state,
                            bool training) {
  SVTR_REQUIRE(x.rank() == 4, ErrorKind::kShape,
          "batch_norm2d expects [b,c,h,w], got " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0), channels = x.dim(1), hw = x.dim(2) * x.dim(3);
  SVTR_REQUIRE(gamma.numel() == channels && beta.numel() == channels &&
              state.running_mean.numel() == channels && state.running_var.numel() == channels,
          ErrorKind::kShape,
          "batch_norm2d: affine/state size does not match channels of " + shape_str(x.shape()));
  const std::size_t count = batch * hw;
  std::vector<double> mean(channels), rstd(channels);
  const T* xd = x.data().data();
  for (std::size_t c = 0; c < channels; ++c) {
    if (training) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t p = 0; p < hw; ++p) s += xd[(b * channels + c) * hw + p];
      const double mu = s / static_cast<double>(count);
      double v = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t p = 0; p < hw; ++p) {
          const double diff = xd[(b * channels + c) * hw + p] - mu;
          v += diff * diff;
        }
      const double biased = v / static_cast<double>(count);
      const double unbiased = count > 1 ? v / static_cast<double>(count - 1) : biased;
      mean[c] = mu;
      rstd[c] = 1.0 / std::sqrt(biased + static_cast<double>(state.eps));
      auto rm = state.running_mean.mutable_data();
      auto rv = state.running_var.mutable_data();
      const double m = state.momentum;
      rm[c] = static_cast<T>(m * rm[c] + (1.0 - m) * mu);
      rv[c] = static_cast<T>(m * rv[c] + (1.0 - m) * unbiased);
    } else {
      mean[c] = state.running_mean.data()[c];
      rstd[c] = 1.0 / std::sqrt(static_cast<double>(state.running_var.data()[c]) +
                                static_cast<double>(state.eps));
    }
  }
  BasicTensor<T> out(x.shape());
  T* od = out.mutable_data().data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c) {
      const double gc = gamma.data()[c], bc = beta.data()[c];
      for (std::size_t p = 0; p < hw; ++p) {
        const std::size_t i = (b * channels + c) * hw + p;
        od[i] = static_cast<T>((xd[i] - mean[c]) * rstd[c] * gc + bc);
      }
    }

  if (tracking({&x, &gamma, &beta})) {
    record("batch_norm2d", out, {x.impl(), gamma.impl(), beta.impl()},
           [xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), mean = std::move(mean),
            rstd = std::move(rstd), batch, channels, hw, count,
            training](const std::vector<T>& g) {
             T* gx = grad_of(xi);
             T* gg = grad_of(gi);
             T* gb = grad_of(bi);
             const T* xd = xi->data.data();
             for (std::size_t c = 0; c < channels; ++c) {
               double sum_g = 0.0, sum_g_xhat = 0.0;
               for (std::size_t b = 0; b < batch; ++b)
                 for (std::size_t p = 0; p < hw; ++p) {
                   const std::size_t i = (b * channels + c) * hw + p;
                   sum_g += g[i];
                   sum_g_xhat += g[i] * (xd[i] - mean[c]) * rstd[c];
                 }
               if (gg) gg[c] += static_cast<T>(sum_g_xhat);
               if (gb) gb[c] += static_cast<T>(sum_g);
               if (!gx) continue;
               const double gc = gi->data[c];
               const double inv_n = 1.0 / static_cast<double>(count);
               for (std::size_t b = 0; b < batch; ++b)
                 for (std::size_t p = 0; p < hw; ++p) {
                   const std::size_t i = (b * channels + c) * hw + p;
                   double dx;
                   if (training) {
                     const double xhat = (xd[i] - mean[c]) * rstd[c];
                     dx = gc * rstd[c] * (g[i] - sum_g * inv_n - xhat * sum_g_xhat * inv_n);
                   } else {
                     dx = gc * rstd[c] * g[i];
                   }
                   gx[i] += static_cast<T>(dx);
                 }
             }
           });
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax family

namespace {

struct AxisSplit {
  std::size_t outer, len, inner;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisSplit s = split_axis(x.shape(), ax);
  BasicTensor<T> out(x.shape());
  const T* xd = x.data().data();
  T* od = out.mutable_data().data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < s.len; ++j) mx = std::max(mx, xd[base + j * s.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < s.len; ++j) total += std::exp(double(xd[base + j * s.inner]) - mx);
      for (std::size_t j = 0; j < s.len; ++j)
        od[base + j * s.inner] = static_cast<T>(std::exp(double(xd[base + j * s.inner]) - mx) / total);
    }
  if (tracking({&x})) {
    record("softmax", out, {x.impl()},
           [xi = x.impl(), oi = out.impl().get(), s](const std::vector<T>& g) {
             T* gx = grad_of(xi);
             if (!gx) return;
             const T* y = oi->data.data();
             for (std::size_t o = 0; o < s.outer; ++o)
               for (std::size_t in = 0; in < s.inner; ++in) {
                 const std::size_t base = o * s.len * s.inner + in;
                 double dot = 0.0;
                 for (std::size_t j = 0; j < s.len; ++j)
                   dot += double(g[base + j * s.inner]) * y[base + j * s.inner];
                 for (std::size_t j = 0; j < s.len; ++j) {
                   const std::size_t i = base + j * s.inner;
                   gx[i] += static_cast<T>(y[i] * (g[i] - dot));
                 }
               }
           });
  }
  return out;
}

template <typename T>
BasicTensor<T> log_softmax(const BasicTensor<T>& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisSplit s = split_axis(x.shape(), ax);
  BasicTensor<T> out(x.shape());
  const T* xd = x.data().data();
  T* od = out.mutable_data().data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < s.len; ++j) mx = std::max(mx, xd[base + j * s.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < s.len; ++j) total += std::exp(double(xd[base + j * s.inner]) - mx);
      const double lse = double(mx) + std::log(total);
      for (std::size_t j = 0; j < s.len; ++j)
        od[base + j * s.inner] = static_cast<T>(double(xd[base + j * s.inner]) - lse);
    }
  if (tracking({&x})) {
    record("log_softmax", out, {x.impl()},
           [xi = x.impl(), oi = out.impl().get(), s](const std::vector<T>& g) {
             T* gx = grad_of(xi);
             if (!gx) return;
             const T* y = oi->data.data();
             for (std::size_t o = 0; o < s.outer; ++o)
               for (std::size_t in = 0; in < s.inner; ++in) {
                 const std::size_t base = o * s.len * s.inner + in;
                 double gsum = 0.0;
                 for (std::size_t j = 0; j < s.len; ++j) gsum += g[base + j * s.inner];
                 for (std::size_t j = 0; j < s.len; ++j) {
                   const std::size_t i = base + j * s.inner;
                   gx[i] += static_cast<T>(g[i] - std::exp(double(y[i])) * gsum);
                 }
               }
           });
  }
  return out;
}

template <typename T>
BasicTensor<T> masked_softmax(const BasicTensor<T>& x, const AttentionMask* mask) {
  SVTR_REQUIRE(x.rank() >= 2, ErrorKind::kShape,
          "masked_softmax needs rank >= 2, got " + shape_str(x.shape()));
  const std::size_t rows = x.dim(-2), cols = x.dim(-1);
  if (mask != nullptr)
    SVTR_REQUIRE(mask->rows() == rows && mask->cols() == cols, ErrorKind::kShape,
            "attention mask [" + std::to_string(mask->rows()) + "," +
                std::to_string(mask->cols()) + "] does not match scores " +
                shape_str(x.shape()));
  const std::size_t total_rows = x.numel() / cols;
  BasicTensor<T> out(x.shape());
  const T* xd = x.data().data();
  T* od = out.mutable_data().data();
  constexpr T kNegInf = -std::numeric_limits<T>::infinity();
  for (std::size_t r = 0; r < total_rows; ++r) {
    const T* xr = xd + r * cols;
    T* yr = od + r * cols;
    const std::uint8_t* allowed = mask ? mask->row(r % rows) : nullptr;
    T mx = kNegInf;
    for (std::size_t j = 0; j < cols; ++j) {
      const T v = (allowed && !allowed[j]) ? kNegInf : xr[j];
      mx = std::max(mx, v);
    }
    SVTR_REQUIRE(mx != kNegInf, ErrorKind::kContract, "attention row with no allowed key");
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      if (allowed && !allowed[j]) continue;
      sum += std::exp(double(xr[j]) - mx);
    }
    for (std::size_t j = 0; j < cols; ++j) {
      yr[j] = (allowed && !allowed[j]) ? T(0)
                                       : static_cast<T>(std::exp(double(xr[j]) - mx) / sum);
    }
  }
  if (tracking({&x})) {
    record("masked_softmax", out, {x.impl()},
           [xi = x.impl(), oi = out.impl().get(), cols, total_rows](const std::vector<T>& g) {
             T* gx = grad_of(xi);
             if (!gx) return;
             const T* y = oi->data.data();
             for (std::size_t r = 0; r < total_rows; ++r) {
               const std::size_t base = r * cols;
               double dot = 0.0;
               for (std::size_t j = 0; j < cols; ++j) dot += double(g[base + j]) * y[base + j];
               // masked entries have y == 0 and receive no gradient
               for (std::size_t j = 0; j < cols; ++j)
                 gx[base + j] += static_cast<T>(y[base + j] * (g[base + j] - dot));
             }
           });
  }
  return out;
}

// ---------------------------------------------------------------------------
// elementwise

template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
  BasicTensor<T> out(x.shape());
  const T* xd = x.data().data();
  T* od = out.mutable_data().data();
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double v = xd[i];
    od[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)));
  }
  if (tracking({&x})) {
    record("gelu", out, {x.impl()}, [xi = x.impl()](const std::vector<T>& g) {
      T* gx = grad_of(xi);
      if (!gx) return;
      const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = xi->data[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        gx[i] += static_cast<T>(g[i] * (cdf + v * pdf));
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> dropout(const BasicTensor<T>& x, double rate, bool training, std::uint64_t seed,
                       std::uint64_t stream) {
  SVTR_REQUIRE(rate >= 0.0 && rate < 1.0, ErrorKind::kContract,
          "dropout rate must be in [0,1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> factor(x.numel());
  for (std::size_t i = 0; i < factor.size(); ++i)
    factor[i] = counter_uniform(seed, stream, i) >= rate ? keep_scale : T(0);
  BasicTensor<T> out(x.shape());
  T* od = out.mutable_data().data();
  for (std::size_t i = 0; i < factor.size(); ++i) od[i] = x.data()[i] * factor[i];
  if (tracking({&x})) {
    record("dropout", out, {x.impl()},
           [xi = x.impl(), factor = std::move(factor)](const std::vector<T>& g) {
             T* gx = grad_of(xi);
             if (!gx) return;
             for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor[i];
           });
  }
  return out;
}

template <typename T>
BasicTensor<T> mean_pool_height(const BasicTensor<T>& x) {
  SVTR_REQUIRE(x.rank() == 4, ErrorKind::kShape,
          "mean_pool_height expects [b,c,h,w], got " + shape_str(x.shape()));
  const std::size_t bc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  BasicTensor<T> out(Shape{x.dim(0), x.dim(1), 1, w});
  T* od = out.mutable_data().data();
  const T* xd = x.data().data();
  for (std::size_t i = 0; i < bc; ++i)
    for (std::size_t col = 0; col < w; ++col) {
      double s = 0.0;
      for (std::size_t r = 0; r < h; ++r) s += xd[(i * h + r) * w + col];
      od[i * w + col] = static_cast<T>(s / static_cast<double>(h));
    }
  if (tracking({&x})) {
    record("mean_pool_height", out, {x.impl()},
           [xi = x.impl(), bc, h, w](const std::vector<T>& g) {
             T* gx = grad_of(xi);
             if (!gx) return;
             const T inv_h = static_cast<T>(1.0 / static_cast<double>(h));
             for (std::size_t i = 0; i < bc; ++i)
               for (std::size_t r = 0; r < h; ++r)
                 for (std::size_t col = 0; col < w; ++col)
                   gx[(i * h + r) * w + col] += g[i * w + col] * inv_h;
           });
  }
  return out;
}

// ---------------------------------------------------------------------------
// layout

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  validate_shape(shape);
  SVTR_REQUIRE(svtr::numel(shape) == x.numel(), ErrorKind::kShape,
          "cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  BasicTensor<T> out(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
  if (tracking({&x})) {
    record("reshape", out, {x.impl()}, [xi = x.impl()](const std::vector<T>& g) {
      T* gx = grad_of(xi);
      if (!gx) return;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

namespace {

// For each output flat index, the matching input flat index.
std::vector<std::size_t> permutation_map(const Shape& in, const std::vector<std::size_t>& perm) {
  const std::size_t r = in.size();
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * in[i];
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) out[i] = in[perm[i]];
  std::vector<std::size_t> map(svtr::numel(in));
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t flat = 0; flat < map.size(); ++flat) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < r; ++i) src += idx[i] * in_stride[perm[i]];
    map[flat] = src;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out[i]) break;
      idx[i] = 0;
    }
  }
  return map;
}

}  // namespace

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& x, const std::vector<std::size_t>& perm) {
  const std::size_t r = x.rank();
  std::vector<std::size_t> sorted(perm);
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> iota(r);
  std::iota(iota.begin(), iota.end(), 0);
  SVTR_REQUIRE(sorted == iota, ErrorKind::kShape,
          "transpose permutation does not match rank of " + shape_str(x.shape()));
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = x.shape()[perm[i]];
  auto map = permutation_map(x.shape(), perm);
  BasicTensor<T> out(out_shape);
  T* od = out.mutable_data().data();
  const T* xd = x.data().data();
  for (std::size_t i = 0; i < map.size(); ++i) od[i] = xd[map[i]];
  if (tracking({&x})) {
    record("transpose", out, {x.impl()},
           [xi = x.impl(), map = std::move(map)](const std::vector<T>& g) {
             T* gx = grad_of(xi);
             if (!gx) return;
             for (std::size_t i = 0; i < map.size(); ++i) gx[map[i]] += g[i];
           });
  }
  return out;
}

template <typename T>
BasicTensor<T> slice_last(const BasicTensor<T>& x, std::size_t start, std::size_t length) {
  const std::size_t cols = x.dim(-1);
  SVTR_REQUIRE(length > 0 && start + length <= cols, ErrorKind::kIndex,
          "slice [" + std::to_string(start) + "," + std::to_string(start + length) +
              ") out of range for " + shape_str(x.shape()));
  Shape shape = x.shape();
  shape.back() = length;
  const std::size_t rows = x.numel() / cols;
  BasicTensor<T> out(shape);
  T* od = out.mutable_data().data();
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(x.data().data() + r * cols + start, length, od + r * length);
  if (tracking({&x})) {
    record("slice_last", out, {x.impl()},
           [xi = x.impl(), rows, cols, start, length](const std::vector<T>& g) {
             T* gx = grad_of(xi);
             if (!gx) return;
             for (std::size_t r = 0; r < rows; ++r)
               for (std::size_t j = 0; j < length; ++j) gx[r * cols + start + j] += g[r * length + j];
           });
  }
  return out;
}

// ---------------------------------------------------------------------------
// arithmetic

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const bool same = a.shape() == b.shape();
  const bool suffix = b.rank() < a.rank() &&
                      std::equal(b.shape().begin(), b.shape().end(),
                                 a.shape().end() - static_cast<std::ptrdiff_t>(b.rank()));
  SVTR_REQUIRE(same || suffix, ErrorKind::kShape,
          "add: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
              " are not broadcast-compatible");
  const std::size_t inner = b.numel();
  BasicTensor<T> out(a.shape());
  T* od = out.mutable_data().data();
  const T* ad = a.data().data();
  const T* bd = b.data().data();
  for (std::size_t i = 0; i < a.numel(); ++i) od[i] = ad[i] + bd[i % inner];
  if (tracking({&a, &b})) {
    record("add", out, {a.impl(), b.impl()},
           [ai = a.impl(), bi = b.impl(), inner](const std::vector<T>& g) {
             if (T* ga = grad_of(ai))
               for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
             if (T* gb = grad_of(bi)) {
               if (inner == g.size()) {
                 for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
               } else {
                 std::vector<double> acc(inner, 0.0);
                 for (std::size_t i = 0; i < g.size(); ++i) acc[i % inner] += g[i];
                 for (std::size_t j = 0; j < inner; ++j) gb[j] += static_cast<T>(acc[j]);
               }
             }
           });
  }
  return out;
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  SVTR_REQUIRE(a.shape() == b.shape(), ErrorKind::kShape,
          "mul: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
  BasicTensor<T> out(a.shape());
  T* od = out.mutable_data().data();
  for (std::size_t i = 0; i < a.numel(); ++i) od[i] = a.data()[i] * b.data()[i];
  if (tracking({&a, &b})) {
    record("mul", out, {a.impl(), b.impl()},
           [ai = a.impl(), bi = b.impl()](const std::vector<T>& g) {
             T* ga = grad_of(ai);
             T* gb = grad_of(bi);
             for (std::size_t i = 0; i < g.size(); ++i) {
               if (ga) ga[i] += g[i] * bi->data[i];
               if (gb) gb[i] += g[i] * ai->data[i];
             }
           });
  }
  return out;
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
  BasicTensor<T> out(x.shape());
  T* od = out.mutable_data().data();
  for (std::size_t i = 0; i < x.numel(); ++i) od[i] = x.data()[i] * factor;
  if (tracking({&x})) {
    record("scale", out, {x.impl()}, [xi = x.impl(), factor](const std::vector<T>& g) {
      T* gx = grad_of(xi);
      if (!gx) return;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  double s = 0.0;
  for (T v : x.data()) s += v;
  BasicTensor<T> out = BasicTensor<T>::scalar(static_cast<T>(s));
  if (tracking({&x})) {
    record("sum", out, {x.impl()}, [xi = x.impl()](const std::vector<T>& g) {
      T* gx = grad_of(xi);
      if (!gx) return;
      for (std::size_t i = 0; i < xi->data.size(); ++i) gx[i] += g[0];
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  return scale(sum(x), static_cast<T>(1.0 / static_cast<double>(x.numel())));
}

#define SVTR_INSTANTIATE_OPS(T)                                                              \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);              \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&,               \
                                 const BasicTensor<T>&);                                     \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,               \
                                 const BasicTensor<T>&, Conv2dGeometry);                     \
  template BasicTensor<T> layer_norm(const BasicTensor<T>&, const BasicTensor<T>&,           \
                                     const BasicTensor<T>&, T);                              \
  template BasicTensor<T> batch_norm2d(const BasicTensor<T>&, const BasicTensor<T>&,         \
                                       const BasicTensor<T>&, BatchNormState<T>&, bool);     \
  template BasicTensor<T> softmax(const BasicTensor<T>&, int);                               \
  template BasicTensor<T> log_softmax(const BasicTensor<T>&, int);                           \
  template BasicTensor<T> masked_softmax(const BasicTensor<T>&, const AttentionMask*);       \
  template BasicTensor<T> gelu(const BasicTensor<T>&);                                       \
  template BasicTensor<T> dropout(const BasicTensor<T>&, double, bool, std::uint64_t,        \
                                  std::uint64_t);                                            \
  template BasicTensor<T> mean_pool_height(const BasicTensor<T>&);                           \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                             \
  template BasicTensor<T> transpose(const BasicTensor<T>&, const std::vector<std::size_t>&); \
  template BasicTensor<T> slice_last(const BasicTensor<T>&, std::size_t, std::size_t);       \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                 \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                 \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                   \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                        \
  template BasicTensor<T> mean(const BasicTensor<T>&);

SVTR_INSTANTIATE_OPS(float)
SVTR_INSTANTIATE_OPS(double)

#undef SVTR_INSTANTIATE_OPS

}  // namespace svtr
