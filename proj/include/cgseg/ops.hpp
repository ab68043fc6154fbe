#pragma once

// Layer operations used by the generator, the discriminator and the losses:
// strided 2-D convolution and its transpose, batch normalization, pointwise
// activations, binary cross-entropy and L1.

#include <cgseg/parallel.hpp>
#include <cgseg/tensor.hpp>

namespace cgseg {

struct ConvGeometry {
  std::size_t batch = 0;
  std::size_t in_channels = 0, in_h = 0, in_w = 0;
  std::size_t out_channels = 0, out_h = 0, out_w = 0;
  std::size_t kernel_h = 0, kernel_w = 0;
  std::size_t stride = 1, padding = 0;
};

namespace detail {

// y[i] += a * x[i]
template <class T>
inline void axpy(std::size_t n, T a, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// Unfolds one sample into cols[p][r], p = output position, r = (ic, kh, kw).
// Taps that fall into the padding are zero.
template <class T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
  const long s = static_cast<long>(g.stride), pad = static_cast<long>(g.padding);
  const long ih_max = static_cast<long>(g.in_h), iw_max = static_cast<long>(g.in_w);
  T* dst = cols;
  for (std::size_t oh = 0; oh < g.out_h; ++oh)
    for (std::size_t ow = 0; ow < g.out_w; ++ow)
      for (std::size_t ic = 0; ic < g.in_channels; ++ic) {
        const T* plane = x + ic * g.in_h * g.in_w;
        for (std::size_t kh = 0; kh < g.kernel_h; ++kh) {
          const long ih = static_cast<long>(oh) * s - pad + static_cast<long>(kh);
          for (std::size_t kw = 0; kw < g.kernel_w; ++kw) {
            const long iw = static_cast<long>(ow) * s - pad + static_cast<long>(kw);
            *dst++ = (ih >= 0 && ih < ih_max && iw >= 0 && iw < iw_max) ? plane[ih * iw_max + iw] : T{0};
          }
        }
      }
}

// Adjoint of im2col: scatters cols back onto the sample, accumulating.
template <class T>
void col2im(const ConvGeometry& g, const T* cols, T* x) {
  const long s = static_cast<long>(g.stride), pad = static_cast<long>(g.padding);
  const long ih_max = static_cast<long>(g.in_h), iw_max = static_cast<long>(g.in_w);
  const T* src = cols;
  for (std::size_t oh = 0; oh < g.out_h; ++oh)
    for (std::size_t ow = 0; ow < g.out_w; ++ow)
      for (std::size_t ic = 0; ic < g.in_channels; ++ic) {
        T* plane = x + ic * g.in_h * g.in_w;
        for (std::size_t kh = 0; kh < g.kernel_h; ++kh) {
          const long ih = static_cast<long>(oh) * s - pad + static_cast<long>(kh);
          for (std::size_t kw = 0; kw < g.kernel_w; ++kw, ++src) {
            const long iw = static_cast<long>(ow) * s - pad + static_cast<long>(kw);
            if (ih >= 0 && ih < ih_max && iw >= 0 && iw < iw_max) plane[ih * iw_max + iw] += *src;
          }
        }
      }
}

// out[n,oc,p] += sum_r w[oc,r] * cols_n[p,r]
template <class T>
void conv_forward(const ConvGeometry& g, const T* in, const T* w, T* out) {
  const std::size_t P = g.out_h * g.out_w, R = g.in_channels * g.kernel_h * g.kernel_w, OC = g.out_channels;
  std::vector<T> wt(R * OC);
  for (std::size_t oc = 0; oc < OC; ++oc)
    for (std::size_t r = 0; r < R; ++r) wt[r * OC + oc] = w[oc * R + r];
  parallel_for(g.batch, [&](std::size_t n) {
    std::vector<T> cols(P * R), acc(P * OC, T{0});
    im2col(g, in + n * g.in_channels * g.in_h * g.in_w, cols.data());
    for (std::size_t p = 0; p < P; ++p) {
      const T* c = cols.data() + p * R;
      T* a = acc.data() + p * OC;
      for (std::size_t r = 0; r < R; ++r)
        if (c[r] != T{0}) axpy(OC, c[r], wt.data() + r * OC, a);
    }
    T* o = out + n * OC * P;
    for (std::size_t oc = 0; oc < OC; ++oc)
      for (std::size_t p = 0; p < P; ++p) o[oc * P + p] += acc[p * OC + oc];
  });
}

// dx[n] += col2im(sum_oc dout[n,oc,p] * w[oc,:])  (transpose of conv_forward)
template <class T>
void conv_backward_input(const ConvGeometry& g, const T* dout, const T* w, T* dx) {
  const std::size_t P = g.out_h * g.out_w, R = g.in_channels * g.kernel_h * g.kernel_w, OC = g.out_channels;
  parallel_for(g.batch, [&](std::size_t n) {
    std::vector<T> cols(P * R, T{0});
    const T* d = dout + n * OC * P;
    for (std::size_t p = 0; p < P; ++p) {
      T* c = cols.data() + p * R;
      for (std::size_t oc = 0; oc < OC; ++oc) {
        const T v = d[oc * P + p];
        if (v != T{0}) axpy(R, v, w + oc * R, c);
      }
    }
    col2im(g, cols.data(), dx + n * g.in_channels * g.in_h * g.in_w);
  });
}

// dw[oc,r] += sum_{n,p} dout[n,oc,p] * cols_n[p,r]
template <class T>
void conv_backward_weight(const ConvGeometry& g, const T* in, const T* dout, T* dw) {
  const std::size_t P = g.out_h * g.out_w, R = g.in_channels * g.kernel_h * g.kernel_w, OC = g.out_channels;
  std::vector<T> dwt(R * OC, T{0}), cols(P * R), dT(P * OC);
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(g, in + n * g.in_channels * g.in_h * g.in_w, cols.data());
    const T* d = dout + n * OC * P;
    for (std::size_t oc = 0; oc < OC; ++oc)
      for (std::size_t p = 0; p < P; ++p) dT[p * OC + oc] = d[oc * P + p];
    for (std::size_t p = 0; p < P; ++p) {
      const T* c = cols.data() + p * R;
      const T* dp = dT.data() + p * OC;
      for (std::size_t r = 0; r < R; ++r)
        if (c[r] != T{0}) axpy(OC, c[r], dp, dwt.data() + r * OC);
    }
  }
  for (std::size_t oc = 0; oc < OC; ++oc)
    for (std::size_t r = 0; r < R; ++r) dw[oc * R + r] += dwt[r * OC + oc];
}

}  // namespace detail

/// Geometry of conv2d(input, kernel) with kernel laid out [out, in, kh, kw].
inline ConvGeometry conv_geometry(const Shape& input, const Shape& kernel, std::size_t stride,
                                  std::size_t padding) {
  if (input.size() != 4 || kernel.size() != 4) {
    throw ShapeError("conv2d expects NCHW input and OIHW kernel, got input " + to_string(input) +
                     " and kernel " + to_string(kernel));
  }
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (input[1] != kernel[1]) {
    throw ShapeError("conv2d: channel mismatch between input " + to_string(input) + " and kernel " +
                     to_string(kernel));
  }
  if (kernel[2] > input[2] + 2 * padding || kernel[3] > input[3] + 2 * padding) {
    throw ShapeError("conv2d: kernel " + to_string(kernel) + " larger than padded input " +
                     to_string(input));
  }
  ConvGeometry g;
  g.batch = input[0];
  g.in_channels = input[1];
  g.in_h = input[2];
  g.in_w = input[3];
  g.out_channels = kernel[0];
  g.kernel_h = kernel[2];
  g.kernel_w = kernel[3];
  g.stride = stride;
  g.padding = padding;
  g.out_h = (g.in_h + 2 * padding - g.kernel_h) / stride + 1;
  g.out_w = (g.in_w + 2 * padding - g.kernel_w) / stride + 1;
  return g;
}

/// Geometry of deconv2d(input, kernel) with kernel laid out [in, out, kh, kw],
/// expressed as the forward convolution it transposes.
inline ConvGeometry deconv_geometry(const Shape& input, const Shape& kernel, std::size_t stride,
                                    std::size_t padding) {
  if (input.size() != 4 || kernel.size() != 4) {
    throw ShapeError("deconv2d expects NCHW input and IOHW kernel, got input " + to_string(input) +
                     " and kernel " + to_string(kernel));
  }
  if (stride == 0) throw ShapeError("deconv2d: stride must be positive");
  if (input[1] != kernel[0]) {
    throw ShapeError("deconv2d: channel mismatch between input " + to_string(input) + " and kernel " +
                     to_string(kernel));
  }
  const long oh = (static_cast<long>(input[2]) - 1) * static_cast<long>(stride) - 2 * static_cast<long>(padding) +
                  static_cast<long>(kernel[2]);
  const long ow = (static_cast<long>(input[3]) - 1) * static_cast<long>(stride) - 2 * static_cast<long>(padding) +
                  static_cast<long>(kernel[3]);
  if (oh <= 0 || ow <= 0) {
    throw ShapeError("deconv2d: empty output for input " + to_string(input) + " and kernel " +
                     to_string(kernel));
  }
  ConvGeometry g;
  g.batch = input[0];
  g.out_channels = input[1];
  g.out_h = input[2];
  g.out_w = input[3];
  g.in_channels = kernel[1];
  g.in_h = static_cast<std::size_t>(oh);
  g.in_w = static_cast<std::size_t>(ow);
  g.kernel_h = kernel[2];
  g.kernel_w = kernel[3];
  g.stride = stride;
  g.padding = padding;
  return g;
}

/// Cross-correlation of an NCHW input with an [out, in, k, k] kernel.
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride, std::size_t padding) {
  const ConvGeometry g = conv_geometry(input.shape(), kernel.shape(), stride, padding);
  std::vector<T> out(g.batch * g.out_channels * g.out_h * g.out_w, T{0});
  detail::conv_forward(g, input.data().data(), kernel.data().data(), out.data());
  return detail::make_result<T>(Shape{g.batch, g.out_channels, g.out_h, g.out_w}, std::move(out),
                                {input, kernel}, [g](detail::Node<T>& self) {
                                  auto& x = *self.parents[0];
                                  auto& w = *self.parents[1];
                                  if (x.requires_grad)
                                    detail::conv_backward_input(g, self.grad.data(), w.value.data(), x.grad.data());
                                  if (w.requires_grad)
                                    detail::conv_backward_weight(g, x.value.data(), self.grad.data(), w.grad.data());
                                });
}

/// Transposed convolution; the adjoint of conv2d for the same kernel array,
/// stride and padding. Kernel layout is [in, out, k, k].
template <class T>
Tensor<T> deconv2d(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride, std::size_t padding) {
  const ConvGeometry g = deconv_geometry(input.shape(), kernel.shape(), stride, padding);
  std::vector<T> out(g.batch * g.in_channels * g.in_h * g.in_w, T{0});
  detail::conv_backward_input(g, input.data().data(), kernel.data().data(), out.data());
  return detail::make_result<T>(Shape{g.batch, g.in_channels, g.in_h, g.in_w}, std::move(out),
                                {input, kernel}, [g](detail::Node<T>& self) {
                                  auto& x = *self.parents[0];
                                  auto& w = *self.parents[1];
                                  if (x.requires_grad)
                                    detail::conv_forward(g, self.grad.data(), w.value.data(), x.grad.data());
                                  if (w.requires_grad)
                                    detail::conv_backward_weight(g, self.grad.data(), x.value.data(), w.grad.data());
                                });
}

// ---------------------------------------------------------------------------
// Batch normalization

enum class NormMode { train, eval };

template <class T>
struct BatchNormState {
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T momentum = T(0.1);
  T epsilon = T(1e-5);

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(channels, T{0}), running_var(channels, T{1}) {}
};

namespace detail {

template <class T>
Tensor<T> batch_norm_impl(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                          const BatchNormState<T>& stats, BatchNormState<T>* update, NormMode mode) {
  const BatchNormState<T>& state = stats;
  if (input.rank() < 2) throw ShapeError("batch_norm: input must have a channel axis, got " + to_string(input.shape()));
  const std::size_t n = input.dim(0), c = input.dim(1);
  const std::size_t hw = input.size() / (n * c);
  if (gamma.size() != c || beta.size() != c) {
    throw ShapeError("batch_norm: gamma/beta " + to_string(gamma.shape()) + "/" + to_string(beta.shape()) +
                     " do not match " + std::to_string(c) + " channels");
  }
  if (state.running_mean.size() != c || state.running_var.size() != c) {
    throw ShapeError("batch_norm: running statistics sized for a different channel count");
  }
  const std::size_t count = n * hw;
  if (mode == NormMode::train && count < 2) {
    throw std::invalid_argument("batch_norm: train mode needs at least 2 values per channel, input " +
                                to_string(input.shape()));
  }

  std::vector<T> mu(c), inv_std(c);
  if (mode == NormMode::train) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      T s{0};
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < hw; ++k) s += input[(i * c + ch) * hw + k];
      const T m = s / static_cast<T>(count);
      T ss{0};
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < hw; ++k) {
          const T d = input[(i * c + ch) * hw + k] - m;
          ss += d * d;
        }
      const T var = ss / static_cast<T>(count);
      mu[ch] = m;
      inv_std[ch] = T{1} / std::sqrt(var + state.epsilon);
      const T unbiased = ss / static_cast<T>(count - 1);
      if (update) {
        update->running_mean[ch] = (T{1} - state.momentum) * state.running_mean[ch] + state.momentum * m;
        update->running_var[ch] = (T{1} - state.momentum) * state.running_var[ch] + state.momentum * unbiased;
      }
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mu[ch] = state.running_mean[ch];
      inv_std[ch] = T{1} / std::sqrt(state.running_var[ch] + state.epsilon);
    }
  }

  std::vector<T> xhat(input.size()), out(input.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t k = 0; k < hw; ++k) {
        const std::size_t idx = (i * c + ch) * hw + k;
        xhat[idx] = (input[idx] - mu[ch]) * inv_std[ch];
        out[idx] = gamma[ch] * xhat[idx] + beta[ch];
      }

  const bool train = mode == NormMode::train;
  return detail::make_result<T>(
      input.shape(), std::move(out), {input, gamma, beta},
      [n, c, hw, count, train, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node<T>& self) {
        auto& x = *self.parents[0];
        auto& ga = *self.parents[1];
        auto& be = *self.parents[2];
        for (std::size_t ch = 0; ch < c; ++ch) {
          T sum_dy{0}, sum_dy_xhat{0};
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < hw; ++k) {
              const std::size_t idx = (i * c + ch) * hw + k;
              sum_dy += self.grad[idx];
              sum_dy_xhat += self.grad[idx] * xhat[idx];
            }
          if (ga.requires_grad) ga.grad[ch] += sum_dy_xhat;
          if (be.requires_grad) be.grad[ch] += sum_dy;
          if (!x.requires_grad) continue;
          const T g = ga.value[ch];
          const T m = static_cast<T>(count);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < hw; ++k) {
              const std::size_t idx = (i * c + ch) * hw + k;
              if (train) {
                x.grad[idx] += g * inv_std[ch] / m * (m * self.grad[idx] - sum_dy - xhat[idx] * sum_dy_xhat);
              } else {
                x.grad[idx] += g * inv_std[ch] * self.grad[idx];
              }
            }
        }
      });
}

}  // namespace detail

/// Per-channel normalization over batch and spatial dims. Train mode uses the
/// batch statistics and folds them into the running averages; eval mode uses
/// the running averages.
template <class T>
Tensor<T> batch_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormState<T>& state, NormMode mode) {
  return detail::batch_norm_impl(input, gamma, beta, state, mode == NormMode::train ? &state : nullptr, mode);
}

/// Eval-mode normalization; never touches the running statistics.
template <class T>
Tensor<T> batch_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                     const BatchNormState<T>& state) {
  return detail::batch_norm_impl<T>(input, gamma, beta, state, nullptr, NormMode::eval);
}

// ---------------------------------------------------------------------------
// Activations

enum class ActivationKind { identity, relu, leaky_relu, sigmoid, tanh };

struct Activation {
  ActivationKind kind = ActivationKind::identity;
  double alpha = 0.2;  // leaky_relu slope

  static Activation relu() { return {ActivationKind::relu}; }
  static Activation leaky_relu(double a = 0.2) { return {ActivationKind::leaky_relu, a}; }
  static Activation sigmoid() { return {ActivationKind::sigmoid}; }
  static Activation tanh() { return {ActivationKind::tanh}; }
  static Activation identity() { return {ActivationKind::identity}; }
  bool operator==(const Activation&) const = default;
};

inline std::string to_string(const Activation& a) {
  switch (a.kind) {
    case ActivationKind::identity: return "identity";
    case ActivationKind::relu: return "relu";
    case ActivationKind::leaky_relu: return "leaky_relu";
    case ActivationKind::sigmoid: return "sigmoid";
    case ActivationKind::tanh: return "tanh";
  }
  return "?";
}

template <class T>
Tensor<T> activation(const Tensor<T>& input, Activation act) {
  if (act.kind == ActivationKind::leaky_relu && !(act.alpha > 0.0 && act.alpha < 1.0)) {
    throw std::invalid_argument("leaky_relu slope must lie in (0,1), got " + std::to_string(act.alpha));
  }
  const T alpha = static_cast<T>(act.alpha);
  std::vector<T> out(input.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T x = input[i];
    switch (act.kind) {
      case ActivationKind::identity: out[i] = x; break;
      case ActivationKind::relu: out[i] = x > T{0} ? x : T{0}; break;
      case ActivationKind::leaky_relu: out[i] = x > T{0} ? x : alpha * x; break;
      case ActivationKind::sigmoid: out[i] = T{1} / (T{1} + std::exp(-x)); break;
      case ActivationKind::tanh: out[i] = std::tanh(x); break;
    }
  }
  const auto kind = act.kind;
  return detail::make_result<T>(input.shape(), std::move(out), {input}, [kind, alpha](detail::Node<T>& self) {
    auto& x = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T g = self.grad[i];
      const T y = self.value[i];
      T d{1};
      switch (kind) {
        case ActivationKind::identity: d = T{1}; break;
        case ActivationKind::relu: d = x.value[i] > T{0} ? T{1} : T{0}; break;
        case ActivationKind::leaky_relu: d = x.value[i] > T{0} ? T{1} : alpha; break;
        case ActivationKind::sigmoid: d = y * (T{1} - y); break;
        case ActivationKind::tanh: d = T{1} - y * y; break;
      }
      x.grad[i] += g * d;
    }
  });
}

// ---------------------------------------------------------------------------
// Losses

/// Probability clamp used by bce: log() is never evaluated outside [eps, 1-eps].
inline constexpr double kBceEpsilon = 1e-7;

/// Binary cross-entropy, mean over all elements, with pred clamped to [eps, 1-eps].
/// Clamped predictions receive zero gradient.
template <class T>
Tensor<T> bce(const Tensor<T>& pred, const Tensor<T>& target) {
  require_same_shape(pred, target, "bce");
  const T eps = static_cast<T>(kBceEpsilon);
  const T lo = eps, hi = T{1} - eps;
  T s{0};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T p = std::clamp(pred[i], lo, hi);
    const T t = target[i];
    s += t * std::log(p) + (T{1} - t) * std::log(T{1} - p);
  }
  const T count = static_cast<T>(pred.size());
  return detail::make_result<T>(Shape{1}, {-s / count}, {pred, target}, [lo, hi, count](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    auto& t = *self.parents[1];
    const T g = self.grad[0] / count;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const T pv = std::clamp(p.value[i], lo, hi);
      if (p.requires_grad && p.value[i] > lo && p.value[i] < hi) {
        p.grad[i] += -g * (t.value[i] / pv - (T{1} - t.value[i]) / (T{1} - pv));
      }
      if (t.requires_grad) t.grad[i] += -g * (std::log(pv) - std::log(T{1} - pv));
    }
  });
}

/// Mean absolute error.
template <class T>
Tensor<T> l1(const Tensor<T>& pred, const Tensor<T>& target) {
  require_same_shape(pred, target, "l1");
  T s{0};
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
  const T count = static_cast<T>(pred.size());
  return detail::make_result<T>(Shape{1}, {s / count}, {pred, target}, [count](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    auto& t = *self.parents[1];
    const T g = self.grad[0] / count;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const T d = p.value[i] - t.value[i];
      const T sign = d > T{0} ? T{1} : (d < T{0} ? T{-1} : T{0});
      if (p.requires_grad) p.grad[i] += g * sign;
      if (t.requires_grad) t.grad[i] -= g * sign;
    }
  });
}

enum class LossKind { bce, l1 };

template <class T>
Tensor<T> loss(const Tensor<T>& pred, const Tensor<T>& target, LossKind kind) {
  return kind == LossKind::bce ? bce(pred, target) : l1(pred, target);
}

}  // namespace cgseg
