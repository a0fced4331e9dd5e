#pragma once

#include <vector>

#include "dlss/imaging.hpp"
#include "dlss/nn/tensor.hpp"

namespace dlss::nn {

// Differentiable operators. Each records its backward closure when grad mode
// is on and any input requires a gradient.

// Same-size zero padding: output side ceil(in/stride). `weight` is laid out
// (kernel_h, kernel_w, in_channels, out_channels).
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, int stride);

// Adds a per-channel bias of shape (1,1,1,C).
template <class T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);

// Flattens each sample and multiplies by `weight` laid out (1,1,in,out);
// result is (N,1,1,out).
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight);

// Half-pixel-centre bilinear resampling with edge clamping.
template <class T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int out_h, int out_w);

// out(i,j) = in(floor(i*in_h/out_h), floor(j*in_w/out_w)).
template <class T>
Tensor<T> nearest_resize(const Tensor<T>& x, int out_h, int out_w);

template <class T>
Tensor<T> relu(const Tensor<T>& x);
template <class T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope);
template <class T>
Tensor<T> softplus(const Tensor<T>& x);

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

// a*x + b elementwise with constant a, b.
template <class T>
Tensor<T> affine(const Tensor<T>& x, T a, T b);

// Same window for every sample in the batch.
template <class T>
Tensor<T> crop(const Tensor<T>& x, int row, int col, int h, int w);

// Subtracts a constant per-channel vector (no gradient into `means`).
template <class T>
Tensor<T> subtract_channel(const Tensor<T>& x, std::span<const T> means);

// w = g * v / ||v||, norms taken per output channel over the other three axes.
template <class T>
Tensor<T> weight_norm(const Tensor<T>& v, const Tensor<T>& g);

// w / sigma with sigma = u^T W v, where W is the (out_channels x rest)
// matrix view of w. u and v are held constant.
template <class T>
Tensor<T> spectral_divide(const Tensor<T>& w, std::span<const T> u, std::span<const T> v, T* sigma_out = nullptr);

// Per-(sample, channel) plane correlation with reflect padding.
template <class T>
Tensor<T> fixed_blur(const Tensor<T>& x, const BlurKernel& k);

// Replaces values at probing locations (i*step, j*step) with `target`
// (same shape, constant); those positions pass no gradient.
template <class T>
Tensor<T> overwrite_probes(const Tensor<T>& x, std::span<const T> target, int step);

// Mean squared difference against a constant target of the same size.
template <class T>
Tensor<T> mse(const Tensor<T>& x, std::span<const T> target);

// Mean of (x - value)^2 over all elements.
template <class T>
Tensor<T> mse_to_value(const Tensor<T>& x, T value);

// Per-sample mean squared difference; result shape (N,1,1,1).
template <class T>
Tensor<T> mse_per_sample(const Tensor<T>& x, std::span<const T> target);

template <class T>
Tensor<T> mean(const Tensor<T>& x);

// Sum of scalar tensors with constant weights.
template <class T>
Tensor<T> weighted_sum(const std::vector<Tensor<T>>& terms, const std::vector<T>& weights);

}  // namespace dlss::nn
