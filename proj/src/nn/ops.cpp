#include "dlss/nn/ops.hpp"

#include <algorithm>
#include <cmath>

#include "dlss/error.hpp"
#include "dlss/simd.hpp"

namespace dlss::nn {
namespace {

template <class T>
using NodePtr = std::shared_ptr<Node<T>>;

template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> value, std::vector<NodePtr<T>> parents,
                      std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = shape;
  node->value = std::move(value);
  const bool any = std::any_of(parents.begin(), parents.end(), [](const auto& p) { return p->requires_grad; });
  if (grad_enabled() && any) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

template <class T>
bool wants(const NodePtr<T>& p) {
  return p->requires_grad;
}

struct ConvGeometry {
  int n, h, w, cin, kh, kw, cout, stride, oh, ow, pad_top, pad_left;
  std::size_t patch() const { return static_cast<std::size_t>(kh) * kw * cin; }
  std::size_t positions() const { return static_cast<std::size_t>(oh) * ow; }
};

ConvGeometry conv_geometry(const Shape& x, const Shape& wt, int stride) {
  if (stride < 1) throw InvalidInput("conv2d: stride must be >= 1");
  if (wt.w != x.c) {
    throw InvalidInput("conv2d: weight expects " + std::to_string(wt.w) + " input channels, got " + std::to_string(x.c));
  }
  ConvGeometry g{};
  g.n = x.n;
  g.h = x.h;
  g.w = x.w;
  g.cin = x.c;
  g.kh = wt.n;
  g.kw = wt.h;
  g.cout = wt.c;
  g.stride = stride;
  g.oh = (x.h + stride - 1) / stride;
  g.ow = (x.w + stride - 1) / stride;
  g.pad_top = std::max((g.oh - 1) * stride + g.kh - x.h, 0) / 2;
  g.pad_left = std::max((g.ow - 1) * stride + g.kw - x.w, 0) / 2;
  return g;
}

template <class T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
  const std::size_t K = g.patch();
  for (int oy = 0; oy < g.oh; ++oy) {
    for (int ox = 0; ox < g.ow; ++ox) {
      T* dst = cols + (static_cast<std::size_t>(oy) * g.ow + ox) * K;
      for (int ky = 0; ky < g.kh; ++ky) {
        const int iy = oy * g.stride - g.pad_top + ky;
        for (int kx = 0; kx < g.kw; ++kx) {
          const int ix = ox * g.stride - g.pad_left + kx;
          T* d = dst + (static_cast<std::size_t>(ky) * g.kw + kx) * g.cin;
          if (iy < 0 || iy >= g.h || ix < 0 || ix >= g.w) {
            std::fill(d, d + g.cin, T(0));
          } else {
            const T* s = x + (static_cast<std::size_t>(iy) * g.w + ix) * g.cin;
            std::copy(s, s + g.cin, d);
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const ConvGeometry& g, const T* cols, T* dx) {
  const std::size_t K = g.patch();
  for (int oy = 0; oy < g.oh; ++oy) {
    for (int ox = 0; ox < g.ow; ++ox) {
      const T* src = cols + (static_cast<std::size_t>(oy) * g.ow + ox) * K;
      for (int ky = 0; ky < g.kh; ++ky) {
        const int iy = oy * g.stride - g.pad_top + ky;
        if (iy < 0 || iy >= g.h) continue;
        for (int kx = 0; kx < g.kw; ++kx) {
          const int ix = ox * g.stride - g.pad_left + kx;
          if (ix < 0 || ix >= g.w) continue;
          const T* s = src + (static_cast<std::size_t>(ky) * g.kw + kx) * g.cin;
          T* d = dx + (static_cast<std::size_t>(iy) * g.w + ix) * g.cin;
          for (int c = 0; c < g.cin; ++c) d[c] += s[c];
        }
      }
    }
  }
}

struct ResizeTap {
  int i0, i1;
  double w0, w1;
};

std::vector<ResizeTap> bilinear_taps(int in, int out) {
  std::vector<ResizeTap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    const double x = (o + 0.5) * scale - 0.5;
    const int x0 = static_cast<int>(std::floor(x));
    const double f = x - x0;
    taps[o] = {std::clamp(x0, 0, in - 1), std::clamp(x0 + 1, 0, in - 1), 1.0 - f, f};
  }
  return taps;
}

}  // namespace

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, int stride) {
  const ConvGeometry g = conv_geometry(x.shape(), weight.shape(), stride);
  const std::size_t K = g.patch();
  const std::size_t P = g.positions();
  const auto& kern = simd::kernels<T>();

  std::vector<T> out(static_cast<std::size_t>(g.n) * P * g.cout, T(0));
  std::vector<T> cols(P * K);
  const T* xv = x.value().data();
  const T* wv = weight.value().data();
  const std::size_t in_stride = static_cast<std::size_t>(g.h) * g.w * g.cin;
  for (int b = 0; b < g.n; ++b) {
    im2col(g, xv + b * in_stride, cols.data());
    kern.gemm_nn(P, g.cout, K, cols.data(), K, wv, g.cout, out.data() + b * P * g.cout, g.cout);
  }

  return make_result<T>({g.n, g.oh, g.ow, g.cout}, std::move(out), {x.ptr(), weight.ptr()}, [g](Node<T>& self) {
    auto& xn = *self.parents[0];
    auto& wn = *self.parents[1];
    const std::size_t K = g.patch();
    const std::size_t P = g.positions();
    const std::size_t in_stride = static_cast<std::size_t>(g.h) * g.w * g.cin;
    const auto& kern = simd::kernels<T>();
    std::vector<T> cols(P * K);
    if (wn.requires_grad) {
      wn.ensure_grad();
      for (int b = 0; b < g.n; ++b) {
        im2col(g, xn.value.data() + b * in_stride, cols.data());
        kern.gemm_tn(K, g.cout, P, cols.data(), K, self.grad.data() + b * P * g.cout, g.cout, wn.grad.data(), g.cout);
      }
    }
    if (xn.requires_grad) {
      xn.ensure_grad();
      std::vector<T> wt(K * g.cout);
      for (std::size_t k = 0; k < K; ++k) {
        for (int co = 0; co < g.cout; ++co) wt[co * K + k] = wn.value[k * g.cout + co];
      }
      for (int b = 0; b < g.n; ++b) {
        std::fill(cols.begin(), cols.end(), T(0));
        kern.gemm_nn(P, K, g.cout, self.grad.data() + b * P * g.cout, g.cout, wt.data(), K, cols.data(), K);
        col2im_add(g, cols.data(), xn.grad.data() + b * in_stride);
      }
    }
  });
}

template <class T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  const int c = x.shape().c;
  if (bias.numel() != static_cast<std::size_t>(c)) throw InvalidInput("add_bias: bias length does not match channels");
  std::vector<T> out(x.value().begin(), x.value().end());
  const T* bv = bias.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % c];
  return make_result<T>(x.shape(), std::move(out), {x.ptr(), bias.ptr()}, [c](Node<T>& self) {
    auto& xn = *self.parents[0];
    auto& bn = *self.parents[1];
    if (xn.requires_grad) {
      xn.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) xn.grad[i] += self.grad[i];
    }
    if (bn.requires_grad) {
      bn.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) bn.grad[i % c] += self.grad[i];
    }
  });
}

template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight) {
  const int n = x.shape().n;
  const std::size_t f = x.shape().per_sample();
  const Shape& ws = weight.shape();
  if (static_cast<std::size_t>(ws.w) != f) {
    throw InvalidInput("linear: weight expects " + std::to_string(ws.w) + " features, got " + std::to_string(f));
  }
  const int o = ws.c;
  std::vector<T> out(static_cast<std::size_t>(n) * o, T(0));
  simd::kernels<T>().gemm_nn(n, o, f, x.value().data(), f, weight.value().data(), o, out.data(), o);
  return make_result<T>({n, 1, 1, o}, std::move(out), {x.ptr(), weight.ptr()}, [n, f, o](Node<T>& self) {
    auto& xn = *self.parents[0];
    auto& wn = *self.parents[1];
    const auto& kern = simd::kernels<T>();
    if (wn.requires_grad) {
      wn.ensure_grad();
      kern.gemm_tn(f, o, n, xn.value.data(), f, self.grad.data(), o, wn.grad.data(), o);
    }
    if (xn.requires_grad) {
      xn.ensure_grad();
      std::vector<T> wt(f * o);
      for (std::size_t i = 0; i < f; ++i) {
        for (int j = 0; j < o; ++j) wt[j * f + i] = wn.value[i * o + j];
      }
      kern.gemm_nn(n, f, o, self.grad.data(), o, wt.data(), f, xn.grad.data(), f);
    }
  });
}

template <class T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int out_h, int out_w) {
  const Shape s = x.shape();
  if (out_h < 1 || out_w < 1) throw InvalidInput("bilinear_resize: target must be positive");
  const auto ty = bilinear_taps(s.h, out_h);
  const auto tx = bilinear_taps(s.w, out_w);
  const int c = s.c;
  std::vector<T> out(static_cast<std::size_t>(s.n) * out_h * out_w * c, T(0));
  const T* xv = x.value().data();
  for (int b = 0; b < s.n; ++b) {
    const T* src = xv + static_cast<std::size_t>(b) * s.h * s.w * c;
    T* dst = out.data() + static_cast<std::size_t>(b) * out_h * out_w * c;
    for (int oy = 0; oy < out_h; ++oy) {
      const auto& a = ty[oy];
      for (int ox = 0; ox < out_w; ++ox) {
        const auto& e = tx[ox];
        const T w00 = static_cast<T>(a.w0 * e.w0), w01 = static_cast<T>(a.w0 * e.w1);
        const T w10 = static_cast<T>(a.w1 * e.w0), w11 = static_cast<T>(a.w1 * e.w1);
        const T* p00 = src + (static_cast<std::size_t>(a.i0) * s.w + e.i0) * c;
        const T* p01 = src + (static_cast<std::size_t>(a.i0) * s.w + e.i1) * c;
        const T* p10 = src + (static_cast<std::size_t>(a.i1) * s.w + e.i0) * c;
        const T* p11 = src + (static_cast<std::size_t>(a.i1) * s.w + e.i1) * c;
        T* d = dst + (static_cast<std::size_t>(oy) * out_w + ox) * c;
        for (int k = 0; k < c; ++k) d[k] = w00 * p00[k] + w01 * p01[k] + w10 * p10[k] + w11 * p11[k];
      }
    }
  }
  return make_result<T>({s.n, out_h, out_w, c}, std::move(out), {x.ptr()}, [s, out_h, out_w, ty, tx](Node<T>& self) {
    auto& xn = *self.parents[0];
    xn.ensure_grad();
    const int c = s.c;
    for (int b = 0; b < s.n; ++b) {
      T* dsrc = xn.grad.data() + static_cast<std::size_t>(b) * s.h * s.w * c;
      const T* g = self.grad.data() + static_cast<std::size_t>(b) * out_h * out_w * c;
      for (int oy = 0; oy < out_h; ++oy) {
        const auto& a = ty[oy];
        for (int ox = 0; ox < out_w; ++ox) {
          const auto& e = tx[ox];
          const T* gd = g + (static_cast<std::size_t>(oy) * out_w + ox) * c;
          const T w00 = static_cast<T>(a.w0 * e.w0), w01 = static_cast<T>(a.w0 * e.w1);
          const T w10 = static_cast<T>(a.w1 * e.w0), w11 = static_cast<T>(a.w1 * e.w1);
          T* p00 = dsrc + (static_cast<std::size_t>(a.i0) * s.w + e.i0) * c;
          T* p01 = dsrc + (static_cast<std::size_t>(a.i0) * s.w + e.i1) * c;
          T* p10 = dsrc + (static_cast<std::size_t>(a.i1) * s.w + e.i0) * c;
          T* p11 = dsrc + (static_cast<std::size_t>(a.i1) * s.w + e.i1) * c;
          for (int k = 0; k < c; ++k) {
            p00[k] += w00 * gd[k];
            p01[k] += w01 * gd[k];
            p10[k] += w10 * gd[k];
            p11[k] += w11 * gd[k];
          }
        }
      }
    }
  });
}

template <class T>
Tensor<T> nearest_resize(const Tensor<T>& x, int out_h, int out_w) {
  const Shape s = x.shape();
  if (out_h < 1 || out_w < 1) throw InvalidInput("nearest_resize: target must be positive");
  std::vector<std::size_t> index(static_cast<std::size_t>(out_h) * out_w);
  for (int oy = 0; oy < out_h; ++oy) {
    const int iy = static_cast<int>(static_cast<long long>(oy) * s.h / out_h);
    for (int ox = 0; ox < out_w; ++ox) {
      const int ix = static_cast<int>(static_cast<long long>(ox) * s.w / out_w);
      index[static_cast<std::size_t>(oy) * out_w + ox] = static_cast<std::size_t>(iy) * s.w + ix;
    }
  }
  const int c = s.c;
  const std::size_t in_ps = s.per_sample();
  const std::size_t out_ps = index.size() * c;
  std::vector<T> out(static_cast<std::size_t>(s.n) * out_ps);
  for (int b = 0; b < s.n; ++b) {
    for (std::size_t p = 0; p < index.size(); ++p) {
      const T* src = x.value().data() + b * in_ps + index[p] * c;
      std::copy(src, src + c, out.data() + b * out_ps + p * c);
    }
  }
  return make_result<T>({s.n, out_h, out_w, c}, std::move(out), {x.ptr()},
                        [index = std::move(index), c, in_ps, out_ps, n = s.n](Node<T>& self) {
                          auto& xn = *self.parents[0];
                          xn.ensure_grad();
                          for (int b = 0; b < n; ++b) {
                            for (std::size_t p = 0; p < index.size(); ++p) {
                              const T* g = self.grad.data() + b * out_ps + p * c;
                              T* d = xn.grad.data() + b * in_ps + index[p] * c;
                              for (int k = 0; k < c; ++k) d[k] += g[k];
                            }
                          }
                        });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  return leaky_relu<T>(x, T(0));
}

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  std::vector<T> out(x.value().begin(), x.value().end());
  for (T& v : out) v = v > T(0) ? v : slope * v;
  return make_result<T>(x.shape(), std::move(out), {x.ptr()}, [slope](Node<T>& self) {
    auto& xn = *self.parents[0];
    xn.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) xn.grad[i] += xn.value[i] > T(0) ? self.grad[i] : slope * self.grad[i];
  });
}

template <class T>
Tensor<T> softplus(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = x.value()[i];
    out[i] = std::log1p(std::exp(-std::abs(v))) + std::max(v, T(0));
  }
  return make_result<T>(x.shape(), std::move(out), {x.ptr()}, [](Node<T>& self) {
    auto& xn = *self.parents[0];
    xn.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T sig = T(1) / (T(1) + std::exp(-xn.value[i]));
      xn.grad[i] += sig * self.grad[i];
    }
  });
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.shape() == b.shape())) throw InvalidInput("add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  std::vector<T> out(a.value().begin(), a.value().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_result<T>(a.shape(), std::move(out), {a.ptr(), b.ptr()}, [](Node<T>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      p->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
  });
}

template <class T>
Tensor<T> affine(const Tensor<T>& x, T a, T b) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x.value()[i] + b;
  return make_result<T>(x.shape(), std::move(out), {x.ptr()}, [a](Node<T>& self) {
    auto& xn = *self.parents[0];
    xn.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) xn.grad[i] += a * self.grad[i];
  });
}

template <class T>
Tensor<T> crop(const Tensor<T>& x, int row, int col, int h, int w) {
  const Shape s = x.shape();
  if (row < 0 || col < 0 || h < 1 || w < 1 || row + h > s.h || col + w > s.w) {
    throw InvalidInput("crop: window " + std::to_string(h) + "x" + std::to_string(w) + " at (" + std::to_string(row) +
                       "," + std::to_string(col) + ") does not fit " + s.str());
  }
  const int c = s.c;
  std::vector<T> out(static_cast<std::size_t>(s.n) * h * w * c);
  for (int b = 0; b < s.n; ++b) {
    for (int r = 0; r < h; ++r) {
      const T* src = x.value().data() + ((static_cast<std::size_t>(b) * s.h + row + r) * s.w + col) * c;
      std::copy(src, src + static_cast<std::size_t>(w) * c, out.data() + ((static_cast<std::size_t>(b) * h + r) * w) * c);
    }
  }
  return make_result<T>({s.n, h, w, c}, std::move(out), {x.ptr()}, [s, row, col, h, w](Node<T>& self) {
    auto& xn = *self.parents[0];
    xn.ensure_grad();
    const int c = s.c;
    for (int b = 0; b < s.n; ++b) {
      for (int r = 0; r < h; ++r) {
        const T* g = self.grad.data() + ((static_cast<std::size_t>(b) * h + r) * w) * c;
        T* d = xn.grad.data() + ((static_cast<std::size_t>(b) * s.h + row + r) * s.w + col) * c;
        for (int k = 0; k < w * c; ++k) d[k] += g[k];
      }
    }
  });
}

template <class T>
Tensor<T> subtract_channel(const Tensor<T>& x, std::span<const T> means) {
  const int c = x.shape().c;
  if (means.size() != static_cast<std::size_t>(c)) throw InvalidInput("subtract_channel: mean count does not match channels");
  std::vector<T> out(x.value().begin(), x.value().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= means[i % c];
  return make_result<T>(x.shape(), std::move(out), {x.ptr()}, [](Node<T>& self) {
    auto& xn = *self.parents[0];
    xn.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) xn.grad[i] += self.grad[i];
  });
}

template <class T>
Tensor<T> weight_norm(const Tensor<T>& v, const Tensor<T>& g) {
  const int c = v.shape().c;
  if (g.numel() != static_cast<std::size_t>(c)) throw InvalidInput("weight_norm: gain length does not match output channels");
  const std::size_t rows = v.numel() / c;
  std::vector<T> norms(c, T(0));
  for (std::size_t i = 0; i < rows; ++i) {
    for (int j = 0; j < c; ++j) norms[j] += v.value()[i * c + j] * v.value()[i * c + j];
  }
  for (T& nrm : norms) nrm = std::max(std::sqrt(nrm), T(1e-12));
  std::vector<T> out(v.numel());
  for (std::size_t i = 0; i < rows; ++i) {
    for (int j = 0; j < c; ++j) out[i * c + j] = g.value()[j] * v.value()[i * c + j] / norms[j];
  }
  return make_result<T>(v.shape(), std::move(out), {v.ptr(), g.ptr()}, [c, rows, norms](Node<T>& self) {
    auto& vn = *self.parents[0];
    auto& gn = *self.parents[1];
    std::vector<T> dg(c, T(0));
    for (std::size_t i = 0; i < rows; ++i) {
      for (int j = 0; j < c; ++j) dg[j] += self.grad[i * c + j] * vn.value[i * c + j] / norms[j];
    }
    if (gn.requires_grad) {
      gn.ensure_grad();
      for (int j = 0; j < c; ++j) gn.grad[j] += dg[j];
    }
    if (vn.requires_grad) {
      vn.ensure_grad();
      for (std::size_t i = 0; i < rows; ++i) {
        for (int j = 0; j < c; ++j) {
          const T scale = gn.value[j] / norms[j];
          vn.grad[i * c + j] += scale * (self.grad[i * c + j] - vn.value[i * c + j] * dg[j] / norms[j]);
        }
      }
    }
  });
}

template <class T>
Tensor<T> spectral_divide(const Tensor<T>& w, std::span<const T> u, std::span<const T> v, T* sigma_out) {
  const int c = w.shape().c;
  const std::size_t rows = w.numel() / c;
  if (u.size() != static_cast<std::size_t>(c) || v.size() != rows) throw InvalidInput("spectral_divide: u/v sizes do not match weight");
  T sigma = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    for (int j = 0; j < c; ++j) sigma += u[j] * w.value()[i * c + j] * v[i];
  }
  const bool floored = !(sigma > T(1e-12));
  if (floored) sigma = T(1e-12);
  if (sigma_out != nullptr) *sigma_out = sigma;
  std::vector<T> out(w.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = w.value()[i] / sigma;
  std::vector<T> uv(u.begin(), u.end());
  std::vector<T> vv(v.begin(), v.end());
  return make_result<T>(w.shape(), std::move(out), {w.ptr()}, [c, rows, sigma, floored, uv, vv](Node<T>& self) {
    auto& wn = *self.parents[0];
    wn.ensure_grad();
    T gw = 0;
    for (std::size_t i = 0; i < self.grad.size(); ++i) gw += self.grad[i] * wn.value[i];
    const T k = floored ? T(0) : gw / (sigma * sigma);
    for (std::size_t i = 0; i < rows; ++i) {
      for (int j = 0; j < c; ++j) {
        wn.grad[i * c + j] += self.grad[i * c + j] / sigma - k * uv[j] * vv[i];
      }
    }
  });
}

template <class T>
Tensor<T> fixed_blur(const Tensor<T>& x, const BlurKernel& k) {
  const Shape s = x.shape();
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  std::vector<T> out(x.numel());
  std::vector<T> a(plane), b(plane);
  for (int n = 0; n < s.n; ++n) {
    for (int ch = 0; ch < s.c; ++ch) {
      const T* src = x.value().data() + static_cast<std::size_t>(n) * plane * s.c;
      for (std::size_t p = 0; p < plane; ++p) a[p] = src[p * s.c + ch];
      correlate_reflect<T>(s.h, s.w, a, k, b);
      T* dst = out.data() + static_cast<std::size_t>(n) * plane * s.c;
      for (std::size_t p = 0; p < plane; ++p) dst[p * s.c + ch] = b[p];
    }
  }
  return make_result<T>(s, std::move(out), {x.ptr()}, [s, k, plane](Node<T>& self) {
    auto& xn = *self.parents[0];
    xn.ensure_grad();
    std::vector<T> a(plane), b(plane);
    for (int n = 0; n < s.n; ++n) {
      for (int ch = 0; ch < s.c; ++ch) {
        const T* g = self.grad.data() + static_cast<std::size_t>(n) * plane * s.c;
        for (std::size_t p = 0; p < plane; ++p) a[p] = g[p * s.c + ch];
        correlate_reflect_adjoint<T>(s.h, s.w, a, k, b);
        T* d = xn.grad.data() + static_cast<std::size_t>(n) * plane * s.c;
        for (std::size_t p = 0; p < plane; ++p) d[p * s.c + ch] += b[p];
      }
    }
  });
}

template <class T>
Tensor<T> overwrite_probes(const Tensor<T>& x, std::span<const T> target, int step) {
  if (target.size() != x.numel()) throw InvalidInput("overwrite_probes: target size mismatch");
  if (step < 1) throw InvalidInput("overwrite_probes: step must be >= 1");
  const Shape s = x.shape();
  std::vector<T> out(x.value().begin(), x.value().end());
  std::vector<std::size_t> probes;
  for (int n = 0; n < s.n; ++n) {
    for (int r = 0; r < s.h; r += step) {
      for (int col = 0; col < s.w; col += step) {
        for (int ch = 0; ch < s.c; ++ch) probes.push_back(((static_cast<std::size_t>(n) * s.h + r) * s.w + col) * s.c + ch);
      }
    }
  }
  for (std::size_t i : probes) out[i] = target[i];
  return make_result<T>(s, std::move(out), {x.ptr()}, [probes = std::move(probes)](Node<T>& self) {
    auto& xn = *self.parents[0];
    xn.ensure_grad();
    std::vector<T> g = self.grad;
    for (std::size_t i : probes) g[i] = T(0);
    for (std::size_t i = 0; i < g.size(); ++i) xn.grad[i] += g[i];
  });
}

template <class T>
Tensor<T> mse(const Tensor<T>& x, std::span<const T> target) {
  if (target.size() != x.numel()) throw InvalidInput("mse: target size mismatch");
  const std::size_t n = x.numel();
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T d = x.value()[i] - target[i];
    s += d * d;
  }
  std::vector<T> tv(target.begin(), target.end());
  return make_result<T>({1, 1, 1, 1}, {s / static_cast<T>(n)}, {x.ptr()}, [tv = std::move(tv)](Node<T>& self) {
    auto& xn = *self.parents[0];
    xn.ensure_grad();
    const T k = T(2) * self.grad[0] / static_cast<T>(tv.size());
    for (std::size_t i = 0; i < tv.size(); ++i) xn.grad[i] += k * (xn.value[i] - tv[i]);
  });
}

template <class T>
Tensor<T> mse_to_value(const Tensor<T>& x, T value) {
  const std::size_t n = x.numel();
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T d = x.value()[i] - value;
    s += d * d;
  }
  return make_result<T>({1, 1, 1, 1}, {s / static_cast<T>(n)}, {x.ptr()}, [value](Node<T>& self) {
    auto& xn = *self.parents[0];
    xn.ensure_grad();
    const T k = T(2) * self.grad[0] / static_cast<T>(xn.value.size());
    for (std::size_t i = 0; i < xn.value.size(); ++i) xn.grad[i] += k * (xn.value[i] - value);
  });
}

template <class T>
Tensor<T> mse_per_sample(const Tensor<T>& x, std::span<const T> target) {
  if (target.size() != x.numel()) throw InvalidInput("mse_per_sample: target size mismatch");
  const int n = x.shape().n;
  const std::size_t ps = x.shape().per_sample();
  std::vector<T> out(n, T(0));
  for (int b = 0; b < n; ++b) {
    T s = 0;
    for (std::size_t i = 0; i < ps; ++i) {
      const T d = x.value()[b * ps + i] - target[b * ps + i];
      s += d * d;
    }
    out[b] = s / static_cast<T>(ps);
  }
  std::vector<T> tv(target.begin(), target.end());
  return make_result<T>({n, 1, 1, 1}, std::move(out), {x.ptr()}, [tv = std::move(tv), n, ps](Node<T>& self) {
    auto& xn = *self.parents[0];
    xn.ensure_grad();
    for (int b = 0; b < n; ++b) {
      const T k = T(2) * self.grad[b] / static_cast<T>(ps);
      for (std::size_t i = 0; i < ps; ++i) xn.grad[b * ps + i] += k * (xn.value[b * ps + i] - tv[b * ps + i]);
    }
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  T s = 0;
  for (T v : x.value()) s += v;
  const T inv = T(1) / static_cast<T>(x.numel());
  return make_result<T>({1, 1, 1, 1}, {s * inv}, {x.ptr()}, [inv](Node<T>& self) {
    auto& xn = *self.parents[0];
    xn.ensure_grad();
    for (T& g : xn.grad) g += inv * self.grad[0];
  });
}

template <class T>
Tensor<T> weighted_sum(const std::vector<Tensor<T>>& terms, const std::vector<T>& weights) {
  if (terms.size() != weights.size() || terms.empty()) throw InvalidInput("weighted_sum: need one weight per term");
  T s = 0;
  std::vector<NodePtr<T>> parents;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].numel() != 1) throw InvalidInput("weighted_sum: terms must be scalars");
    s += weights[i] * terms[i].item();
    parents.push_back(terms[i].ptr());
  }
  return make_result<T>({1, 1, 1, 1}, {s}, std::move(parents), [weights](Node<T>& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      auto& p = *self.parents[i];
      if (!p.requires_grad) continue;
      p.ensure_grad();
      p.grad[0] += weights[i] * self.grad[0];
    }
  });
}

#define DLSS_INSTANTIATE_OPS(T)                                                                          \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, int);                                 \
  template Tensor<T> add_bias<T>(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> bilinear_resize<T>(const Tensor<T>&, int, int);                                     \
  template Tensor<T> nearest_resize<T>(const Tensor<T>&, int, int);                                      \
  template Tensor<T> relu<T>(const Tensor<T>&);                                                          \
  template Tensor<T> leaky_relu<T>(const Tensor<T>&, T);                                                 \
  template Tensor<T> softplus<T>(const Tensor<T>&);                                                      \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> affine<T>(const Tensor<T>&, T, T);                                                  \
  template Tensor<T> crop<T>(const Tensor<T>&, int, int, int, int);                                      \
  template Tensor<T> subtract_channel<T>(const Tensor<T>&, std::span<const T>);                          \
  template Tensor<T> weight_norm<T>(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> spectral_divide<T>(const Tensor<T>&, std::span<const T>, std::span<const T>, T*);   \
  template Tensor<T> fixed_blur<T>(const Tensor<T>&, const BlurKernel&);                                 \
  template Tensor<T> overwrite_probes<T>(const Tensor<T>&, std::span<const T>, int);                     \
  template Tensor<T> mse<T>(const Tensor<T>&, std::span<const T>);                                       \
  template Tensor<T> mse_to_value<T>(const Tensor<T>&, T);                                               \
  template Tensor<T> mse_per_sample<T>(const Tensor<T>&, std::span<const T>);                            \
  template Tensor<T> mean<T>(const Tensor<T>&);                                                          \
  template Tensor<T> weighted_sum<T>(const std::vector<Tensor<T>>&, const std::vector<T>&);

DLSS_INSTANTIATE_OPS(float)
DLSS_INSTANTIATE_OPS(double)

}  // namespace dlss::nn
