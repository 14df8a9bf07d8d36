#pragma once

#include <Eigen/Dense>
#include <cstring>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dptrack/tensor.hpp"

namespace dptrack {
namespace nn {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using EMap = Eigen::Map<EMat<T>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>>;

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param(std::string name, Tensor<T> v) : name(std::move(name)), value(std::move(v)) {
    grad = Tensor<T>::zeros_like(value);
  }
  void zero_grad() { grad.fill(T(0)); }
};

template <typename T>
using ParamPtr = std::shared_ptr<Param<T>>;

template <typename T>
struct Layer {
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
  virtual void collect(std::vector<ParamPtr<T>>& out) const {}
  // Same parameter storage, fresh activation caches.
  virtual std::unique_ptr<Layer<T>> clone_shared() const = 0;
};

// ---------------------------------------------------------------------------
// Convolution, stride 1. ksize 3 uses zero padding 1, ksize 1 no padding.

namespace detail {

template <typename T>
void im2col3(const T* in, int c_in, int h, int w, T* col) {
  const size_t hw = size_t(h) * w;
  for (int c = 0; c < c_in; ++c) {
    const T* plane = in + size_t(c) * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* dst = col + (size_t(c) * 9 + ky * 3 + kx) * hw;
        for (int y = 0; y < h; ++y) {
          int sy = y + ky - 1;
          T* row = dst + size_t(y) * w;
          if (sy < 0 || sy >= h) {
            std::memset(row, 0, sizeof(T) * w);
            continue;
          }
          int x0 = std::max(0, 1 - kx);
          int x1 = std::min(w, w + 1 - kx);
          for (int x = 0; x < x0; ++x) row[x] = T(0);
          for (int x = x1; x < w; ++x) row[x] = T(0);
          std::memcpy(row + x0, plane + size_t(sy) * w + (x0 + kx - 1), sizeof(T) * (x1 - x0));
        }
      }
    }
  }
}

template <typename T>
void col2im3_add(const T* col, int c_in, int h, int w, T* din) {
  const size_t hw = size_t(h) * w;
  for (int c = 0; c < c_in; ++c) {
    T* plane = din + size_t(c) * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* src = col + (size_t(c) * 9 + ky * 3 + kx) * hw;
        for (int y = 0; y < h; ++y) {
          int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          int x0 = std::max(0, 1 - kx);
          int x1 = std::min(w, w + 1 - kx);
          const T* row = src + size_t(y) * w;
          T* drow = plane + size_t(sy) * w + (kx - 1);
          for (int x = x0; x < x1; ++x) drow[x] += row[x];
        }
      }
    }
  }
}

}  // namespace detail

template <typename T>
struct Conv2d : Layer<T> {
  int c_in, c_out, ksize;
  bool has_bias;
  ParamPtr<T> weight;  // (c_out, c_in, k, k)
  ParamPtr<T> bias;    // (c_out) or null
  Tensor<T> input_;    // cached for backward
  mutable std::vector<T> col_;

  Conv2d(const std::string& name, int c_in, int c_out, int ksize, bool has_bias, std::mt19937& rng,
         double init_std = -1.0)
      : c_in(c_in), c_out(c_out), ksize(ksize), has_bias(has_bias) {
    Tensor<T> w(c_out, c_in, ksize, ksize);
    double std = init_std > 0 ? init_std : std::sqrt(2.0 / (c_in * ksize * ksize));
    fill_normal(w, rng, std);
    weight = std::make_shared<Param<T>>(name + ".w", std::move(w));
    if (has_bias) bias = std::make_shared<Param<T>>(name + ".b", Tensor<T>(1, c_out, 1, 1));
  }

  Conv2d(const Conv2d& o, bool)
      : c_in(o.c_in), c_out(o.c_out), ksize(o.ksize), has_bias(o.has_bias), weight(o.weight),
        bias(o.bias) {}

  std::unique_ptr<Layer<T>> clone_shared() const override {
    return std::make_unique<Conv2d>(*this, true);
  }

  void collect(std::vector<ParamPtr<T>>& out) const override {
    out.push_back(weight);
    if (bias) out.push_back(bias);
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.c != c_in) throw ShapeError("Conv2d: channel mismatch");
    input_ = x;
    const int h = x.h, w = x.w;
    const size_t hw = size_t(h) * w;
    const int kk = c_in * ksize * ksize;
    Tensor<T> y(x.n, c_out, h, w);
    ECMap<T> wmap(weight->value.data.data(), kk, c_out);  // (c_in*k*k, c_out) col-major view
    if (ksize == 3) col_.resize(hw * kk);
    for (int in = 0; in < x.n; ++in) {
      const T* src = x.plane(in, 0);
      const T* colp = src;
      if (ksize == 3) {
        detail::im2col3(src, c_in, h, w, col_.data());
        colp = col_.data();
      }
      ECMap<T> colmap(colp, hw, kk);
      EMap<T> ymap(y.plane(in, 0), hw, c_out);
      ymap.noalias() = colmap * wmap;
    }
    if (bias) {
      for (int in = 0; in < x.n; ++in)
        for (int c = 0; c < c_out; ++c) {
          T b = bias->value.data[c];
          T* p = y.plane(in, c);
          for (size_t i = 0; i < hw; ++i) p[i] += b;
        }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const int h = input_.h, w = input_.w;
    const size_t hw = size_t(h) * w;
    const int kk = c_in * ksize * ksize;
    Tensor<T> dx(input_.n, c_in, h, w);
    EMap<T> dwmap(weight->grad.data.data(), kk, c_out);
    std::vector<T> dcol;
    if (ksize == 3) {
      col_.resize(hw * kk);
      dcol.resize(hw * kk);
    }
    for (int in = 0; in < input_.n; ++in) {
      ECMap<T> dymap(dy.plane(in, 0), hw, c_out);
      const T* colp = input_.plane(in, 0);
      if (ksize == 3) {
        detail::im2col3(input_.plane(in, 0), c_in, h, w, col_.data());
        colp = col_.data();
      }
      ECMap<T> colmap(colp, hw, kk);
      dwmap.noalias() += colmap.transpose() * dymap;
      if (ksize == 3) {
        EMap<T> dcolmap(dcol.data(), hw, kk);
        ECMap<T> wmap(weight->value.data.data(), kk, c_out);
        dcolmap.noalias() = dymap * wmap.transpose();
        detail::col2im3_add(dcol.data(), c_in, h, w, dx.plane(in, 0));
      } else {
        EMap<T> dxmap(dx.plane(in, 0), hw, c_in);
        ECMap<T> wmap(weight->value.data.data(), kk, c_out);
        dxmap.noalias() = dymap * wmap.transpose();
      }
      if (bias) {
        for (int c = 0; c < c_out; ++c) {
          T s = 0;
          const T* p = dy.plane(in, c);
          for (size_t i = 0; i < hw; ++i) s += p[i];
          bias->grad.data[c] += s;
        }
      }
    }
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Channel normalization over (N, H, W) using batch statistics at every call.

template <typename T>
struct BatchNorm2d : Layer<T> {
  int channels;
  T eps = T(1e-5);
  ParamPtr<T> gamma, beta;
  Tensor<T> xhat_;
  std::vector<T> invstd_;

  BatchNorm2d(const std::string& name, int channels) : channels(channels) {
    Tensor<T> g(1, channels, 1, 1);
    g.fill(T(1));
    gamma = std::make_shared<Param<T>>(name + ".g", std::move(g));
    beta = std::make_shared<Param<T>>(name + ".b", Tensor<T>(1, channels, 1, 1));
  }

  BatchNorm2d(const BatchNorm2d& o, bool)
      : channels(o.channels), eps(o.eps), gamma(o.gamma), beta(o.beta) {}

  std::unique_ptr<Layer<T>> clone_shared() const override {
    return std::make_unique<BatchNorm2d>(*this, true);
  }

  void collect(std::vector<ParamPtr<T>>& out) const override {
    out.push_back(gamma);
    out.push_back(beta);
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.c != channels) throw ShapeError("BatchNorm2d: channel mismatch");
    const size_t hw = size_t(x.h) * x.w;
    const size_t cnt = size_t(x.n) * hw;
    xhat_ = Tensor<T>(x.n, x.c, x.h, x.w);
    invstd_.assign(channels, T(0));
    Tensor<T> y(x.n, x.c, x.h, x.w);
    for (int c = 0; c < channels; ++c) {
      T mean = 0;
      for (int in = 0; in < x.n; ++in) {
        const T* p = x.plane(in, c);
        for (size_t i = 0; i < hw; ++i) mean += p[i];
      }
      mean /= T(cnt);
      T var = 0;
      for (int in = 0; in < x.n; ++in) {
        const T* p = x.plane(in, c);
        for (size_t i = 0; i < hw; ++i) {
          T d = p[i] - mean;
          var += d * d;
        }
      }
      var /= T(cnt);
      T istd = T(1) / std::sqrt(var + eps);
      invstd_[c] = istd;
      T g = gamma->value.data[c], b = beta->value.data[c];
      for (int in = 0; in < x.n; ++in) {
        const T* p = x.plane(in, c);
        T* xh = xhat_.plane(in, c);
        T* py = y.plane(in, c);
        for (size_t i = 0; i < hw; ++i) {
          xh[i] = (p[i] - mean) * istd;
          py[i] = g * xh[i] + b;
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const size_t hw = size_t(dy.h) * dy.w;
    const size_t cnt = size_t(dy.n) * hw;
    Tensor<T> dx(dy.n, dy.c, dy.h, dy.w);
    for (int c = 0; c < channels; ++c) {
      T sum_dy = 0, sum_dy_xhat = 0;
      for (int in = 0; in < dy.n; ++in) {
        const T* pdy = dy.plane(in, c);
        const T* xh = xhat_.plane(in, c);
        for (size_t i = 0; i < hw; ++i) {
          sum_dy += pdy[i];
          sum_dy_xhat += pdy[i] * xh[i];
        }
      }
      gamma->grad.data[c] += sum_dy_xhat;
      beta->grad.data[c] += sum_dy;
      T g = gamma->value.data[c];
      T k = g * invstd_[c];
      T mean_dy = sum_dy / T(cnt);
      T mean_dy_xhat = sum_dy_xhat / T(cnt);
      for (int in = 0; in < dy.n; ++in) {
        const T* pdy = dy.plane(in, c);
        const T* xh = xhat_.plane(in, c);
        T* pdx = dx.plane(in, c);
        for (size_t i = 0; i < hw; ++i)
          pdx[i] = k * (pdy[i] - mean_dy - xh[i] * mean_dy_xhat);
      }
    }
    return dx;
  }
};

template <typename T>
struct LeakyReLU : Layer<T> {
  T slope;
  Tensor<T> input_;

  explicit LeakyReLU(T slope = T(0.01)) : slope(slope) {}

  std::unique_ptr<Layer<T>> clone_shared() const override {
    return std::make_unique<LeakyReLU>(slope);
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    input_ = x;
    Tensor<T> y = x;
    for (T& v : y.data) v = v > T(0) ? v : slope * v;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx = dy;
    for (size_t i = 0; i < dx.data.size(); ++i)
      if (input_.data[i] <= T(0)) dx.data[i] *= slope;
    return dx;
  }
};

template <typename T>
struct Sigmoid : Layer<T> {
  Tensor<T> out_;

  std::unique_ptr<Layer<T>> clone_shared() const override { return std::make_unique<Sigmoid>(); }

  Tensor<T> forward(const Tensor<T>& x) override {
    out_ = x;
    for (T& v : out_.data) v = T(1) / (T(1) + std::exp(-v));
    return out_;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx = dy;
    for (size_t i = 0; i < dx.data.size(); ++i)
      dx.data[i] *= out_.data[i] * (T(1) - out_.data[i]);
    return dx;
  }
};

template <typename T>
struct MaxPool2 : Layer<T> {
  int in_h = 0, in_w = 0, n = 0, c = 0;
  std::vector<int> argmax_;

  std::unique_ptr<Layer<T>> clone_shared() const override { return std::make_unique<MaxPool2>(); }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.h % 2 || x.w % 2) throw ShapeError("MaxPool2: odd spatial size");
    n = x.n;
    c = x.c;
    in_h = x.h;
    in_w = x.w;
    int oh = x.h / 2, ow = x.w / 2;
    Tensor<T> y(x.n, x.c, oh, ow);
    argmax_.resize(y.size());
    size_t oi = 0;
    for (int in = 0; in < x.n; ++in)
      for (int ch = 0; ch < x.c; ++ch) {
        const T* p = x.plane(in, ch);
        for (int y2 = 0; y2 < oh; ++y2)
          for (int x2 = 0; x2 < ow; ++x2, ++oi) {
            int base = (y2 * 2) * in_w + x2 * 2;
            int best = base;
            T bv = p[base];
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx) {
                int idx = base + dy * in_w + dx;
                if (p[idx] > bv) {
                  bv = p[idx];
                  best = idx;
                }
              }
            y.data[oi] = bv;
            argmax_[oi] = best;
          }
      }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(n, c, in_h, in_w);
    size_t oi = 0;
    const size_t hw = size_t(in_h) * in_w;
    for (int in = 0; in < n; ++in)
      for (int ch = 0; ch < c; ++ch) {
        T* pdx = dx.data.data() + (size_t(in) * c + ch) * hw;
        for (int i = 0; i < dy.h * dy.w; ++i, ++oi) pdx[argmax_[oi]] += dy.data[oi];
      }
    return dx;
  }
};

// Bilinear resize, endpoint convention: pixel j of an n-cell axis is at
// normalized -1 + 2j/(n-1), so resizing preserves normalized positions.
template <typename T>
void bilinear_plane(const T* src, int sh, int sw, T* dst, int dh, int dw) {
  for (int y = 0; y < dh; ++y) {
    double fy = dh == 1 ? 0.0 : double(y) * (sh - 1) / (dh - 1);
    int y0 = int(fy);
    int y1 = std::min(y0 + 1, sh - 1);
    double wy = fy - y0;
    for (int x = 0; x < dw; ++x) {
      double fx = dw == 1 ? 0.0 : double(x) * (sw - 1) / (dw - 1);
      int x0 = int(fx);
      int x1 = std::min(x0 + 1, sw - 1);
      double wx = fx - x0;
      double v = (1 - wy) * ((1 - wx) * src[y0 * sw + x0] + wx * src[y0 * sw + x1]) +
                 wy * ((1 - wx) * src[y1 * sw + x0] + wx * src[y1 * sw + x1]);
      dst[y * dw + x] = T(v);
    }
  }
}

template <typename T>
struct UpsampleBilinear2 : Layer<T> {
  int n = 0, c = 0, in_h = 0, in_w = 0;

  std::unique_ptr<Layer<T>> clone_shared() const override {
    return std::make_unique<UpsampleBilinear2>();
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    n = x.n;
    c = x.c;
    in_h = x.h;
    in_w = x.w;
    Tensor<T> y(x.n, x.c, x.h * 2, x.w * 2);
    for (int in = 0; in < x.n; ++in)
      for (int ch = 0; ch < x.c; ++ch)
        bilinear_plane(x.plane(in, ch), x.h, x.w, y.plane(in, ch), y.h, y.w);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(n, c, in_h, in_w);
    int dh = in_h * 2, dw = in_w * 2;
    for (int in = 0; in < n; ++in)
      for (int ch = 0; ch < c; ++ch) {
        const T* pdy = dy.plane(in, ch);
        T* pdx = dx.plane(in, ch);
        for (int y = 0; y < dh; ++y) {
          double fy = double(y) * (in_h - 1) / (dh - 1);
          int y0 = int(fy);
          int y1 = std::min(y0 + 1, in_h - 1);
          double wy = fy - y0;
          for (int x = 0; x < dw; ++x) {
            double fx = double(x) * (in_w - 1) / (dw - 1);
            int x0 = int(fx);
            int x1 = std::min(x0 + 1, in_w - 1);
            double wx = fx - x0;
            T g = pdy[y * dw + x];
            pdx[y0 * in_w + x0] += T((1 - wy) * (1 - wx)) * g;
            pdx[y0 * in_w + x1] += T((1 - wy) * wx) * g;
            pdx[y1 * in_w + x0] += T(wy * (1 - wx)) * g;
            pdx[y1 * in_w + x1] += T(wy * wx) * g;
          }
        }
      }
    return dx;
  }
};

template <typename T>
struct Sequential {
  std::vector<std::unique_ptr<Layer<T>>> layers;

  Sequential() = default;
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  void add(std::unique_ptr<Layer<T>> l) { layers.push_back(std::move(l)); }

  Tensor<T> forward(Tensor<T> x) {
    for (auto& l : layers) x = l->forward(x);
    return x;
  }

  Tensor<T> backward(Tensor<T> dy) {
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) dy = (*it)->backward(dy);
    return dy;
  }

  void collect(std::vector<ParamPtr<T>>& out) const {
    for (const auto& l : layers) l->collect(out);
  }

  Sequential clone_shared() const {
    Sequential s;
    for (const auto& l : layers) s.add(l->clone_shared());
    return s;
  }
};

// ---------------------------------------------------------------------------
// Spatial softmax -> coordinate expectation, and its inverse-mode gradient.

template <typename T>
struct SoftArgmaxCache {
  Tensor<T> probs;   // (N, K, H, W)
  Tensor<T> points;  // (N, K, 2, 1), x then y, normalized [-1, 1]
  T temp = T(1);
};

template <typename T>
SoftArgmaxCache<T> spatial_soft_argmax(const Tensor<T>& act, T temp) {
  SoftArgmaxCache<T> cache;
  cache.temp = temp;
  cache.probs = Tensor<T>(act.n, act.c, act.h, act.w);
  cache.points = Tensor<T>(act.n, act.c, 2, 1);
  const size_t hw = size_t(act.h) * act.w;
  for (int in = 0; in < act.n; ++in)
    for (int k = 0; k < act.c; ++k) {
      const T* a = act.plane(in, k);
      T* p = cache.probs.plane(in, k);
      T mx = a[0];
      for (size_t i = 1; i < hw; ++i) mx = std::max(mx, a[i]);
      T sum = 0;
      for (size_t i = 0; i < hw; ++i) {
        p[i] = std::exp((a[i] - mx) / temp);
        sum += p[i];
      }
      T ex = 0, ey = 0;
      for (int y = 0; y < act.h; ++y) {
        T gy = grid_coord<T>(y, act.h);
        for (int x = 0; x < act.w; ++x) {
          T pv = p[y * act.w + x] / sum;
          p[y * act.w + x] = pv;
          ex += pv * grid_coord<T>(x, act.w);
          ey += pv * gy;
        }
      }
      cache.points.data[(size_t(in) * act.c + k) * 2 + 0] = ex;
      cache.points.data[(size_t(in) * act.c + k) * 2 + 1] = ey;
    }
  return cache;
}

template <typename T>
Tensor<T> spatial_soft_argmax_backward(const SoftArgmaxCache<T>& cache, const Tensor<T>& dpoints) {
  const Tensor<T>& p = cache.probs;
  Tensor<T> dact(p.n, p.c, p.h, p.w);
  for (int in = 0; in < p.n; ++in)
    for (int k = 0; k < p.c; ++k) {
      const T* pp = p.plane(in, k);
      T* da = dact.plane(in, k);
      T px = cache.points.data[(size_t(in) * p.c + k) * 2 + 0];
      T py = cache.points.data[(size_t(in) * p.c + k) * 2 + 1];
      T dx = dpoints.data[(size_t(in) * p.c + k) * 2 + 0];
      T dy = dpoints.data[(size_t(in) * p.c + k) * 2 + 1];
      for (int y = 0; y < p.h; ++y) {
        T gy = grid_coord<T>(y, p.h);
        for (int x = 0; x < p.w; ++x) {
          T gx = grid_coord<T>(x, p.w);
          da[y * p.w + x] = pp[y * p.w + x] / cache.temp * ((gx - px) * dx + (gy - py) * dy);
        }
      }
    }
  return dact;
}

// ---------------------------------------------------------------------------
// Gaussian heatmap rendering: map k holds exp(-|u - phi_k|^2 / (2 sigma^2))
// on the normalized grid.

template <typename T>
Tensor<T> render_heatmaps(const Tensor<T>& points, int h, int w, T sigma) {
  if (sigma <= T(0)) throw ParamError("render_heatmaps: sigma must be > 0");
  Tensor<T> maps(points.n, points.c, h, w);
  const T inv = T(1) / (2 * sigma * sigma);
  for (int in = 0; in < points.n; ++in)
    for (int k = 0; k < points.c; ++k) {
      T px = points.data[(size_t(in) * points.c + k) * 2 + 0];
      T py = points.data[(size_t(in) * points.c + k) * 2 + 1];
      T* m = maps.plane(in, k);
      for (int y = 0; y < h; ++y) {
        T dy = grid_coord<T>(y, h) - py;
        for (int x = 0; x < w; ++x) {
          T dx = grid_coord<T>(x, w) - px;
          m[y * w + x] = std::exp(-(dx * dx + dy * dy) * inv);
        }
      }
    }
  return maps;
}

template <typename T>
Tensor<T> render_heatmaps_backward(const Tensor<T>& points, const Tensor<T>& maps,
                                   const Tensor<T>& dmaps, T sigma) {
  Tensor<T> dpoints(points.n, points.c, 2, 1);
  const T inv = T(1) / (sigma * sigma);
  for (int in = 0; in < points.n; ++in)
    for (int k = 0; k < points.c; ++k) {
      T px = points.data[(size_t(in) * points.c + k) * 2 + 0];
      T py = points.data[(size_t(in) * points.c + k) * 2 + 1];
      const T* m = maps.plane(in, k);
      const T* dm = dmaps.plane(in, k);
      T gx = 0, gy = 0;
      for (int y = 0; y < maps.h; ++y) {
        T dyv = grid_coord<T>(y, maps.h) - py;
        for (int x = 0; x < maps.w; ++x) {
          T dxv = grid_coord<T>(x, maps.w) - px;
          T s = dm[y * maps.w + x] * m[y * maps.w + x] * inv;
          gx += s * dxv;
          gy += s * dyv;
        }
      }
      dpoints.data[(size_t(in) * points.c + k) * 2 + 0] = gx;
      dpoints.data[(size_t(in) * points.c + k) * 2 + 1] = gy;
    }
  return dpoints;
}

// ---------------------------------------------------------------------------

template <typename T>
T mse(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) throw ShapeError("mse: shape mismatch");
  double s = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    double d = double(a.data[i]) - double(b.data[i]);
    s += d * d;
  }
  return T(s / double(a.data.size()));
}

template <typename T>
Tensor<T> mse_backward(const Tensor<T>& a, const Tensor<T>& b, T upstream = T(1)) {
  Tensor<T> g = Tensor<T>::zeros_like(a);
  T scale = upstream * T(2) / T(a.data.size());
  for (size_t i = 0; i < a.data.size(); ++i) g.data[i] = scale * (a.data[i] - b.data[i]);
  return g;
}

// ---------------------------------------------------------------------------

template <typename T>
struct Adam {
  double lr = 1e-4;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step_count = 0;
  std::map<const Param<T>*, std::pair<Tensor<T>, Tensor<T>>> state;

  explicit Adam(double lr) : lr(lr) {}

  void step(const std::vector<ParamPtr<T>>& params) {
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, double(step_count));
    const double bc2 = 1.0 - std::pow(beta2, double(step_count));
    for (const auto& p : params) {
      auto it = state.find(p.get());
      if (it == state.end()) {
        it = state.emplace(p.get(), std::make_pair(Tensor<T>::zeros_like(p->value),
                                                   Tensor<T>::zeros_like(p->value)))
                 .first;
      }
      Tensor<T>& m = it->second.first;
      Tensor<T>& v = it->second.second;
      for (size_t i = 0; i < p->value.data.size(); ++i) {
        double g = double(p->grad.data[i]);
        double mi = beta1 * double(m.data[i]) + (1 - beta1) * g;
        double vi = beta2 * double(v.data[i]) + (1 - beta2) * g * g;
        m.data[i] = T(mi);
        v.data[i] = T(vi);
        p->value.data[i] -= T(lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps));
      }
    }
  }
};

// Deduplicates shared parameters so a weight used by several layer instances
// is updated once per step.
template <typename T>
std::vector<ParamPtr<T>> unique_params(const std::vector<ParamPtr<T>>& in) {
  std::vector<ParamPtr<T>> out;
  for (const auto& p : in) {
    bool seen = false;
    for (const auto& q : out)
      if (q.get() == p.get()) {
        seen = true;
        break;
      }
    if (!seen) out.push_back(p);
  }
  return out;
}

}  // namespace nn
}  // namespace dptrack
