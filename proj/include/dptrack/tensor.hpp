#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "dptrack/common.hpp"

namespace dptrack {

// Dense NCHW tensor. Rank-2/3 data uses trailing singleton dims.
template <typename T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int n, int c, int h, int w) : n(n), c(c), h(h), w(w), data(size_t(n) * c * h * w, T(0)) {}

  static Tensor zeros_like(const Tensor& o) { return Tensor(o.n, o.c, o.h, o.w); }

  size_t size() const { return data.size(); }
  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }

  T* plane(int in, int ic) { return data.data() + (size_t(in) * c + ic) * h * w; }
  const T* plane(int in, int ic) const { return data.data() + (size_t(in) * c + ic) * h * w; }

  T& at(int in, int ic, int iy, int ix) { return data[((size_t(in) * c + ic) * h + iy) * w + ix]; }
  T at(int in, int ic, int iy, int ix) const {
    return data[((size_t(in) * c + ic) * h + iy) * w + ix];
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  bool finite() const {
    for (T v : data)
      if (!std::isfinite(double(v))) return false;
    return true;
  }
};

template <typename T>
void fill_normal(Tensor<T>& t, std::mt19937& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (T& v : t.data) v = T(dist(rng));
}

// Normalized image coordinates span [-1, 1] with both endpoints on the grid:
// cell j of an n-cell axis sits at -1 + 2j/(n-1).
template <typename T>
inline T grid_coord(int j, int n) {
  if (n == 1) return T(0);
  return T(-1) + T(2) * T(j) / T(n - 1);
}

template <typename T>
inline T norm_to_pixel(T coord, int n) {
  return (coord + T(1)) * T(0.5) * T(n - 1);
}

template <typename T>
inline T pixel_to_norm(T px, int n) {
  if (n == 1) return T(0);
  return px * T(2) / T(n - 1) - T(1);
}

}  // namespace dptrack
