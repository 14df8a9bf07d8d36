#pragma once

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "dptrack/common.hpp"

namespace dptrack {

struct CostMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> c;

  CostMatrix() = default;
  CostMatrix(int rows, int cols) : rows(rows), cols(cols), c(size_t(rows) * cols, 0.0) {}

  double& at(int i, int j) { return c[size_t(i) * cols + j]; }
  double at(int i, int j) const { return c[size_t(i) * cols + j]; }
};

using Assignment = std::vector<std::pair<int, int>>;

// Minimum-cost bipartite assignment (Kuhn-Munkres via shortest augmenting
// paths with potentials). Rectangular inputs are padded to square with a
// cost strictly above every real entry; padded matches are dropped, so the
// result has min(rows, cols) pairs. Rows are processed in index order, which
// fixes the outcome between equal-cost optima.
inline Assignment km_assign(const CostMatrix& cost) {
  const int m = cost.rows, n = cost.cols;
  if (m == 0 || n == 0) return {};

  double max_entry = 0;
  for (double v : cost.c) {
    if (!std::isfinite(v)) throw ParamError("km_assign: non-finite cost entry");
    max_entry = std::max(max_entry, v);
  }
  const int dim = std::max(m, n);
  const double pad = max_entry + 1.0;
  auto entry = [&](int i, int j) -> double {
    return (i < m && j < n) ? cost.at(i, j) : pad;
  };

  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials; p[j] = row matched to column j.
  std::vector<double> u(dim + 1, 0), v(dim + 1, 0), minv(dim + 1, 0);
  std::vector<int> p(dim + 1, 0), way(dim + 1, 0);
  std::vector<char> used(dim + 1, 0);

  for (int i = 1; i <= dim; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = 0;
      double delta = inf;
      for (int j = 1; j <= dim; ++j) {
        if (used[j]) continue;
        double cur = entry(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= dim; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  Assignment out;
  for (int j = 1; j <= dim; ++j) {
    int i = p[j];
    if (i >= 1 && i <= m && j <= n) out.emplace_back(i - 1, j - 1);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace dptrack
