#pragma once
#include <cmath>
#include <limits>
#include <vector>

#include "doa/error.hpp"

namespace doa {

struct Assignment {
  std::vector<int> row_to_col;
  double cost = 0.0;
};

// Kuhn-Munkres via shortest augmenting paths with dual potentials, O(n^3).
// `cost` is n x n row-major; returns the minimum-cost perfect matching.
inline Assignment hungarian(const std::vector<double>& cost, std::size_t n) {
  if (cost.size() != n * n) throw InvalidArgument("hungarian: bad cost size");
  for (double c : cost)
    if (!std::isfinite(c)) throw InvalidArgument("hungarian: non-finite cost");

  Assignment out;
  out.row_to_col.assign(n, -1);
  if (n == 0) return out;

  const double inf = std::numeric_limits<double>::infinity();
  // 1-based duals; p[j] = row matched to column j, column 0 is virtual.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1, 0);

  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    minv.assign(n + 1, inf);
    used.assign(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
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
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  for (std::size_t j = 1; j <= n; ++j)
    if (p[j] != 0) out.row_to_col[p[j] - 1] = static_cast<int>(j - 1);
  for (std::size_t i = 0; i < n; ++i)
    out.cost += cost[i * n + static_cast<std::size_t>(out.row_to_col[i])];
  return out;
}

// Rectangular costs padded square with `pad`; padded rows/cols absorb the
// surplus so real entries compete only on real costs.
inline Assignment hungarian_padded(const std::vector<double>& cost,
                                   std::size_t rows, std::size_t cols,
                                   double pad) {
  if (cost.size() != rows * cols)
    throw InvalidArgument("hungarian_padded: bad cost size");
  const std::size_t n = std::max(rows, cols);
  std::vector<double> sq(n * n, pad);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) sq[i * n + j] = cost[i * cols + j];
  Assignment a = hungarian(sq, n);
  a.row_to_col.resize(rows);
  for (int& c : a.row_to_col)
    if (c >= static_cast<int>(cols)) c = -1;  // matched to padding
  return a;
}

}  // namespace doa
