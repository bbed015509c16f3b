#pragma once

#include "hadcal/core.hpp"

namespace hadcal {

// Chebyshev-Gauss-Lobatto collocation on [a, b], nodes ascending and
// clustered at both ends; differentiation via barycentric weights and
// Clenshaw-Curtis quadrature weights.
struct ChebGrid {
  int n = 0;  // number of nodes
  double a = 0.0, b = 1.0;
  RVec s;
  RMat d;
  RVec w;

  ChebGrid() = default;
  ChebGrid(int nodes, double a_, double b_) : n(nodes), a(a_), b(b_) {
    if (n < 3) throw PipelineError("cheb", "need at least 3 collocation nodes");
    const int N = n - 1;
    s.resize(n);
    for (int j = 0; j < n; ++j)
      s(j) = a + (b - a) * 0.5 * (1.0 - std::cos(M_PI * j / N));

    RVec lam(n);  // barycentric weights for CGL nodes
    for (int j = 0; j < n; ++j) {
      lam(j) = (j % 2 == 0 ? 1.0 : -1.0);
      if (j == 0 || j == N) lam(j) *= 0.5;
    }
    d.resize(n, n);
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        d(i, j) = (lam(j) / lam(i)) / (s(i) - s(j));
        acc += d(i, j);
      }
      d(i, i) = -acc;
    }

    // quadrature: integrate the cardinal interpolants exactly through the
    // Chebyshev coefficient transform
    w.resize(n);
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int k = 0; k <= N; k += 2) {
        double ck = 2.0 / N;
        if (k == 0 || k == N) ck *= 0.5;
        double cj = (j == 0 || j == N) ? 0.5 : 1.0;
        acc += ck * cj * std::cos(M_PI * k * j / N) * 2.0 / (1.0 - double(k) * k);
      }
      w(j) = acc * (b - a) * 0.5;
    }
  }
};

}  // namespace hadcal
