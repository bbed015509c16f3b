#pragma once

#include <array>
#include <map>
#include <vector>

#include "hadcal/core.hpp"

namespace hadcal {

// Uniform periodic grid on T^d. Points x_j = j * period / n per axis, flattened
// with axis 0 fastest: idx = j0 + n*j1 + n^2*j2. The frequency lattice per axis
// is {-n/2+1, ..., n/2} (Nyquist assigned to +n/2); mode storage uses the same
// flattening with DFT index order [0, 1, ..., n-1].
struct GridSpec {
  int dim = 1;
  int n = 8;
  double period = kTwoPi;

  GridSpec() = default;
  GridSpec(int dim_, int n_, double period_ = kTwoPi)
      : dim(dim_), n(n_), period(period_) {
    if (dim < 1 || dim > 3) throw PipelineError("grid", "dim must be 1, 2 or 3");
    if (n < 2 || n % 2 != 0) throw PipelineError("grid", "n_per_axis must be even and >= 2");
    if (period <= 0) throw PipelineError("grid", "period must be positive");
  }

  int points() const {
    int p = 1;
    for (int a = 0; a < dim; ++a) p *= n;
    return p;
  }

  bool operator==(const GridSpec& o) const {
    return dim == o.dim && n == o.n && period == o.period;
  }
  bool operator!=(const GridSpec& o) const { return !(*this == o); }

  std::array<int, 3> unflatten(int idx) const {
    std::array<int, 3> j{0, 0, 0};
    for (int a = 0; a < dim; ++a) {
      j[a] = idx % n;
      idx /= n;
    }
    return j;
  }

  int mode_int(int dft_index) const {
    return dft_index <= n / 2 ? dft_index : dft_index - n;
  }

  // physical wave vector of the flattened mode index
  std::array<double, 3> kvec(int idx) const {
    auto j = unflatten(idx);
    std::array<double, 3> k{0.0, 0.0, 0.0};
    for (int a = 0; a < dim; ++a) k[a] = kTwoPi / period * mode_int(j[a]);
    return k;
  }

  double k2(int idx) const {
    auto k = kvec(idx);
    return k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
  }

  double abs_k(int idx) const { return std::sqrt(k2(idx)); }

  std::array<double, 3> coords(int idx) const {
    auto j = unflatten(idx);
    std::array<double, 3> x{0.0, 0.0, 0.0};
    for (int a = 0; a < dim; ++a) x[a] = period / n * j[a];
    return x;
  }

  // flattened index of the mode with per-axis integer frequencies m
  int mode_index(std::array<int, 3> m) const {
    int idx = 0, stride = 1;
    for (int a = 0; a < dim; ++a) {
      int j = m[a] >= 0 ? m[a] : m[a] + n;
      idx += j * stride;
      stride *= n;
    }
    return idx;
  }
};

namespace detail {

inline const Mat& dft_forward(int n) {
  static std::map<int, Mat> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  Mat w(n, n);
  for (int m = 0; m < n; ++m)
    for (int j = 0; j < n; ++j)
      w(m, j) = std::exp(Cplx(0.0, -kTwoPi * m * j / n)) / double(n);
  return cache.emplace(n, std::move(w)).first->second;
}

inline const Mat& dft_backward(int n) {
  static std::map<int, Mat> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  Mat w(n, n);
  for (int j = 0; j < n; ++j)
    for (int m = 0; m < n; ++m)
      w(j, m) = std::exp(Cplx(0.0, kTwoPi * m * j / n));
  return cache.emplace(n, std::move(w)).first->second;
}

// Apply an n x n matrix along one axis of the flattened array (each column of
// `data` is one fiber component).
inline void transform_axis(const GridSpec& g, int axis, const Mat& w, Mat& data) {
  const int n = g.n;
  int stride = 1;
  for (int a = 0; a < axis; ++a) stride *= n;
  const int npts = g.points();
  const int outer = npts / (n * stride);
  Vec line(n), out(n);
  for (int c = 0; c < data.cols(); ++c) {
    for (int o = 0; o < outer; ++o) {
      for (int s = 0; s < stride; ++s) {
        const int base = o * n * stride + s;
        for (int j = 0; j < n; ++j) line(j) = data(base + j * stride, c);
        out.noalias() = w * line;
        for (int j = 0; j < n; ++j) data(base + j * stride, c) = out(j);
      }
    }
  }
}

}  // namespace detail

// point values (points x fiber) -> Fourier coefficients, same layout
inline Mat grid_to_modes(const GridSpec& g, Mat values) {
  for (int a = 0; a < g.dim; ++a)
    detail::transform_axis(g, a, detail::dft_forward(g.n), values);
  return values;
}

inline Mat grid_from_modes(const GridSpec& g, Mat modes) {
  for (int a = 0; a < g.dim; ++a)
    detail::transform_axis(g, a, detail::dft_backward(g.n), modes);
  return modes;
}

}  // namespace hadcal
