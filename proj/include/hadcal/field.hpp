#pragma once

#include <cmath>

#include "hadcal/grid.hpp"

namespace hadcal {

// Discretized bundle-valued section: complex values of shape (points x fiber).
struct SectionField {
  GridSpec grid;
  int fiber = 1;
  Mat values;  // points x fiber

  SectionField() = default;
  SectionField(GridSpec g, int f) : grid(g), fiber(f), values(Mat::Zero(g.points(), f)) {}
  SectionField(GridSpec g, int f, Mat v) : grid(g), fiber(f), values(std::move(v)) {
    if (values.rows() != grid.points() || values.cols() != fiber)
      throw PipelineError("field", "value shape does not match grid/fiber");
  }

  static SectionField zero(GridSpec g, int f) { return SectionField(g, f); }

  Mat to_modes() const { return grid_to_modes(grid, values); }

  static SectionField from_modes(GridSpec g, int f, const Mat& modes) {
    return SectionField(g, f, grid_from_modes(g, modes));
  }

  // mean-normalized L^2 norm: sqrt( (1/N) sum_x sum_c |v|^2 )
  double norm_flat() const {
    return values.norm() / std::sqrt(double(grid.points()));
  }

  double max_abs() const { return values.cwiseAbs().maxCoeff(); }

  Vec to_vec() const {  // layout: idx = point * fiber + component
    Vec v(values.rows() * values.cols());
    for (int p = 0; p < values.rows(); ++p)
      for (int c = 0; c < values.cols(); ++c) v(p * fiber + c) = values(p, c);
    return v;
  }

  static SectionField from_vec(GridSpec g, int f, const Vec& v) {
    Mat m(g.points(), f);
    for (int p = 0; p < g.points(); ++p)
      for (int c = 0; c < f; ++c) m(p, c) = v(p * f + c);
    return SectionField(g, f, std::move(m));
  }

  SectionField& operator+=(const SectionField& o) { values += o.values; return *this; }
  SectionField& operator-=(const SectionField& o) { values -= o.values; return *this; }
  SectionField& operator*=(Cplx z) { values *= z; return *this; }
  friend SectionField operator+(SectionField a, const SectionField& b) { return a += b; }
  friend SectionField operator-(SectionField a, const SectionField& b) { return a -= b; }
  friend SectionField operator*(Cplx z, SectionField a) { return a *= z; }
};

// mean-normalized flat pairing: (1/N) sum_x sum_c conj(u) v
inline Cplx inner_flat(const SectionField& u, const SectionField& v) {
  return (u.values.conjugate().cwiseProduct(v.values)).sum() / double(u.grid.points());
}

// mode supported entirely on one lattice point k with a unit fiber vector
inline SectionField unit_mode(const GridSpec& g, int fiber, int mode_idx, int comp) {
  Mat modes = Mat::Zero(g.points(), fiber);
  modes(mode_idx, comp) = 1.0;
  return SectionField::from_modes(g, fiber, modes);
}

// random band-limited field: gaussian coefficients on modes with |m_a| <= kmax
inline SectionField random_bandlimited(const GridSpec& g, int fiber, int kmax, Rng& rng) {
  Mat modes = Mat::Zero(g.points(), fiber);
  for (int idx = 0; idx < g.points(); ++idx) {
    auto j = g.unflatten(idx);
    bool inside = true;
    for (int a = 0; a < g.dim; ++a)
      if (std::abs(g.mode_int(j[a])) > kmax) inside = false;
    if (!inside) continue;
    for (int c = 0; c < fiber; ++c) modes(idx, c) = randn_cplx(rng);
  }
  return SectionField::from_modes(g, fiber, modes);
}

}  // namespace hadcal
