#pragma once

#include <functional>
#include <memory>

#include "hadcal/metric.hpp"

namespace hadcal {
namespace cov {

// Covariant calculus for g = -dt^2 + h_t, evaluated on truncated Taylor
// series in t. Two backends share the same code:
//   GridBackend — entries are scalar fields on the grid, spatial derivatives
//                 are spectral (used for spatially varying metrics);
//   ModeBackend — everything is restricted to a single Fourier mode e^{ikx};
//                 metric entries are x-constant scalars with zero spatial
//                 derivative, section entries pick up i*k_a.
// The Coeff/Field split exists for the derivative rule only: coefficients of
// operators never carry the plane-wave factor.

struct GridBackend {
  GridSpec grid;
  using Coeff = Eigen::ArrayXcd;
  using Field = Eigen::ArrayXcd;

  Coeff czero() const { return Coeff::Zero(grid.points()); }
  Field fzero() const { return czero(); }
  Coeff cone() const { return Coeff::Constant(grid.points(), 1.0); }

  Coeff dcoeff(int axis, const Coeff& c) const { return spectral(axis, c); }
  Field dfield(int axis, const Field& f) const { return spectral(axis, f); }

  Eigen::ArrayXcd spectral(int axis, const Eigen::ArrayXcd& v) const {
    Mat m = grid_to_modes(grid, v.matrix());
    for (int p = 0; p < grid.points(); ++p) m(p, 0) *= Cplx(0.0, grid.kvec(p)[axis]);
    return grid_from_modes(grid, m).col(0).array();
  }

  void invert_pointwise(std::vector<Coeff>& entries, int d) const {
    Mat a(d, d);
    for (int p = 0; p < grid.points(); ++p) {
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = entries[i * d + j](p);
      Mat ai = a.inverse();
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) entries[i * d + j](p) = ai(i, j);
    }
  }

  static double norm(const Field& f) { return std::sqrt(f.abs2().mean()); }
};

struct ModeBackend {
  std::array<double, 3> k{0.0, 0.0, 0.0};
  using Coeff = Cplx;
  using Field = Cplx;

  Coeff czero() const { return 0.0; }
  Field fzero() const { return 0.0; }
  Coeff cone() const { return 1.0; }

  Coeff dcoeff(int, const Coeff&) const { return 0.0; }
  Field dfield(int axis, const Field& f) const { return Cplx(0.0, k[axis]) * f; }

  void invert_pointwise(std::vector<Coeff>& entries, int d) const {
    Mat a(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) a(i, j) = entries[i * d + j];
    Mat ai = a.inverse();
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) entries[i * d + j] = ai(i, j);
  }

  static double norm(const Field& f) { return std::abs(f); }
};

// ---- generic truncated Taylor series helpers -------------------------------

template <class T>
std::vector<T> ser_mul(const std::vector<T>& a, const std::vector<T>& b, const T& zero) {
  int la = int(a.size()), lb = int(b.size());
  int l = std::min(la, lb);
  std::vector<T> out(l, zero);
  for (int n = 0; n < l; ++n)
    for (int j = 0; j <= n; ++j) out[n] += a[j] * b[n - j];
  return out;
}

template <class T>
std::vector<T> ser_add(std::vector<T> a, const std::vector<T>& b) {
  int l = std::min(a.size(), b.size());
  a.resize(l);
  for (int n = 0; n < l; ++n) a[n] += b[n];
  return a;
}

template <class T>
std::vector<T> ser_sub(std::vector<T> a, const std::vector<T>& b) {
  int l = std::min(a.size(), b.size());
  a.resize(l);
  for (int n = 0; n < l; ++n) a[n] -= b[n];
  return a;
}

template <class T>
std::vector<T> ser_scale(std::vector<T> a, Cplx z) {
  for (auto& c : a) c = z * c;
  return a;
}

template <class T>
std::vector<T> ser_dt(const std::vector<T>& a) {
  std::vector<T> out;
  for (size_t n = 1; n < a.size(); ++n) out.push_back(double(n) * a[n]);
  return out;
}

// ---- metric-side (Coeff) geometry, shared across modes ---------------------

template <class B>
struct Geometry {
  using C = typename B::Coeff;
  using CS = std::vector<C>;

  int d = 3, dim = 4, ord = 8;
  double lambda = 0.0;

  std::vector<CS> g, ginv;   // dim*dim entries
  std::vector<CS> gam;       // dim^3: [c][a][b] -> c*dim*dim + a*dim + b
  std::vector<CS> rup2;      // dim^4: R_a^{~cd}_b -> ((a*dim+b)*dim+c)*dim+dd
  std::vector<CS> umat, uinv;  // d*d spatial transport, row i col j
  CS s_scal, s_inv;
  CS tr_r;
  std::vector<CS> hinv;  // d*d
  std::vector<CS> einstein_resid;  // Ric - lambda*g, dim*dim (diagnostic)

  int i2(int a, int b) const { return a * dim + b; }
  int i3(int c, int a, int b) const { return (c * dim + a) * dim + b; }
  int i4(int a, int b, int c, int dd) const { return ((a * dim + b) * dim + c) * dim + dd; }
};

template <class B>
Geometry<B> build_geometry(const MetricFamily& hm, const B& bk, double lambda) {
  using C = typename B::Coeff;
  using CS = std::vector<C>;
  Geometry<B> geo;
  geo.d = hm.grid.dim;
  geo.dim = geo.d + 1;
  geo.ord = hm.internal_order;
  geo.lambda = lambda;
  const int d = geo.d, dim = geo.dim, L = geo.ord + 1;

  auto entry = [&](int n, int i, int j) -> C {
    if constexpr (std::is_same_v<B, ModeBackend>) {
      return hm.coeff[n][0](i, j);
    } else {
      C c = bk.czero();
      for (int p = 0; p < hm.grid.points(); ++p) c(p) = hm.coeff[n][p](i, j);
      return c;
    }
  };
  if constexpr (std::is_same_v<B, ModeBackend>) {
    if (!hm.spatially_constant)
      throw PipelineError("geometry", "mode-reduced assembly requires an x-constant metric");
  }

  const C zero = bk.czero();
  CS zs(L, zero);

  // h, h^{-1}
  std::vector<CS> h(d * d, zs), hinv(d * d, zs);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int n = 0; n < L; ++n) h[i * d + j][n] = entry(n, i, j);
  {
    // order-0 inverse pointwise, then the Neumann-type recursion
    std::vector<C> h0(d * d);
    for (int e = 0; e < d * d; ++e) h0[e] = h[e][0];
    bk.invert_pointwise(h0, d);
    for (int e = 0; e < d * d; ++e) hinv[e][0] = h0[e];
    for (int n = 1; n < L; ++n) {
      // hinv_n = -hinv_0 * sum_{j=1..n} h_j hinv_{n-j}
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
          C acc = zero;
          for (int m = 1; m <= n; ++m)
            for (int e = 0; e < d; ++e)
              for (int f = 0; f < d; ++f)
                acc += hinv[i * d + e][0] * h[e * d + f][m] * hinv[f * d + j][n - m];
          hinv[i * d + j][n] = -acc;
        }
    }
  }
  geo.hinv = hinv;

  // spacetime metric and inverse
  geo.g.assign(dim * dim, zs);
  geo.ginv.assign(dim * dim, zs);
  geo.g[0] = CS(L, zero);
  geo.g[0][0] = -bk.cone();
  geo.ginv[0] = geo.g[0];
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      geo.g[geo.i2(i + 1, j + 1)] = h[i * d + j];
      geo.ginv[geo.i2(i + 1, j + 1)] = hinv[i * d + j];
    }

  auto dcoeff_series = [&](int a, const CS& cs) -> CS {
    if (a == 0) return ser_dt(cs);
    CS out = cs;
    for (auto& c : out) c = bk.dcoeff(a - 1, c);
    return out;
  };

  // Christoffel symbols
  geo.gam.assign(dim * dim * dim, CS(L - 1, zero));
  for (int c = 0; c < dim; ++c)
    for (int a = 0; a < dim; ++a)
      for (int b = a; b < dim; ++b) {
        CS acc(L - 1, zero);
        for (int e = 0; e < dim; ++e) {
          CS t = ser_add(dcoeff_series(a, geo.g[geo.i2(e, b)]),
                         dcoeff_series(b, geo.g[geo.i2(e, a)]));
          t = ser_sub(t, dcoeff_series(e, geo.g[geo.i2(a, b)]));
          acc = ser_add(acc, ser_mul(geo.ginv[geo.i2(c, e)], t, zero));
        }
        acc = ser_scale(acc, 0.5);
        geo.gam[geo.i3(c, a, b)] = acc;
        geo.gam[geo.i3(c, b, a)] = acc;
      }

  // Riemann with (nab_a nab_b - nab_b nab_a) u_c = R_{abc}^{~e} u_e, lowered,
  // then raised to R_a^{~cd}_{~b} for the curvature term of the tensor wave
  // operator.
  const int Lr = L - 2;
  auto RUD = [&](int a, int b, int c, int dd) -> CS {
    CS out = ser_sub(dcoeff_series(b, geo.gam[geo.i3(dd, a, c)]),
                     dcoeff_series(a, geo.gam[geo.i3(dd, b, c)]));
    for (int e = 0; e < dim; ++e) {
      out = ser_add(out, ser_mul(geo.gam[geo.i3(e, a, c)], geo.gam[geo.i3(dd, b, e)], zero));
      out = ser_sub(out, ser_mul(geo.gam[geo.i3(e, b, c)], geo.gam[geo.i3(dd, a, e)], zero));
    }
    out.resize(std::min<size_t>(out.size(), Lr), zero);
    return out;
  };
  std::vector<CS> rlow(dim * dim * dim * dim, CS(Lr, zero));
  std::vector<CS> rud(dim * dim * dim * dim, CS(Lr, zero));
  for (int a = 0; a < dim; ++a)
    for (int b = 0; b < dim; ++b)
      for (int c = 0; c < dim; ++c)
        for (int dd = 0; dd < dim; ++dd) rud[geo.i4(a, b, c, dd)] = RUD(a, b, c, dd);
  for (int a = 0; a < dim; ++a)
    for (int b = 0; b < dim; ++b)
      for (int c = 0; c < dim; ++c)
        for (int dd = 0; dd < dim; ++dd) {
          CS acc(Lr, zero);
          for (int e = 0; e < dim; ++e)
            acc = ser_add(acc, ser_mul(rud[geo.i4(a, b, c, e)], geo.g[geo.i2(e, dd)], zero));
          rlow[geo.i4(a, b, c, dd)] = acc;
        }
  geo.rup2.assign(dim * dim * dim * dim, CS(Lr, zero));
  for (int a = 0; a < dim; ++a)
    for (int b = 0; b < dim; ++b)
      for (int c = 0; c < dim; ++c)
        for (int dd = 0; dd < dim; ++dd) {
          CS acc(Lr, zero);
          for (int e = 0; e < dim; ++e)
            for (int f = 0; f < dim; ++f)
              acc = ser_add(acc, ser_mul(geo.ginv[geo.i2(c, e)],
                                         ser_mul(geo.ginv[geo.i2(dd, f)],
                                                 rlow[geo.i4(a, e, f, b)], zero),
                                         zero));
          geo.rup2[geo.i4(a, b, c, dd)] = acc;
        }

  // Einstein residual Ric - lambda g (diagnostic): Ric_ab = R_{acb}^{~c}
  geo.einstein_resid.assign(dim * dim, CS(Lr, zero));
  for (int a = 0; a < dim; ++a)
    for (int b = 0; b < dim; ++b) {
      CS acc(Lr, zero);
      for (int c = 0; c < dim; ++c) acc = ser_add(acc, rud[geo.i4(a, c, b, c)]);
      CS lg = geo.g[geo.i2(a, b)];
      lg.resize(Lr, zero);
      geo.einstein_resid[geo.i2(a, b)] = ser_sub(acc, ser_scale(lg, lambda));
    }

  // parallel transport u' = -u r, r = (1/2) h' h^{-1}, and s = |h_t/h_0|^{1/4}
  std::vector<CS> r(d * d, CS(L - 1, zero));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      CS acc(L - 1, zero);
      for (int e = 0; e < d; ++e)
        acc = ser_add(acc, ser_mul(ser_dt(h[i * d + e]), hinv[e * d + j], zero));
      r[i * d + j] = ser_scale(acc, 0.5);
    }
  geo.tr_r.assign(L - 1, zero);
  for (int i = 0; i < d; ++i) geo.tr_r = ser_add(geo.tr_r, r[i * d + i]);

  geo.umat.assign(d * d, CS(L, zero));
  for (int i = 0; i < d; ++i) geo.umat[i * d + i][0] = bk.cone();
  for (int n = 0; n + 1 < L; ++n)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        C acc = zero;
        for (int m = 0; m <= n && m < int(r[0].size()); ++m)
          for (int e = 0; e < d; ++e)
            if (n - m < L) acc += geo.umat[i * d + e][n - m] * r[e * d + j][m];
        geo.umat[i * d + j][n + 1] = (-1.0 / (n + 1)) * acc;
      }
  // series inverse of u
  geo.uinv.assign(d * d, CS(L, zero));
  for (int i = 0; i < d; ++i) geo.uinv[i * d + i][0] = bk.cone();
  for (int n = 1; n < L; ++n)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        C acc = zero;
        for (int m = 1; m <= n; ++m)
          for (int e = 0; e < d; ++e)
            acc += geo.umat[i * d + e][m] * geo.uinv[e * d + j][n - m];
        geo.uinv[i * d + j][n] = -acc;
      }

  geo.s_scal.assign(L, zero);
  geo.s_scal[0] = bk.cone();
  for (int n = 0; n + 1 < L; ++n) {
    C acc = zero;
    for (int m = 0; m <= n && m < int(geo.tr_r.size()); ++m)
      acc += 0.5 * geo.tr_r[m] * geo.s_scal[n - m];
    geo.s_scal[n + 1] = (1.0 / (n + 1)) * acc;
  }
  geo.s_inv.assign(L, zero);
  geo.s_inv[0] = bk.cone();
  for (int n = 1; n < L; ++n) {
    C acc = zero;
    for (int m = 1; m <= n; ++m) acc += geo.s_scal[m] * geo.s_inv[n - m];
    geo.s_inv[n] = -acc;
  }

  return geo;
}

// ---- field-side tensor calculus --------------------------------------------

template <class B>
struct Tensor {
  using F = typename B::Field;
  using FS = std::vector<F>;
  int dim = 4;
  int rank = 0;
  std::vector<FS> comp;  // dim^rank component series

  static Tensor zero(int dim, int rank, int len, const B& bk) {
    Tensor t;
    t.dim = dim;
    t.rank = rank;
    int n = 1;
    for (int r = 0; r < rank; ++r) n *= dim;
    t.comp.assign(n, FS(len, bk.fzero()));
    return t;
  }

  int count() const { return int(comp.size()); }
  int len() const { return comp.empty() ? 0 : int(comp[0].size()); }

  void truncate(int l) {
    for (auto& c : comp) c.resize(std::min<size_t>(c.size(), l));
  }

  std::array<int, 4> digits(int flat) const {
    std::array<int, 4> a{0, 0, 0, 0};
    for (int r = 0; r < rank; ++r) {
      a[r] = flat % dim;
      flat /= dim;
    }
    return a;
  }
  int flat(std::array<int, 4> a) const {
    int f = 0;
    for (int r = rank - 1; r >= 0; --r) f = f * dim + a[r];
    return f;
  }
};

template <class B>
struct Calculus {
  const Geometry<B>* geo;
  B bk;
  using F = typename B::Field;
  using FS = std::vector<F>;
  using T = Tensor<B>;

  FS dfield_series(int a, const FS& fs) const {
    if (a == 0) return ser_dt(fs);
    FS out = fs;
    for (auto& f : out) f = bk.dfield(a - 1, f);
    return out;
  }

  // (nab T)_{a0; A} = d_{a0} T_A - sum_slots Gam^e_{a0 a_slot} T_{..e..}
  T nabla(const T& t) const {
    const int dim = geo->dim;
    T out = T::zero(dim, t.rank + 1, std::max(0, t.len() - 1), bk);
    int lmin = t.len();
    for (int fo = 0; fo < out.count(); ++fo) {
      auto dg = out.digits(fo);
      int a0 = dg[0];
      std::array<int, 4> rest{0, 0, 0, 0};
      for (int r = 0; r < t.rank; ++r) rest[r] = dg[r + 1];
      FS expr = dfield_series(a0, t.comp[t.flat(rest)]);
      for (int slot = 0; slot < t.rank; ++slot)
        for (int e = 0; e < dim; ++e) {
          auto repl = rest;
          repl[slot] = e;
          FS term = ser_mul(geo->gam[geo->i3(e, a0, rest[slot])], t.comp[t.flat(repl)],
                            bk.fzero());
          expr = ser_sub(expr, term);
        }
      lmin = std::min(lmin, int(expr.size()));
      out.comp[fo] = std::move(expr);
    }
    out.truncate(lmin);
    return out;
  }

  T box(const T& t) const {
    const int dim = geo->dim;
    T dd = nabla(nabla(t));
    T out = T::zero(dim, t.rank, dd.len(), bk);
    for (int fo = 0; fo < out.count(); ++fo) {
      auto rest = out.digits(fo);
      FS acc(dd.len(), bk.fzero());
      for (int a = 0; a < dim; ++a)
        for (int b = 0; b < dim; ++b) {
          std::array<int, 4> full{a, b, 0, 0};
          for (int r = 0; r < t.rank; ++r) full[r + 2] = rest[r];
          int f = 0;
          for (int r = t.rank + 1; r >= 0; --r) f = f * dim + full[r];
          acc = ser_add(acc, ser_mul(geo->ginv[geo->i2(a, b)], dd.comp[f], bk.fzero()));
        }
      out.comp[fo] = std::move(acc);
    }
    return out;
  }

  // (Riem u)_{ab} = R_a^{~cd}_{~b} u_{cd}
  T riem(const T& u) const {
    const int dim = geo->dim;
    T out = T::zero(dim, 2, u.len(), bk);
    int lmin = u.len();
    for (int a = 0; a < dim; ++a)
      for (int b = 0; b < dim; ++b) {
        FS acc(u.len(), bk.fzero());
        for (int c = 0; c < dim; ++c)
          for (int dd = 0; dd < dim; ++dd)
            acc = ser_add(acc, ser_mul(geo->rup2[geo->i4(a, b, c, dd)],
                                       u.comp[u.flat({c, dd, 0, 0})], bk.fzero()));
        lmin = std::min(lmin, int(acc.size()));
        out.comp[out.flat({a, b, 0, 0})] = std::move(acc);
      }
    out.truncate(lmin);
    return out;
  }

  // symmetric differential on (0,1)
  T sym_d(const T& w) const {
    T nw = nabla(w);
    T out = T::zero(geo->dim, 2, nw.len(), bk);
    for (int a = 0; a < geo->dim; ++a)
      for (int b = 0; b < geo->dim; ++b) {
        FS s = ser_add(nw.comp[nw.flat({a, b, 0, 0})], nw.comp[nw.flat({b, a, 0, 0})]);
        out.comp[out.flat({a, b, 0, 0})] = ser_scale(s, 0.5);
      }
    return out;
  }

  // codifferential: (delta u)_A = -rank * g^{cb} (nab u)_{b; c A}
  T codiff(const T& u) const {
    const int dim = geo->dim;
    T nu = nabla(u);
    T out = T::zero(dim, u.rank - 1, nu.len(), bk);
    for (int fo = 0; fo < out.count(); ++fo) {
      auto rest = out.digits(fo);
      FS acc(nu.len(), bk.fzero());
      for (int c = 0; c < dim; ++c)
        for (int b = 0; b < dim; ++b) {
          std::array<int, 4> full{b, c, 0, 0};
          for (int r = 0; r < u.rank - 1; ++r) full[r + 2] = rest[r];
          int f = 0;
          for (int r = u.rank; r >= 0; --r) f = f * dim + full[r];
          acc = ser_add(acc, ser_mul(geo->ginv[geo->i2(c, b)], nu.comp[f], bk.fzero()));
        }
      out.comp[fo] = ser_scale(acc, -double(u.rank));
    }
    return out;
  }

  FS trace_g(const T& u) const {
    FS acc(u.len(), bk.fzero());
    for (int a = 0; a < geo->dim; ++a)
      for (int b = 0; b < geo->dim; ++b)
        acc = ser_add(acc, ser_mul(geo->ginv[geo->i2(a, b)], u.comp[u.flat({a, b, 0, 0})],
                                   bk.fzero()));
    return acc;
  }

  // I u = u - (1/2) tr_g(u) g (dimension-4 coefficient kept for every d)
  T trace_reversal(const T& u) const {
    FS tr = trace_g(u);
    T out = u;
    int lmin = u.len();
    for (int a = 0; a < geo->dim; ++a)
      for (int b = 0; b < geo->dim; ++b) {
        FS term = ser_scale(ser_mul(tr, fs_of_coeff(geo->g[geo->i2(a, b)]), bk.fzero()), 0.5);
        auto& c = out.comp[out.flat({a, b, 0, 0})];
        c = ser_sub(c, term);
        lmin = std::min(lmin, int(c.size()));
      }
    out.truncate(lmin);
    return out;
  }

  T scaled(T u, Cplx z) const {
    for (auto& c : u.comp) c = ser_scale(c, z);
    return u;
  }

  T add(T a, const T& b) const {
    int lmin = std::min(a.len(), b.len());
    a.truncate(lmin);
    for (int f = 0; f < a.count(); ++f)
      for (int n = 0; n < lmin; ++n) a.comp[f][n] += b.comp[f][n];
    return a;
  }

  T sub(T a, const T& b) const { return add(std::move(a), scaled(b, Cplx(-1.0))); }

  // D1 = -box - lambda on (0,1); D2 = -box + 2 Riem on (0,2);
  // P = -box - I d delta + 2 Riem; K = I d.
  T apply_D1(const T& w) const {
    return sub(scaled(box(w), Cplx(-1.0)), scaled(w, Cplx(geo->lambda)));
  }
  T apply_D2(const T& u) const {
    return add(scaled(box(u), Cplx(-1.0)), scaled(riem(u), Cplx(2.0)));
  }
  T apply_K(const T& w) const { return trace_reversal(sym_d(w)); }
  T apply_P(const T& u) const {
    T a = scaled(box(u), Cplx(-1.0));
    T b = trace_reversal(sym_d(codiff(u)));
    T c = scaled(riem(u), Cplx(2.0));
    return add(sub(std::move(a), b), c);
  }
  T apply_Kstar(const T& u) const { return codiff(u); }

  // ---- reduction conjugations ----------------------------------------------
  // U_1(w_t, w_S) = (w_t, u w_S); U_2 = (u_tt, u u_tS, u u_SS u^T); T = s *.

  FS fs_of_coeff(const std::vector<typename B::Coeff>& cs) const {
    // identical scalar types for both backends; the copy marks intent
    FS out(cs.size(), bk.fzero());
    for (size_t n = 0; n < cs.size(); ++n) out[n] = out[n] + cs[n];
    return out;
  }

  // multiply each component by a scalar coefficient series
  T mul_scalar(const T& t, const std::vector<typename B::Coeff>& s) const {
    T out = t;
    int lmin = t.len();
    for (auto& c : out.comp) {
      c = ser_mul(fs_of_coeff(s), c, bk.fzero());
      lmin = std::min(lmin, int(c.size()));
    }
    out.truncate(lmin);
    return out;
  }

  // apply a spatial matrix series to spatial indices (time slots untouched)
  T transport(const T& t, const std::vector<std::vector<typename B::Coeff>>& m) const {
    const int dim = geo->dim;
    const int d = geo->d;
    T out = t;
    for (int slot = 0; slot < t.rank; ++slot) {
      T next = out;
      int lmin = out.len();
      for (int f = 0; f < out.count(); ++f) {
        auto dg = out.digits(f);
        if (dg[slot] == 0) {
          lmin = std::min(lmin, int(next.comp[f].size()));
          continue;  // time component is untouched
        }
        int i = dg[slot] - 1;
        FS acc(out.len(), bk.fzero());
        for (int j = 0; j < d; ++j) {
          auto repl = dg;
          repl[slot] = j + 1;
          acc = ser_add(acc, ser_mul(fs_of_coeff(m[i * d + j]), out.comp[out.flat(repl)],
                                     bk.fzero()));
        }
        lmin = std::min(lmin, int(acc.size()));
        next.comp[f] = std::move(acc);
      }
      next.truncate(lmin);
      out = std::move(next);
    }
    return out;
  }

  T apply_TU(const T& t) const {
    std::vector<std::vector<typename B::Coeff>> m(geo->d * geo->d);
    for (int e = 0; e < geo->d * geo->d; ++e) m[e] = geo->umat[e];
    return mul_scalar(transport(t, m), geo->s_scal);
  }

  T apply_TU_inv(const T& t) const {
    std::vector<std::vector<typename B::Coeff>> m(geo->d * geo->d);
    for (int e = 0; e < geo->d * geo->d; ++e) m[e] = geo->uinv[e];
    return transport(mul_scalar(t, geo->s_inv), m);
  }

  // reduced wave operators and reduced symmetric differential
  T apply_Dhat(int which, const T& reduced) const {
    T w = apply_TU_inv(reduced);
    T dw = which == 1 ? apply_D1(w) : apply_D2(w);
    return apply_TU(dw);
  }

  T apply_dhat(const T& reduced_w) const { return apply_TU(sym_d(apply_TU_inv(reduced_w))); }
};

}  // namespace cov
}  // namespace hadcal
