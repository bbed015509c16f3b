#pragma once

#include "hadcal/spectral.hpp"

namespace hadcal {
namespace bundles {

// Packed storage of symmetric spatial 2-tensors: row-wise upper triangle,
// e.g. d=3 -> (11,12,13,22,23,33). Off-diagonal entries are stored once;
// the pairing weights below restore the full-tensor contraction.
struct SymPack {
  int d = 0;
  std::vector<std::pair<int, int>> pairs;

  explicit SymPack(int d_) : d(d_) {
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) pairs.emplace_back(i, j);
  }
  int size() const { return int(pairs.size()); }
  int index(int i, int j) const {
    if (i > j) std::swap(i, j);
    return i * d - i * (i - 1) / 2 + (j - i);
  }
};

inline int fiber_v1(int d) { return 1 + d; }
inline int fiber_v2(int d) { return 1 + d + d * (d + 1) / 2; }

// packed Gram of (u|v)_{h (x) h} = tr(u* h^{-1} v h^{-1})
inline Mat pack_gram_h2(const Mat& hinv, const SymPack& pk) {
  const int np = pk.size();
  Mat p = Mat::Zero(np, np);
  auto reps = [&](int a) {
    auto [i, j] = pk.pairs[a];
    std::vector<std::pair<int, int>> r{{i, j}};
    if (i != j) r.emplace_back(j, i);
    return r;
  };
  for (int a = 0; a < np; ++a)
    for (int b = 0; b < np; ++b)
      for (auto [i, j] : reps(a))
        for (auto [k, l] : reps(b)) p(a, b) += hinv(i, k) * hinv(j, l);
  return p;
}

// positive fiber Gram of (w|w)_{~V1} = |w_t|^2 + w.h^{-1}w
inline Mat gram_v1_tilde(const Mat& hinv) {
  const int d = int(hinv.rows());
  Mat g = Mat::Zero(1 + d, 1 + d);
  g(0, 0) = 1.0;
  g.block(1, 1, d, d) = hinv;
  return g;
}

// positive fiber Gram of (u|u)_{~V2} = 2(|u_tt|^2 + 2 u_tS.h^{-1}u_tS + |u_SS|^2_{h(x)h})
inline Mat gram_v2_tilde(const Mat& hinv, const SymPack& pk) {
  const int d = int(hinv.rows());
  const int f = fiber_v2(d);
  Mat g = Mat::Zero(f, f);
  g(0, 0) = 1.0;
  g.block(1, 1, d, d) = 2.0 * hinv;
  g.block(1 + d, 1 + d, pk.size(), pk.size()) = pack_gram_h2(hinv, pk);
  return 2.0 * g;
}

inline Mat tau1_fiber(int d) {
  Mat t = Mat::Identity(1 + d, 1 + d);
  t(0, 0) = -1.0;
  return t;
}

inline Mat tau2_fiber(int d) {
  const int f = fiber_v2(d);
  Mat t = Mat::Identity(f, f);
  t.block(1, 1, d, d) = -Mat::Identity(d, d);
  return t;
}

// trace reversal I u = u - (1/2) tr_g(u) g for g0 = diag(-1, h0); the 1/2 is
// the spacetime-dimension-4 coefficient and is kept for every d (I^2 = 1 only
// when d = 3; the residual is reported by the charge builder).
inline Mat trace_reversal_fiber(const Mat& h0, const Mat& h0inv, const SymPack& pk) {
  const int d = int(h0.rows());
  const int f = fiber_v2(d);
  // row vector of tr_g: tr_g(u) = -u_tt + sum h^{ij} u_ij
  Eigen::RowVectorXcd tr = Eigen::RowVectorXcd::Zero(f);
  tr(0) = -1.0;
  for (int a = 0; a < pk.size(); ++a) {
    auto [i, j] = pk.pairs[a];
    tr(1 + d + a) = (i == j ? 1.0 : 2.0) * h0inv(i, j);
  }
  // column of g0 components in packed layout
  Vec g0 = Vec::Zero(f);
  g0(0) = -1.0;
  for (int a = 0; a < pk.size(); ++a) {
    auto [i, j] = pk.pairs[a];
    g0(1 + d + a) = h0(i, j);
  }
  return Mat::Identity(f, f) - 0.5 * g0 * tr;
}

// one bundle slot with its Hermitian structures and Cauchy-data charges
struct FiberModel {
  GridSpec grid;
  int fiber = 1;
  Operator tau;       // fiber twist relating V and ~V, tau^2 = 1
  InnerProduct ip_t;  // positive (.|.)_{~V(Sigma)}, true-integral normalization
  InnerProduct ip;    // indefinite (.|.)_{V(Sigma)}
  InnerProduct ip_c;  // doubled positive form on Cauchy data
  Operator q;         // charge [[0,tau],[tau,0]]
  Operator qtilde;    // [[0,1],[1,0]]
  Operator sigma;     // [[0,-1],[1,0]]
};

inline Operator block2x2(const Operator& a00, const Operator& a01,
                         const Operator& a10, const Operator& a11) {
  const GridSpec g = a00.grid();
  const int fi = a00.fiber_in(), fo = a00.fiber_out();
  auto mk = [&](auto get) {
    std::vector<Mat> blocks(g.points());
    for (int m = 0; m < g.points(); ++m) {
      Mat b = Mat::Zero(2 * fo, 2 * fi);
      b.block(0, 0, fo, fi) = get(a00, m);
      b.block(0, fi, fo, fi) = get(a01, m);
      b.block(fo, 0, fo, fi) = get(a10, m);
      b.block(fo, fi, fo, fi) = get(a11, m);
      blocks[m] = std::move(b);
    }
    return blocks;
  };
  auto st = a00.storage();
  if (st != Operator::Storage::Dense && a01.storage() == st && a10.storage() == st &&
      a11.storage() == st) {
    auto blocks = mk([](const Operator& o, int m) { return o.blocks()[m]; });
    return st == Operator::Storage::Multiplier
               ? Operator::multiplier(g, 2 * fi, 2 * fo, std::move(blocks))
               : Operator::pointwise(g, 2 * fi, 2 * fo, std::move(blocks));
  }
  const int N = g.points();
  Mat d = Mat::Zero(N * 2 * fo, N * 2 * fi);
  Mat m00 = a00.dense_matrix(), m01 = a01.dense_matrix(), m10 = a10.dense_matrix(),
      m11 = a11.dense_matrix();
  for (int p = 0; p < N; ++p)
    for (int q_ = 0; q_ < N; ++q_) {
      d.block(p * 2 * fo, q_ * 2 * fi, fo, fi) = m00.block(p * fo, q_ * fi, fo, fi);
      d.block(p * 2 * fo, q_ * 2 * fi + fi, fo, fi) = m01.block(p * fo, q_ * fi, fo, fi);
      d.block(p * 2 * fo + fo, q_ * 2 * fi, fo, fi) = m10.block(p * fo, q_ * fi, fo, fi);
      d.block(p * 2 * fo + fo, q_ * 2 * fi + fi, fo, fi) = m11.block(p * fo, q_ * fi, fo, fi);
    }
  return Operator::dense(g, 2 * fi, 2 * fo, std::move(d));
}

inline Operator doubled(const Operator& a) {
  return block2x2(a, Operator::zero(a.grid(), a.fiber_in(), a.fiber_out()),
                  Operator::zero(a.grid(), a.fiber_in(), a.fiber_out()), a);
}

// split/join Cauchy data (f0, f1) <-> stacked fiber 2F
inline std::pair<SectionField, SectionField> split_data(const SectionField& f) {
  const int F = f.fiber / 2;
  SectionField f0(f.grid, F), f1(f.grid, F);
  f0.values = f.values.leftCols(F);
  f1.values = f.values.rightCols(F);
  return {f0, f1};
}

inline SectionField join_data(const SectionField& f0, const SectionField& f1) {
  SectionField f(f0.grid, 2 * f0.fiber);
  f.values.leftCols(f0.fiber) = f0.values;
  f.values.rightCols(f0.fiber) = f1.values;
  return f;
}

namespace detail {

inline Operator from_fiber_fields(const GridSpec& g, const std::vector<Mat>& per_point,
                                  bool constant) {
  if (constant) return Operator::constant_block(g, per_point[0]);
  return Operator::pointwise(g, int(per_point[0].cols()), int(per_point[0].rows()), per_point);
}

}  // namespace detail

// scalar Klein-Gordon model: trivial fiber, tau = 1
inline FiberModel scalar_model(const GridSpec& g) {
  FiberModel m;
  m.grid = g;
  m.fiber = 1;
  m.tau = Operator::identity(g, 1);
  double vol = std::pow(g.period, g.dim);
  m.ip_t = InnerProduct{Operator::identity(g, 1), vol, true};
  m.ip = m.ip_t;
  m.ip_c = InnerProduct{Operator::identity(g, 2), vol, true};
  auto z = Operator::zero(g, 1, 1);
  auto id = Operator::identity(g, 1);
  m.q = block2x2(z, id, id, z);
  m.qtilde = m.q;
  m.sigma = block2x2(z, Cplx(-1.0) * id, id, z);
  return m;
}

// All charge and gauge structures for the two gravity slots over h0.
struct GravityBundles {
  GridSpec grid;
  int d = 3;
  SymPack pack{3};
  FiberModel v1, v2;
  Operator I2;    // trace reversal on the V2 fiber
  Operator I2S;   // I2 (x) 1 on Cauchy data
  Operator q1p;   // physical charge for V1 (= q1)
  Operator q2p;   // q2 . I2S
  Operator J2;    // [[I2 tau2, 0],[0,1]]
  double i2_invol_resid = 0.0;   // ||I2^2 - 1||
  double j2_sq_resid = 0.0;      // ||J2^2 - 1||
  double e478_resid = 0.0;       // ||J2 q2p J2 - qtilde2||
  double q2p_inv_resid = 0.0;    // ||q2p q2p^{-1} - 1||
};

// h0: per-point spatial metric (SPD); pass a single entry for a constant metric.
inline GravityBundles build_charges(const GridSpec& g, std::vector<Mat> h0) {
  GravityBundles B;
  B.grid = g;
  B.d = g.dim;
  B.pack = SymPack(g.dim);
  const int d = g.dim;
  const int N = g.points();
  if (int(h0.size()) == 1) h0.assign(N, h0[0]);
  if (int(h0.size()) != N) throw PipelineError("bundles", "h0 field size mismatch");

  bool constant = true;
  for (const auto& m : h0)
    if ((m - h0[0]).cwiseAbs().maxCoeff() > 1e-13 * (1.0 + h0[0].cwiseAbs().maxCoeff()))
      constant = false;

  std::vector<Mat> hinv(N), g1t(N), g2t(N), i2(N);
  std::vector<Mat> g1w(N), g2w(N);  // tilde Grams with |h0|^{1/2} density
  double min_eig = 1e300;
  for (int p = 0; p < N; ++p) {
    Eigen::SelfAdjointEigenSolver<Mat> es(h0[p]);
    min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
    if (es.eigenvalues().minCoeff() <= 0)
      throw PipelineError("bundles", "h0 is not positive definite");
    hinv[p] = h0[p].inverse();
    double dens = std::sqrt(std::abs(h0[p].determinant().real()));
    g1t[p] = gram_v1_tilde(hinv[p]);
    g2t[p] = gram_v2_tilde(hinv[p], B.pack);
    g1w[p] = dens * g1t[p];
    g2w[p] = dens * g2t[p];
    i2[p] = trace_reversal_fiber(h0[p], hinv[p], B.pack);
  }

  const double vol = std::pow(g.period, g.dim);
  auto mk = [&](const std::vector<Mat>& pp) { return detail::from_fiber_fields(g, pp, constant); };

  auto make_model = [&](int fiber, const Mat& tau_f, const std::vector<Mat>& gram_w) {
    FiberModel m;
    m.grid = g;
    m.fiber = fiber;
    m.tau = Operator::constant_block(g, tau_f);
    Operator w = mk(gram_w);
    m.ip_t = InnerProduct{w, vol, true};
    m.ip = InnerProduct{w.compose(m.tau), vol, false};
    std::vector<Mat> w2(N);
    for (int p = 0; p < N; ++p) {
      w2[p] = Mat::Zero(2 * fiber, 2 * fiber);
      w2[p].block(0, 0, fiber, fiber) = gram_w[p];
      w2[p].block(fiber, fiber, fiber, fiber) = gram_w[p];
    }
    m.ip_c = InnerProduct{mk(w2), vol, true};
    auto z = Operator::zero(g, fiber, fiber);
    auto id = Operator::identity(g, fiber);
    m.q = block2x2(z, m.tau, m.tau, z);
    m.qtilde = block2x2(z, id, id, z);
    m.sigma = block2x2(z, Cplx(-1.0) * id, id, z);
    return m;
  };

  B.v1 = make_model(fiber_v1(d), tau1_fiber(d), g1w);
  B.v2 = make_model(fiber_v2(d), tau2_fiber(d), g2w);
  B.I2 = mk(i2);
  auto z2 = Operator::zero(g, B.v2.fiber, B.v2.fiber);
  B.I2S = doubled(B.I2);
  B.q1p = B.v1.q;
  B.q2p = B.v2.q.compose(B.I2S);
  Operator i2tau = B.I2.compose(B.v2.tau);
  B.J2 = block2x2(i2tau, z2, z2, Operator::identity(g, B.v2.fiber));

  const auto id2 = Operator::identity(g, B.v2.fiber);
  const auto idc = Operator::identity(g, 2 * B.v2.fiber);
  B.i2_invol_resid = (B.I2 * B.I2 - id2).op_norm();
  B.j2_sq_resid = (B.J2 * B.J2 - idc).op_norm();
  B.e478_resid = (B.J2 * B.q2p * B.J2 - B.v2.qtilde).op_norm();
  B.q2p_inv_resid = (B.q2p * B.q2p.inverse() - idc).op_norm();
  if (B.q2p_inv_resid > 1e-12)
    throw PipelineError("bundles", "physical charge is numerically singular");
  // J2 must be self-adjoint for the doubled positive form in every dimension;
  // a failure signals mis-assembled tau or I blocks.
  double j2_sa = (B.v2.ip_c.adjoint(B.J2) - B.J2).op_norm();
  if (j2_sa > 1e-12 * (1.0 + B.J2.op_norm()))
    throw PipelineError("bundles", "J2 is not self-adjoint: tau/I block assembly error");
  if (d == 3 && (B.i2_invol_resid > 1e-12 || B.j2_sq_resid > 1e-12 || B.e478_resid > 1e-12))
    throw PipelineError("bundles", "dim-4 trace-reversal identities failed");
  return B;
}

inline Operator symplectic_adjoint(const Operator& a, const Operator& q,
                                   const InnerProduct& ip_c) {
  return q.inverse().compose(ip_c.adjoint(a)).compose(q);
}

// (u|v) with the fiber pairing |u_tt|^2 - 2(u_tS|u_tS)_h + (u_SS|u_SS)_{h(x)h},
// integrated against |h0|^{1/2}; the V2 bundle pairing is twice this value.
inline Cplx hermitian_form_v2(const SectionField& u, const SectionField& v,
                              const GravityBundles& B) {
  SectionField tv = B.v2.tau.apply(v);
  return 0.5 * B.v2.ip_t.pair(u, tv);
}

inline SectionField trace_reversal(const SectionField& u, const GravityBundles& B) {
  return B.I2.apply(u);
}

}  // namespace bundles
}  // namespace hadcal
