#pragma once

#include <unsupported/Eigen/MatrixFunctions>

#include "hadcal/bundles.hpp"
#include "hadcal/series.hpp"

namespace hadcal {
namespace fact {

using bundles::FiberModel;

namespace detail {

// apply a matrix function through the G-orthonormalizing similarity so that
// Hermitian-part checks refer to the bundle's positive form
struct GramFrame {
  Mat s, sinv;  // G^{1/2}, G^{-1/2}
  static GramFrame of(const Mat& gram) {
    Eigen::SelfAdjointEigenSolver<Mat> es(gram);
    if (es.eigenvalues().minCoeff() <= 0)
      throw PipelineError("factorization", "fiber Gram is not positive definite");
    Vec half = es.eigenvalues().cwiseSqrt().cast<Cplx>();
    GramFrame f;
    f.s = es.eigenvectors() * half.asDiagonal() * es.eigenvectors().adjoint();
    f.sinv = es.eigenvectors() * half.cwiseInverse().asDiagonal() * es.eigenvectors().adjoint();
    return f;
  }
};

inline double min_herm_eig(const Mat& block, const GramFrame& f) {
  Mat m = f.s * block * f.sinv;
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + Mat(m.adjoint())));
  return es.eigenvalues().minCoeff();
}

template <class Fn>
Operator blockwise(const Operator& a, Fn&& fn) {
  if (a.is_multiplier()) {
    std::vector<Mat> out(a.grid().points());
    for (int m = 0; m < a.grid().points(); ++m) out[m] = fn(a.mode_block(m), m);
    return Operator::multiplier(a.grid(), a.fiber_in(), a.fiber_out(), std::move(out));
  }
  Mat d = a.dense_matrix();
  return Operator::dense(a.grid(), a.fiber_in(), a.fiber_out(), fn(d, -1));
}

// Gram blocks of the positive fiber form; constant over modes in this artifact
inline Mat gram_block(const FiberModel& fm) {
  const auto& w = fm.ip_t.weight;
  if (w.storage() == Operator::Storage::Dense)
    throw PipelineError("factorization", "dense fiber Gram is not supported here");
  return w.blocks()[0];
}

}  // namespace detail

// compactly supported bump with chi(0) = 1 used by the spectral regularizer
inline double bump_chi(double x) {
  if (std::abs(x) >= 1.0) return 0.0;
  return std::exp(x * x / (x * x - 1.0));
}

// minimum eigenvalue of the Hermitian part for the positive form of `fm`
inline double coercivity(const Operator& a, const FiberModel& fm) {
  auto frame = detail::GramFrame::of(detail::gram_block(fm));
  double mn = 1e300;
  if (a.is_multiplier()) {
    for (int m = 0; m < a.grid().points(); ++m)
      mn = std::min(mn, detail::min_herm_eig(a.mode_block(m), frame));
  } else {
    // dense: G is block-constant, fold it into the full matrix
    const int N = a.grid().points();
    Mat S = Mat::Zero(N * a.fiber_in(), N * a.fiber_in());
    Mat Si = S;
    for (int p = 0; p < N; ++p) {
      S.block(p * a.fiber_in(), p * a.fiber_in(), a.fiber_in(), a.fiber_in()) = frame.s;
      Si.block(p * a.fiber_in(), p * a.fiber_in(), a.fiber_in(), a.fiber_in()) = frame.sinv;
    }
    Mat m = S * a.dense_matrix() * Si;
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + Mat(m.adjoint())));
    mn = es.eigenvalues().minCoeff();
  }
  return mn;
}

// R * chi(a_ref / R) via eigendecomposition of the Hermitian reference
// operator 2 a_ref = Re(a) + tau Re(a) tau; raises when the lift is too weak
// to reach Re(a + r) >= 1.
inline Operator regularize(const Operator& a0, const FiberModel& fm, double R) {
  auto frame = detail::GramFrame::of(detail::gram_block(fm));
  Operator re = Cplx(0.5) * (a0 + fm.ip_t.adjoint(a0));
  Operator aref = Cplx(0.5) * (re + fm.tau * re * fm.tau);
  Operator r = detail::blockwise(aref, [&](const Mat& block, int) {
    Mat m = frame.s * block * frame.sinv;
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + Mat(m.adjoint())));
    Vec vals = es.eigenvalues().cast<Cplx>();
    for (int i = 0; i < vals.size(); ++i)
      vals(i) = R * bump_chi(std::real(vals(i)) / R);
    Mat out = es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().adjoint();
    return Mat(frame.sinv * out * frame.s);
  });
  r.claimed().smoothing = true;
  if (coercivity(a0 + r, fm) < 1.0)
    throw PipelineError("factorization",
                        "regularizer too small to reach coercivity >= 1; increase R");
  return r;
}

struct RegularizerResult {
  Operator r;
  double R_used = 0.0;
  double coercivity = 0.0;
};

// doubling escalation of R; returns r = 0 when a is already coercive
inline RegularizerResult auto_regularize(const Operator& a0, const FiberModel& fm) {
  RegularizerResult out;
  double c0 = coercivity(a0, fm);
  if (c0 >= 1.0) {
    out.r = Operator::zero(a0.grid(), a0.fiber_in(), a0.fiber_out());
    out.r.claimed().smoothing = true;
    out.R_used = 0.0;
    out.coercivity = c0;
    return out;
  }
  double R = 4.0;
  for (int attempt = 0; attempt < 48; ++attempt, R *= 2.0) {
    try {
      out.r = regularize(a0, fm, R);
    } catch (const PipelineError&) {
      continue;
    }
    out.R_used = R;
    out.coercivity = coercivity(a0 + out.r, fm);
    return out;
  }
  throw PipelineError("factorization", "regularizer escalation failed");
}

// principal square root; under the numerical-range precondition it is the
// unique m-accretive root. Backed by a dense Schur-based method.
inline Operator accretive_sqrt(const Operator& a, const FiberModel& fm) {
  if (coercivity(a, fm) <= 0.0)
    throw PipelineError("factorization",
                        "numerical range touches the imaginary axis; cannot take the square root");
  return detail::blockwise(a, [](const Mat& block, int) { return Mat(block.sqrt()); });
}

namespace detail {

struct Eigens {
  Mat q, qinv;
  Vec vals;
};

inline std::vector<Eigens> eig_blocks(const Operator& e0) {
  std::vector<Eigens> out;
  auto dec = [&](const Mat& b) {
    Eigen::ComplexEigenSolver<Mat> es(b);
    Eigens e;
    e.q = es.eigenvectors();
    e.qinv = e.q.inverse();
    e.vals = es.eigenvalues();
    return e;
  };
  if (e0.is_multiplier()) {
    for (int m = 0; m < e0.grid().points(); ++m) out.push_back(dec(e0.mode_block(m)));
  } else {
    out.push_back(dec(e0.dense_matrix()));
  }
  return out;
}

inline Mat sylvester(const Eigens& e, const Mat& rhs) {
  Mat z = e.qinv * rhs * e.q;
  for (int i = 0; i < z.rows(); ++i)
    for (int j = 0; j < z.cols(); ++j) z(i, j) /= e.vals(i) + e.vals(j);
  return e.q * z * e.qinv;
}

}  // namespace detail

// Taylor series of the square root: eps(t)^2 = a(t) + r, coefficientwise via
// Sylvester equations eps0 X + X eps0 = rhs.
inline OpSeries accretive_sqrt_series(const OpSeries& a, const Operator& r,
                                      const FiberModel& fm) {
  OpSeries out;
  Operator a0 = a.at0() + r;
  out.coeff.push_back(accretive_sqrt(a0, fm));
  auto eigs = detail::eig_blocks(out.coeff[0]);
  for (int n = 1; n <= a.order(); ++n) {
    Operator rhs = a.coeff[n];
    for (int j = 1; j <= n - 1; ++j) rhs -= out.coeff[j].compose(out.coeff[n - j]);
    Operator xn = detail::blockwise(rhs, [&](const Mat& block, int m) {
      return detail::sylvester(eigs[m < 0 ? 0 : m], block);
    });
    out.coeff.push_back(std::move(xn));
  }
  return out;
}

struct FactorizationResult {
  OpSeries epsilon;
  OpSeries b_plus, b_minus;
  Operator r_smoothing;        // residual of i dt b - b^2 + a at t = 0
  int iterations = 0;
  DecayTable residual_profile; // profile of r_smoothing
  double bdiff_condition = 0.0;
  RegularizerResult reg;
};

// Factorization dt^2 + a = (dt + i b^-)(dt - i b^+) modulo smoothing:
// b = eps + b0 with b0 the symbolic fixed point d_k = c0 + F(d_{k-1}),
// F(d) = (2 eps)^{-1} (i dt d + [eps, d] - d^2), stopped when the update's
// order-zero coefficient passes the smoothing profile at m = 3.
inline FactorizationResult factorize(const OpSeries& a, const FiberModel& fm,
                                     int max_iter = 12, double tol = 0.05) {
  FactorizationResult out;
  out.reg = auto_regularize(a.at0(), fm);
  out.epsilon = accretive_sqrt_series(a, out.reg.r, fm);

  OpSeries inv2e = (Cplx(2.0) * out.epsilon).inverse();
  OpSeries c0 = inv2e * (kI * out.epsilon.dt());
  auto F = [&](const OpSeries& d) {
    return inv2e.truncated(d.order() - 1) *
           (kI * d.dt() + out.epsilon * d - d * out.epsilon - d * d);
  };

  // iterate while the update keeps improving; keep the best iterate. The
  // fixed point converges in the symbol filtration, so the profile constant
  // of the update is the stopping quantity.
  OpSeries b0 = c0;
  out.iterations = 0;
  double c0n = c0.at0().op_norm();
  if (c0n > 1e-14) {
    OpSeries best = b0;
    double best_upd = 1e300;
    for (int k = 1; k <= max_iter; ++k) {
      if (b0.order() < 2) break;
      OpSeries next = c0.truncated(b0.order() - 1) + F(b0);
      Operator upd = next.at0() - b0.at0();
      b0 = std::move(next);
      out.iterations = k;
      auto prof = smoothing_order_profile(upd, {3});
      double c = prof.constant(3);
      if (c < best_upd) {
        best_upd = c;
        best = b0;
      }
      if (prof.passes(3, tol)) {
        best = b0;
        break;
      }
      if (c > 4.0 * best_upd) break;  // past the asymptotically optimal iterate
    }
    b0 = best;
  }
  if (b0.order() < 1)
    throw PipelineError("factorization", "series order exhausted in the fixed point");

  OpSeries b = out.epsilon.truncated(b0.order()) + b0;
  out.b_plus = b;
  out.b_minus = Cplx(-1.0) * b.adjoint(fm.ip);

  OpSeries resid = kI * b.dt() - b * b + a.truncated(b.order() - 1);
  out.r_smoothing = resid.at0();
  out.residual_profile = smoothing_order_profile(out.r_smoothing);

  Operator x0 = out.b_plus.at0() - out.b_minus.at0();
  double smin = 1e300, smax = 0.0;
  auto sv = [&](const Mat& b_) {
    auto s = b_.jacobiSvd().singularValues();
    smin = std::min(smin, s(s.size() - 1));
    smax = std::max(smax, s(0));
    return b_;
  };
  detail::blockwise(x0, [&](const Mat& b_, int) { return sv(b_); });
  if (smin <= 0)
    throw PipelineError("factorization", "b+ - b- is singular at t = 0");
  out.bdiff_condition = smax / smin;
  return out;
}

struct HadamardProjectors {
  Operator c_plus, c_minus;
  double partition_resid = 0.0;
  double idem_resid = 0.0;
};

// c^{pm} = [[ -+ X^{-1} b^{-+}, +- X^{-1} ], [ -+ b^+ X^{-1} b^-, +- b^{pm} X^{-1} ]]
// with X = b^+ - b^- at t = 0.
inline HadamardProjectors hadamard_projectors(const Operator& bp0, const Operator& bm0) {
  Operator x = bp0 - bm0;
  Operator xi = x.inverse();
  HadamardProjectors out;
  out.c_plus = bundles::block2x2(Cplx(-1.0) * xi * bm0, xi,
                                 Cplx(-1.0) * bp0 * xi * bm0, bp0 * xi);
  out.c_minus = bundles::block2x2(xi * bp0, Cplx(-1.0) * xi,
                                  bp0 * xi * bm0, Cplx(-1.0) * bm0 * xi);
  const auto id = Operator::identity(bp0.grid(), 2 * bp0.fiber_in());
  out.partition_resid = (out.c_plus + out.c_minus - id).op_norm();
  out.idem_resid = std::max((out.c_plus * out.c_plus - out.c_plus).op_norm(),
                            (out.c_minus * out.c_minus - out.c_minus).op_norm());
  return out;
}

struct Frame {
  Operator T, Tinv;
  double e017_resid = 0.0;     // T^* q T - diag(tau, -tau) for the tilde form
  double r_minus1_norm = 0.0;  // (2 eps0)^{-1/2} c0 - 1, reported not assumed
};

// diagonalizing frame T = S diag(c, c), c the star-self-adjoint square root of
// b^+ - b^-; verified numерically instead of constructing the paper-side
// normalizer.
inline Frame frame_T(const Operator& bp, const Operator& bm, const Operator& eps0,
                     const FiberModel& fm) {
  Operator x = bp - bm;
  Operator xi = x.inverse();
  Operator c = accretive_sqrt(x, fm);
  // S = i^{-1} [[1, -1],[b+, -b-]] diag(X^{-1}, X^{-1})
  Operator s = Cplx(0.0, -1.0) *
               bundles::block2x2(Operator::identity(bp.grid(), bp.fiber_in()),
                                 Cplx(-1.0) * Operator::identity(bp.grid(), bp.fiber_in()),
                                 bp, Cplx(-1.0) * bm) *
               bundles::doubled(xi);
  Frame f;
  f.T = s * bundles::doubled(c);
  f.Tinv = f.T.inverse();
  Operator lhs = fm.ip_c.adjoint(f.T) * fm.q * f.T;
  Operator want = bundles::block2x2(fm.tau, Operator::zero(bp.grid(), bp.fiber_in(), bp.fiber_in()),
                                    Operator::zero(bp.grid(), bp.fiber_in(), bp.fiber_in()),
                                    Cplx(-1.0) * fm.tau);
  f.e017_resid = (lhs - want).op_norm() / std::max(1.0, want.op_norm());
  Operator sqrt2e = accretive_sqrt(Cplx(2.0) * eps0, fm);
  f.r_minus1_norm =
      (sqrt2e.inverse() * c - Operator::identity(bp.grid(), bp.fiber_in())).op_norm();
  return f;
}

// RK4 for the first-order system dt psi = i A(t) psi, A = [[0,1],[a(t),0]];
// returns the evolution U(t1, t0) on Cauchy data (u, i^{-1} dt u).
inline Operator cauchy_evolution(const OpSeries& a, double t0, double t1, int steps,
                                 const FiberModel& fm, double drift_guard = 0.1) {
  if (steps < 1) throw PipelineError("evolution", "step count must be positive");
  const GridSpec g = a.grid();
  const int F = a.fiber_in();
  if (!a.at0().is_multiplier())
    throw PipelineError("evolution", "cauchy_evolution requires mode-diagonal coefficients");

  const double dt = (t1 - t0) / steps;
  std::vector<Mat> blocks(g.points());
  for (int m = 0; m < g.points(); ++m) {
    auto a_at = [&](double t) {
      Mat acc = a.coeff[a.order()].mode_block(m);
      for (int n = a.order() - 1; n >= 0; --n) acc = t * acc + a.coeff[n].mode_block(m);
      return acc;
    };
    auto rhs = [&](double t, const Mat& u) {
      Mat out(2 * F, 2 * F);
      out.topRows(F) = kI * u.bottomRows(F);
      out.bottomRows(F) = kI * (a_at(t) * u.topRows(F));
      return out;
    };
    Mat u = Mat::Identity(2 * F, 2 * F);
    double t = t0;
    for (int s = 0; s < steps; ++s) {
      Mat k1 = rhs(t, u);
      Mat k2 = rhs(t + dt / 2, u + (dt / 2) * k1);
      Mat k3 = rhs(t + dt / 2, u + (dt / 2) * k2);
      Mat k4 = rhs(t + dt, u + dt * k3);
      u += (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
      t = t0 + (s + 1) * dt;
    }
    blocks[m] = std::move(u);
  }
  Operator U = Operator::multiplier(g, 2 * F, 2 * F, std::move(blocks));
  double drift = (fm.ip_c.adjoint(U) * fm.q * U - fm.q).op_norm() / fm.q.op_norm();
  if (drift > drift_guard)
    throw PipelineError("evolution",
                        "energy drift guard triggered: step count too small");
  return U;
}

// pseudo-unitarity U^* q U = q measured on the band |k| <= kband
inline double pseudo_unitarity_resid(const Operator& u, const FiberModel& fm, double kband) {
  Operator resid = fm.ip_c.adjoint(u) * fm.q * u - fm.q;
  if (!resid.is_multiplier()) return resid.op_norm() / fm.q.op_norm();
  double worst = 0.0;
  for (int m = 0; m < u.grid().points(); ++m) {
    if (u.grid().abs_k(m) > kband + 1e-9) continue;
    worst = std::max(worst, resid.mode_block(m).jacobiSvd().singularValues()(0));
  }
  return worst / fm.q.op_norm();
}

// smooth bump supported in [lo, hi]
struct TimeBump {
  double lo = -0.25, hi = 0.25;
  double operator()(double t) const {
    if (t <= lo || t >= hi) return 0.0;
    double x = 2.0 * (t - lo) / (hi - lo) - 1.0;
    return std::exp(-1.0 / (1.0 - x * x)) * std::exp(1.0);
  }
};

struct SpacetimeTestSection {
  TimeBump chi;
  SectionField f;
  SectionField at(double t) const { return Cplx(chi(t)) * f; }
};

struct GreenChargeResult {
  Cplx lhs;           // (phi1 | G phi2)
  Cplx rhs;           // i^{-1} (rho u1 | q rho u2)
  double diff = 0.0;
  double wave_resid = 0.0;  // |D(G phi)| away from the source support
};

namespace detail {

// retarded or advanced solution of the driven system on the grid t0..t1
inline std::vector<SectionField> driven_solution(const OpSeries& a,
                                                 const SpacetimeTestSection& phi,
                                                 double t0, double t1, int steps,
                                                 bool retarded) {
  const GridSpec g = a.grid();
  const int F = a.fiber_in();
  const double dt = (t1 - t0) / steps;
  std::vector<SectionField> traj(steps + 1, SectionField(g, 2 * F));
  auto rhs = [&](double t, const SectionField& psi) {
    auto [u0, u1] = bundles::split_data(psi);
    SectionField src = phi.at(t);
    SectionField d0 = kI * u1;
    SectionField d1 = kI * a.eval(t).apply(u0) + Cplx(0.0, -1.0) * src;
    return bundles::join_data(d0, d1);
  };
  if (retarded) {
    SectionField psi(g, 2 * F);
    traj[0] = psi;
    for (int s = 0; s < steps; ++s) {
      double t = t0 + s * dt;
      auto k1 = rhs(t, psi);
      auto k2 = rhs(t + dt / 2, psi + Cplx(dt / 2) * k1);
      auto k3 = rhs(t + dt / 2, psi + Cplx(dt / 2) * k2);
      auto k4 = rhs(t + dt, psi + Cplx(dt) * k3);
      psi += Cplx(dt / 6) * (k1 + Cplx(2.0) * k2 + Cplx(2.0) * k3 + k4);
      traj[s + 1] = psi;
    }
  } else {
    SectionField psi(g, 2 * F);
    traj[steps] = psi;
    for (int s = steps; s > 0; --s) {
      double t = t0 + s * dt;
      auto k1 = rhs(t, psi);
      auto k2 = rhs(t - dt / 2, psi - Cplx(dt / 2) * k1);
      auto k3 = rhs(t - dt / 2, psi - Cplx(dt / 2) * k2);
      auto k4 = rhs(t - dt, psi - Cplx(dt) * k3);
      psi -= Cplx(dt / 6) * (k1 + Cplx(2.0) * k2 + Cplx(2.0) * k3 + k4);
      traj[s - 1] = psi;
    }
  }
  return traj;
}

}  // namespace detail

// Both sides of the conserved-charge identity: the causal propagator applied
// to phi2, paired with phi1 over spacetime, against the charge pairing of the
// two solutions' Cauchy data at t = 0.
inline GreenChargeResult green_charge_check(const OpSeries& a, const FiberModel& fm,
                                            const SpacetimeTestSection& phi1,
                                            const SpacetimeTestSection& phi2, double thalf,
                                            int steps) {
  if (steps % 2 != 0) throw PipelineError("green", "step count must be even");
  const double t0 = -thalf, t1 = thalf;
  const double dt = (t1 - t0) / steps;

  auto g2 = detail::driven_solution(a, phi2, t0, t1, steps, true);
  auto g2adv = detail::driven_solution(a, phi2, t0, t1, steps, false);
  auto g1 = detail::driven_solution(a, phi1, t0, t1, steps, true);
  auto g1adv = detail::driven_solution(a, phi1, t0, t1, steps, false);
  for (int s = 0; s <= steps; ++s) {
    g2[s] -= g2adv[s];
    g1[s] -= g1adv[s];
  }

  // lhs: simpson quadrature of (phi1(t) | G phi2 (t))_{V(Sigma)}
  auto vpair = [&](const SectionField& x, const SectionField& y) {
    return fm.ip_t.pair(x, fm.tau.apply(y));
  };
  Cplx lhs = 0.0;
  for (int s = 0; s <= steps; ++s) {
    double w = (s == 0 || s == steps) ? 1.0 : (s % 2 == 1 ? 4.0 : 2.0);
    double t = t0 + s * dt;
    lhs += w * vpair(phi1.at(t), bundles::split_data(g2[s]).first);
  }
  lhs *= dt / 3.0;

  GreenChargeResult out;
  out.lhs = lhs;
  SectionField r1 = g1[steps / 2], r2 = g2[steps / 2];
  out.rhs = Cplx(0.0, -1.0) * fm.ip_c.pair(r1, fm.q.apply(r2));
  out.diff = std::abs(out.lhs - out.rhs);

  // D(G phi2) away from the source: fourth-order finite differences in t
  double resid = 0.0, scale = 1e-30;
  const int stride = std::max(1, steps / 12);
  for (int s = 2; s + 2 <= steps; s += stride) {
    double t = t0 + s * dt;
    if (phi2.chi(t - 2 * dt) != 0.0 || phi2.chi(t + 2 * dt) != 0.0) continue;
    auto u = [&](int j) { return bundles::split_data(g2[j]).first; };
    SectionField utt = Cplx(1.0 / (12 * dt * dt)) *
                       (Cplx(-1.0) * u(s - 2) + Cplx(16.0) * u(s - 1) - Cplx(30.0) * u(s) +
                        Cplx(16.0) * u(s + 1) - Cplx(1.0) * u(s + 2));
    SectionField r = utt + a.eval(t).apply(u(s));
    resid = std::max(resid, r.norm_flat());
    scale = std::max(scale, u(s).norm_flat());
  }
  out.wave_resid = resid / scale;
  return out;
}

}  // namespace fact
}  // namespace hadcal
