#include <catch2/catch_amalgamated.hpp>

#include "hadcal/gauge.hpp"

using namespace hadcal;
using namespace hadcal::gauge;

namespace {

// shared flat-static d = 2 pipeline state for the gauge tests
struct Flat2d {
  GridSpec g{2, 8};
  MetricFamily hm;
  geometry::ReducedOps R;
  bundles::GravityBundles B;
  GaugeSurfaceOps go;
  fact::FactorizationResult f1, f2;
  fact::HadamardProjectors c1, c2;
  euc::EllipticProblem p1, p2;
  euc::CalderonProjectors ct1, ct2;
  euc::DtnResult dtn1;
  GaugeFixOperator H;

  Flat2d()
      : hm(MetricFamily::static_flat(g, 8)),
        R(geometry::build_reduced_ops(hm, 0.0, 8)),
        B(bundles::build_charges(g, hm.h0_field())) {
    go = build_gauge_surface_ops(R, B);
    f1 = fact::factorize(R.a1, B.v1);
    f2 = fact::factorize(R.a2, B.v2);
    c1 = fact::hadamard_projectors(f1.b_plus.at0(), f1.b_minus.at0());
    c2 = fact::hadamard_projectors(f2.b_plus.at0(), f2.b_minus.at0());
    p1 = euc::make_elliptic(R.a1.wick(), B.v1, 1.0, 40);
    p2 = euc::make_elliptic(R.a2.wick(), B.v2, 1.0, 40);
    ct1 = euc::calderon_projectors(p1);
    ct2 = euc::calderon_projectors(p2);
    dtn1 = euc::dtn_map(p1, +1);
    H = build_gauge_fix_operator(dtn1.n_map, R, B);
  }
};

Flat2d& flat2d() {
  static Flat2d state;
  return state;
}

}  // namespace

TEST_CASE("surface gauge operators") {
  auto& S = flat2d();

  // T_Sigma equals its Wick-rotated assembly identically
  REQUIRE(S.go.t_equality_resid == 0.0);
  // upper-left block of T_Sigma is d1(0)
  Mat t0 = S.go.T_sigma.mode_block(3);
  Mat d10 = S.R.d1.at0().mode_block(3);
  REQUIRE((t0.topLeftCorner(d10.rows(), d10.cols()) - d10).norm() <= 1e-14);

  REQUIRE(S.go.kdag_identity_resid <= 1e-12);
  // d = 2 keeps the dimension-4 trace reversal: the lift is not an involution
  // and the gauge directions are not exactly q-isotropic; both are reported
  REQUIRE(S.go.i_sigma_invol_resid > 1e-3);
  REQUIRE(S.go.kdagk_resid > 1e-3);

  GridSpec g3(3, 4);
  auto hm3 = MetricFamily::static_flat(g3, 6);
  auto R3 = geometry::build_reduced_ops(hm3, 0.0, 6);
  auto B3 = bundles::build_charges(g3, hm3.h0_field());
  auto go3 = build_gauge_surface_ops(R3, B3);
  REQUIRE(go3.i_sigma_invol_resid <= 1e-12);
  REQUIRE(go3.kdagk_resid <= 1e-10);
}

TEST_CASE("projector algebra for the gravity bundles") {
  auto& S = flat2d();
  REQUIRE(S.c2.partition_resid <= 1e-12);
  REQUIRE(S.c2.idem_resid <= 1e-10);
  REQUIRE(S.ct2.partition_resid <= 1e-8);
  REQUIRE(S.ct2.idem_resid <= 1e-6);

  // q-self-adjointness with the physical charge, mod smoothing for the
  // elliptic side
  Operator qc = S.B.q2p * S.c2.c_plus;
  REQUIRE((S.B.v2.ip_c.adjoint(qc) - qc).op_norm() <= 1e-10);
  Operator qct = S.B.q2p * S.ct2.c_plus;
  REQUIRE((S.B.v2.ip_c.adjoint(qct) - qct).op_norm() <= 1e-6);

  // trace-reversal commutation with the Calderon projectors
  Operator comm = S.B.I2S * S.ct2.c_plus - S.ct2.c_plus * S.B.I2S;
  REQUIRE(comm.op_norm() <= 1e-8);
}

TEST_CASE("gauge intertwining: exact on the hyperbolic side, decaying obstruction") {
  auto& S = flat2d();
  auto res = gauge_intertwine_residual(S.ct1, S.ct2, S.go.K_sigma, &S.c1, &S.c2,
                                       S.f1.reg.R_used);
  // exact outside the regularizer-lifted band; the lifted modes carry the
  // finite-rank smoothing obstruction, whose size is reported
  REQUIRE(res.lorentz_highband <= 1e-8);
  REQUIRE(res.lorentz_plus < 1.0);
  for (int m : {1, 2}) {
    REQUIRE(res.profile_plus.tail_decay(m));
    REQUIRE(res.profile_plus.constant(m) < 50.0);
  }

  // per-mode obstruction is exponentially small in <k> T
  for (const auto& row : res.profile_plus.rows) {
    double w = std::sqrt(1.0 + sq(row.abs_k));
    REQUIRE(row.base <= 20.0 * std::exp(-2.0 * w) + 1e-8);
  }
}

TEST_CASE("gauge-fix operator and closed loop") {
  auto& S = flat2d();
  REQUIRE(S.H.min_singular > 1e-3);
  REQUIRE(S.H.ratio_lo > 1.0 / 3.0);
  REQUIRE(S.H.ratio_hi < 3.0);

  // data already satisfying the target conditions: zero right side
  SectionField u0(S.g, S.B.v2.fiber);
  {
    Rng rng(5);
    auto raw = random_bandlimited(S.g, S.B.v2.fiber, 2, rng);
    u0 = raw;
    // remove mixed components and the g-trace
    for (int p = 0; p < S.g.points(); ++p) {
      for (int j = 0; j < 2; ++j) u0.values(p, 1 + j) = 0.0;
      Cplx tr = -u0.values(p, 0) + u0.values(p, 3) + u0.values(p, 5);
      u0.values(p, 0) += tr / 2.0;
      u0.values(p, 3) -= tr / 4.0;
      u0.values(p, 5) -= tr / 4.0;
    }
  }
  auto fix0 = gauge_fix_solve(S.p1, S.p2, S.H, S.R, S.B, u0);
  REQUIRE(fix0.y.norm_flat() <= 1e-8 * u0.norm_flat());
  REQUIRE(fix0.resid_mixed <= 1e-8);
  REQUIRE(fix0.resid_tracefree <= 1e-8);

  // random band-limited data: the defining property of the solve
  Rng rng(17);
  for (int trial = 0; trial < 3; ++trial) {
    auto u = random_bandlimited(S.g, S.B.v2.fiber, 2, rng);
    auto fix = gauge_fix_solve(S.p1, S.p2, S.H, S.R, S.B, u);
    REQUIRE(fix.resid_mixed <= 1e-7);
    REQUIRE(fix.resid_tracefree <= 1e-7);
  }
}

TEST_CASE("synchronous decomposition") {
  auto& S = flat2d();
  Rng rng(23);

  // zero input -> zero output
  SectionField z(S.g, 2 * S.B.v2.fiber);
  auto sz = synchronous_decompose(S.p1, S.p2, S.H, S.ct1, S.ct2, S.go, S.R, S.B, z);
  REQUIRE(sz.k_data.norm_flat() <= 1e-14);
  REQUIRE(sz.h_data.norm_flat() <= 1e-14);

  int rank = 0;
  auto basis = kernel_basis(S.go, S.g, S.B.v2.fiber, 2, &rank);
  REQUIRE(int(basis.size()) >= 20);
  REQUIRE(rank > 0);

  for (int trial = 0; trial < 3; ++trial) {
    SectionField f = SectionField::zero(S.g, 2 * S.B.v2.fiber);
    for (const auto& b : basis) f += randn_cplx(rng) * b;
    f *= Cplx(1.0 / f.norm_flat());
    auto syn = synchronous_decompose(S.p1, S.p2, S.H, S.ct1, S.ct2, S.go, S.R, S.B, f);
    REQUIRE(syn.j2_fix_resid <= 1e-7);
    REQUIRE(syn.reconstruction <= 1e-7);
    REQUIRE(syn.h_projection <= 1e-6);  // finite-T obstruction, solver-small here
  }
}

TEST_CASE("positivity modulo smoothing on the kernel slice") {
  auto& S = flat2d();
  Rng rng(31);
  auto rep = positivity_report(S.p1, S.p2, S.H, S.ct1, S.ct2, S.go, S.R, S.B, 2, rng, 6);

  REQUIRE(rep.kernel_dim >= 20);
  REQUIRE(rep.min_energy >= -1e-10);
  REQUIRE(rep.min_value >= -rep.smoothing_bound - 1e-12);
  REQUIRE(rep.max_imag <= 1e-8);
  // the kernel restriction is essential: non-kernel data goes negative
  REQUIRE(rep.negative_control < -1e-3);
}

TEST_CASE("frequency-sign proxy decays and excludes the zero mode") {
  auto& S = flat2d();
  auto frame = fact::frame_T(S.f2.b_plus.at0(), S.f2.b_minus.at0(), S.f2.epsilon.at0(), S.B.v2);
  REQUIRE(frame.e017_resid <= 1e-8);

  auto proxy = frequency_sign_proxy(frame, S.ct2.c_plus);
  REQUIRE(proxy.mode0_excluded);
  REQUIRE(proxy.off_norm.size() >= 3);
  REQUIRE(proxy.off_norm.back() <= 0.1 * proxy.off_norm.front());
  // the Lorentzian projectors diagonalize exactly in their own frame
  auto proxy_exact = frequency_sign_proxy(frame, S.c2.c_plus);
  REQUIRE(proxy_exact.off_norm.front() <= 1e-9);
}
