#include <catch2/catch_amalgamated.hpp>

#include "hadcal/bundles.hpp"

using namespace hadcal;
using namespace hadcal::bundles;

TEST_CASE("trace reversal fiber matrix") {
  SymPack pk(3);
  Mat h0 = Mat::Identity(3, 3);
  Mat I2 = trace_reversal_fiber(h0, h0, pk);

  // g0 in packed layout: (tt, tS x3, SS: 11,12,13,22,23,33)
  Vec g0 = Vec::Zero(10);
  g0(0) = -1.0;
  g0(4) = g0(7) = g0(9) = 1.0;
  REQUIRE((I2 * g0 + g0).norm() <= 1e-14);

  // traceless tensors are fixed: u_tt = 1, spatial trace = 1
  Vec u = Vec::Zero(10);
  u(0) = 1.0;
  u(4) = -1.0;
  u(7) = 1.0;
  u(9) = 1.0;
  REQUIRE((I2 * u - u).norm() <= 1e-14);

  // u = diag(1,0,0,0): tr_g u = -1, Iu = u + g0/2 = diag(1/2, 1/2, 1/2, 1/2)
  Vec e = Vec::Zero(10);
  e(0) = 1.0;
  Vec want = Vec::Zero(10);
  want(0) = 0.5;
  want(4) = want(7) = want(9) = 0.5;
  REQUIRE((I2 * e - want).norm() <= 1e-14);

  REQUIRE((I2 * I2 - Mat::Identity(10, 10)).norm() <= 1e-14);  // involution in d=3
}

TEST_CASE("hermitian form on V2 (d=1)") {
  GridSpec g(1, 8);
  auto B = build_charges(g, {Mat::Identity(1, 1)});

  // only u_tt = 1: integral of |u_tt|^2 over the circle = 2*pi
  SectionField u(g, B.v2.fiber);
  u.values.col(0).setConstant(1.0);
  Cplx val = hermitian_form_v2(u, u, B);
  REQUIRE(std::abs(val - Cplx(kTwoPi, 0.0)) <= 1e-12);

  // only u_tS nonzero: strictly negative
  SectionField v(g, B.v2.fiber);
  v.values.col(1).setConstant(Cplx(0.3, 0.4));
  REQUIRE(std::real(hermitian_form_v2(v, v, B)) < -1e-6);
  REQUIRE(std::abs(std::imag(hermitian_form_v2(v, v, B))) <= 1e-13);

  SectionField z(g, B.v2.fiber);
  REQUIRE(std::abs(hermitian_form_v2(z, z, B)) == 0.0);
}

TEST_CASE("charges: tau blocks, J2 identities, physical form") {
  GridSpec g(2, 4);
  auto B = build_charges(g, {Mat::Identity(2, 2)});

  // q1 block anti-diagonal with tau1 = diag(-1, 1_d)
  Mat q1b = B.v1.q.mode_block(0);
  Mat t1 = tau1_fiber(2);
  REQUIRE((q1b.block(0, 3, 3, 3) - t1).norm() <= 1e-14);
  REQUIRE((q1b.block(3, 0, 3, 3) - t1).norm() <= 1e-14);
  REQUIRE(q1b.block(0, 0, 3, 3).norm() <= 1e-14);

  // d=2: I2 is invertible but not an involution; residual is reported
  REQUIRE(B.i2_invol_resid > 1e-3);
  REQUIRE(B.q2p_inv_resid <= 1e-12);

  GridSpec g3(3, 4);
  auto B3 = build_charges(g3, {Mat::Identity(3, 3)});
  REQUIRE(B3.i2_invol_resid <= 1e-13);
  REQUIRE(B3.j2_sq_resid <= 1e-13);  // J2 applied twice = identity
  REQUIRE(B3.e478_resid <= 1e-13);   // J2 q_{2,phys} J2 = qtilde2

  // J2-fixed data: <k, q2p k> = <k, qtilde k> holds in any dimension
  Rng rng(3);
  auto run_fixed_point = [&](const GravityBundles& BB) {
    const int F = BB.v2.fiber;
    auto f = random_bandlimited(BB.grid, 2 * F, 1, rng);
    auto [f0, f1] = split_data(f);
    for (int p = 0; p < BB.grid.points(); ++p) {
      for (int i = 0; i < BB.d; ++i) f0.values(p, 1 + i) = 0.0;  // no mixed comps
      Cplx tr = -f0.values(p, 0);  // tr_g for h = delta
      int base = 1 + BB.d;
      for (int a = 0; a < BB.pack.size(); ++a) {
        auto [i, j] = BB.pack.pairs[a];
        if (i == j) tr += f0.values(p, base + a);
      }
      f0.values(p, 0) += tr / 2.0;
      for (int a = 0; a < BB.pack.size(); ++a) {
        auto [i, j] = BB.pack.pairs[a];
        if (i == j) f0.values(p, base + a) -= tr / Cplx(2.0 * BB.d);
      }
    }
    auto k = join_data(f0, f1);
    REQUIRE((BB.J2.apply(k) - k).max_abs() <= 1e-12 * (1.0 + k.max_abs()));
    Cplx lhs = BB.v2.ip_c.pair(k, BB.q2p.apply(k));
    Cplx rhs = BB.v2.ip_c.pair(k, BB.v2.qtilde.apply(k));
    REQUIRE(std::abs(lhs - rhs) <= 1e-12 * (1.0 + std::abs(lhs)));
  };
  run_fixed_point(B);
  run_fixed_point(B3);
}

TEST_CASE("symplectic adjoint is an involution and satisfies the pairing identity") {
  GridSpec g(2, 4);
  auto B = build_charges(g, {Mat::Identity(2, 2)});
  const int F2 = B.v2.fiber;

  auto id = Operator::identity(g, 2 * F2);
  REQUIRE((symplectic_adjoint(id, B.v2.q, B.v2.ip_c) - id).op_norm() <= 1e-13);
  REQUIRE((symplectic_adjoint(B.v2.q, B.v2.q, B.v2.ip_c) - B.v2.q).op_norm() <= 1e-12);

  Rng rng(17);
  std::vector<Mat> blocks(g.points());
  for (auto& b : blocks)
    b = Mat::NullaryExpr(2 * F2, 2 * F2,
                         [&](Eigen::Index, Eigen::Index) { return randn_cplx(rng); });
  Operator A = Operator::multiplier(g, 2 * F2, 2 * F2, blocks);
  auto Ad = symplectic_adjoint(A, B.v2.q, B.v2.ip_c);
  REQUIRE((symplectic_adjoint(Ad, B.v2.q, B.v2.ip_c) - A).op_norm() <= 1e-11 * A.op_norm());

  for (int t = 0; t < 4; ++t) {
    auto f = random_bandlimited(g, 2 * F2, 1, rng);
    auto h = random_bandlimited(g, 2 * F2, 1, rng);
    Cplx lhs = B.v2.ip_c.pair(Ad.apply(f), B.v2.q.apply(h));
    Cplx rhs = B.v2.ip_c.pair(f, B.v2.q.apply(A.apply(h)));
    REQUIRE(std::abs(lhs - rhs) <= 1e-11 * (1.0 + std::abs(lhs)));
  }
}

TEST_CASE("trace reversal is self-adjoint for the V2 form") {
  GridSpec g(3, 4);
  auto B = build_charges(g, {Mat::Identity(3, 3)});
  Rng rng(5);
  for (int t = 0; t < 4; ++t) {
    auto u = random_bandlimited(g, B.v2.fiber, 1, rng);
    auto v = random_bandlimited(g, B.v2.fiber, 1, rng);
    Cplx lhs = B.v2.ip.pair(trace_reversal(u, B), v);
    Cplx rhs = B.v2.ip.pair(u, trace_reversal(v, B));
    REQUIRE(std::abs(lhs - rhs) <= 1e-12 * (1.0 + std::abs(lhs)));
  }
}
