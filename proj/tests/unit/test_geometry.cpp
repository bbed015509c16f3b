#include <catch2/catch_amalgamated.hpp>

#include "hadcal/geometry.hpp"

#include "desitter_golden.h"

using namespace hadcal;
using namespace hadcal::geometry;

namespace {

Mat golden_mat(const auto& arr, int rows, int cols) {
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = arr[i * cols + j];
  return m;
}

}  // namespace

TEST_CASE("r tensor closed forms") {
  GridSpec g(2, 4);

  // de Sitter: r = H * Id at every order
  double H = 0.7;
  auto r = r_tensor(MetricFamily::desitter(g, 5, H));
  REQUIRE((r.coeff[0] - Cplx(H) * Operator::identity(g, 2)).op_norm() <= 1e-13);
  for (int n = 1; n <= 5; ++n) REQUIRE(r.coeff[n].op_norm() <= 1e-12);

  // static metric -> r = 0
  auto r0 = r_tensor(MetricFamily::static_flat(g, 4));
  for (int n = 0; n <= 4; ++n) REQUIRE(r0.coeff[n].op_norm() <= 1e-14);

  // h_t = (1+t) delta: r(0) = 1/2 Id
  auto r1 = r_tensor(MetricFamily::poly_perturbation(g, 4, 1.0, 0.0));
  REQUIRE((r1.coeff[0] - Cplx(0.5) * Operator::identity(g, 2)).op_norm() <= 1e-13);
}

TEST_CASE("parallel transport closed forms and metric invariance") {
  GridSpec g(2, 4);

  auto flat = parallel_transport(MetricFamily::static_flat(g, 5));
  REQUIRE((flat.u.coeff[0] - Operator::identity(g, 2)).op_norm() <= 1e-14);
  for (int n = 1; n <= 5; ++n) REQUIRE(flat.u.coeff[n].op_norm() <= 1e-14);
  REQUIRE(flat.invariance_resid <= 1e-14);

  // de Sitter: u(t) = e^{-Ht} Id, coefficients (-H)^n / n!
  double H = 1.3;
  auto ds = parallel_transport(MetricFamily::desitter(g, 6, H));
  double c = 1.0;
  for (int n = 0; n <= 6; ++n) {
    REQUIRE((ds.u.coeff[n] - Cplx(c) * Operator::identity(g, 2)).op_norm() <= 1e-11);
    c *= -H / (n + 1);
  }
  REQUIRE(ds.invariance_resid <= 1e-12);

  // random analytic spatially varying metric at n=8, d=2: invariance through D-1
  GridSpec g8(2, 8);
  Rng rng(41);
  int D = 5;
  std::vector<std::vector<Mat>> samples(D + 3);
  for (int n = 0; n < int(samples.size()); ++n) {
    samples[n].resize(g8.points());
    auto b0 = random_bandlimited(g8, 3, 2, rng);
    double cap = b0.max_abs();
    for (int p = 0; p < g8.points(); ++p) {
      Mat s(2, 2);
      double scale = (n == 0 ? 0.3 : 0.2 / (n * n)) / cap;
      s << b0.values(p, 0).real(), b0.values(p, 1).real(), b0.values(p, 1).real(),
          b0.values(p, 2).real();
      samples[n][p] = scale * s + (n == 0 ? Mat(Mat::Identity(2, 2)) : Mat(Mat::Zero(2, 2)));
    }
  }
  auto hm = MetricFamily::from_samples(g8, D, std::move(samples), "random");
  REQUIRE_FALSE(hm.spatially_constant);
  auto tr = parallel_transport(hm);
  REQUIRE(tr.invariance_resid <= 1e-12);
}

TEST_CASE("reduced operators: static flat metric") {
  GridSpec g(2, 8);
  auto R = build_reduced_ops(MetricFamily::static_flat(g, 4), 0.0, 4);
  REQUIRE(R.einstein_resid <= 1e-13);
  REQUIRE(R.first_order_resid <= 1e-11);

  const int F1 = bundles::fiber_v1(2), F2 = bundles::fiber_v2(2);
  REQUIRE((R.a1.coeff[0] - minus_laplacian_op(g, F1)).op_norm() <= 1e-11);
  REQUIRE((R.a2.coeff[0] - minus_laplacian_op(g, F2)).op_norm() <= 1e-11);
  for (int n = 1; n <= 4; ++n) {
    REQUIRE(R.a1.coeff[n].op_norm() <= 1e-11);
    REQUIRE(R.a2.coeff[n].op_norm() <= 1e-11);
    REQUIRE(R.d0.coeff[n].op_norm() <= 1e-11);
    REQUIRE(R.d1.coeff[n].op_norm() <= 1e-11);
  }
  // d0 fiber map: (w_t, w_S) -> (w_t, w_S/2, 0)
  Mat d0b = R.d0.coeff[0].mode_block(3);
  Mat want = Mat::Zero(F2, F1);
  want(0, 0) = 1.0;
  want(1, 1) = 0.5;
  want(2, 2) = 0.5;
  REQUIRE((d0b - want).norm() <= 1e-12);
}

TEST_CASE("reduced operators match the symbolic de Sitter oracle") {
  GridSpec g(3, 4);
  auto R = build_reduced_ops(MetricFamily::desitter(g, 5, 1.0), 3.0, 5);
  REQUIRE(R.einstein_resid <= 1e-11);
  REQUIRE(R.first_order_resid <= 1e-10);

  int mode = g.mode_index({1, 2, -1});
  auto check = [&](const OpSeries& s, int n, const Mat& want) {
    REQUIRE((s.coeff[n].mode_block(mode) - want).cwiseAbs().maxCoeff() <=
            1e-10 * (1.0 + want.cwiseAbs().maxCoeff()));
  };
  using namespace golden;
  check(R.a1, 0, golden_mat(kDeSitterA1_0, 4, 4));
  check(R.a1, 1, golden_mat(kDeSitterA1_1, 4, 4));
  check(R.a1, 2, golden_mat(kDeSitterA1_2, 4, 4));
  check(R.a1, 3, golden_mat(kDeSitterA1_3, 4, 4));
  check(R.a1, 4, golden_mat(kDeSitterA1_4, 4, 4));
  check(R.a2, 0, golden_mat(kDeSitterA2_0, 10, 10));
  check(R.a2, 1, golden_mat(kDeSitterA2_1, 10, 10));
  check(R.a2, 2, golden_mat(kDeSitterA2_2, 10, 10));
  check(R.a2, 3, golden_mat(kDeSitterA2_3, 10, 10));
  check(R.a2, 4, golden_mat(kDeSitterA2_4, 10, 10));
  check(R.d0, 0, golden_mat(kDeSitterD0_0, 10, 4));
  check(R.d1, 0, golden_mat(kDeSitterD1_0, 10, 4));
  check(R.d1, 1, golden_mat(kDeSitterD1_1, 10, 4));
  check(R.d1, 2, golden_mat(kDeSitterD1_2, 10, 4));
  check(R.d1, 3, golden_mat(kDeSitterD1_3, 10, 4));
  check(R.d1, 4, golden_mat(kDeSitterD1_4, 10, 4));
}

TEST_CASE("reduced operators are self-adjoint with the expected principal growth") {
  GridSpec g(3, 8);
  auto hm = MetricFamily::desitter(g, 6, 1.0);
  auto R = build_reduced_ops(hm, 3.0, 6);
  auto B = bundles::build_charges(g, hm.h0_field());

  // a_i(0) self-adjoint for the indefinite V-forms
  double n1 = (B.v1.ip.adjoint(R.a1.coeff[0]) - R.a1.coeff[0]).op_norm();
  double n2 = (B.v2.ip.adjoint(R.a2.coeff[0]) - R.a2.coeff[0]).op_norm();
  REQUIRE(n1 <= 1e-10 * R.a1.coeff[0].op_norm());
  REQUIRE(n2 <= 1e-10 * R.a2.coeff[0].op_norm());

  // principal growth: ||a_i(0) e_k|| / |k|^2 -> k.h0^{-1}k / |k|^2 = 1 (h0 = delta)
  // with a first-order correction, so |ratio - 1| * |k| stays bounded
  for (const auto* s : {&R.a1, &R.a2}) {
    double slope = 0.0;
    for (int m = 0; m < g.points(); ++m) {
      double k2 = g.k2(m);
      if (k2 < 4.0) continue;
      double ratio = s->coeff[0].mode_block(m).jacobiSvd().singularValues()(0) / k2;
      slope = std::max(slope, std::abs(ratio - 1.0) * std::sqrt(k2));
    }
    REQUIRE(slope <= 8.0);
  }

  // trace-reversal intertwining of a2 per Taylor coefficient
  auto rep = gauge_residuals(R, B);
  REQUIRE(rep.line("I-D2-commute").max_rel <= 1e-10);
}

TEST_CASE("gauge identity residuals: Einstein backgrounds pass, control fails") {
  GridSpec g(3, 4);

  auto Rflat = build_reduced_ops(MetricFamily::static_flat(g, 6), 0.0, 6);
  auto Bflat = bundles::build_charges(g, {Mat::Identity(3, 3)});
  auto repf = gauge_residuals(Rflat, Bflat);
  for (const auto& name : {"e31-i", "e31-ii", "e31-iii", "D2K-KD1", "KstarK-D1"})
    REQUIRE(repf.line(name).max_rel <= 1e-12);

  auto hply = MetricFamily::desitter(g, 6, 1.0);
  auto Rds = build_reduced_ops(hply, 3.0, 6);
  auto Bds = bundles::build_charges(g, hply.h0_field());
  auto repd = gauge_residuals(Rds, Bds);
  for (const auto& name : {"e31-i", "e31-ii", "e31-iii", "D2K-KD1", "KstarK-D1"})
    REQUIRE(repd.line(name).max_rel <= 1e-8);

  // non-Einstein control: h_t = (1+t^2) delta with Lambda = 0
  auto hc = MetricFamily::poly_perturbation(g, 6, 0.0, 1.0);
  auto Rc = build_reduced_ops(hc, 0.0, 6);
  auto Bc = bundles::build_charges(g, {Mat::Identity(3, 3)});
  auto repc = gauge_residuals(Rc, Bc);
  REQUIRE(repc.line("e31-iii").max_rel >= 1e-3);
  REQUIRE(Rc.einstein_resid >= 0.5);
}

TEST_CASE("constraint checker") {
  GridSpec g(3, 4);
  double H = 1.0;
  std::vector<Mat> hd{Mat::Identity(3, 3)}, kd{H * Mat::Identity(3, 3)}, k0{Mat::Zero(3, 3)};

  // de Sitter data: Scal - tr((kh^{-1})^2) + tr(kh^{-1})^2 = 0 - 3H^2 + 9H^2 = 2*Lambda
  auto ds = geometry::constraint_check(g, hd, kd, 3.0 * H * H);
  REQUIRE(ds.hamiltonian <= 1e-12);
  REQUIRE(ds.momentum <= 1e-12);

  // flat static data: exact up to the round-off of the spectral derivatives
  auto flat = geometry::constraint_check(g, hd, k0, 0.0);
  REQUIRE(flat.hamiltonian <= 5e-14);
  REQUIRE(flat.momentum <= 5e-14);

  // Lambda mismatch: Hamiltonian residual = 6 H^2
  auto bad = geometry::constraint_check(g, hd, kd, 0.0);
  REQUIRE(std::abs(bad.hamiltonian - 6.0 * H * H) <= 1e-10);
}
