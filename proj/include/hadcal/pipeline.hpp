#pragma once

#include "hadcal/gauge.hpp"
#include "hadcal/report.hpp"
#include "hadcal/scenario.hpp"

namespace hadcal {
namespace pipeline {

using report::check;
using report::CheckResult;
using report::control;
using report::Report;

struct CheckInfo {
  std::string name;
  std::string anchor;
  std::string rationale;
};

// catalog of checks with their certified identity and tolerance rationale
inline const std::vector<CheckInfo>& check_catalog() {
  static const std::vector<CheckInfo> cat = {
      {"hadamard-partition", "c+ + c- = 1",
       "exact block algebra; round-off only (1e-12)"},
      {"hadamard-idempotent", "(c+-)^2 = c+-",
       "exact block algebra; 1e-10 at n <= 64"},
      {"hadamard-q-selfadjoint", "(c+-)^dagger = c+- for the conserved charge q",
       "holds by the b- = -b* construction; 1e-10"},
      {"calderon-partition", "c~+ + c~- = 1",
       "solver-level identity of the interface solve; 1e-6 requested, usually 1e-9"},
      {"calderon-idempotent", "(c~+-)^2 = c~+-",
       "projection onto traces of one-sided solutions; 1e-6 at n = 64"},
      {"calderon-q-selfadjoint", "(c~+-)^dagger = c~+- for the physical charge",
       "reflection symmetry of the Dirichlet realization; 1e-6"},
      {"dtn-oracle", "N+ = omega coth(omega T) per mode (constant coefficients)",
       "spectral collocation vs the two-point closed form; 1e-6 for |k| <= 20"},
      {"dtn-smoothing", "N+- = b~+-(0) + r with |r| <= 3 omega e^{-2 omega T}",
       "coth expansion; certified through the defect solve, ratio <= 1"},
      {"dtn-positivity", "Re N+ ~ (1 - Laplacian)^{1/2}",
       "Rayleigh bounds of Re N against <k> must stay in a positive window"},
      {"calderon-vs-hadamard-permode", "|c+- - c~+-|(k) <= 5 e^{-2 omega T} per mode",
       "tanh/coth expansion of the per-mode closed form in the <k>-scaled norm"},
      {"calderon-vs-hadamard-profile", "c+- - c~+- is smoothing",
       "weighted frequency profile bounded by 10 at orders m = 1..4 and decaying"},
      {"factorization-residual", "i dt b - b^2 + a is smoothing",
       "decay certificate with the reported constant; the floor is the regularizer"},
      {"regularizer-coercivity", "Re(a + r) >= 1",
       "kept literal; R escalates by doubling until reached"},
      {"frame-normalization", "T^* q T = diag(tau, -tau)",
       "assembled from b+-(0) directly and verified to 1e-10"},
      {"green-charge", "(phi1 | G phi2) = i^{-1} (rho u1 | q rho u2)",
       "Duhamel with the fourth-order evolution; 1e-6 at 200 steps"},
      {"green-antisymmetry", "G^* = -G",
       "retarded/advanced exchange; 1e-8"},
      {"wave-residual", "D(G phi) = 0 away from the source",
       "fourth-order finite differences on the stored trajectory; 1e-5"},
      {"pseudo-unitarity", "U(t,s)^* q U(t,s) = q",
       "measured on the band |k| <= unitarity_band (fourth-order drift grows ~ omega^6)"},
      {"frequency-sign-proxy", "off-diagonal of T^{-1} c~+- T decays in |k|",
       "frequency-sign splitting proxy; the k = 0 mode sits in the excluded cone"},
      {"constraint-desitter", "Scal(h) - tr((kh^{-1})^2) + tr(kh^{-1})^2 = 2 Lambda",
       "de Sitter slice data satisfies the constraints to 1e-12"},
      {"constraint-flat", "flat static data satisfies the constraints",
       "zero up to spectral round-off (1e-13)"},
      {"constraint-mismatch-control", "Lambda mismatch leaves residual 6 H^2",
       "algebraic control value matched to 1e-10"},
      {"gauge-e31-i", "dt d0 = 0",
       "reduced intertwining, coefficient-wise; 1e-8 relative through order D-2"},
      {"gauge-e31-ii", "2 dt d1 + a2 d0 - d0 a1 = 0",
       "reduced intertwining; 1e-8 relative"},
      {"gauge-e31-iii", "dt^2 d1 + a2 d1 - d1 a1 - d0 dt a1 = 0",
       "reduced intertwining; 1e-8 relative; the non-Einstein control breaks this"},
      {"gauge-d2k-kd1", "D2 K = K D1",
       "dt-polynomial residual; 1e-8 relative per Taylor coefficient"},
      {"gauge-kstark-d1", "K* K = D1",
       "couples the reduced operators to the physical Hermitian forms; 1e-8"},
      {"gauge-e31-iii-control", "non-Einstein background breaks the gauge identity",
       "control passes when the residual is >= 1e-3"},
      {"einstein-residual-control", "Ric - Lambda g != 0 off shell",
       "control passes when the residual is >= 0.5"},
      {"reduced-selfadjoint", "a_i(0)* = a_i(0) for the bundle Hermitian forms",
       "reduction by parallel transport preserves self-adjointness; 1e-10"},
      {"trace-reversal-commutes", "I D2 = D2 I",
       "per Taylor coefficient; 1e-10"},
      {"surface-t-equality", "T_Sigma equals its Wick-rotated assembly",
       "identical up to the exact i-factor bookkeeping; 1e-14"},
      {"surface-kdagk", "K_Sigma^dagger K_Sigma = 0",
       "gauge data is isotropic for the physical charge; needs d = 3; 1e-10"},
      {"calderon-trace-reversal", "(I (x) 1) c~2 = c~2 (I (x) 1)",
       "trace reversal commutes with the Dirichlet realization; 1e-8"},
      {"gauge-intertwine-euclidean", "c~2 K = K c~1 modulo smoothing",
       "decay profile of the obstruction; constant reported, tail must decay"},
      {"gauge-intertwine-lorentzian", "c2 K = K c1 above the regularized band",
       "exact outside the finite-rank lift; 1e-8 on that band"},
      {"green-identity-1", "(u | D v) - (D* u | v) equals the sigma trace pairings",
       "quadrature both sides on solver-produced harmonic pairs; 1e-8"},
      {"green-identity-2", "(u | D v) + (D u | v) = 2 eta(u, v) minus the q trace pairings",
       "quadrature both sides; 1e-8"},
      {"gauge-fix-loop", "the gauge-fixed boundary data has no mixed components "
                         "and is trace-reversal invariant",
       "closed loop of the boundary solve; 1e-7 on random band-limited data"},
      {"gauge-fix-symbol", "singular values of H grow like |k|",
       "within a factor 3 on the shells k^2 >= 4"},
      {"synchronous-j2", "J2 k = k for the synchronous part",
       "defining property of the decomposition; 1e-7"},
      {"synchronous-reconstruction", "c~2+ f = k + K c~1+ h",
       "closed loop; 1e-7"},
      {"synchronous-h-projection", "h = c~1+ h",
       "the gauge potential is a one-sided trace; solver accuracy"},
      {"positivity-energy", "the Euclidean energy 2 Re Q(v, v) is nonnegative",
       "coercivity of the Dirichlet form; -1e-10 floor"},
      {"positivity-bounded", "<f, q c~2+ f> >= -(measured smoothing bound) on Ker K^dagger",
       "the obstruction norm is measured, not assumed"},
      {"positivity-kernel-dim", "the band-limited kernel slice is large enough",
       "at least 20 dimensions at the configured band"},
      {"positivity-negative-control", "data outside Ker K^dagger can go negative",
       "control passes when a value below -1e-3 is exhibited"},
      {"evolution-factorization", "U(t,0) = T(t) diag(...) T(0)^{-1} + smoothing",
       "off-diagonal blocks in the moving frame: decay profile with constant"},
      {"surface-kdagk-reported", "K_Sigma^dagger K_Sigma away from d = 3",
       "reported only: the dimension-4 trace reversal is not an involution here"},
      {"pipeline-runtime", "scenario completes within its budget",
       "wall-clock seconds against the documented budget"},
  };
  return cat;
}

inline const CheckInfo* find_check_info(const std::string& name) {
  for (const auto& c : check_catalog())
    if (c.name == name) return &c;
  return nullptr;
}

namespace detail {

inline CheckResult from_catalog(const Scenario& sc, const std::string& name, double measured,
                                double fallback_tol, std::string note = "") {
  const CheckInfo* info = find_check_info(name);
  if (!info) throw PipelineError("pipeline", "check not in catalog: " + name);
  return check(name, info->anchor, measured, sc.tol(name, fallback_tol), std::move(note));
}

inline CheckResult control_from_catalog(const Scenario& sc, const std::string& name,
                                        double measured, double fallback_thresh,
                                        std::string note = "") {
  const CheckInfo* info = find_check_info(name);
  if (!info) throw PipelineError("pipeline", "check not in catalog: " + name);
  return control(name, info->anchor, measured, sc.tol(name, fallback_thresh),
                 std::move(note));
}

}  // namespace detail

// ---- scalar pipeline ---------------------------------------------------------

inline Report run_scalar(const Scenario& sc) {
  Report rep;
  rep.scenario = sc.to_json();
  rep.seed = sc.seed;
  Rng rng(sc.seed);

  GridSpec g(sc.dim, sc.n_per_axis);
  auto fm = bundles::scalar_model(g);
  Operator a0 = minus_laplacian_op(g) + Cplx(sc.mass2) * Operator::identity(g, 1);
  OpSeries a = OpSeries::constant(a0, sc.taylor_order);

  auto res = fact::factorize(a, fm);
  rep.checks.push_back(detail::from_catalog(
      sc, "regularizer-coercivity", 1.0 - res.reg.coercivity, 0.0,
      "measured coercivity " + std::to_string(res.reg.coercivity) + ", R = " +
          std::to_string(res.reg.R_used)));
  auto proj = fact::hadamard_projectors(res.b_plus.at0(), res.b_minus.at0());
  rep.checks.push_back(detail::from_catalog(sc, "hadamard-partition", proj.partition_resid, 1e-12));
  rep.checks.push_back(detail::from_catalog(sc, "hadamard-idempotent", proj.idem_resid, 1e-10));
  {
    double worst = 0.0;
    for (const Operator* c : {&proj.c_plus, &proj.c_minus}) {
      Operator qc = fm.q * (*c);
      worst = std::max(worst, (fm.ip_c.adjoint(qc) - qc).op_norm());
    }
    rep.checks.push_back(detail::from_catalog(sc, "hadamard-q-selfadjoint", worst, 1e-10));
  }
  rep.decay_csv["factorization-residual"] = res.residual_profile.to_csv();
  {
    bool decay = res.residual_profile.tail_decay(3);
    rep.checks.push_back(detail::from_catalog(
        sc, "factorization-residual",
        decay ? res.residual_profile.constant(3) : 1e300, 10.0,
        "constant at m = 3 with a decaying tail"));
  }

  auto p = euc::make_elliptic(a.wick(), fm, sc.T_half, sc.s_nodes);
  auto ct = euc::calderon_projectors(p);
  rep.checks.push_back(detail::from_catalog(sc, "calderon-partition", ct.partition_resid, 1e-6));
  rep.checks.push_back(detail::from_catalog(sc, "calderon-idempotent", ct.idem_resid, 1e-6));
  {
    double worst = 0.0;
    for (const Operator* c : {&ct.c_plus, &ct.c_minus}) {
      Operator qc = fm.q * (*c);
      worst = std::max(worst, (fm.ip_c.adjoint(qc) - qc).op_norm());
    }
    rep.checks.push_back(detail::from_catalog(sc, "calderon-q-selfadjoint", worst, 1e-6));
  }

  auto dtn = euc::dtn_map(p, +1);
  {
    double worst = 0.0;
    for (int m = 0; m < g.points(); ++m) {
      if (g.abs_k(m) > 20.5) continue;
      double w = std::sqrt(sc.mass2 + g.k2(m));
      worst = std::max(worst, std::abs(dtn.n_map.mode_block(m)(0, 0) -
                                       Cplx(w / std::tanh(w * sc.T_half))));
    }
    rep.checks.push_back(detail::from_catalog(sc, "dtn-oracle", worst, 1e-6));
  }
  {
    Operator defect = euc::dtn_defect(p, +1, res.epsilon.at0());
    double ratio = 0.0;
    DecayTable table;
    table.m_list = {0};
    for (int m = 0; m < g.points(); ++m) {
      double w = std::sqrt(sc.mass2 + g.k2(m));
      double bound = 3.0 * w * std::exp(-2.0 * w * sc.T_half);
      double got = std::abs(defect.mode_block(m)(0, 0));
      ratio = std::max(ratio, got / bound);
      DecayTable::Row row;
      row.mode = m;
      row.abs_k = g.abs_k(m);
      row.base = got;
      row.weighted = {bound};
      table.rows.push_back(row);
    }
    rep.decay_csv["dtn-smoothing"] = table.to_csv();
    rep.checks.push_back(detail::from_catalog(sc, "dtn-smoothing", ratio, 1.0,
                                              "max over modes of |N - b(0)| / (3 w e^{-2wT})"));
  }
  rep.checks.push_back(detail::from_catalog(
      sc, "dtn-positivity", dtn.coercivity_lo <= 0.2 ? 1e300 : 0.0, 1.0,
      "Rayleigh window [" + std::to_string(dtn.coercivity_lo) + ", " +
          std::to_string(dtn.coercivity_hi) + "]"));

  Operator eps0 = res.epsilon.at0();
  auto cmp = euc::compare_projectors(proj, ct, sc.T_half, &eps0);
  {
    double worst = 0.0;
    for (size_t i = 0; i < cmp.abs_k.size(); ++i)
      worst = std::max(worst, cmp.oracle_scaled_diff[i] / std::max(cmp.oracle_bound[i], 1e-300));
    rep.checks.push_back(detail::from_catalog(
        sc, "calderon-vs-hadamard-permode", worst, 1.0,
        "closed-form route; the discretized per-mode curve is emitted alongside"));
    DecayTable t;
    t.m_list = {0, 1};
    for (size_t i = 0; i < cmp.abs_k.size(); ++i) {
      DecayTable::Row row;
      row.mode = int(i);
      row.abs_k = cmp.abs_k[i];
      row.base = cmp.permode_scaled_plus[i];
      row.weighted = {cmp.oracle_scaled_diff[i], cmp.oracle_bound[i]};
      t.rows.push_back(row);
    }
    rep.decay_csv["calderon-vs-hadamard-permode"] = t.to_csv();
  }
  {
    double worst = 0.0;
    bool decay = true;
    for (int m : {1, 2, 3, 4}) {
      worst = std::max(worst, std::max(cmp.profile_plus.constant(m),
                                       cmp.profile_minus.constant(m)));
      decay = decay && cmp.profile_plus.tail_decay(m) && cmp.profile_minus.tail_decay(m);
    }
    rep.decay_csv["calderon-vs-hadamard-profile"] = cmp.profile_plus.to_csv();
    rep.checks.push_back(detail::from_catalog(sc, "calderon-vs-hadamard-profile",
                                              decay ? worst : 1e300, 10.0));
  }

  // conserved charge identity and evolution checks
  {
    fact::SpacetimeTestSection p1{fact::TimeBump{-0.7 * sc.time_window, 0.2 * sc.time_window},
                                  random_bandlimited(g, 1, sc.band, rng)};
    fact::SpacetimeTestSection p2{fact::TimeBump{-0.2 * sc.time_window, 0.7 * sc.time_window},
                                  random_bandlimited(g, 1, sc.band, rng)};
    auto gc = fact::green_charge_check(a, fm, p1, p2, sc.time_window, sc.time_steps);
    rep.checks.push_back(detail::from_catalog(sc, "green-charge",
                                              gc.diff / (1.0 + std::abs(gc.lhs)), 1e-6));
    auto gc2 = fact::green_charge_check(a, fm, p2, p1, sc.time_window, sc.time_steps);
    rep.checks.push_back(detail::from_catalog(
        sc, "green-antisymmetry",
        std::abs(gc.lhs + std::conj(gc2.lhs)) / (1.0 + std::abs(gc.lhs)), 1e-8));
    rep.checks.push_back(detail::from_catalog(sc, "wave-residual", gc.wave_resid, 1e-5));

    Operator U = fact::cauchy_evolution(a, 0.0, sc.time_window, sc.time_steps, fm);
    rep.checks.push_back(detail::from_catalog(
        sc, "pseudo-unitarity", fact::pseudo_unitarity_resid(U, fm, sc.unitarity_band), 1e-8,
        "band |k| <= " + std::to_string(sc.unitarity_band)));
  }

  auto frame = fact::frame_T(res.b_plus.at0(), res.b_minus.at0(), res.epsilon.at0(), fm);
  rep.checks.push_back(detail::from_catalog(
      sc, "frame-normalization", frame.e017_resid, 1e-10,
      "norm of the frame corrector: " + std::to_string(frame.r_minus1_norm)));
  {
    auto proxy = gauge::frequency_sign_proxy(frame, ct.c_plus);
    DecayTable t;
    t.m_list = {0};
    for (size_t i = 0; i < proxy.k0.size(); ++i) {
      DecayTable::Row row;
      row.mode = int(i);
      row.abs_k = proxy.k0[i];
      row.base = proxy.off_norm[i];
      row.weighted = {proxy.off_norm[i]};
      t.rows.push_back(row);
    }
    rep.decay_csv["frequency-sign-proxy"] = t.to_csv();
    rep.checks.push_back(detail::from_catalog(
        sc, "frequency-sign-proxy", proxy.off_norm.back(), 1e-6,
        "tail value of the off-diagonal curve; k = 0 excluded (conic set)"));
    rep.notes.push_back("frequency-sign proxy excludes the k = 0 mode: it belongs to the "
                        "auxiliary conic set of the wavefront condition");
  }
  return rep;
}

// ---- gravity pipeline ---------------------------------------------------------

inline Report run_gravity(const Scenario& sc) {
  Report rep;
  rep.scenario = sc.to_json();
  rep.seed = sc.seed;
  Rng rng(sc.seed);

  GridSpec g(sc.dim, sc.n_per_axis);
  const bool einstein_background = sc.metric_preset != "poly-perturbation";
  const int fact_order = std::max(sc.taylor_order, 10);
  auto hm = sc.metric(fact_order);
  auto R_full = geometry::build_reduced_ops(hm, sc.lambda, fact_order);
  auto B = bundles::build_charges(g, hm.h0_field());

  geometry::ReducedOps R = R_full;
  R.a1 = R.a1.truncated(sc.taylor_order);
  R.a2 = R.a2.truncated(sc.taylor_order);
  R.d0 = R.d0.truncated(sc.taylor_order);
  R.d1 = R.d1.truncated(sc.taylor_order);

  if (sc.dim != 3)
    rep.notes.push_back("d != 3: the dimension-4 trace reversal is kept; I^2 - 1 residual " +
                        std::to_string(B.i2_invol_resid) + ", J2^2 - 1 residual " +
                        std::to_string(B.j2_sq_resid));

  // constraint checks on the slice data of the family
  {
    Mat h0 = hm.coeff[0][0];
    Mat k0 = hm.internal_order >= 1 ? Mat(0.5 * hm.coeff[1][0]) : Mat(Mat::Zero(g.dim, g.dim));
    auto res = geometry::constraint_check(g, {h0}, {k0}, sc.lambda);
    if (einstein_background && sc.metric_preset == "desitter") {
      rep.checks.push_back(detail::from_catalog(
          sc, "constraint-desitter", std::max(res.hamiltonian, res.momentum), 1e-12));
      std::vector<Mat> hd{Mat::Identity(g.dim, g.dim)}, kz{Mat::Zero(g.dim, g.dim)};
      auto flat = geometry::constraint_check(g, hd, kz, 0.0);
      rep.checks.push_back(detail::from_catalog(
          sc, "constraint-flat", std::max(flat.hamiltonian, flat.momentum), 1e-13));
      auto bad = geometry::constraint_check(g, {h0}, {k0}, 0.0);
      double want = 2.0 * sc.lambda;  // 6 H^2 for the de Sitter slice
      rep.checks.push_back(detail::from_catalog(
          sc, "constraint-mismatch-control", std::abs(bad.hamiltonian - want), 1e-10));
    } else if (sc.metric_preset == "static-flat") {
      rep.checks.push_back(detail::from_catalog(
          sc, "constraint-flat", std::max(res.hamiltonian, res.momentum), 1e-13));
    } else {
      // control family: de Sitter-type data against the wrong Lambda
      double H = 1.0;
      std::vector<Mat> hd{Mat::Identity(g.dim, g.dim)},
          kd{H * Mat::Identity(g.dim, g.dim)};
      auto bad = geometry::constraint_check(g, hd, kd, 0.0);
      rep.checks.push_back(detail::from_catalog(
          sc, "constraint-mismatch-control",
          std::abs(bad.hamiltonian - 2.0 * g.dim * H * H), 1e-10));
    }
  }

  // reduced gauge identities
  {
    auto gr = geometry::gauge_residuals(R, B, unsigned(sc.seed));
    if (einstein_background) {
      rep.checks.push_back(detail::from_catalog(sc, "gauge-e31-i", gr.line("e31-i").max_rel, 1e-8));
      rep.checks.push_back(detail::from_catalog(sc, "gauge-e31-ii", gr.line("e31-ii").max_rel, 1e-8));
      rep.checks.push_back(
          detail::from_catalog(sc, "gauge-e31-iii", gr.line("e31-iii").max_rel, 1e-8));
      rep.checks.push_back(
          detail::from_catalog(sc, "gauge-d2k-kd1", gr.line("D2K-KD1").max_rel, 1e-8));
      rep.checks.push_back(
          detail::from_catalog(sc, "gauge-kstark-d1", gr.line("KstarK-D1").max_rel,
                               sc.dim == 3 ? 1e-8 : 1e300,
                               sc.dim == 3 ? "" : "reported only away from d = 3"));
    } else {
      rep.checks.push_back(detail::control_from_catalog(
          sc, "gauge-e31-iii-control", gr.line("e31-iii").max_rel, 1e-3));
      rep.checks.push_back(detail::control_from_catalog(
          sc, "einstein-residual-control", R.einstein_resid, 0.5));
    }
    double sa = 0.0;
    sa = std::max((B.v1.ip.adjoint(R.a1.at0()) - R.a1.at0()).op_norm() /
                      std::max(1.0, R.a1.at0().op_norm()),
                  (B.v2.ip.adjoint(R.a2.at0()) - R.a2.at0()).op_norm() /
                      std::max(1.0, R.a2.at0().op_norm()));
    rep.checks.push_back(detail::from_catalog(sc, "reduced-selfadjoint", sa, 1e-10));
    if (einstein_background)
      rep.checks.push_back(detail::from_catalog(sc, "trace-reversal-commutes",
                                                gr.line("I-D2-commute").max_rel, 1e-10));
  }

  // surface gauge operators
  auto go = gauge::build_gauge_surface_ops(R_full, B);
  rep.checks.push_back(detail::from_catalog(sc, "surface-t-equality", go.t_equality_resid, 1e-14));
  if (sc.dim == 3)
    rep.checks.push_back(detail::from_catalog(sc, "surface-kdagk", go.kdagk_resid, 1e-10));
  else
    rep.checks.push_back(detail::from_catalog(
        sc, "surface-kdagk-reported", 0.0, 1.0,
        "measured " + std::to_string(go.kdagk_resid) + "; zero needs d = 3"));

  if (!einstein_background) return rep;  // the control scenario stops here

  // factorizations of both reduced operators
  auto f1 = fact::factorize(R_full.a1, B.v1);
  auto f2 = fact::factorize(R_full.a2, B.v2);
  for (const auto* f : {&f1, &f2}) {
    auto& prof = f->residual_profile;
    bool decay = prof.tail_decay(3);
    rep.checks.push_back(detail::from_catalog(
        sc, "factorization-residual", decay ? prof.constant(3) : 1e300,
        2e3, f == &f1 ? "vector slot" : "tensor slot"));
  }
  rep.decay_csv["factorization-residual-v1"] = f1.residual_profile.to_csv();
  rep.decay_csv["factorization-residual-v2"] = f2.residual_profile.to_csv();

  auto c1 = fact::hadamard_projectors(f1.b_plus.at0(), f1.b_minus.at0());
  auto c2 = fact::hadamard_projectors(f2.b_plus.at0(), f2.b_minus.at0());
  rep.checks.push_back(detail::from_catalog(
      sc, "hadamard-partition", std::max(c1.partition_resid, c2.partition_resid), 1e-12));
  rep.checks.push_back(detail::from_catalog(
      sc, "hadamard-idempotent", std::max(c1.idem_resid, c2.idem_resid), 1e-10));
  {
    Operator qc = B.q2p * c2.c_plus;
    rep.checks.push_back(detail::from_catalog(
        sc, "hadamard-q-selfadjoint", (B.v2.ip_c.adjoint(qc) - qc).op_norm(), 1e-10,
        "with the physical charge"));
  }

  // evolution factorization in the moving frame
  {
    double t1 = 0.2;
    Operator U = fact::cauchy_evolution(R_full.a2.truncated(8), 0.0, t1, 60, B.v2);
    auto frame0 = fact::frame_T(f2.b_plus.at0(), f2.b_minus.at0(), f2.epsilon.at0(), B.v2);
    auto frame1 = fact::frame_T(f2.b_plus.eval(t1), f2.b_minus.eval(t1),
                                f2.epsilon.eval(t1), B.v2);
    Operator conj = frame1.Tinv * U * frame0.T;
    const int F = B.v2.fiber;
    std::vector<Mat> off(g.points());
    for (int m = 0; m < g.points(); ++m) {
      Mat b = conj.mode_block(m);
      Mat o = Mat::Zero(2 * F, 2 * F);
      o.topRightCorner(F, F) = b.topRightCorner(F, F);
      o.bottomLeftCorner(F, F) = b.bottomLeftCorner(F, F);
      off[m] = std::move(o);
    }
    Operator offop = Operator::multiplier(g, 2 * F, 2 * F, std::move(off));
    auto prof = smoothing_order_profile(offop, {1, 2, 3});
    rep.decay_csv["evolution-factorization"] = prof.to_csv();
    rep.checks.push_back(detail::from_catalog(
        sc, "evolution-factorization", prof.tail_decay(3) ? prof.constant(3) : 1e300, 2e3,
        "t = 0.2, constant at m = 3 with a decaying tail"));
  }

  // elliptic side
  auto p1 = euc::make_elliptic(R_full.a1.wick(), B.v1, sc.T_half, sc.s_nodes);
  auto p2 = euc::make_elliptic(R_full.a2.wick(), B.v2, sc.T_half, sc.s_nodes);
  auto ct1 = euc::calderon_projectors(p1);
  auto ct2 = euc::calderon_projectors(p2);
  rep.checks.push_back(detail::from_catalog(
      sc, "calderon-partition", std::max(ct1.partition_resid, ct2.partition_resid), 1e-6));
  rep.checks.push_back(detail::from_catalog(
      sc, "calderon-idempotent", std::max(ct1.idem_resid, ct2.idem_resid), 1e-6));
  {
    Operator qc = B.q2p * ct2.c_plus;
    rep.checks.push_back(detail::from_catalog(
        sc, "calderon-q-selfadjoint", (B.v2.ip_c.adjoint(qc) - qc).op_norm(), 1e-6,
        "with the physical charge"));
    Operator comm = B.I2S * ct2.c_plus - ct2.c_plus * B.I2S;
    rep.checks.push_back(
        detail::from_catalog(sc, "calderon-trace-reversal", comm.op_norm(), 1e-8));
  }

  // Green identities on solver-produced pairs
  {
    auto padj = euc::make_elliptic(euc::adjoint_series(R_full.a2.wick(), B.v2), B.v2,
                                   sc.T_half, sc.s_nodes);
    auto v0 = random_bandlimited(g, B.v2.fiber, 2, rng);
    auto u0 = random_bandlimited(g, B.v2.fiber, 2, rng);
    Mat v = euc::poisson(p2, +1, v0);
    Mat u = euc::poisson(padj, +1, u0);
    auto gres = euc::green_identities(p2, +1, u, euc::apply_D_nodal(p2, +1, u, false), v,
                                      euc::apply_D_nodal(p2, +1, v, false),
                                      euc::apply_D_nodal(p2, +1, u, true));
    Mat u2 = euc::poisson(p2, +1, u0);
    auto gres2 = euc::green_identities(p2, +1, u2, euc::apply_D_nodal(p2, +1, u2, false), v,
                                       euc::apply_D_nodal(p2, +1, v, false),
                                       euc::apply_D_nodal(p2, +1, u2, true));
    double scale = 1.0 + u0.norm_flat() * v0.norm_flat();
    rep.checks.push_back(detail::from_catalog(
        sc, "gauge-fix-symbol", 0.0, 1.0, "green identities below"));
    rep.checks.back().name = "green-identity-1";
    rep.checks.back().anchor = "(u | D v) - (D* u | v) = trace pairings with sigma";
    rep.checks.back().measured = gres.green1 / scale;
    rep.checks.back().tolerance = sc.tol("green-identity-1", 1e-8);
    rep.checks.back().pass = rep.checks.back().measured <= rep.checks.back().tolerance;
    rep.checks.back().note.clear();
    CheckResult g2c;
    g2c.name = "green-identity-2";
    g2c.anchor = "(u | D v) + (D u | v) = 2 eta(u, v) - trace pairings with q";
    g2c.measured = gres2.green2 / scale;
    g2c.tolerance = sc.tol("green-identity-2", 1e-8);
    g2c.pass = g2c.measured <= g2c.tolerance;
    rep.checks.push_back(std::move(g2c));
  }

  // gauge machinery on the Cauchy surface
  auto dtn1 = euc::dtn_map(p1, +1);
  auto H = gauge::build_gauge_fix_operator(dtn1.n_map, R_full, B);
  rep.checks.push_back(detail::from_catalog(
      sc, "gauge-fix-symbol",
      std::max(3.0 * H.ratio_lo < 1.0 ? 1e300 : 0.0, H.ratio_hi > 3.0 ? 1e300 : 0.0), 1.0,
      "singular-value window [" + std::to_string(H.ratio_lo) + ", " +
          std::to_string(H.ratio_hi) + "] against <k>"));

  {
    auto inter = gauge::gauge_intertwine_residual(ct1, ct2, go.K_sigma, &c1, &c2,
                                                  f1.reg.R_used);
    rep.decay_csv["gauge-intertwine-euclidean"] = inter.profile_plus.to_csv();
    rep.checks.push_back(detail::from_catalog(
        sc, "gauge-intertwine-euclidean",
        inter.profile_plus.tail_decay(2) ? inter.profile_plus.constant(2) : 1e300, 100.0));
    rep.checks.push_back(detail::from_catalog(
        sc, "gauge-intertwine-lorentzian", inter.lorentz_highband, 1e-8,
        "full-band norm " + std::to_string(inter.lorentz_plus) +
            " includes the finite-rank regularizer obstruction"));
  }

  {
    double worst_mixed = 0.0, worst_trace = 0.0;
    for (int trial = 0; trial < 3; ++trial) {
      auto u = random_bandlimited(g, B.v2.fiber, sc.kernel_band, rng);
      auto fix = gauge::gauge_fix_solve(p1, p2, H, R_full, B, u);
      worst_mixed = std::max(worst_mixed, fix.resid_mixed);
      worst_trace = std::max(worst_trace, fix.resid_tracefree);
    }
    rep.checks.push_back(detail::from_catalog(sc, "gauge-fix-loop",
                                              std::max(worst_mixed, worst_trace), 1e-7));
  }

  {
    int rank = 0;
    auto basis = gauge::kernel_basis(go, g, B.v2.fiber, sc.kernel_band, &rank);
    double jworst = 0.0, rworst = 0.0, hworst = 0.0;
    for (int trial = 0; trial < 3; ++trial) {
      SectionField f = SectionField::zero(g, 2 * B.v2.fiber);
      for (const auto& b : basis) f += randn_cplx(rng) * b;
      f *= Cplx(1.0 / std::max(1e-12, f.norm_flat()));
      auto syn = gauge::synchronous_decompose(p1, p2, H, ct1, ct2, go, R_full, B, f);
      jworst = std::max(jworst, syn.j2_fix_resid);
      rworst = std::max(rworst, syn.reconstruction);
      hworst = std::max(hworst, syn.h_projection);
    }
    rep.checks.push_back(detail::from_catalog(sc, "synchronous-j2", jworst, 1e-7));
    rep.checks.push_back(detail::from_catalog(sc, "synchronous-reconstruction", rworst, 1e-7));
    rep.checks.push_back(detail::from_catalog(sc, "synchronous-h-projection", hworst, 1e-6));

    auto pos = gauge::positivity_report(p1, p2, H, ct1, ct2, go, R_full, B, sc.kernel_band,
                                        rng, 6);
    rep.checks.push_back(detail::control_from_catalog(
        sc, "positivity-kernel-dim", double(pos.kernel_dim), 20.0,
        "projection rank " + std::to_string(rank)));
    rep.checks.push_back(detail::from_catalog(sc, "positivity-energy", -pos.min_energy, 1e-10));
    rep.checks.push_back(detail::from_catalog(
        sc, "positivity-bounded", -(pos.min_value + pos.smoothing_bound), 1e-12,
        "min value " + std::to_string(pos.min_value) + ", measured smoothing bound " +
            std::to_string(pos.smoothing_bound)));
    rep.checks.push_back(detail::control_from_catalog(
        sc, "positivity-negative-control", -pos.negative_control, 1e-3,
        "most negative value outside the kernel: " + std::to_string(pos.negative_control)));
  }

  {
    auto frame = fact::frame_T(f2.b_plus.at0(), f2.b_minus.at0(), f2.epsilon.at0(), B.v2);
    rep.checks.push_back(detail::from_catalog(
        sc, "frame-normalization", frame.e017_resid, 1e-10,
        "norm of the frame corrector: " + std::to_string(frame.r_minus1_norm)));
    auto proxy = gauge::frequency_sign_proxy(frame, ct2.c_plus);
    rep.checks.push_back(detail::from_catalog(
        sc, "frequency-sign-proxy",
        proxy.off_norm.back() / std::max(1e-12, proxy.off_norm.front()), 0.2,
        "tail-to-head ratio of the off-diagonal curve; k = 0 excluded"));
  }

  return rep;
}

inline Report run_scenario(const Scenario& sc) {
  return sc.model == "scalar" ? run_scalar(sc) : run_gravity(sc);
}

}  // namespace pipeline
}  // namespace hadcal
