#pragma once

#include "hadcal/field.hpp"

namespace hadcal {

// Taylor family h_t of Riemannian metrics on the torus, sampled on the grid.
// coeff[n][point] is the d x d matrix of h^{(n)}; the family carries two extra
// internal orders so that second time derivatives keep the requested order.
struct MetricFamily {
  GridSpec grid;
  int taylor_order = 6;    // user-facing order D
  int internal_order = 8;  // D + 2
  std::vector<std::vector<Mat>> coeff;
  std::string preset_name;
  bool spatially_constant = true;
  double min_eig_h0 = 0.0;

  const Mat& h0(int p) const { return coeff[0][p]; }

  std::vector<Mat> h0_field() const { return coeff[0]; }

  static MetricFamily from_samples(GridSpec g, int order,
                                   std::vector<std::vector<Mat>> samples,
                                   std::string name) {
    MetricFamily m;
    m.grid = g;
    m.taylor_order = order;
    m.internal_order = int(samples.size()) - 1;
    m.coeff = std::move(samples);
    m.preset_name = std::move(name);
    m.spatially_constant = true;
    const int N = g.points();
    for (auto& cn : m.coeff) {
      if (int(cn.size()) == 1) cn.assign(N, cn[0]);
      if (int(cn.size()) != N) throw PipelineError("metric", "sample count mismatch");
      for (const auto& mm : cn)
        if ((mm - cn[0]).cwiseAbs().maxCoeff() > 1e-13 * (1.0 + cn[0].cwiseAbs().maxCoeff()))
          m.spatially_constant = false;
    }
    double mn = 1e300;
    for (const auto& h : m.coeff[0]) {
      Eigen::SelfAdjointEigenSolver<Mat> es(h);
      mn = std::min(mn, es.eigenvalues().minCoeff());
    }
    m.min_eig_h0 = mn;
    if (mn <= 0) throw PipelineError("metric", "h0 is not positive definite");
    return m;
  }

  // conformally flat family h_t = f(t) * delta given scalar Taylor coefficients
  static MetricFamily conformal(GridSpec g, int order, std::vector<double> f,
                                std::string name) {
    const int d = g.dim;
    int internal = order + 2;
    f.resize(internal + 1, 0.0);
    std::vector<std::vector<Mat>> samples(internal + 1);
    for (int n = 0; n <= internal; ++n)
      samples[n] = {Cplx(f[n], 0.0) * Mat::Identity(d, d)};
    return from_samples(g, order, std::move(samples), std::move(name));
  }

  static MetricFamily static_flat(GridSpec g, int order) {
    std::vector<double> f{1.0};
    return conformal(g, order, std::move(f), "static-flat");
  }

  // de Sitter flat slicing: h_t = e^{2Ht} delta
  static MetricFamily desitter(GridSpec g, int order, double H) {
    int internal = order + 2;
    std::vector<double> f(internal + 1);
    double c = 1.0;
    for (int n = 0; n <= internal; ++n) {
      f[n] = c;
      c *= 2.0 * H / (n + 1);
    }
    return conformal(g, order, std::move(f), "desitter");
  }

  // polynomial conformal perturbation h_t = (1 + c1 t + c2 t^2) delta
  static MetricFamily poly_perturbation(GridSpec g, int order, double c1, double c2) {
    return conformal(g, order, {1.0, c1, c2}, "poly-perturbation");
  }
};

}  // namespace hadcal
