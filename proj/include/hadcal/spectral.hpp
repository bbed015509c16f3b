#pragma once

#include <algorithm>
#include <sstream>

#include "hadcal/operator.hpp"

namespace hadcal {

// Fourier multiplier of i*k_axis on each fiber component; exact on
// trigonometric polynomials.
inline Operator derivative_op(const GridSpec& g, int axis, int fiber = 1) {
  if (axis < 0 || axis >= g.dim) throw PipelineError("spectral", "derivative axis out of range");
  std::vector<Mat> blocks(g.points());
  for (int m = 0; m < g.points(); ++m)
    blocks[m] = Cplx(0.0, g.kvec(m)[axis]) * Mat::Identity(fiber, fiber);
  auto op = Operator::multiplier(g, fiber, fiber, std::move(blocks));
  op.claimed().order = 1;
  return op;
}

// multiplier of |k|^2 on each component (= -Laplacian for the flat metric)
inline Operator minus_laplacian_op(const GridSpec& g, int fiber = 1) {
  std::vector<Mat> blocks(g.points());
  for (int m = 0; m < g.points(); ++m)
    blocks[m] = Cplx(g.k2(m), 0.0) * Mat::Identity(fiber, fiber);
  auto op = Operator::multiplier(g, fiber, fiber, std::move(blocks));
  op.claimed().order = 2;
  return op;
}

// ( sum_k (1+|k|^2)^s sum_c |f_hat(k,c)|^2 )^{1/2}
inline double sobolev_norm(const SectionField& f, double s) {
  Mat modes = f.to_modes();
  double acc = 0.0;
  for (int m = 0; m < f.grid.points(); ++m)
    acc += std::pow(1.0 + f.grid.k2(m), s) * modes.row(m).squaredNorm();
  return std::sqrt(acc);
}

// W^{-1} A^H W for the weight W of `ip`; condition of W is reported by caller
// via ip.weight if needed.
inline Operator adjoint(const Operator& a, const InnerProduct& ip) {
  return ip.adjoint(a);
}

// Frequency-decay certificate used in place of exact pseudodifferential
// orders. For each lattice mode e_k and weight exponent m it records
//   (1 + |k|^2)^{m/2} * max_c ||A e_{k,c}||
// so that boundedness of the m-profile certifies H^{-m/2} -> H^{m/2}
// boundedness of A on the tested band. An operator "passes at order m with
// constant C" when the profile maximum is <= C and the profile decays away
// from its peak shell.
struct DecayTable {
  std::vector<int> m_list;
  struct Row {
    int mode = 0;
    double abs_k = 0.0;
    double base = 0.0;                // max_c ||A e_{k,c}||
    std::vector<double> weighted;     // per entry of m_list
  };
  std::vector<Row> rows;

  double constant(int m) const {
    int j = index_of(m);
    double c = 0.0;
    for (const auto& r : rows) c = std::max(c, r.weighted[j]);
    return c;
  }

  // shell maxima ordered by |k|
  std::vector<std::pair<double, double>> shells(int m) const {
    int j = index_of(m);
    std::vector<std::pair<double, double>> sh;
    for (const auto& r : rows) {
      bool found = false;
      for (auto& s : sh)
        if (std::abs(s.first - r.abs_k) < 1e-9) { s.second = std::max(s.second, r.weighted[j]); found = true; }
      if (!found) sh.emplace_back(r.abs_k, r.weighted[j]);
    }
    std::sort(sh.begin(), sh.end());
    return sh;
  }

  // the top-frequency quarter of the shells must sit clearly below the peak
  bool tail_decay(int m, double ratio = 0.9) const {
    auto sh = shells(m);
    if (sh.size() < 2) return true;
    double peak = 0.0;
    for (const auto& s : sh) peak = std::max(peak, s.second);
    if (peak <= 1e-12) return true;
    size_t start = sh.size() - std::max<size_t>(1, sh.size() / 4);
    double tail = 0.0;
    for (size_t i = start; i < sh.size(); ++i) tail = std::max(tail, sh[i].second);
    return tail <= ratio * peak;
  }

  bool passes(int m, double constant_bound, double ratio = 0.9) const {
    return constant(m) <= constant_bound && tail_decay(m, ratio);
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << "mode,abs_k,base";
    for (int m : m_list) os << ",m" << m;
    os << "\n";
    os.precision(17);
    for (const auto& r : rows) {
      os << r.mode << "," << r.abs_k << "," << r.base;
      for (double w : r.weighted) os << "," << w;
      os << "\n";
    }
    return os.str();
  }

 private:
  int index_of(int m) const {
    for (size_t j = 0; j < m_list.size(); ++j)
      if (m_list[j] == m) return int(j);
    throw PipelineError("spectral", "m not in decay table");
  }
};

inline DecayTable smoothing_order_profile(const Operator& a,
                                          std::vector<int> m_list = {1, 2, 3, 4}) {
  if (a.fiber_in() != a.fiber_out())
    throw PipelineError("spectral", "smoothing profile requires square fiber dimensions");
  DecayTable table;
  table.m_list = m_list;
  const GridSpec& g = a.grid();
  for (int m = 0; m < g.points(); ++m) {
    DecayTable::Row row;
    row.mode = m;
    row.abs_k = g.abs_k(m);
    if (a.is_multiplier()) {
      for (int c = 0; c < a.fiber_in(); ++c)
        row.base = std::max(row.base, a.mode_block(m).col(c).norm());
    } else {
      for (int c = 0; c < a.fiber_in(); ++c)
        row.base = std::max(row.base, a.apply(unit_mode(g, a.fiber_in(), m, c)).norm_flat());
    }
    for (int mm : m_list)
      row.weighted.push_back(std::pow(1.0 + g.k2(m), 0.5 * mm) * row.base);
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace hadcal
