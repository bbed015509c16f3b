#pragma once

#include "hadcal/operator.hpp"

namespace hadcal {

// Taylor series in t of section fields: f(t) = sum_n t^n coeff[n].
struct FieldSeries {
  std::vector<SectionField> coeff;

  FieldSeries() = default;
  explicit FieldSeries(std::vector<SectionField> c) : coeff(std::move(c)) {}

  static FieldSeries constant(const SectionField& f, int order) {
    FieldSeries s;
    s.coeff.assign(order + 1, SectionField::zero(f.grid, f.fiber));
    s.coeff[0] = f;
    return s;
  }

  int order() const { return int(coeff.size()) - 1; }

  FieldSeries dt() const {
    FieldSeries out;
    for (int n = 1; n <= order(); ++n) out.coeff.push_back(Cplx(double(n)) * coeff[n]);
    return out;
  }

  // multiplication by t (shift up), truncated at `max_order`
  FieldSeries shift(int max_order) const {
    FieldSeries out;
    out.coeff.push_back(SectionField::zero(coeff[0].grid, coeff[0].fiber));
    for (int n = 0; n <= order() && n + 1 <= max_order; ++n) out.coeff.push_back(coeff[n]);
    return out;
  }

  SectionField eval(double t) const {
    SectionField acc = coeff.back();
    for (int n = order() - 1; n >= 0; --n) {
      acc *= Cplx(t);
      acc += coeff[n];
    }
    return acc;
  }

  FieldSeries truncated(int new_order) const {
    FieldSeries out;
    for (int n = 0; n <= std::min(new_order, order()); ++n) out.coeff.push_back(coeff[n]);
    return out;
  }

  FieldSeries& operator+=(const FieldSeries& o) {
    int m = std::min(order(), o.order());
    coeff.resize(m + 1, coeff[0]);
    for (int n = 0; n <= m; ++n) coeff[n] += o.coeff[n];
    return *this;
  }
  FieldSeries& operator-=(const FieldSeries& o) {
    int m = std::min(order(), o.order());
    coeff.resize(m + 1, coeff[0]);
    for (int n = 0; n <= m; ++n) coeff[n] -= o.coeff[n];
    return *this;
  }
  friend FieldSeries operator+(FieldSeries a, const FieldSeries& b) { return a += b; }
  friend FieldSeries operator-(FieldSeries a, const FieldSeries& b) { return a -= b; }
};

// Truncated Taylor series in t whose coefficients are operators.
struct OpSeries {
  std::vector<Operator> coeff;

  OpSeries() = default;
  explicit OpSeries(std::vector<Operator> c) : coeff(std::move(c)) {}

  static OpSeries constant(const Operator& op, int order) {
    OpSeries s;
    s.coeff.assign(order + 1, Operator::zero(op.grid(), op.fiber_in(), op.fiber_out()));
    s.coeff[0] = op;
    return s;
  }

  int order() const { return int(coeff.size()) - 1; }
  const Operator& at0() const { return coeff[0]; }
  const GridSpec& grid() const { return coeff[0].grid(); }
  int fiber_in() const { return coeff[0].fiber_in(); }
  int fiber_out() const { return coeff[0].fiber_out(); }

  OpSeries truncated(int new_order) const {
    OpSeries out;
    for (int n = 0; n <= std::min(new_order, order()); ++n) out.coeff.push_back(coeff[n]);
    return out;
  }

  OpSeries dt() const {
    OpSeries out;
    for (int n = 1; n <= order(); ++n) out.coeff.push_back(Cplx(double(n)) * coeff[n]);
    if (out.coeff.empty())
      out.coeff.push_back(Operator::zero(grid(), fiber_in(), fiber_out()));
    return out;
  }

  OpSeries compose(const OpSeries& rhs) const {  // truncated Cauchy product
    int m = std::min(order(), rhs.order());
    OpSeries out;
    for (int n = 0; n <= m; ++n) {
      Operator acc = Operator::zero(grid(), rhs.fiber_in(), fiber_out());
      for (int j = 0; j <= n; ++j) acc += coeff[j].compose(rhs.coeff[n - j]);
      out.coeff.push_back(std::move(acc));
    }
    return out;
  }

  // series inverse; coeff[0] must be invertible
  OpSeries inverse() const {
    OpSeries out;
    Operator inv0 = coeff[0].inverse();
    out.coeff.push_back(inv0);
    for (int n = 1; n <= order(); ++n) {
      Operator acc = Operator::zero(grid(), fiber_out(), fiber_in());
      for (int j = 1; j <= n; ++j) acc += coeff[j].compose(out.coeff[n - j]);
      out.coeff.push_back(Cplx(-1.0) * inv0.compose(acc));
    }
    return out;
  }

  // coefficientwise substitution t -> i s
  OpSeries wick() const {
    OpSeries out = *this;
    Cplx f(1.0, 0.0);
    for (int n = 0; n <= order(); ++n) {
      out.coeff[n].scale(f);
      f *= kI;
    }
    return out;
  }

  Operator eval(double t) const {
    Operator acc = coeff.back();
    for (int n = order() - 1; n >= 0; --n) {
      acc.scale(Cplx(t));
      acc += coeff[n];
    }
    return acc;
  }

  FieldSeries apply(const FieldSeries& f) const {
    int m = std::min(order(), f.order());
    FieldSeries out;
    for (int n = 0; n <= m; ++n) {
      SectionField acc = SectionField::zero(grid(), fiber_out());
      for (int j = 0; j <= n; ++j) acc += coeff[j].apply(f.coeff[n - j]);
      out.coeff.push_back(std::move(acc));
    }
    return out;
  }

  // coefficientwise adjoint for a t-independent form
  OpSeries adjoint(const InnerProduct& ip) const {
    OpSeries out;
    for (const auto& c : coeff) out.coeff.push_back(ip.adjoint(c));
    return out;
  }

  OpSeries& operator+=(const OpSeries& o) {
    int m = std::min(order(), o.order());
    coeff.resize(m + 1, coeff[0]);
    for (int n = 0; n <= m; ++n) coeff[n] += o.coeff[n];
    return *this;
  }
  OpSeries& operator-=(const OpSeries& o) {
    int m = std::min(order(), o.order());
    coeff.resize(m + 1, coeff[0]);
    for (int n = 0; n <= m; ++n) coeff[n] -= o.coeff[n];
    return *this;
  }
  friend OpSeries operator+(OpSeries a, const OpSeries& b) { return a += b; }
  friend OpSeries operator-(OpSeries a, const OpSeries& b) { return a -= b; }
  friend OpSeries operator*(Cplx z, OpSeries a) {
    for (auto& c : a.coeff) c.scale(z);
    return a;
  }
  friend OpSeries operator*(const OpSeries& a, const OpSeries& b) { return a.compose(b); }
};

}  // namespace hadcal
