#pragma once

#include <Eigen/SVD>

#include <optional>
#include <utility>
#include <vector>

#include "hadcal/field.hpp"

namespace hadcal {

// Linear map on the discretized section space. Three storage kinds:
//   Multiplier — block-diagonal over Fourier modes (translation invariant),
//   Pointwise  — block-diagonal over grid points (multiplication operator),
//   Dense      — full matrix on the flattened section space (point*fiber+comp).
// Multiplier and Pointwise algebra stays blockwise; mixed products materialize
// to Dense, guarded by a size limit.
class Operator {
 public:
  enum class Storage { Multiplier, Pointwise, Dense };

  // claimed pseudodifferential order; metadata only, never trusted by checks
  struct ClaimedOrder {
    bool smoothing = false;
    std::optional<int> order;
  };

  Operator() = default;

  static Operator multiplier(GridSpec g, int fin, int fout, std::vector<Mat> blocks) {
    Operator op;
    op.grid_ = g; op.fin_ = fin; op.fout_ = fout;
    op.storage_ = Storage::Multiplier;
    op.blocks_ = std::move(blocks);
    op.check_blocks(g.points());
    return op;
  }

  static Operator pointwise(GridSpec g, int fin, int fout, std::vector<Mat> blocks) {
    Operator op;
    op.grid_ = g; op.fin_ = fin; op.fout_ = fout;
    op.storage_ = Storage::Pointwise;
    op.blocks_ = std::move(blocks);
    op.check_blocks(g.points());
    return op;
  }

  // same fiber block at every mode (equivalently every point)
  static Operator constant_block(GridSpec g, const Mat& block) {
    std::vector<Mat> blocks(g.points(), block);
    return multiplier(g, int(block.cols()), int(block.rows()), std::move(blocks));
  }

  static Operator dense(GridSpec g, int fin, int fout, Mat m) {
    Operator op;
    op.grid_ = g; op.fin_ = fin; op.fout_ = fout;
    op.storage_ = Storage::Dense;
    if (m.rows() != g.points() * fout || m.cols() != g.points() * fin)
      throw PipelineError("operator", "dense matrix shape mismatch");
    op.dense_ = std::move(m);
    return op;
  }

  static Operator identity(GridSpec g, int f) {
    return constant_block(g, Mat::Identity(f, f));
  }

  static Operator zero(GridSpec g, int fin, int fout) {
    return constant_block(g, Mat::Zero(fout, fin));
  }

  const GridSpec& grid() const { return grid_; }
  int fiber_in() const { return fin_; }
  int fiber_out() const { return fout_; }
  Storage storage() const { return storage_; }
  const std::vector<Mat>& blocks() const { return blocks_; }
  std::vector<Mat>& blocks() { return blocks_; }
  ClaimedOrder& claimed() { return claimed_; }
  const ClaimedOrder& claimed() const { return claimed_; }

  bool is_multiplier() const { return storage_ == Storage::Multiplier; }

  SectionField apply(const SectionField& f) const {
    if (f.grid != grid_ || f.fiber != fin_)
      throw PipelineError("operator", "apply: field shape mismatch");
    switch (storage_) {
      case Storage::Multiplier: {
        Mat modes = f.to_modes();
        Mat out(grid_.points(), fout_);
        for (int m = 0; m < grid_.points(); ++m)
          out.row(m) = (blocks_[m] * modes.row(m).transpose()).transpose();
        return SectionField::from_modes(grid_, fout_, out);
      }
      case Storage::Pointwise: {
        Mat out(grid_.points(), fout_);
        for (int p = 0; p < grid_.points(); ++p)
          out.row(p) = (blocks_[p] * f.values.row(p).transpose()).transpose();
        return SectionField(grid_, fout_, std::move(out));
      }
      case Storage::Dense: {
        return SectionField::from_vec(grid_, fout_, dense_ * f.to_vec());
      }
    }
    throw PipelineError("operator", "bad storage");
  }

  Operator compose(const Operator& rhs) const {  // (*this) o rhs
    if (rhs.grid_ != grid_ || rhs.fout_ != fin_)
      throw PipelineError("operator", "compose: shape mismatch");
    if (storage_ == rhs.storage_ && storage_ != Storage::Dense) {
      std::vector<Mat> blocks(grid_.points());
      for (size_t i = 0; i < blocks.size(); ++i) blocks[i] = blocks_[i] * rhs.blocks_[i];
      Operator out = *this;
      out.fin_ = rhs.fin_; out.blocks_ = std::move(blocks); out.claimed_ = {};
      return out;
    }
    Operator a = promote_for(*this, rhs);
    Operator b = promote_for(rhs, *this);
    if (a.storage_ == b.storage_ && a.storage_ != Storage::Dense) return a.compose(b);
    return Operator::dense(grid_, rhs.fin_, fout_, a.dense_matrix() * b.dense_matrix());
  }

  Operator& operator+=(const Operator& o) { return combine(o, Cplx(1.0)); }
  Operator& operator-=(const Operator& o) { return combine(o, Cplx(-1.0)); }
  friend Operator operator+(Operator a, const Operator& b) { return a += b; }
  friend Operator operator-(Operator a, const Operator& b) { return a -= b; }
  friend Operator operator*(Cplx z, Operator a) { return a.scale(z); }
  friend Operator operator*(const Operator& a, const Operator& b) { return a.compose(b); }

  Operator& scale(Cplx z) {
    if (storage_ == Storage::Dense) dense_ *= z;
    else for (auto& b : blocks_) b *= z;
    return *this;
  }

  // adjoint with respect to the mean-normalized flat product on values
  Operator adjoint_flat() const {
    Operator out = *this;
    out.fin_ = fout_; out.fout_ = fin_; out.claimed_ = {};
    if (storage_ == Storage::Dense) out.dense_ = dense_.adjoint();
    else for (auto& b : out.blocks_) b = b.adjoint().eval();
    return out;
  }

  Operator inverse() const {
    if (fin_ != fout_) throw PipelineError("operator", "inverse of non-square operator");
    Operator out = *this;
    out.claimed_ = {};
    if (storage_ == Storage::Dense) {
      Eigen::PartialPivLU<Mat> lu(dense_);
      out.dense_ = lu.inverse();
    } else {
      for (auto& b : out.blocks_) b = b.partialPivLu().inverse().eval();
    }
    return out;
  }

  Mat dense_matrix() const {
    switch (storage_) {
      case Storage::Dense: return dense_;
      case Storage::Pointwise: {
        guard_dense();
        const int N = grid_.points();
        Mat m = Mat::Zero(N * fout_, N * fin_);
        for (int p = 0; p < N; ++p)
          m.block(p * fout_, p * fin_, fout_, fin_) = blocks_[p];
        return m;
      }
      case Storage::Multiplier: {
        guard_dense();
        const int N = grid_.points();
        Mat m(N * fout_, N * fin_);
        SectionField e(grid_, fin_);
        for (int p = 0; p < N; ++p)
          for (int c = 0; c < fin_; ++c) {
            e.values.setZero();
            e.values(p, c) = 1.0;
            m.col(p * fin_ + c) = apply(e).to_vec();
          }
        return m;
      }
    }
    throw PipelineError("operator", "bad storage");
  }

  Operator to_dense() const {
    return Operator::dense(grid_, fin_, fout_, dense_matrix());
  }

  // largest singular value (exact per block; dense via SVD)
  double op_norm() const {
    if (storage_ == Storage::Dense)
      return dense_.rows() == 0 ? 0.0 : dense_.jacobiSvd().singularValues()(0);
    double m = 0;
    for (const auto& b : blocks_) {
      if (b.size() == 0) continue;
      m = std::max(m, b.jacobiSvd().singularValues()(0));
    }
    return m;
  }

  bool is_constant_pointwise(double tol = 1e-13) const {
    if (storage_ != Storage::Pointwise) return false;
    for (const auto& b : blocks_)
      if ((b - blocks_[0]).cwiseAbs().maxCoeff() > tol * (1.0 + blocks_[0].cwiseAbs().maxCoeff()))
        return false;
    return true;
  }

  // mode-diagonal fiber block; exact for Multiplier storage
  const Mat& mode_block(int m) const {
    if (storage_ != Storage::Multiplier)
      throw PipelineError("operator", "mode_block requires multiplier storage");
    return blocks_[m];
  }

  static int dense_limit() { return 8192; }

 private:
  void check_blocks(int count) const {
    if (int(blocks_.size()) != count)
      throw PipelineError("operator", "block count mismatch");
    for (const auto& b : blocks_)
      if (b.rows() != fout_ || b.cols() != fin_)
        throw PipelineError("operator", "block shape mismatch");
  }

  void guard_dense() const {
    if (grid_.points() * std::max(fin_, fout_) > dense_limit())
      throw PipelineError("operator", "operator too large to materialize densely");
  }

  // returns a representation of `a` composable with `b`'s storage
  static Operator promote_for(const Operator& a, const Operator& b) {
    if (a.storage_ == b.storage_) return a;
    if (a.storage_ == Storage::Pointwise && a.is_constant_pointwise())
      return Operator::multiplier(a.grid_, a.fin_, a.fout_,
                                  std::vector<Mat>(a.grid_.points(), a.blocks_[0]));
    if (a.storage_ == Storage::Dense) return a;
    if (b.storage_ == Storage::Dense || b.storage_ != a.storage_) {
      if (b.storage_ == Storage::Pointwise && b.is_constant_pointwise()) return a;
      return a.to_dense();
    }
    return a;
  }

  Operator& combine(const Operator& o, Cplx sign) {
    if (o.grid_ != grid_ || o.fin_ != fin_ || o.fout_ != fout_)
      throw PipelineError("operator", "add: shape mismatch");
    claimed_ = {};
    if (storage_ == o.storage_ && storage_ != Storage::Dense) {
      for (int i = 0; i < grid_.points(); ++i) blocks_[i] += sign * o.blocks_[i];
      return *this;
    }
    Operator a = promote_for(*this, o);
    Operator b = promote_for(o, *this);
    if (a.storage_ == b.storage_ && a.storage_ != Storage::Dense) {
      *this = a;
      for (int i = 0; i < grid_.points(); ++i) blocks_[i] += sign * b.blocks_[i];
      return *this;
    }
    Mat m = a.dense_matrix() + sign * b.dense_matrix();
    *this = Operator::dense(grid_, fin_, fout_, std::move(m));
    return *this;
  }

  GridSpec grid_;
  int fin_ = 0, fout_ = 0;
  Storage storage_ = Storage::Multiplier;
  std::vector<Mat> blocks_;
  Mat dense_;
  ClaimedOrder claimed_;
};

// Hermitian (possibly indefinite) sesquilinear form <u, weight v> * volume,
// built over the mean-normalized flat pairing. `volume` turns the grid mean
// into a true integral (period^dim for Lebesgue measure on the torus).
struct InnerProduct {
  Operator weight;
  double volume = 1.0;
  bool positive = true;

  static InnerProduct flat(GridSpec g, int fiber) {
    return {Operator::identity(g, fiber), 1.0, true};
  }

  Cplx pair(const SectionField& u, const SectionField& v) const {
    return volume * inner_flat(u, weight.apply(v));
  }

  double norm(const SectionField& u) const {
    return std::sqrt(std::abs(std::real(pair(u, u))));
  }

  // adjoint of A for this form: W^{-1} A^H W  (volume factor cancels)
  Operator adjoint(const Operator& a) const {
    return weight.inverse().compose(a.adjoint_flat()).compose(weight);
  }
};

}  // namespace hadcal
