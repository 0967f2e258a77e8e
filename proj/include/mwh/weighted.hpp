#pragma once

#include <optional>
#include <vector>

#include "mwh/shift.hpp"

namespace mwh {

/// ‖A‖ as a map L²(in) → L²(out): σ_max(D_out^{1/2} A D_in^{+1/2}).
template <typename Scalar>
Scalar weighted_norm(const Mat<Scalar>& a, const MatrixMeasure<Scalar>& in,
                     const MatrixMeasure<Scalar>& out) {
  return max_singular_value(out.sqrt_block_diagonal() * a * in.pinv_sqrt_block_diagonal());
}

/// Adjoint of A : L²(in) → L²(out), i.e. D_in^+ A^T D_out.
template <typename Scalar>
Mat<Scalar> weighted_adjoint(const Mat<Scalar>& a, const MatrixMeasure<Scalar>& in,
                             const MatrixMeasure<Scalar>& out) {
  Mat<Scalar> pinv = Mat<Scalar>::Zero(in.basis_size(), in.basis_size());
  const int d = in.dim();
  for (std::size_t l = 0; l < in.num_leaves(); ++l) {
    const auto o = static_cast<Eigen::Index>(l) * d;
    pinv.block(o, o, d, d) = psd_pinv(in.leaf_mass(l));
  }
  return pinv * a.transpose() * out.block_diagonal();
}

/// Rows/cols of the block-diagonal matrix `m` that belong to atom q.
template <typename Scalar>
auto local_block(const Filtration& f, const Mat<Scalar>& m, AtomId q, int dim) {
  const auto o = coefficient_offset(f, q, dim);
  const auto k = coefficient_count(f, q, dim);
  return m.block(o, o, k, k);
}

/// A shift acting as T_W : L²(W) → L²(V), with the dense pieces every
/// certificate needs cached: the matrix, D^{1/2} and D^{+1/2} of both
/// measures, the indicator images T_W(1_Q ⊗ I), and per-block local matrices.
/// Holds references to the filtration and measures.
template <typename Scalar>
class WeightedOperator {
 public:
  WeightedOperator(const Filtration& f, ShiftOperator<Scalar> t, const MatrixMeasure<Scalar>& in,
                   const MatrixMeasure<Scalar>& out)
      : f_(&f), t_(std::move(t)), in_(&in), out_(&out) {
    if (in.dim() != out.dim() || in.num_leaves() != f.num_leaves() ||
        out.num_leaves() != f.num_leaves())
      throw std::invalid_argument("WeightedOperator: measures do not match");
    m_ = weighted_matrix(f, t_, in);
    in_sqrt_ = in.sqrt_block_diagonal();
    in_psqrt_ = in.pinv_sqrt_block_diagonal();
    out_sqrt_ = out.sqrt_block_diagonal();
    out_psqrt_ = out.pinv_sqrt_block_diagonal();
    images_ = indicator_images(f, m_, in.dim());
    block_index_.assign(f.num_atoms(), -1);
    for (std::size_t i = 0; i < t_.blocks().size(); ++i) {
      block_index_[t_.blocks()[i].owner] = static_cast<int>(i);
      blocks_.push_back(weighted_block_local(f, t_.blocks()[i], in));
    }
  }

  /// T*_V with the roles of the measures exchanged.
  WeightedOperator dual() const { return WeightedOperator(*f_, adjoint(t_), *out_, *in_); }

  const Filtration& filtration() const { return *f_; }
  const ShiftOperator<Scalar>& shift() const { return t_; }
  const MatrixMeasure<Scalar>& in() const { return *in_; }
  const MatrixMeasure<Scalar>& out() const { return *out_; }
  int dim() const { return in_->dim(); }
  int complexity() const { return t_.complexity(); }

  const Mat<Scalar>& matrix() const { return m_; }
  const Mat<Scalar>& in_sqrt() const { return in_sqrt_; }
  const Mat<Scalar>& in_pinv_sqrt() const { return in_psqrt_; }
  const Mat<Scalar>& out_sqrt() const { return out_sqrt_; }
  const Mat<Scalar>& out_pinv_sqrt() const { return out_psqrt_; }

  /// T_W (1_Q ⊗ I), n x d.
  const Mat<Scalar>& image(AtomId q) const { return images_.at(q); }

  /// Local weighted matrix of the block owned by q, if any.
  const Mat<Scalar>* block(AtomId q) const {
    const int i = block_index_.at(q);
    return i < 0 ? nullptr : &blocks_[static_cast<std::size_t>(i)];
  }

  Scalar norm() const {
    if (!norm_) norm_ = max_singular_value(out_sqrt_ * m_ * in_psqrt_);
    return *norm_;
  }

  /// Σ_{k≥1} T_{Q^{(k)}, W} restricted to the rows and columns of q: the part
  /// of T_W acting on functions supported on q that comes from strict ancestors.
  Mat<Scalar> ancestor_part(AtomId q) const {
    const int d = dim();
    const auto k = coefficient_count(*f_, q, d);
    Mat<Scalar> acc = Mat<Scalar>::Zero(k, k);
    const Atom& a = f_->atom(q);
    for (AtomId s = a.parent; s != kNoAtom; s = f_->atom(s).parent) {
      const Mat<Scalar>* b = block(s);
      if (!b) continue;
      const auto o = coefficient_offset(*f_, q, d) - coefficient_offset(*f_, s, d);
      acc += b->block(o, o, k, k);
    }
    return acc;
  }

  /// (T^Q)_W (1_Q ⊗ I) on the rows of q (it vanishes elsewhere).
  Mat<Scalar> truncated_image(AtomId q) const {
    const int d = dim();
    const auto o = coefficient_offset(*f_, q, d);
    const auto k = coefficient_count(*f_, q, d);
    Mat<Scalar> y = images_[q].middleRows(o, k);
    const Mat<Scalar> anc = ancestor_part(q);
    for (Eigen::Index c = 0; c < k; c += d) y -= anc.middleCols(c, d);
    return y;
  }

 private:
  const Filtration* f_;
  ShiftOperator<Scalar> t_;
  const MatrixMeasure<Scalar>* in_;
  const MatrixMeasure<Scalar>* out_;
  Mat<Scalar> m_, in_sqrt_, in_psqrt_, out_sqrt_, out_psqrt_;
  std::vector<Mat<Scalar>> images_;
  std::vector<int> block_index_;
  std::vector<Mat<Scalar>> blocks_;
  mutable std::optional<Scalar> norm_;
};

}  // namespace mwh
