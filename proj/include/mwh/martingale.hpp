#pragma once

#include <cmath>
#include <vector>

#include <Eigen/SVD>

#include "mwh/filtration.hpp"
#include "mwh/measure.hpp"

namespace mwh {

// Dense operators act on leaf-major coefficient vectors (leaf L, component i at
// index L*d + i). "Local" matrices are restricted to the rows and columns of
// one atom's leaf range; embed_local() places them in the full basis.

/// First row/column of an atom's leaf range and its size, in coefficient units.
inline Eigen::Index coefficient_offset(const Filtration& f, AtomId q, int dim) {
  return static_cast<Eigen::Index>(f.atom(q).leaf_begin) * dim;
}
inline Eigen::Index coefficient_count(const Filtration& f, AtomId q, int dim) {
  return static_cast<Eigen::Index>(f.atom(q).num_leaves()) * dim;
}

template <typename Scalar>
Mat<Scalar> embed_local(const Filtration& f, AtomId q, int dim, const Mat<Scalar>& local) {
  const Eigen::Index n = static_cast<Eigen::Index>(f.num_leaves()) * dim;
  Mat<Scalar> out = Mat<Scalar>::Zero(n, n);
  const auto o = coefficient_offset(f, q, dim);
  out.block(o, o, local.rows(), local.cols()) = local;
  return out;
}

// ---------------------------------------------------------------------------
// Unweighted (σ) projections

/// ⟨f⟩_Q, zero when σ(Q) = 0.
template <typename Scalar>
Vec<Scalar> average(const Filtration& fil, const VecFunction<Scalar>& f, AtomId q) {
  const Atom& a = fil.atom(q);
  Vec<Scalar> s = Vec<Scalar>::Zero(f.dim());
  if (a.sigma_mass <= 0) return s;
  for (std::size_t l = a.leaf_begin; l < a.leaf_end; ++l)
    s += Scalar(fil.mass(fil.leaf(l))) * f.leaf(l);
  return s / Scalar(a.sigma_mass);
}

/// E_Q f = ⟨f⟩_Q 1_Q
template <typename Scalar>
VecFunction<Scalar> expectation(const Filtration& fil, const VecFunction<Scalar>& f, AtomId q) {
  return VecFunction<Scalar>::indicator(fil, q, average(fil, f, q));
}

/// Δ_Q f = Σ_{R ∈ Ch Q} E_R f − E_Q f; zero for leaves.
template <typename Scalar>
VecFunction<Scalar> delta(const Filtration& fil, const VecFunction<Scalar>& f, AtomId q) {
  VecFunction<Scalar> out = VecFunction<Scalar>::zero(fil, f.dim());
  if (fil.is_leaf(q)) return out;
  for (AtomId c : fil.atom(q).children) out.values() += expectation(fil, f, c).values();
  out.values() -= expectation(fil, f, q).values();
  return out;
}

/// Scalar (d = 1) local matrix of E_Q on the leaves of Q.
template <typename Scalar = double>
Mat<Scalar> expectation_local_scalar(const Filtration& fil, AtomId q) {
  const Atom& a = fil.atom(q);
  const auto n = static_cast<Eigen::Index>(a.num_leaves());
  Mat<Scalar> m = Mat<Scalar>::Zero(n, n);
  if (a.sigma_mass <= 0) return m;
  for (Eigen::Index j = 0; j < n; ++j)
    m.col(j).setConstant(Scalar(fil.mass(fil.leaf(a.leaf_begin + j)) / a.sigma_mass));
  return m;
}

/// Scalar local matrix of Δ_Q on the leaves of Q.
template <typename Scalar = double>
Mat<Scalar> delta_local_scalar(const Filtration& fil, AtomId q) {
  const Atom& a = fil.atom(q);
  const auto n = static_cast<Eigen::Index>(a.num_leaves());
  Mat<Scalar> m = Mat<Scalar>::Zero(n, n);
  if (fil.is_leaf(q)) return m;
  for (AtomId c : a.children) {
    const Atom& ch = fil.atom(c);
    const auto o = static_cast<Eigen::Index>(ch.leaf_begin - a.leaf_begin);
    m.block(o, o, ch.num_leaves(), ch.num_leaves()) = expectation_local_scalar<Scalar>(fil, c);
  }
  return m - expectation_local_scalar<Scalar>(fil, q);
}

/// Full-basis matrix of E_Q acting on F^d-valued functions.
template <typename Scalar = double>
Mat<Scalar> expectation_matrix(const Filtration& fil, AtomId q, int dim) {
  const Mat<Scalar> s = expectation_local_scalar<Scalar>(fil, q);
  return embed_local<Scalar>(fil, q, dim,
                             kron_identity(s, dim));
}

template <typename Scalar = double>
Mat<Scalar> delta_matrix(const Filtration& fil, AtomId q, int dim) {
  const Mat<Scalar> s = delta_local_scalar<Scalar>(fil, q);
  return embed_local<Scalar>(fil, q, dim,
                             kron_identity(s, dim));
}

// ---------------------------------------------------------------------------
// Weighted projections

/// The d x (leaves of Q · d) matrix f ↦ W(Q)^+ ∫_Q dW f, formed as B^+ D^{1/2}
/// with B the stacked leaf square roots (so BᵀB = W(Q)). Going through B
/// keeps the error at cond(W(Q))^{1/2} eps instead of cond(W(Q)) eps.
template <typename Scalar>
Mat<Scalar> weighted_average_row(const Filtration& fil, const MatrixMeasure<Scalar>& w, AtomId q) {
  const Atom& a = fil.atom(q);
  const int d = w.dim();
  const auto n = coefficient_count(fil, q, d);
  Mat<Scalar> b(n, d);
  for (std::size_t j = 0; j < a.num_leaves(); ++j)
    b.middleRows(static_cast<Eigen::Index>(j) * d, d) = w.leaf_sqrt(a.leaf_begin + j);
  Eigen::JacobiSVD<Mat<Scalar>> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  // Same cutoff as psd_pinv(W(Q)), in singular-value terms.
  const Scalar cut = s.size() ? s(0) * std::sqrt(Scalar(kPinvRelTol)) : Scalar(0);
  Vec<Scalar> inv = Vec<Scalar>::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > cut) inv(i) = Scalar(1) / s(i);
  Mat<Scalar> row = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
  for (std::size_t j = 0; j < a.num_leaves(); ++j) {
    auto blk = row.middleCols(static_cast<Eigen::Index>(j) * d, d);
    blk = (blk * w.leaf_sqrt(a.leaf_begin + j)).eval();
  }
  return row;
}

/// ⟨f⟩^W_Q = W(Q)^+ ∫_Q dW f
template <typename Scalar>
Vec<Scalar> weighted_average(const Filtration& fil, const MatrixMeasure<Scalar>& w,
                             const VecFunction<Scalar>& f, AtomId q) {
  const int d = w.dim();
  return weighted_average_row(fil, w, q) *
         f.values().segment(coefficient_offset(fil, q, d), coefficient_count(fil, q, d));
}

template <typename Scalar>
VecFunction<Scalar> weighted_expectation(const Filtration& fil, const MatrixMeasure<Scalar>& w,
                                         const VecFunction<Scalar>& f, AtomId q) {
  return VecFunction<Scalar>::indicator(fil, q, weighted_average(fil, w, f, q));
}

/// Δ^W_Q = Σ_{R ∈ Ch Q} E^W_R − E^W_Q; zero for leaves.
template <typename Scalar>
VecFunction<Scalar> weighted_delta(const Filtration& fil, const MatrixMeasure<Scalar>& w,
                                   const VecFunction<Scalar>& f, AtomId q) {
  VecFunction<Scalar> out = VecFunction<Scalar>::zero(fil, f.dim());
  if (fil.is_leaf(q)) return out;
  for (AtomId c : fil.atom(q).children)
    out.values() += weighted_expectation(fil, w, f, c).values();
  out.values() -= weighted_expectation(fil, w, f, q).values();
  return out;
}

/// Local matrix of E^W_Q: block (L, L') = W(Q)^+ W(L').
template <typename Scalar>
Mat<Scalar> weighted_expectation_local(const Filtration& fil, const MatrixMeasure<Scalar>& w,
                                       AtomId q) {
  return weighted_average_row(fil, w, q).replicate(static_cast<Eigen::Index>(fil.atom(q).num_leaves()), 1);
}

template <typename Scalar>
Mat<Scalar> weighted_delta_local(const Filtration& fil, const MatrixMeasure<Scalar>& w, AtomId q) {
  const int d = w.dim();
  const auto n = coefficient_count(fil, q, d);
  Mat<Scalar> m = Mat<Scalar>::Zero(n, n);
  if (fil.is_leaf(q)) return m;
  const auto base = coefficient_offset(fil, q, d);
  for (AtomId c : fil.atom(q).children) {
    const auto o = coefficient_offset(fil, c, d) - base;
    const auto k = coefficient_count(fil, c, d);
    m.block(o, o, k, k) = weighted_expectation_local(fil, w, c);
  }
  return m - weighted_expectation_local(fil, w, q);
}

/// Local matrix of P^W_Q = 1_Q − E^W_Q.
template <typename Scalar>
Mat<Scalar> weighted_complement_local(const Filtration& fil, const MatrixMeasure<Scalar>& w,
                                      AtomId q) {
  const auto n = coefficient_count(fil, q, w.dim());
  return Mat<Scalar>::Identity(n, n) - weighted_expectation_local(fil, w, q);
}

template <typename Scalar>
Mat<Scalar> weighted_expectation_matrix(const Filtration& fil, const MatrixMeasure<Scalar>& w,
                                        AtomId q) {
  return embed_local<Scalar>(fil, q, w.dim(), weighted_expectation_local(fil, w, q));
}

template <typename Scalar>
Mat<Scalar> weighted_delta_matrix(const Filtration& fil, const MatrixMeasure<Scalar>& w, AtomId q) {
  return embed_local<Scalar>(fil, q, w.dim(), weighted_delta_local(fil, w, q));
}

/// Σ_{R ∈ Ch^r Q} Δ^W_R as a local matrix on Q; zero when Ch^r Q is empty.
template <typename Scalar>
Mat<Scalar> weighted_generation_projector_local(const Filtration& fil,
                                                const MatrixMeasure<Scalar>& w, AtomId q, int r) {
  const int d = w.dim();
  const auto n = coefficient_count(fil, q, d);
  Mat<Scalar> m = Mat<Scalar>::Zero(n, n);
  if (fil.atom(q).rank + r >= fil.depth()) return m;
  const auto base = coefficient_offset(fil, q, d);
  for (AtomId s : fil.ch_r(q, r)) {
    const auto o = coefficient_offset(fil, s, d) - base;
    const auto k = coefficient_count(fil, s, d);
    m.block(o, o, k, k) = weighted_delta_local(fil, w, s);
  }
  return m;
}

/// Σ_{rk R = rank} Δ^W_R in the full basis.
template <typename Scalar>
Mat<Scalar> weighted_rank_projector(const Filtration& fil, const MatrixMeasure<Scalar>& w,
                                    int rank) {
  return embed_local<Scalar>(fil, fil.root(), w.dim(),
                             weighted_generation_projector_local(fil, w, fil.root(), rank));
}

// ---------------------------------------------------------------------------
// Orthogonal decomposition

enum class ComponentKind { kDelta, kExpectation };

template <typename Scalar>
struct Component {
  AtomId atom;
  ComponentKind kind;
  VecFunction<Scalar> value;
};

/// f = Σ_{Q ∈ D(Q0), Q not a leaf} Δ^W_Q f + E^W_{Q0} f in L²(W), for f supported on Q0.
/// Components are pairwise L²(W)-orthogonal.
template <typename Scalar>
std::vector<Component<Scalar>> decompose(const Filtration& fil, const MatrixMeasure<Scalar>& w,
                                         const VecFunction<Scalar>& f, AtomId q0) {
  std::vector<Component<Scalar>> out;
  out.push_back({q0, ComponentKind::kExpectation, weighted_expectation(fil, w, f, q0)});
  const int top = fil.atom(q0).rank;
  for (int k = 0; top + k < fil.depth(); ++k)
    for (AtomId q : fil.ch_r(q0, k))
      out.push_back({q, ComponentKind::kDelta, weighted_delta(fil, w, f, q)});
  return out;
}

}  // namespace mwh
