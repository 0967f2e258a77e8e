#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mwh/certificate.hpp"
#include "mwh/paraproduct.hpp"
#include "mwh/weighted.hpp"

namespace mwh {

/// Constant of the matrix Carleson embedding: e d³ (d+1)².
inline double carleson_constant(int d) {
  const double x = d;
  return std::numbers::e * x * x * x * (x + 1) * (x + 1);
}

/// "root" or the dotted child path, for certificate details.
inline std::string atom_label(const Filtration& f, AtomId q) {
  const auto& p = f.atom(q).path;
  if (p.empty()) return "root";
  std::string s;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (i) s += '.';
    s += std::to_string(p[i]);
  }
  return s;
}

// ---------------------------------------------------------------------------
// A2

struct A2Result {
  double value = 0;
  AtomId atom = kNoAtom;
};

/// sup over |Q| > 0 of |Q|^{-2} ‖V(Q)^{1/2} W(Q)^{1/2}‖².
template <typename Scalar>
A2Result a2_characteristic(const Filtration& f, const MatrixMeasure<Scalar>& v,
                           const MatrixMeasure<Scalar>& w) {
  A2Result out;
  bool any = false;
  for (AtomId q = 0; q < f.num_atoms(); ++q) {
    const double m = f.mass(q);
    if (m <= 0) continue;
    any = true;
    const Scalar s = max_singular_value(psd_sqrt(v.mass(q)) * psd_sqrt(w.mass(q)));
    const double val = static_cast<double>(s * s) / (m * m);
    if (val > out.value || out.atom == kNoAtom) {
      out.value = val;
      out.atom = q;
    }
  }
  if (!any) throw std::invalid_argument("a2_characteristic: every atom has zero mass");
  return out;
}

// ---------------------------------------------------------------------------
// Test functions

/// L²(W)-orthonormal basis of D_Q^{W,r} = ran Σ_{R ∈ Ch^r Q} Δ^W_R, stored as
/// coefficient columns on the leaves of Q.
template <typename Scalar>
struct TestFunctionSpace {
  AtomId atom = 0;
  int r = 0;
  Mat<Scalar> basis;
};

template <typename Scalar>
TestFunctionSpace<Scalar> test_function_space(const Filtration& f, const MatrixMeasure<Scalar>& w,
                                              AtomId q, int r) {
  const int d = w.dim();
  const auto k = coefficient_count(f, q, d);
  TestFunctionSpace<Scalar> s{q, r, Mat<Scalar>(k, 0)};
  if (f.atom(q).rank + r >= f.depth()) return s;
  const Mat<Scalar> sq = local_block(f, w.sqrt_block_diagonal(), q, d);
  const Mat<Scalar> psq = local_block(f, w.pinv_sqrt_block_diagonal(), q, d);
  // D^{1/2} G D^{+1/2} is the Euclidean orthogonal projector onto the image of
  // the test space; its unit singular directions pull back to an orthonormal basis.
  const Mat<Scalar> p = sq * weighted_generation_projector_local(f, w, q, r) * psq;
  Eigen::JacobiSVD<Mat<Scalar>> svd(p, Eigen::ComputeFullU);
  Eigen::Index rank = 0;
  while (rank < svd.singularValues().size() && svd.singularValues()(rank) > Scalar(0.5)) ++rank;
  s.basis = psq * svd.matrixU().leftCols(rank);
  return s;
}

// ---------------------------------------------------------------------------
// Testing constants

enum class TestingVariant { kWellLocalized, kTruncated, kBand };

inline const char* variant_name(TestingVariant v) {
  switch (v) {
    case TestingVariant::kWellLocalized: return "well_localized";
    case TestingVariant::kTruncated: return "truncated";
    case TestingVariant::kBand: return "band";
  }
  return "?";
}

/// A supremum with the cube attaining it. `level` > 0 marks the copy of the
/// root `level` generations above it.
struct TestingValue {
  double value = 0;
  AtomId atom = kNoAtom;
  int level = 0;

  void offer(double v, AtomId q, int lvl = 0) {
    if (v > value || atom == kNoAtom) {
      value = v;
      atom = q;
      level = lvl;
    }
  }
};

struct TestingConstants {
  TestingVariant variant = TestingVariant::kWellLocalized;
  TestingValue t1, t1_dual, t2, t2_dual, t3, frak, frak_dual;
};

/// sup_e ‖A 1_Q e‖ / ‖1_Q e‖ with A = 1_Q T (plain) or P^out_Q T (truncated).
template <typename Scalar>
Scalar testing_t1_cube(const WeightedOperator<Scalar>& op, AtomId q, bool truncated) {
  const Filtration& f = op.filtration();
  const int d = op.dim();
  const auto o = coefficient_offset(f, q, d);
  const auto k = coefficient_count(f, q, d);
  Mat<Scalar> y = op.image(q).middleRows(o, k);
  if (truncated) y = weighted_complement_local(f, op.out(), q) * y;
  return max_singular_value(local_block(f, op.out_sqrt(), q, d) * y * psd_pinv_sqrt(op.in().mass(q)));
}

/// Norm of 1_Q T (plain) or P^out_Q T (truncated) on D_Q^{in,level}.
template <typename Scalar>
Scalar testing_t2_cube(const WeightedOperator<Scalar>& op, AtomId q, int level, bool truncated) {
  const Filtration& f = op.filtration();
  const int d = op.dim();
  const auto s = test_function_space(f, op.in(), q, level);
  if (s.basis.cols() == 0) return 0;
  const auto o = coefficient_offset(f, q, d);
  const auto k = coefficient_count(f, q, d);
  Mat<Scalar> y = op.matrix().block(o, o, k, k) * s.basis;
  if (truncated) y = weighted_complement_local(f, op.out(), q) * y;
  return max_singular_value(local_block(f, op.out_sqrt(), q, d) * y);
}

/// sup_{e,v} |⟨T 1_Q e, 1_Q v⟩_out| / (‖1_Q e‖_in ‖1_Q v‖_out).
template <typename Scalar>
Scalar testing_t3_cube(const WeightedOperator<Scalar>& op, AtomId q) {
  const Filtration& f = op.filtration();
  const int d = op.dim();
  const Atom& a = f.atom(q);
  Mat<Scalar> form = Mat<Scalar>::Zero(d, d);
  for (std::size_t l = a.leaf_begin; l < a.leaf_end; ++l)
    form += op.out().leaf_mass(l) * op.image(q).middleRows(static_cast<Eigen::Index>(l) * d, d);
  return max_singular_value(psd_pinv_sqrt(op.out().mass(q)) * form * psd_pinv_sqrt(op.in().mass(q)));
}

/// sup_e ‖(T^Q)_in 1_Q e‖ / ‖1_Q e‖.
template <typename Scalar>
Scalar testing_frak_cube(const WeightedOperator<Scalar>& op, AtomId q) {
  const Filtration& f = op.filtration();
  const int d = op.dim();
  return max_singular_value(local_block(f, op.out_sqrt(), q, d) * op.truncated_image(q) *
                            psd_pinv_sqrt(op.in().mass(q)));
}

/// T2 over every cube, including the r set-copies of the root above it: the
/// copy at height j tests on D^{in, r-j}_root.
template <typename Scalar>
TestingValue testing_t2(const WeightedOperator<Scalar>& op, bool truncated) {
  const Filtration& f = op.filtration();
  const int r = op.complexity();
  TestingValue best;
  for (AtomId q = 0; q < f.num_atoms(); ++q)
    best.offer(static_cast<double>(testing_t2_cube(op, q, r, truncated)), q);
  for (int j = 1; j <= r; ++j)
    best.offer(static_cast<double>(testing_t2_cube(op, f.root(), r - j, truncated)), f.root(), j);
  return best;
}

template <typename Scalar>
TestingConstants testing_constants(const WeightedOperator<Scalar>& op,
                                   const WeightedOperator<Scalar>& dual, TestingVariant variant) {
  const Filtration& f = op.filtration();
  TestingConstants tc;
  tc.variant = variant;
  if (variant == TestingVariant::kBand) {
    for (AtomId q = 0; q < f.num_atoms(); ++q) {
      tc.frak.offer(static_cast<double>(testing_frak_cube(op, q)), q);
      tc.frak_dual.offer(static_cast<double>(testing_frak_cube(dual, q)), q);
    }
    return tc;
  }
  const bool truncated = variant == TestingVariant::kTruncated;
  for (AtomId q = 0; q < f.num_atoms(); ++q) {
    tc.t1.offer(static_cast<double>(testing_t1_cube(op, q, truncated)), q);
    tc.t1_dual.offer(static_cast<double>(testing_t1_cube(dual, q, truncated)), q);
    if (truncated) tc.t3.offer(static_cast<double>(testing_t3_cube(op, q)), q);
  }
  tc.t2 = testing_t2(op, truncated);
  tc.t2_dual = testing_t2(dual, truncated);
  return tc;
}

template <typename Scalar>
TestingConstants testing_constants(const WeightedOperator<Scalar>& op, TestingVariant variant) {
  return testing_constants(op, op.dual(), variant);
}

/// Each computed testing constant of the two theorems is at most ‖T_W‖.
inline std::vector<Certificate> testing_le_norm(const TestingConstants& tc, double norm) {
  std::vector<Certificate> out;
  if (tc.variant == TestingVariant::kBand) return out;
  const std::string p = std::string("testing.") + variant_name(tc.variant) + ".";
  out.push_back(make_certificate(p + "t1_le_norm", tc.t1.value, norm));
  out.push_back(make_certificate(p + "t1_dual_le_norm", tc.t1_dual.value, norm));
  out.push_back(make_certificate(p + "t2_le_norm", tc.t2.value, norm));
  out.push_back(make_certificate(p + "t2_dual_le_norm", tc.t2_dual.value, norm));
  if (tc.variant == TestingVariant::kTruncated)
    out.push_back(make_certificate(p + "t3_le_norm", tc.t3.value, norm));
  return out;
}

// ---------------------------------------------------------------------------
// Theorem bounds

/// (C^{1/2} + 1/2)(T1 + T1*) + (r+1)^{1/2}(T2 + T2*)
inline double well_localized_bound(const TestingConstants& tc, int r, int d) {
  const double c = std::sqrt(carleson_constant(d));
  return (c + 0.5) * (tc.t1.value + tc.t1_dual.value) +
         std::sqrt(r + 1.0) * (tc.t2.value + tc.t2_dual.value);
}

/// C^{1/2}(T1 + T1*) + (r+1)^{1/2}(T2 + T2*) + T3
inline double truncated_bound(const TestingConstants& tc, int r, int d) {
  const double c = std::sqrt(carleson_constant(d));
  return c * (tc.t1.value + tc.t1_dual.value) +
         std::sqrt(r + 1.0) * (tc.t2.value + tc.t2_dual.value) + tc.t3.value;
}

/// (C^{1/2} + (r+1)^{1/2} + 1/2)(T + T*) + 2 d^{1/2}(C^{1/2} r + (2r+1)(r+1)^{1/2}) A2^{1/2}
inline double band_bound(double frak, double frak_dual, double a2, int r, int d) {
  const double c = std::sqrt(carleson_constant(d));
  const double s = std::sqrt(r + 1.0);
  return (c + s + 0.5) * (frak + frak_dual) +
         2.0 * std::sqrt(double(d)) * (c * r + (2.0 * r + 1.0) * s) * std::sqrt(a2);
}

inline Certificate theorem_bound_well_localized(const TestingConstants& tc, double norm, int r, int d) {
  if (tc.variant == TestingVariant::kWellLocalized)
    return make_certificate("theorem.well_localized", norm, well_localized_bound(tc, r, d));
  if (tc.variant == TestingVariant::kTruncated)
    return make_certificate("theorem.well_localized_truncated", norm, truncated_bound(tc, r, d));
  throw std::invalid_argument("theorem_bound_well_localized: band constants given");
}

inline Certificate theorem_bound_band(double frak, double frak_dual, double a2, int r, int d,
                                      double norm) {
  return make_certificate("theorem.band", norm, band_bound(frak, frak_dual, a2, r, d));
}

// ---------------------------------------------------------------------------
// Carleson embedding

template <typename Scalar>
struct CarlesonConstants {
  Scalar a_best = 0;
  Scalar b_best = 0;
  AtomId b_atom = kNoAtom;
};

/// A = ‖f ↦ (A_Q^{1/2} ∫_Q dW f)_Q‖², B = sup_{Q0} λ_max of
/// Σ_{Q ⊂ Q0} W(Q) A_Q W(Q) against W(Q0).
template <typename Scalar>
CarlesonConstants<Scalar> carleson_constants(const Filtration& f, const MatrixMeasure<Scalar>& w,
                                             const std::vector<Mat<Scalar>>& a_seq) {
  if (a_seq.size() != f.num_atoms()) throw std::invalid_argument("need one A_Q per atom");
  const int d = w.dim();
  const auto n = w.basis_size();
  std::vector<Mat<Scalar>> leaf_sqrt;
  for (std::size_t l = 0; l < f.num_leaves(); ++l) leaf_sqrt.push_back(psd_sqrt(w.leaf_mass(l)));
  Mat<Scalar> stack = Mat<Scalar>::Zero(static_cast<Eigen::Index>(f.num_atoms()) * d, n);
  for (AtomId q = 0; q < f.num_atoms(); ++q) {
    if (a_seq[q].rows() != d || a_seq[q].cols() != d || !is_psd(a_seq[q]))
      throw std::invalid_argument("A_Q must be d x d PSD");
    const Mat<Scalar> s = psd_sqrt(a_seq[q]);
    const Atom& a = f.atom(q);
    for (std::size_t l = a.leaf_begin; l < a.leaf_end; ++l)
      stack.block(static_cast<Eigen::Index>(q) * d, static_cast<Eigen::Index>(l) * d, d, d) =
          s * leaf_sqrt[l];
  }
  CarlesonConstants<Scalar> out;
  const Scalar top = max_singular_value(stack);
  out.a_best = top * top;
  std::vector<Mat<Scalar>> sums(f.num_atoms());
  for (AtomId q = f.num_atoms(); q-- > 0;) {
    sums[q] = w.mass(q) * a_seq[q] * w.mass(q);
    for (AtomId c : f.atom(q).children) sums[q] += sums[c];
    const Scalar b = max_generalized_eigenvalue(sums[q], w.mass(q));
    if (b > out.b_best || out.b_atom == kNoAtom) {
      out.b_best = b;
      out.b_atom = q;
    }
  }
  return out;
}

/// Random PSD A_Q (some zero, some rank deficient), scaled by 1 / (1 + tr W(Q))².
template <typename Scalar = double>
std::vector<Mat<Scalar>> random_carleson_sequence(std::uint64_t seed, const Filtration& f,
                                                  const MatrixMeasure<Scalar>& w,
                                                  double zero_prob = 0.2,
                                                  double rank_deficient_prob = 0.2) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int d = w.dim();
  std::vector<Mat<Scalar>> out;
  for (AtomId q = 0; q < f.num_atoms(); ++q) {
    int cols = d;
    const double u = unit(rng);
    if (u < zero_prob)
      cols = 0;
    else if (d > 1 && u < zero_prob + rank_deficient_prob)
      cols = 1 + static_cast<int>(unit(rng) * (d - 1)) % (d - 1);
    Mat<double> g = Mat<double>::Zero(d, std::max(cols, 1));
    for (int j = 0; j < cols; ++j)
      for (int i = 0; i < d; ++i) g(i, j) = normal(rng);
    const double t = 1.0 + static_cast<double>(w.trace(q));
    Mat<double> a = g * g.transpose() / (t * t);
    a = (a + a.transpose()) / 2.0;
    out.push_back(a.template cast<Scalar>());
  }
  return out;
}

template <typename Scalar>
std::vector<Certificate> carleson_certificates(const CarlesonConstants<Scalar>& c, int d) {
  const double a = static_cast<double>(c.a_best);
  const double b = static_cast<double>(c.b_best);
  return {make_certificate("carleson.lower", b, a),
          make_certificate("carleson.upper", a, carleson_constant(d) * b)};
}

/// ‖Π‖ ≤ C(d)^{1/2} T1, T1 the best constant of the paraproduct testing condition.
/// `op` is T_W for Π^W or T*_V (with swapped measures) for Π^V.
template <typename Scalar>
Certificate paraproduct_norm_bound(const WeightedOperator<Scalar>& op, const Mat<Scalar>& pi,
                                   const std::string& name = "paraproduct.norm_bound") {
  AtomId q = kNoAtom;
  const double t1 = static_cast<double>(paraproduct_testing_constant(op, &q));
  const double lhs = static_cast<double>(weighted_norm(pi, op.in(), op.out()));
  return make_certificate(name, lhs, std::sqrt(carleson_constant(op.dim())) * t1,
                          q == kNoAtom ? "" : "t1_atom=" + atom_label(op.filtration(), q));
}

// ---------------------------------------------------------------------------
// Lemmas on big Haar shifts

/// Per block: ‖T_{Q,W}‖ ≤ d^{1/2} A2^{1/2}.
template <typename Scalar>
std::vector<Certificate> lemma_block_bound(const WeightedOperator<Scalar>& op, double a2) {
  const Filtration& f = op.filtration();
  const int d = op.dim();
  const double rhs = std::sqrt(d * a2);
  std::vector<Certificate> out;
  for (const auto& b : op.shift().blocks()) {
    const Mat<Scalar> x = local_block(f, op.out_sqrt(), b.owner, d) * *op.block(b.owner) *
                          local_block(f, op.in_pinv_sqrt(), b.owner, d);
    out.push_back(make_certificate("lemma.block_bound", static_cast<double>(max_singular_value(x)),
                                   rhs, "atom=" + atom_label(f, b.owner)));
  }
  return out;
}

/// Per cube, on f supported on Q: ‖(T^Q_W − P_Q (T^Q)_W) f‖ ≤ d^{1/2} r A2^{1/2} ‖f‖.
/// The operator is P^out_Q times the ancestor blocks restricted to Q.
template <typename Scalar>
std::vector<Certificate> lemma_truncation_gap(const WeightedOperator<Scalar>& op, double a2) {
  const Filtration& f = op.filtration();
  const int d = op.dim();
  const double rhs = std::sqrt(double(d)) * op.complexity() * std::sqrt(a2);
  std::vector<Certificate> out;
  for (AtomId q = 0; q < f.num_atoms(); ++q) {
    const Mat<Scalar> x = local_block(f, op.out_sqrt(), q, d) *
                          weighted_complement_local(f, op.out(), q) * op.ancestor_part(q) *
                          local_block(f, op.in_pinv_sqrt(), q, d);
    out.push_back(make_certificate("lemma.truncation_gap", static_cast<double>(max_singular_value(x)),
                                   rhs, "atom=" + atom_label(f, q)));
  }
  return out;
}

/// Smallest κ with |Q| ≤ κ |parent| for every non-root Q whose parent has
/// positive mass.
inline double filtration_kappa(const Filtration& f) {
  double k = 0;
  for (AtomId q = 1; q < f.num_atoms(); ++q) {
    const double pm = f.mass(f.atom(q).parent);
    if (pm > 0) k = std::max(k, f.mass(q) / pm);
  }
  return k;
}

/// Per cube, on f supported on Q: ‖1_Q (T_W − (T^Q)_W) f‖ ≤ (1−κ)^{-1} d^{1/2} A2^{1/2} ‖f‖.
template <typename Scalar>
std::vector<Certificate> lemma_nec_gap(const WeightedOperator<Scalar>& op, double a2, double kappa) {
  const Filtration& f = op.filtration();
  const int d = op.dim();
  if (!(kappa < 1.0)) return {inapplicable("lemma.nec_gap", "kappa=" + std::to_string(kappa))};
  const double rhs = std::sqrt(d * a2) / (1.0 - kappa);
  std::vector<Certificate> out;
  for (AtomId q = 0; q < f.num_atoms(); ++q) {
    const Mat<Scalar> x = local_block(f, op.out_sqrt(), q, d) * op.ancestor_part(q) *
                          local_block(f, op.in_pinv_sqrt(), q, d);
    out.push_back(make_certificate("lemma.nec_gap", static_cast<double>(max_singular_value(x)), rhs,
                                   "atom=" + atom_label(f, q)));
  }
  return out;
}

/// 𝔗 ≤ ‖T_W‖ + (1−κ)^{-1} d^{1/2} A2^{1/2}
inline Certificate corollary_nec(const std::string& name, double frak, double norm, double a2,
                                 double kappa, int d) {
  if (!(kappa < 1.0)) return inapplicable(name, "kappa=" + std::to_string(kappa));
  return make_certificate(name, frak, norm + std::sqrt(d * a2) / (1.0 - kappa));
}

/// The three conclusions of the testing transfer for big Haar shifts, given
/// 𝔗 = frak: per cube for the first two, at the root for the weak estimate.
template <typename Scalar>
std::vector<Certificate> lemma_test_haar(const WeightedOperator<Scalar>& op, double frak, double a2) {
  const Filtration& f = op.filtration();
  const int d = op.dim();
  const int r = op.complexity();
  const double s = std::sqrt(d * a2);
  std::vector<Certificate> out;
  for (AtomId q = 0; q < f.num_atoms(); ++q)
    out.push_back(make_certificate("lemma.test_haar.truncated",
                                   static_cast<double>(testing_t1_cube(op, q, true)), r * s + frak,
                                   "atom=" + atom_label(f, q)));
  const double rhs2 = (2 * r + 1) * s + frak;
  for (AtomId q = 0; q < f.num_atoms(); ++q)
    out.push_back(make_certificate("lemma.test_haar.test_functions",
                                   static_cast<double>(testing_t2_cube(op, q, r, true)), rhs2,
                                   "atom=" + atom_label(f, q)));
  for (int j = 1; j <= r; ++j)
    out.push_back(make_certificate("lemma.test_haar.test_functions",
                                   static_cast<double>(testing_t2_cube(op, f.root(), r - j, true)),
                                   rhs2, "atom=root+" + std::to_string(j)));
  const double weak = static_cast<double>(max_singular_value(
      op.out_sqrt() * op.image(f.root()) * psd_pinv_sqrt(op.in().mass(f.root()))));
  out.push_back(make_certificate("lemma.test_haar.weak", weak, frak, "atom=root"));
  return out;
}

// ---------------------------------------------------------------------------
// Upper-triangle piece of the main decomposition

/// T̃⁺ = Σ_{rk Q ≤ rk R ≤ rk Q + r} Δ^out_R T Δ^in_Q over the whole tree.
template <typename Scalar>
Mat<Scalar> upper_triangle_operator(const WeightedOperator<Scalar>& op) {
  const Filtration& f = op.filtration();
  const int r = op.complexity();
  const int depth = f.depth();
  std::vector<Mat<Scalar>> pin, pout;
  for (int k = 0; k < depth; ++k) {
    pin.push_back(weighted_rank_projector(f, op.in(), k));
    pout.push_back(weighted_rank_projector(f, op.out(), k));
  }
  const auto n = op.matrix().rows();
  Mat<Scalar> acc = Mat<Scalar>::Zero(n, n);
  for (int j = 0; j < depth; ++j) {
    Mat<Scalar> s = Mat<Scalar>::Zero(n, n);
    for (int k = j; k <= std::min(j + r, depth - 1); ++k) s += pout[static_cast<std::size_t>(k)];
    acc.noalias() += s * (op.matrix() * pin[static_cast<std::size_t>(j)]);
  }
  return acc;
}

/// ‖T̃⁺‖ ≤ (r+1)^{1/2} T2, T2 from the truncated testing conditions.
template <typename Scalar>
Certificate estimate_upper_triangle(const WeightedOperator<Scalar>& op, double t2_truncated) {
  const Mat<Scalar> u = upper_triangle_operator(op);
  const double lhs = static_cast<double>(max_singular_value(op.out_sqrt() * u * op.in_pinv_sqrt()));
  return make_certificate("estimate.upper_triangle", lhs,
                          std::sqrt(op.complexity() + 1.0) * t2_truncated);
}

}  // namespace mwh
