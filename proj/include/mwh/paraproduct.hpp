#pragma once

#include <array>
#include <stdexcept>
#include <vector>

#include "mwh/weighted.hpp"

namespace mwh {

enum class ParaproductSide { kW, kV };

/// kDefinition uses T_W(1_Q ⊗ I) for each Q; kRootColumn uses T_W(1 ⊗ I) for
/// every Q, which agrees when T is well localized.
enum class ParaproductPath { kDefinition, kRootColumn };

template <typename Scalar>
struct Paraproduct {
  int r = 0;
  ParaproductSide side = ParaproductSide::kW;
  Mat<Scalar> matrix;
};

/// Π f = Σ_Q Σ_{R ∈ Ch^r Q} Δ^out_R T (⟨f⟩^in_Q 1_Q), over atoms Q with
/// nonempty, non-leaf Ch^r Q. `op` supplies T as a map L²(in) → L²(out).
template <typename Scalar>
Mat<Scalar> assemble_paraproduct(const WeightedOperator<Scalar>& op,
                                 ParaproductPath path = ParaproductPath::kDefinition) {
  const Filtration& f = op.filtration();
  const int d = op.dim();
  const int r = op.complexity();
  const auto n = op.in().basis_size();
  Mat<Scalar> pi = Mat<Scalar>::Zero(n, n);
  for (AtomId q = 0; q < f.num_atoms(); ++q) {
    const Atom& a = f.atom(q);
    if (a.rank + r >= f.depth()) continue;
    const auto o = coefficient_offset(f, q, d);
    const auto k = coefficient_count(f, q, d);
    const Mat<Scalar>& y = path == ParaproductPath::kDefinition ? op.image(q) : op.image(f.root());
    const Mat<Scalar> c = weighted_generation_projector_local(f, op.out(), q, r) *
                          y.middleRows(o, k) * op.in().pinv(q);
    for (std::size_t l = a.leaf_begin; l < a.leaf_end; ++l)
      pi.block(o, static_cast<Eigen::Index>(l) * d, k, d) += c * op.in().leaf_mass(l);
  }
  return pi;
}

/// Π^W from T_W (side kW) or Π^V from T*_V (side kV). With
/// require_well_localized the radius-r check runs first and a failure throws.
template <typename Scalar>
Paraproduct<Scalar> build_paraproduct(const Filtration& f, const ShiftOperator<Scalar>& t,
                                      const MatrixMeasure<Scalar>& w, const MatrixMeasure<Scalar>& v,
                                      ParaproductSide side,
                                      ParaproductPath path = ParaproductPath::kDefinition,
                                      bool require_well_localized = true) {
  if (require_well_localized && !check_well_localized(f, t, w, v, t.complexity()).pass)
    throw std::logic_error("build_paraproduct: operator is not well localized");
  Paraproduct<Scalar> p;
  p.r = t.complexity();
  p.side = side;
  if (side == ParaproductSide::kW)
    p.matrix = assemble_paraproduct(WeightedOperator<Scalar>(f, t, w, v), path);
  else
    p.matrix = assemble_paraproduct(WeightedOperator<Scalar>(f, adjoint(t), v, w), path);
  return p;
}

/// ‖D_out^{1/2} X D_in^{+1/2}‖_F for X living on the rows of `ra` and columns of `q`.
template <typename Scalar>
Scalar local_weighted_frobenius(const WeightedOperator<Scalar>& op, AtomId ra, AtomId q,
                                const Mat<Scalar>& x) {
  const Filtration& f = op.filtration();
  const int d = op.dim();
  return (local_block(f, op.out_sqrt(), ra, d) * x * local_block(f, op.in_pinv_sqrt(), q, d)).norm();
}

struct ReplacementReport {
  bool pass = true;
  std::array<double, 3> max_residual{0, 0, 0};  // per clause (1), (2), (3)
  std::array<std::size_t, 3> pairs{0, 0, 0};
  double scale = 0;
  AtomId witness_q = kNoAtom;
  AtomId witness_r = kNoAtom;
  int witness_clause = 0;
};

/// For all non-leaf Q, R: Δ^out_R Π Δ^in_Q vanishes when rk R ≤ r + rk Q or
/// R ⊄ Q, and equals Δ^out_R T Δ^in_Q otherwise. Residuals are weighted
/// Frobenius norms (an upper bound on the operator norm), relative to ‖T‖.
template <typename Scalar>
ReplacementReport check_replacement(const WeightedOperator<Scalar>& op, const Mat<Scalar>& pi,
                                    double tol = 1e-9) {
  const Filtration& f = op.filtration();
  const int d = op.dim();
  const int r = op.complexity();
  ReplacementReport rep;
  rep.scale = static_cast<double>(op.norm());
  std::vector<Mat<Scalar>> din(f.num_atoms()), dout(f.num_atoms());
  for (AtomId q = 0; q < f.num_atoms(); ++q) {
    if (f.is_leaf(q)) continue;
    din[q] = weighted_delta_local(f, op.in(), q);
    dout[q] = weighted_delta_local(f, op.out(), q);
  }
  for (AtomId q = 0; q < f.num_atoms(); ++q) {
    if (f.is_leaf(q)) continue;
    const auto oq = coefficient_offset(f, q, d);
    const auto kq = coefficient_count(f, q, d);
    for (AtomId ra = 0; ra < f.num_atoms(); ++ra) {
      if (f.is_leaf(ra)) continue;
      const auto orr = coefficient_offset(f, ra, d);
      const auto kr = coefficient_count(f, ra, d);
      int clause = 3;
      if (f.atom(ra).rank <= r + f.atom(q).rank)
        clause = 1;
      else if (!f.contains(q, ra))
        clause = 2;
      Mat<Scalar> x = dout[ra] * pi.block(orr, oq, kr, kq) * din[q];
      if (clause == 3) x -= dout[ra] * op.matrix().block(orr, oq, kr, kq) * din[q];
      const double res = static_cast<double>(local_weighted_frobenius(op, ra, q, x));
      auto& slot = rep.max_residual[static_cast<std::size_t>(clause - 1)];
      ++rep.pairs[static_cast<std::size_t>(clause - 1)];
      if (res > slot) slot = res;
      if (res > tol * rep.scale && rep.pass) {
        rep.pass = false;
        rep.witness_q = q;
        rep.witness_r = ra;
        rep.witness_clause = clause;
      }
    }
  }
  return rep;
}

struct InvarianceReport {
  bool pass = true;
  double max_residual = 0;
  double scale = 0;
  std::size_t triples = 0;
  AtomId witness_q = kNoAtom;
  AtomId witness_s = kNoAtom;
  AtomId witness_r = kNoAtom;
};

/// Δ^out_R T 1_Q e = Δ^out_R T 1_S e for every Q, every ancestor S of Q and
/// every R ∈ Ch^r Q (non-leaf).
template <typename Scalar>
InvarianceReport check_t_para_invariance(const WeightedOperator<Scalar>& op, double tol = 1e-9) {
  const Filtration& f = op.filtration();
  const int d = op.dim();
  const int r = op.complexity();
  InvarianceReport rep;
  for (AtomId q = 0; q < f.num_atoms(); ++q)
    rep.scale = std::max(rep.scale,
                         double(local_column_norms(f, op.out(), f.root(), op.image(q)).maxCoeff()));
  for (AtomId q = 0; q < f.num_atoms(); ++q) {
    if (f.atom(q).rank + r >= f.depth()) continue;
    for (AtomId ra : f.ch_r(q, r)) {
      const Mat<Scalar> delta = weighted_delta_local(f, op.out(), ra);
      const auto o = coefficient_offset(f, ra, d);
      const auto k = coefficient_count(f, ra, d);
      const Mat<Scalar> base = delta * op.image(q).middleRows(o, k);
      for (AtomId s = f.atom(q).parent; s != kNoAtom; s = f.atom(s).parent) {
        const Mat<Scalar> diff = delta * op.image(s).middleRows(o, k) - base;
        const double res = static_cast<double>(local_column_norms(f, op.out(), ra, diff).maxCoeff());
        ++rep.triples;
        rep.max_residual = std::max(rep.max_residual, res);
        if (res > tol * rep.scale && rep.pass) {
          rep.pass = false;
          rep.witness_q = q;
          rep.witness_s = s;
          rep.witness_r = ra;
        }
      }
    }
  }
  return rep;
}

/// Best constant in Σ_{R ⊂ Q, rk R ≥ rk Q + r} ‖Δ^out_R T 1_Q e‖² ≤ T1² ‖1_Q e‖²,
/// computed per Q as σ_max(D^{1/2} Σ_{S ∈ Ch^r Q} P_S T(1_Q ⊗ I) W(Q)^{+1/2}).
template <typename Scalar>
Scalar paraproduct_testing_constant(const WeightedOperator<Scalar>& op, AtomId* argmax = nullptr) {
  const Filtration& f = op.filtration();
  const int d = op.dim();
  const int r = op.complexity();
  Scalar best = 0;
  for (AtomId q = 0; q < f.num_atoms(); ++q) {
    if (f.atom(q).rank + r > f.depth()) continue;
    const auto oq = coefficient_offset(f, q, d);
    const auto kq = coefficient_count(f, q, d);
    Mat<Scalar> p = Mat<Scalar>::Zero(kq, kq);
    for (AtomId s : f.ch_r(q, r)) {
      const auto o = coefficient_offset(f, s, d) - oq;
      const auto k = coefficient_count(f, s, d);
      p.block(o, o, k, k) = weighted_complement_local(f, op.out(), s);
    }
    const Mat<Scalar> x = local_block(f, op.out_sqrt(), q, d) * p * op.image(q).middleRows(oq, kq) *
                          psd_pinv_sqrt(op.in().mass(q));
    const Scalar v = max_singular_value(x);
    if (v > best) {
      best = v;
      if (argmax) *argmax = q;
    }
  }
  return best;
}

}  // namespace mwh
