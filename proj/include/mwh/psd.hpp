#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mwh {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Mat<double>;
using VectorXd = Vec<double>;

/// Default relative cutoff below which eigenvalues of a PSD matrix count as zero.
inline constexpr double kPinvRelTol = 1e-12;

template <typename Derived>
bool is_symmetric(const Eigen::MatrixBase<Derived>& a, typename Derived::RealScalar rel_tol = 1e-10) {
  if (a.rows() != a.cols()) return false;
  if (a.size() == 0) return true;
  const auto scale = std::max(typename Derived::RealScalar(1), a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

/// PSD check: symmetric and smallest eigenvalue >= -tol * (1 + largest eigenvalue).
template <typename Derived>
bool is_psd(const Eigen::MatrixBase<Derived>& a, typename Derived::RealScalar tol = 1e-10) {
  using Scalar = typename Derived::Scalar;
  if (!is_symmetric(a)) return false;
  if (a.size() == 0) return true;
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(a.eval(), Eigen::EigenvaluesOnly);
  const auto ev = es.eigenvalues();
  return ev.minCoeff() >= -tol * (1 + std::max(ev.maxCoeff(), Scalar(0)));
}

/// Applies `fn` to the eigenvalues of a symmetric PSD matrix. Eigenvalues at or
/// below rel_tol * lambda_max are treated as exact zeros and passed as 0.
template <typename Derived, typename Fn>
Mat<typename Derived::Scalar> psd_spectral_map(const Eigen::MatrixBase<Derived>& a, Fn fn,
                                               typename Derived::RealScalar rel_tol) {
  using Scalar = typename Derived::Scalar;
  if (!is_symmetric(a)) throw std::invalid_argument("expected a symmetric matrix");
  const Mat<Scalar> sym = (a + a.transpose()) / Scalar(2);
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(sym);
  Vec<Scalar> ev = es.eigenvalues();
  const Scalar top = ev.size() > 0 ? std::max(ev.maxCoeff(), Scalar(0)) : Scalar(0);
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    const bool zero = top <= std::numeric_limits<Scalar>::min() || ev(i) <= rel_tol * top;
    ev(i) = fn(zero ? Scalar(0) : ev(i));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

/// Moore-Penrose pseudoinverse of a PSD matrix: zero on the kernel, inverse on the range.
template <typename Derived>
Mat<typename Derived::Scalar> psd_pinv(const Eigen::MatrixBase<Derived>& a,
                                       typename Derived::RealScalar rel_tol = kPinvRelTol) {
  using Scalar = typename Derived::Scalar;
  return psd_spectral_map(a, [](Scalar x) { return x > 0 ? Scalar(1) / x : Scalar(0); }, rel_tol);
}

/// Eigenvalues below the pseudo-inverse cutoff are treated as zero, so that
/// sqrt and pinv_sqrt agree on the numerical range.
template <typename Derived>
Mat<typename Derived::Scalar> psd_sqrt(const Eigen::MatrixBase<Derived>& a,
                                       typename Derived::RealScalar rel_tol = kPinvRelTol) {
  using Scalar = typename Derived::Scalar;
  return psd_spectral_map(a, [](Scalar x) { return x > 0 ? std::sqrt(x) : Scalar(0); }, rel_tol);
}

/// (A^+)^{1/2}, which equals (A^{1/2})^+.
template <typename Derived>
Mat<typename Derived::Scalar> psd_pinv_sqrt(const Eigen::MatrixBase<Derived>& a,
                                            typename Derived::RealScalar rel_tol = kPinvRelTol) {
  using Scalar = typename Derived::Scalar;
  return psd_spectral_map(
      a, [](Scalar x) { return x > 0 ? Scalar(1) / std::sqrt(x) : Scalar(0); }, rel_tol);
}

/// Orthogonal projection onto the range of a PSD matrix.
template <typename Derived>
Mat<typename Derived::Scalar> psd_range_projector(const Eigen::MatrixBase<Derived>& a,
                                                  typename Derived::RealScalar rel_tol = kPinvRelTol) {
  using Scalar = typename Derived::Scalar;
  return psd_spectral_map(a, [](Scalar x) { return x > 0 ? Scalar(1) : Scalar(0); }, rel_tol);
}

/// Spectral norm; zero for empty matrices.
template <typename Derived>
typename Derived::RealScalar max_singular_value(const Eigen::MatrixBase<Derived>& m) {
  using Real = typename Derived::RealScalar;
  if (m.size() == 0) return Real(0);
  if (m.rows() == 1 || m.cols() == 1) return m.norm();
  Eigen::BDCSVD<Mat<typename Derived::Scalar>> svd(m.eval());
  return svd.singularValues()(0);
}

/// sup over x in ran(B) of <Ax,x>/<Bx,x> for PSD A, B with ker B ⊂ ker A.
template <typename DA, typename DB>
typename DA::RealScalar max_generalized_eigenvalue(const Eigen::MatrixBase<DA>& a,
                                                   const Eigen::MatrixBase<DB>& b) {
  using Scalar = typename DA::Scalar;
  const Mat<Scalar> s = psd_pinv_sqrt(b);
  const Mat<Scalar> c = s * a * s;
  const Mat<Scalar> sym = (c + c.transpose()) / Scalar(2);
  if (sym.size() == 0) return Scalar(0);
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(sym, Eigen::EigenvaluesOnly);
  return std::max(es.eigenvalues().maxCoeff(), Scalar(0));
}

/// S ⊗ I_d in leaf-major coordinates.
template <typename Derived>
Mat<typename Derived::Scalar> kron_identity(const Eigen::MatrixBase<Derived>& s, int dim) {
  using Scalar = typename Derived::Scalar;
  Mat<Scalar> out = Mat<Scalar>::Zero(s.rows() * dim, s.cols() * dim);
  for (Eigen::Index j = 0; j < s.cols(); ++j)
    for (Eigen::Index i = 0; i < s.rows(); ++i)
      if (s(i, j) != Scalar(0))
        out.block(i * dim, j * dim, dim, dim).diagonal().setConstant(s(i, j));
  return out;
}

}  // namespace mwh
