#pragma once
// Brute-force reference computations used by the tests. These avoid the
// library's cached aggregates, pseudoinverse routine and matrix assembly.

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

#include "mwh/filtration.hpp"
#include "mwh/measure.hpp"
#include "mwh/shift.hpp"

namespace oracle {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Leaves of q by walking the tree.
inline std::vector<std::size_t> leaves_of(const mwh::Filtration& f, mwh::AtomId q) {
  std::vector<std::size_t> out;
  std::vector<mwh::AtomId> stack{q};
  while (!stack.empty()) {
    const mwh::AtomId a = stack.back();
    stack.pop_back();
    if (f.is_leaf(a)) {
      for (std::size_t l = 0; l < f.num_leaves(); ++l)
        if (f.leaf(l) == a) out.push_back(l);
      continue;
    }
    const auto& ch = f.atom(a).children;
    for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
  }
  return out;
}

inline bool leaf_in(const mwh::Filtration& f, std::size_t l, mwh::AtomId q) {
  for (std::size_t x : leaves_of(f, q))
    if (x == l) return true;
  return false;
}

inline Mat mass(const mwh::Filtration& f, const mwh::MatrixMeasure<double>& w, mwh::AtomId q) {
  Mat m = Mat::Zero(w.dim(), w.dim());
  for (std::size_t l : leaves_of(f, q)) m += w.leaf_mass(l);
  return m;
}

// Moore-Penrose inverse via complete orthogonal decomposition.
inline Mat pinv(const Mat& a) {
  if (a.norm() == 0) return Mat::Zero(a.cols(), a.rows());
  Eigen::CompleteOrthogonalDecomposition<Mat> cod(a);
  cod.setThreshold(1e-12);
  return cod.pseudoInverse();
}

// E^W_Q f as a full coefficient vector.
inline Vec expectation(const mwh::Filtration& f, const mwh::MatrixMeasure<double>& w, mwh::AtomId q,
                       const Vec& x) {
  const int d = w.dim();
  Vec integral = Vec::Zero(d);
  for (std::size_t l : leaves_of(f, q)) integral += w.leaf_mass(l) * x.segment(l * d, d);
  const Vec avg = pinv(mass(f, w, q)) * integral;
  Vec out = Vec::Zero(x.size());
  for (std::size_t l : leaves_of(f, q)) out.segment(l * d, d) = avg;
  return out;
}

inline Vec delta(const mwh::Filtration& f, const mwh::MatrixMeasure<double>& w, mwh::AtomId q,
                 const Vec& x) {
  Vec out = -expectation(f, w, q, x);
  for (mwh::AtomId c : f.atom(q).children) out += expectation(f, w, c, x);
  return out;
}

inline double inner(const mwh::MatrixMeasure<double>& w, const Vec& x, const Vec& y) {
  const int d = w.dim();
  double s = 0;
  for (std::size_t l = 0; l < w.num_leaves(); ++l)
    s += y.segment(l * d, d).dot(w.leaf_mass(l) * x.segment(l * d, d));
  return s;
}

inline double norm(const mwh::MatrixMeasure<double>& w, const Vec& x) {
  return std::sqrt(std::max(0.0, inner(w, x, x)));
}

// Kernel of block b at (leaf x, leaf y): the grid cell containing each leaf
// is the unique grid-rank descendant of the owner containing it.
inline double kernel_at(const mwh::Filtration& f, const mwh::KernelBlock<double>& b, std::size_t x,
                        std::size_t y) {
  if (!leaf_in(f, x, b.owner) || !leaf_in(f, y, b.owner)) return 0;
  const auto cells = f.ch_r(b.owner, b.grid_rank - f.atom(b.owner).rank);
  int cx = -1, cy = -1;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (leaf_in(f, x, cells[i])) cx = static_cast<int>(i);
    if (leaf_in(f, y, cells[i])) cy = static_cast<int>(i);
  }
  return b.grid(cx, cy);
}

// (T_W f)(x) = Σ_Q Σ_y K_Q(x, y) W(y) f(y), literally.
inline Vec apply(const mwh::Filtration& f, const mwh::ShiftOperator<double>& t,
                 const mwh::MatrixMeasure<double>& w, const Vec& x) {
  const int d = w.dim();
  const std::size_t n = f.num_leaves();
  Vec out = Vec::Zero(x.size());
  for (const auto& b : t.blocks())
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double k = kernel_at(f, b, i, j);
        if (k != 0) out.segment(i * d, d) += k * (w.leaf_mass(j) * x.segment(j * d, d));
      }
  return out;
}

// (T*_V g)(y) = Σ_Q Σ_x K_Q(x, y) V(x) g(x), the kernel read transposed.
inline Vec apply_adjoint(const mwh::Filtration& f, const mwh::ShiftOperator<double>& t,
                         const mwh::MatrixMeasure<double>& v, const Vec& g) {
  const int d = v.dim();
  const std::size_t n = f.num_leaves();
  Vec out = Vec::Zero(g.size());
  for (const auto& b : t.blocks())
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double k = kernel_at(f, b, j, i);
        if (k != 0) out.segment(i * d, d) += k * (v.leaf_mass(j) * g.segment(j * d, d));
      }
  return out;
}

// Matrix of a linear map given as a function on coefficient vectors.
template <typename Fn>
Mat columns(Eigen::Index n, Fn fn) {
  Mat m(n, n);
  for (Eigen::Index j = 0; j < n; ++j) m.col(j) = fn(Vec::Unit(n, j));
  return m;
}

// ‖A‖ as a map L²(in) → L²(out), by power iteration on the Gram operator
// restricted to the in-range, with Gram-Schmidt free restarts.
inline double power_norm(const Mat& a, const mwh::MatrixMeasure<double>& in,
                         const mwh::MatrixMeasure<double>& out, int iters = 3000) {
  const int d = in.dim();
  const Eigen::Index n = a.cols();
  Mat half_in = Mat::Zero(n, n), half_out = Mat::Zero(n, n);
  for (std::size_t l = 0; l < in.num_leaves(); ++l) {
    Eigen::SelfAdjointEigenSolver<Mat> ei(in.leaf_mass(l)), eo(out.leaf_mass(l));
    Vec vi = ei.eigenvalues(), vo = eo.eigenvalues();
    const double ti = std::max(vi.maxCoeff(), 0.0), to = std::max(vo.maxCoeff(), 0.0);
    for (int k = 0; k < d; ++k) {
      vi(k) = vi(k) > 1e-12 * ti ? 1 / std::sqrt(vi(k)) : 0;
      vo(k) = vo(k) > 1e-12 * to ? std::sqrt(vo(k)) : 0;
    }
    half_in.block(l * d, l * d, d, d) = ei.eigenvectors() * vi.asDiagonal() * ei.eigenvectors().transpose();
    half_out.block(l * d, l * d, d, d) = eo.eigenvectors() * vo.asDiagonal() * eo.eigenvectors().transpose();
  }
  const Mat b = half_out * a * half_in;
  const Mat g = b.transpose() * b;
  std::mt19937_64 rng(12345);
  std::normal_distribution<double> normal;
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  double lambda = 0;
  for (int it = 0; it < iters; ++it) {
    Vec next = g * v;
    const double nn = next.norm();
    if (nn == 0) return 0;
    lambda = v.dot(next) / v.squaredNorm();
    v = next / nn;
  }
  return std::sqrt(std::max(lambda, 0.0));
}

}  // namespace oracle
