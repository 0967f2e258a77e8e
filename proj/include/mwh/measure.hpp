#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mwh/filtration.hpp"
#include "mwh/psd.hpp"

namespace mwh {

/// An F^d-valued function, constant on leaves. Values are stored leaf-major:
/// the value on leaf L occupies entries [L*d, L*d + d).
template <typename Scalar>
class VecFunction {
 public:
  VecFunction() = default;
  VecFunction(int dim, Vec<Scalar> values) : dim_(dim), values_(std::move(values)) {
    if (dim_ < 1 || values_.size() % dim_ != 0)
      throw std::invalid_argument("function values do not match the dimension");
  }

  static VecFunction zero(const Filtration& f, int dim) {
    return VecFunction(dim, Vec<Scalar>::Zero(static_cast<Eigen::Index>(f.num_leaves()) * dim));
  }

  /// 1_Q e
  static VecFunction indicator(const Filtration& f, AtomId q, const Vec<Scalar>& e) {
    VecFunction out = zero(f, static_cast<int>(e.size()));
    const Atom& a = f.atom(q);
    for (std::size_t l = a.leaf_begin; l < a.leaf_end; ++l) out.leaf(l) = e;
    return out;
  }

  int dim() const { return dim_; }
  std::size_t num_leaves() const { return static_cast<std::size_t>(values_.size() / dim_); }
  const Vec<Scalar>& values() const { return values_; }
  Vec<Scalar>& values() { return values_; }

  auto leaf(std::size_t l) { return values_.segment(static_cast<Eigen::Index>(l) * dim_, dim_); }
  auto leaf(std::size_t l) const {
    return values_.segment(static_cast<Eigen::Index>(l) * dim_, dim_);
  }

 private:
  int dim_ = 1;
  Vec<Scalar> values_;
};

/// A d x d matrix-valued measure given by PSD masses on the leaves. Aggregated
/// masses W(Q) and their pseudoinverses are computed eagerly for every atom.
template <typename Scalar>
class MatrixMeasure {
 public:
  MatrixMeasure() = default;

  MatrixMeasure(const Filtration& f, std::vector<Mat<Scalar>> leaf_masses, int dim)
      : dim_(dim), leaf_masses_(std::move(leaf_masses)) {
    if (dim_ < 1) throw std::invalid_argument("measure dimension must be >= 1");
    if (leaf_masses_.size() != f.num_leaves())
      throw std::invalid_argument("expected one mass per leaf");
    for (auto& m : leaf_masses_) {
      if (m.rows() != dim_ || m.cols() != dim_)
        throw std::invalid_argument("leaf mass has the wrong shape");
      if (!is_psd(m)) throw std::invalid_argument("leaf mass is not symmetric PSD");
      m = ((m + m.transpose()) / Scalar(2)).eval();
      leaf_sqrt_.push_back(psd_sqrt(m));
    }
    atom_masses_.resize(f.num_atoms());
    atom_pinv_.resize(f.num_atoms());
    for (AtomId q = f.num_atoms(); q-- > 0;) {
      const Atom& a = f.atom(q);
      if (a.children.empty()) {
        atom_masses_[q] = leaf_masses_[a.leaf_begin];
      } else {
        atom_masses_[q] = Mat<Scalar>::Zero(dim_, dim_);
        for (AtomId c : a.children) atom_masses_[q] += atom_masses_[c];
      }
      atom_pinv_[q] = psd_pinv(atom_masses_[q]);
    }
  }

  int dim() const { return dim_; }
  std::size_t num_leaves() const { return leaf_masses_.size(); }
  Eigen::Index basis_size() const { return static_cast<Eigen::Index>(num_leaves()) * dim_; }

  const Mat<Scalar>& leaf_mass(std::size_t l) const { return leaf_masses_.at(l); }
  const std::vector<Mat<Scalar>>& leaf_masses() const { return leaf_masses_; }
  /// W(L)^{1/2}. Norms go through this rather than the quadratic form, which
  /// picks up sqrt(eps)-sized noise along null directions of rank-deficient W(L).
  const Mat<Scalar>& leaf_sqrt(std::size_t l) const { return leaf_sqrt_.at(l); }

  /// W(Q)
  const Mat<Scalar>& mass(AtomId q) const { return atom_masses_.at(q); }
  /// W(Q)^+ (Moore-Penrose)
  const Mat<Scalar>& pinv(AtomId q) const { return atom_pinv_.at(q); }
  /// Trace measure w(Q) = tr W(Q).
  Scalar trace(AtomId q) const { return mass(q).trace(); }

  /// Block-diagonal leaf-mass matrix D_W acting on leaf-major coefficient vectors.
  Mat<Scalar> block_diagonal() const {
    return assemble([](const Mat<Scalar>& m) { return m; });
  }
  Mat<Scalar> sqrt_block_diagonal() const {
    Mat<Scalar> out = Mat<Scalar>::Zero(basis_size(), basis_size());
    for (std::size_t l = 0; l < leaf_sqrt_.size(); ++l) {
      const auto o = static_cast<Eigen::Index>(l) * dim_;
      out.block(o, o, dim_, dim_) = leaf_sqrt_[l];
    }
    return out;
  }
  Mat<Scalar> pinv_sqrt_block_diagonal() const {
    return assemble([](const Mat<Scalar>& m) { return psd_pinv_sqrt(m); });
  }

 private:
  template <typename Fn>
  Mat<Scalar> assemble(Fn fn) const {
    Mat<Scalar> out = Mat<Scalar>::Zero(basis_size(), basis_size());
    for (std::size_t l = 0; l < leaf_masses_.size(); ++l) {
      const auto o = static_cast<Eigen::Index>(l) * dim_;
      out.block(o, o, dim_, dim_) = fn(leaf_masses_[l]);
    }
    return out;
  }

  int dim_ = 1;
  std::vector<Mat<Scalar>> leaf_masses_;
  std::vector<Mat<Scalar>> leaf_sqrt_;
  std::vector<Mat<Scalar>> atom_masses_;
  std::vector<Mat<Scalar>> atom_pinv_;
};

/// W(Q) for a measure; free-function form.
template <typename Scalar>
const Mat<Scalar>& aggregate(const MatrixMeasure<Scalar>& w, AtomId q) {
  return w.mass(q);
}

/// ∫_X <dW f, g> = Σ_L <W(L) f_L, g_L>
template <typename Scalar>
Scalar inner_product(const VecFunction<Scalar>& f, const VecFunction<Scalar>& g,
                     const MatrixMeasure<Scalar>& w) {
  if (f.dim() != w.dim() || g.dim() != w.dim() || f.num_leaves() != w.num_leaves() ||
      g.num_leaves() != w.num_leaves())
    throw std::invalid_argument("inner_product: dimension mismatch");
  Scalar s = 0;
  for (std::size_t l = 0; l < w.num_leaves(); ++l)
    s += g.leaf(l).dot(w.leaf_mass(l) * f.leaf(l));
  return s;
}

template <typename Scalar>
Scalar norm(const VecFunction<Scalar>& f, const MatrixMeasure<Scalar>& w) {
  Scalar s = 0;
  for (std::size_t l = 0; l < w.num_leaves(); ++l) s += (w.leaf_sqrt(l) * f.leaf(l)).squaredNorm();
  return std::sqrt(s);
}

/// ∫_Q dW f
template <typename Scalar>
Vec<Scalar> integral(const Filtration& fil, const MatrixMeasure<Scalar>& w,
                     const VecFunction<Scalar>& f, AtomId q) {
  const Atom& a = fil.atom(q);
  Vec<Scalar> s = Vec<Scalar>::Zero(w.dim());
  for (std::size_t l = a.leaf_begin; l < a.leaf_end; ++l) s += w.leaf_mass(l) * f.leaf(l);
  return s;
}

struct RandomMeasureOptions {
  /// Probability that a leaf mass is set to zero.
  double zero_mass_prob = 0.0;
  /// Probability that a leaf mass loses between 1 and d-1 eigen-directions (d > 1).
  double rank_deficient_prob = 0.0;
  /// Multiply each leaf mass by σ(L), so leaves of zero σ-mass carry no weight.
  bool scale_by_sigma = true;
};

/// Seeded instance generator: each leaf mass is G G^T with standard normal G,
/// eigenvalues clamped into [λ_max / condition_cap, λ_max].
template <typename Scalar = double>
MatrixMeasure<Scalar> random_measure(std::uint64_t seed, const Filtration& f, int dim,
                                     double condition_cap, const RandomMeasureOptions& opts = {}) {
  if (!(condition_cap >= 1.0)) throw std::invalid_argument("condition_cap must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Mat<Scalar>> masses;
  masses.reserve(f.num_leaves());
  for (std::size_t l = 0; l < f.num_leaves(); ++l) {
    Mat<double> g(dim, dim);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) g(i, j) = normal(rng);
    Eigen::SelfAdjointEigenSolver<Mat<double>> es(g * g.transpose());
    Vec<double> ev = es.eigenvalues();
    const double top = ev.maxCoeff();
    for (int i = 0; i < dim; ++i) ev(i) = std::clamp(ev(i), top / condition_cap, top);
    const double u_zero = unit(rng);
    const double u_rank = unit(rng);
    const double u_count = unit(rng);
    if (dim > 1 && u_rank < opts.rank_deficient_prob) {
      // Eigenvalues are ascending; drop the smallest ones.
      const int drop = 1 + static_cast<int>(u_count * (dim - 1)) % (dim - 1);
      for (int i = 0; i < drop; ++i) ev(i) = 0.0;
    }
    if (u_zero < opts.zero_mass_prob) ev.setZero();
    if (opts.scale_by_sigma) ev *= f.mass(f.leaf(l));
    Mat<double> m = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    m = (m + m.transpose()) / 2.0;
    masses.push_back(m.template cast<Scalar>());
  }
  return MatrixMeasure<Scalar>(f, std::move(masses), dim);
}

}  // namespace mwh
