#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mwh/filtration.hpp"
#include "mwh/martingale.hpp"
#include "mwh/measure.hpp"

namespace mwh {

/// Rank of the cells on which a block owned by `q` is constant: Ch^{r+1}(q),
/// clamped at the leaves.
inline int grid_rank(const Filtration& f, AtomId q, int r) {
  return std::min(f.atom(q).rank + r + 1, f.depth());
}

/// For each leaf of `q` (in leaf order), the index of the rank-`rank` cell
/// containing it, cells numbered as in ch_r(q, rank - rk q).
inline std::vector<int> leaf_cells(const Filtration& f, AtomId q, int rank) {
  const Atom& a = f.atom(q);
  std::vector<int> out(a.num_leaves());
  const auto cells = f.ch_r(q, rank - a.rank);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const Atom& cell = f.atom(cells[c]);
    for (std::size_t l = cell.leaf_begin; l < cell.leaf_end; ++l)
      out[l - a.leaf_begin] = static_cast<int>(c);
  }
  return out;
}

/// Children of a non-leaf atom, or the atom itself for a leaf.
inline std::vector<AtomId> cells_of(const Filtration& f, AtomId q) {
  if (f.is_leaf(q)) return {q};
  return f.atom(q).children;
}

/// Scalar kernel of one block T_Q, tabulated on R x S for R, S in the cells
/// of rank `grid_rank` below the owner. Acts on F^d as k(x,y) ⊗ I_d.
template <typename Scalar>
struct KernelBlock {
  AtomId owner = 0;
  int grid_rank = 0;
  Mat<Scalar> grid;

  Scalar sup() const { return grid.size() == 0 ? Scalar(0) : grid.cwiseAbs().maxCoeff(); }
};

struct ShiftFlags {
  bool is_big_haar = false;            // ‖K_Q‖_∞ ≤ |Q|^{-1} enforced
  bool annihilates_constants = false;  // T_Q 1_Q = T_Q^* 1_Q = 0 enforced
};

/// T = Σ_Q T_Q with at most one block per atom.
template <typename Scalar>
class ShiftOperator {
 public:
  ShiftOperator() = default;
  explicit ShiftOperator(int r, ShiftFlags flags = {}) : r_(r), flags_(flags) {
    if (r < 0) throw std::invalid_argument("complexity must be >= 0");
  }

  int complexity() const { return r_; }
  const ShiftFlags& flags() const { return flags_; }
  void set_flags(ShiftFlags flags) { flags_ = flags; }

  const std::vector<KernelBlock<Scalar>>& blocks() const { return blocks_; }
  std::vector<KernelBlock<Scalar>>& blocks() { return blocks_; }

  /// Adds a block after checking its grid against the filtration. Blocks are
  /// kept sorted by owner; a second block on the same owner is added to the first.
  void add_block(const Filtration& f, KernelBlock<Scalar> b) {
    const Atom& a = f.atom(b.owner);
    if (b.grid_rank < a.rank || b.grid_rank > f.depth())
      throw std::invalid_argument("block grid rank outside the subtree");
    const auto n = static_cast<Eigen::Index>(f.ch_r(b.owner, b.grid_rank - a.rank).size());
    if (b.grid.rows() != n || b.grid.cols() != n)
      throw std::invalid_argument("block grid has the wrong shape");
    auto it = std::lower_bound(blocks_.begin(), blocks_.end(), b.owner,
                               [](const KernelBlock<Scalar>& x, AtomId id) { return x.owner < id; });
    if (it != blocks_.end() && it->owner == b.owner) {
      const int g = std::max(it->grid_rank, b.grid_rank);
      Mat<Scalar> merged = refine(f, *it, g) + refine(f, b, g);
      it->grid_rank = g;
      it->grid = std::move(merged);
      return;
    }
    blocks_.insert(it, std::move(b));
  }

  /// The block owned by `q`, if any.
  const KernelBlock<Scalar>* find(AtomId q) const {
    auto it = std::lower_bound(blocks_.begin(), blocks_.end(), q,
                               [](const KernelBlock<Scalar>& x, AtomId id) { return x.owner < id; });
    return (it != blocks_.end() && it->owner == q) ? &*it : nullptr;
  }

  /// Block grid re-tabulated on the finer cells of rank g.
  static Mat<Scalar> refine(const Filtration& f, const KernelBlock<Scalar>& b, int g) {
    const Atom& a = f.atom(b.owner);
    if (g == b.grid_rank) return b.grid;
    const auto fine = f.ch_r(b.owner, g - a.rank);
    const auto coarse_of_leaf = leaf_cells(f, b.owner, b.grid_rank);
    std::vector<int> map(fine.size());
    for (std::size_t i = 0; i < fine.size(); ++i)
      map[i] = coarse_of_leaf[f.atom(fine[i]).leaf_begin - a.leaf_begin];
    const auto n = static_cast<Eigen::Index>(fine.size());
    Mat<Scalar> out(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < n; ++i) out(i, j) = b.grid(map[i], map[j]);
    return out;
  }

 private:
  int r_ = 0;
  ShiftFlags flags_;
  std::vector<KernelBlock<Scalar>> blocks_;
};

/// Leaf-level kernel of one block, on the leaves of its owner.
template <typename Scalar>
Mat<Scalar> block_kernel_local(const Filtration& f, const KernelBlock<Scalar>& b) {
  const auto cell = leaf_cells(f, b.owner, b.grid_rank);
  const auto n = static_cast<Eigen::Index>(cell.size());
  Mat<Scalar> k(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) k(i, j) = b.grid(cell[i], cell[j]);
  return k;
}

/// Scalar kernel K(L, L') = Σ_Q K_Q(L, L') over leaves.
template <typename Scalar>
Mat<Scalar> kernel_matrix(const Filtration& f, const ShiftOperator<Scalar>& t) {
  const auto n = static_cast<Eigen::Index>(f.num_leaves());
  Mat<Scalar> k = Mat<Scalar>::Zero(n, n);
  for (const auto& b : t.blocks()) {
    const Atom& a = f.atom(b.owner);
    const auto o = static_cast<Eigen::Index>(a.leaf_begin);
    k.block(o, o, a.num_leaves(), a.num_leaves()) += block_kernel_local(f, b);
  }
  return k;
}

/// Scalar matrix of T on L²(σ): (T f)(L) = Σ_{L'} K(L, L') σ(L') f(L').
template <typename Scalar>
Mat<Scalar> unweighted_matrix(const Filtration& f, const ShiftOperator<Scalar>& t) {
  Vec<Scalar> s(static_cast<Eigen::Index>(f.num_leaves()));
  for (std::size_t l = 0; l < f.num_leaves(); ++l) s(l) = Scalar(f.mass(f.leaf(l)));
  return kernel_matrix(f, t) * s.asDiagonal();
}

/// (K ⊗ I_d) D_W for a scalar kernel on `leaf_count` consecutive leaves starting at `first`.
template <typename Scalar>
Mat<Scalar> weight_kernel(const Mat<Scalar>& k, const MatrixMeasure<Scalar>& w, std::size_t first) {
  const int d = w.dim();
  Mat<Scalar> out(k.rows() * d, k.cols() * d);
  for (Eigen::Index j = 0; j < k.cols(); ++j) {
    const Mat<Scalar>& m = w.leaf_mass(first + static_cast<std::size_t>(j));
    for (Eigen::Index i = 0; i < k.rows(); ++i) out.block(i * d, j * d, d, d) = k(i, j) * m;
  }
  return out;
}

/// Dense matrix of T_W f = T(W f) in the leaf-major basis.
template <typename Scalar>
Mat<Scalar> weighted_matrix(const Filtration& f, const ShiftOperator<Scalar>& t,
                            const MatrixMeasure<Scalar>& w) {
  return weight_kernel(kernel_matrix(f, t), w, 0);
}

/// Local matrix (on the owner's leaves) of one weighted block T_{Q,W}.
template <typename Scalar>
Mat<Scalar> weighted_block_local(const Filtration& f, const KernelBlock<Scalar>& b,
                                 const MatrixMeasure<Scalar>& w) {
  return weight_kernel(block_kernel_local(f, b), w, f.atom(b.owner).leaf_begin);
}

/// T_W f evaluated block by block: cell sums of W f, then the grid.
template <typename Scalar>
VecFunction<Scalar> apply_weighted(const Filtration& f, const ShiftOperator<Scalar>& t,
                                   const MatrixMeasure<Scalar>& w, const VecFunction<Scalar>& x) {
  const int d = w.dim();
  if (x.dim() != d || x.num_leaves() != f.num_leaves())
    throw std::invalid_argument("apply_weighted: dimension mismatch");
  VecFunction<Scalar> out = VecFunction<Scalar>::zero(f, d);
  for (const auto& b : t.blocks()) {
    const Atom& a = f.atom(b.owner);
    const auto cell = leaf_cells(f, b.owner, b.grid_rank);
    Mat<Scalar> sums = Mat<Scalar>::Zero(d, b.grid.cols());
    for (std::size_t l = a.leaf_begin; l < a.leaf_end; ++l)
      sums.col(cell[l - a.leaf_begin]) += w.leaf_mass(l) * x.leaf(l);
    const Mat<Scalar> vals = sums * b.grid.transpose();  // column i: Σ_j k(i,j) s_j
    for (std::size_t l = a.leaf_begin; l < a.leaf_end; ++l)
      out.leaf(l) += vals.col(cell[l - a.leaf_begin]);
  }
  return out;
}

/// Unweighted T f on L²(σ).
template <typename Scalar>
VecFunction<Scalar> apply(const Filtration& f, const ShiftOperator<Scalar>& t,
                          const VecFunction<Scalar>& x) {
  std::vector<Mat<Scalar>> id;
  id.reserve(f.num_leaves());
  for (std::size_t l = 0; l < f.num_leaves(); ++l)
    id.push_back(Scalar(f.mass(f.leaf(l))) * Mat<Scalar>::Identity(x.dim(), x.dim()));
  return apply_weighted(f, t, MatrixMeasure<Scalar>(f, std::move(id), x.dim()), x);
}

/// Kernel transpose: the L²(σ) adjoint, again a shift of the same complexity.
template <typename Scalar>
ShiftOperator<Scalar> adjoint(const ShiftOperator<Scalar>& t) {
  ShiftOperator<Scalar> out = t;
  for (auto& b : out.blocks()) b.grid.transposeInPlace();
  return out;
}

/// Formal adjoint T*_V = (K^T ⊗ I) D_V, mapping L²(V) to L²(W).
template <typename Scalar>
Mat<Scalar> adjoint_weighted(const Filtration& f, const ShiftOperator<Scalar>& t,
                             const MatrixMeasure<Scalar>& v) {
  return weighted_matrix(f, adjoint(t), v);
}

/// T^Q = Σ_{R ⊂ Q} T_R
template <typename Scalar>
ShiftOperator<Scalar> truncate_blocks(const Filtration& f, const ShiftOperator<Scalar>& t, AtomId q) {
  ShiftOperator<Scalar> out(t.complexity(), t.flags());
  for (const auto& b : t.blocks())
    if (f.contains(q, b.owner)) out.blocks().push_back(b);
  return out;
}

/// Full-basis matrix of P^V_Q = 1_Q − E^V_Q.
template <typename Scalar>
Mat<Scalar> complement_projector(const Filtration& f, const MatrixMeasure<Scalar>& v, AtomId q) {
  return embed_local<Scalar>(f, q, v.dim(), weighted_complement_local(f, v, q));
}

/// T^Q_W = P^V_Q T_W
template <typename Scalar>
Mat<Scalar> truncate_projection(const Filtration& f, const ShiftOperator<Scalar>& t,
                                const MatrixMeasure<Scalar>& w, const MatrixMeasure<Scalar>& v,
                                AtomId q) {
  const int d = w.dim();
  const Mat<Scalar> tw = weighted_matrix(f, t, w);
  Mat<Scalar> out = Mat<Scalar>::Zero(tw.rows(), tw.cols());
  const auto o = coefficient_offset(f, q, d);
  const auto k = coefficient_count(f, q, d);
  out.middleRows(o, k) = weighted_complement_local(f, v, q) * tw.middleRows(o, k);
  return out;
}

/// T_k = Σ_{rk Q ≡ k mod (r+1)} T_Q, k = 0..r.
template <typename Scalar>
std::vector<ShiftOperator<Scalar>> split_by_rank(const Filtration& f, const ShiftOperator<Scalar>& t) {
  const int m = t.complexity() + 1;
  std::vector<ShiftOperator<Scalar>> out(static_cast<std::size_t>(m),
                                         ShiftOperator<Scalar>(t.complexity(), t.flags()));
  for (const auto& b : t.blocks())
    out[static_cast<std::size_t>(f.atom(b.owner).rank % m)].blocks().push_back(b);
  return out;
}

/// max_Q |Q| ‖K_Q‖_∞; at most 1 for a big Haar shift. Blocks on zero-mass
/// atoms must vanish.
template <typename Scalar>
Scalar normalization_ratio(const Filtration& f, const ShiftOperator<Scalar>& t) {
  Scalar worst = 0;
  for (const auto& b : t.blocks()) {
    const Scalar s = b.sup();
    const double m = f.mass(b.owner);
    if (m > 0)
      worst = std::max(worst, Scalar(m) * s);
    else if (s > 0)
      return std::numeric_limits<Scalar>::infinity();
  }
  return worst;
}

/// max_Q of ‖T_Q 1_Q‖ and ‖T_Q^* 1_Q‖ in L²(σ), relative to |Q|^{1/2}.
template <typename Scalar>
Scalar constant_annihilation_residual(const Filtration& f, const ShiftOperator<Scalar>& t) {
  Scalar worst = 0;
  for (const auto& b : t.blocks()) {
    const Atom& a = f.atom(b.owner);
    if (a.sigma_mass <= 0) continue;
    const Mat<Scalar> k = block_kernel_local(f, b);
    Vec<Scalar> s(k.rows());
    for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = Scalar(f.mass(f.leaf(a.leaf_begin + i)));
    const Vec<Scalar> fwd = k * s;
    const Vec<Scalar> bwd = k.transpose() * s;
    const Scalar nf = std::sqrt(fwd.cwiseAbs2().dot(s));
    const Scalar nb = std::sqrt(bwd.cwiseAbs2().dot(s));
    worst = std::max(worst, std::max(nf, nb) / std::sqrt(Scalar(a.sigma_mass)));
  }
  return worst;
}

/// Whether each block is constant on the Ch^{r+1} cells of its owner.
template <typename Scalar>
bool has_block_structure(const Filtration& f, const ShiftOperator<Scalar>& t) {
  for (const auto& b : t.blocks()) {
    const int g = grid_rank(f, b.owner, t.complexity());
    if (b.grid_rank <= g) continue;
    const Mat<Scalar> k = block_kernel_local(f, b);
    const auto cell = leaf_cells(f, b.owner, g);
    const auto n = k.rows();
    std::vector<Eigen::Index> rep(static_cast<std::size_t>(n), -1);
    std::vector<Eigen::Index> first(static_cast<std::size_t>(n), -1);
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& fst = first[static_cast<std::size_t>(cell[i])];
      if (fst < 0) fst = i;
      rep[i] = fst;
    }
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < n; ++i)
        if (k(i, j) != k(rep[i], rep[j])) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Construction

/// K(x, y) = |S_y|^{-1} (B 1_{S_y})(x) for a scalar operator B given on the
/// leaves of R (rows) and S (columns); S_y is the cell of S containing y.
/// Columns of zero-mass cells are set to 0.
template <typename Scalar>
Mat<Scalar> canonical_kernel(const Filtration& f, const Mat<Scalar>& b, AtomId r_atom, AtomId s_atom) {
  const Atom& s = f.atom(s_atom);
  if (b.rows() != static_cast<Eigen::Index>(f.atom(r_atom).num_leaves()) ||
      b.cols() != static_cast<Eigen::Index>(s.num_leaves()))
    throw std::invalid_argument("canonical_kernel: block shape does not match the atoms");
  Mat<Scalar> k = Mat<Scalar>::Zero(b.rows(), b.cols());
  for (AtomId c : cells_of(f, s_atom)) {
    const Atom& cell = f.atom(c);
    if (cell.sigma_mass <= 0) continue;
    const auto o = static_cast<Eigen::Index>(cell.leaf_begin - s.leaf_begin);
    const auto n = static_cast<Eigen::Index>(cell.num_leaves());
    const Vec<Scalar> col = b.middleCols(o, n).rowwise().sum() / Scalar(cell.sigma_mass);
    for (Eigen::Index j = 0; j < n; ++j) k.col(o + j) = col;
  }
  return k;
}

/// Which σ-projection sits on each side of a piece P^j_R T P^k_S.
enum class Projection { kDelta = 1, kExpectation = 2 };

enum class Normalization {
  kNone,         // keep coefficients as given
  kHaar,         // rescale each block so ‖K_Q‖_∞ = |Q|^{-1}
  kGeneralized,  // rescale each piece so ‖K^{j,k}_{R,S}‖_∞ = |Q|^{-1} / 4
};

/// Accumulates pieces P^j_R T_{R,S} P^k_S of a (generalized) Haar shift,
/// R, S below Q within r generations, and groups them into blocks T_Q.
template <typename Scalar>
class ShiftBuilder {
 public:
  ShiftBuilder(const Filtration& f, int r) : f_(&f), r_(r) {
    if (r < 0) throw std::invalid_argument("complexity must be >= 0");
  }

  /// `coeffs` is the kernel of T_{R,S} on cells_of(R) x cells_of(S).
  void add_piece(AtomId q, AtomId r_atom, AtomId s_atom, Projection pr, Projection ps,
                 const Mat<Scalar>& coeffs) {
    const Filtration& f = *f_;
    const int rq = f.atom(q).rank;
    const int dr = f.atom(r_atom).rank - rq;
    const int ds = f.atom(s_atom).rank - rq;
    if (!f.contains(q, r_atom) || !f.contains(q, s_atom) || dr > r_ || ds > r_)
      throw std::invalid_argument("piece atoms must lie within r generations below the block owner");
    const auto rc = cells_of(f, r_atom);
    const auto sc = cells_of(f, s_atom);
    if (coeffs.rows() != static_cast<Eigen::Index>(rc.size()) ||
        coeffs.cols() != static_cast<Eigen::Index>(sc.size()))
      throw std::invalid_argument("piece coefficients have the wrong shape");

    const Atom& ra = f.atom(r_atom);
    const Atom& sa = f.atom(s_atom);
    const auto rcell = leaf_cells(f, r_atom, f.atom(rc.front()).rank);
    const auto scell = leaf_cells(f, s_atom, f.atom(sc.front()).rank);
    const auto nr = static_cast<Eigen::Index>(ra.num_leaves());
    const auto ns = static_cast<Eigen::Index>(sa.num_leaves());
    Mat<Scalar> raw(nr, ns);
    for (Eigen::Index j = 0; j < ns; ++j)
      for (Eigen::Index i = 0; i < nr; ++i) raw(i, j) = coeffs(rcell[i], scell[j]);
    Vec<Scalar> sig(ns);
    for (Eigen::Index j = 0; j < ns; ++j) sig(j) = Scalar(f.mass(f.leaf(sa.leaf_begin + j)));

    const Mat<Scalar> b = side(pr, r_atom) * raw * sig.asDiagonal() * side(ps, s_atom);
    Piece p;
    p.row_offset = static_cast<Eigen::Index>(ra.leaf_begin - f.atom(q).leaf_begin);
    p.col_offset = static_cast<Eigen::Index>(sa.leaf_begin - f.atom(q).leaf_begin);
    p.kernel = canonical_kernel(f, b, r_atom, s_atom);
    pieces_[q].push_back(std::move(p));
  }

  ShiftOperator<Scalar> build(Normalization norm) const {
    const Filtration& f = *f_;
    ShiftFlags flags;
    flags.is_big_haar = norm != Normalization::kNone;
    ShiftOperator<Scalar> out(r_, flags);
    for (const auto& [q, pieces] : pieces_) {
      const Atom& a = f.atom(q);
      const auto n = static_cast<Eigen::Index>(a.num_leaves());
      const Scalar target = a.sigma_mass > 0 ? Scalar(1) / Scalar(a.sigma_mass) : Scalar(0);
      Mat<Scalar> k = Mat<Scalar>::Zero(n, n);
      for (const Piece& p : pieces) {
        Scalar scale = 1;
        if (norm == Normalization::kGeneralized) scale = rescale(p.kernel, target / Scalar(4));
        k.block(p.row_offset, p.col_offset, p.kernel.rows(), p.kernel.cols()) += scale * p.kernel;
      }
      if (norm == Normalization::kHaar) k *= rescale(k, target);
      const int g = grid_rank(f, q, r_);
      KernelBlock<Scalar> blk;
      blk.owner = q;
      blk.grid_rank = g;
      const auto cells = f.ch_r(q, g - a.rank);
      const auto m = static_cast<Eigen::Index>(cells.size());
      blk.grid.resize(m, m);
      for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < m; ++i)
          blk.grid(i, j) = k(static_cast<Eigen::Index>(f.atom(cells[i]).leaf_begin - a.leaf_begin),
                             static_cast<Eigen::Index>(f.atom(cells[j]).leaf_begin - a.leaf_begin));
      out.add_block(f, std::move(blk));
    }
    return out;
  }

 private:
  struct Piece {
    Eigen::Index row_offset = 0;
    Eigen::Index col_offset = 0;
    Mat<Scalar> kernel;
  };

  Mat<Scalar> side(Projection p, AtomId a) const {
    return p == Projection::kDelta ? delta_local_scalar<Scalar>(*f_, a)
                                   : expectation_local_scalar<Scalar>(*f_, a);
  }

  static Scalar rescale(const Mat<Scalar>& k, Scalar target) {
    const Scalar s = k.size() ? k.cwiseAbs().maxCoeff() : Scalar(0);
    return s > 0 ? target / s : Scalar(0);
  }

  const Filtration* f_;
  int r_;
  std::map<AtomId, std::vector<Piece>> pieces_;
};

/// Uniform [-1, 1] coefficients on cells_of(R) x cells_of(S).
template <typename Scalar>
Mat<Scalar> random_coefficients(std::mt19937_64& rng, const Filtration& f, AtomId r_atom,
                                AtomId s_atom) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto nr = static_cast<Eigen::Index>(cells_of(f, r_atom).size());
  const auto ns = static_cast<Eigen::Index>(cells_of(f, s_atom).size());
  Mat<Scalar> c(nr, ns);
  for (Eigen::Index i = 0; i < nr; ++i)
    for (Eigen::Index j = 0; j < ns; ++j) c(i, j) = Scalar(u(rng));
  return c;
}

/// Haar shift of complexity (m, n): blocks Σ Δ_R T_{R,S} Δ_S over R ∈ Ch^n Q,
/// S ∈ Ch^m Q, random kernels rescaled to ‖K_Q‖_∞ = |Q|^{-1}. Stored with r = max(m, n).
template <typename Scalar = double>
ShiftOperator<Scalar> make_haar_shift(std::uint64_t seed, const Filtration& f, int m, int n) {
  if (m < 0 || n < 0 || m > f.depth() || n > f.depth())
    throw std::invalid_argument("shift complexity exceeds the depth");
  std::mt19937_64 rng(seed);
  ShiftBuilder<Scalar> builder(f, std::max(m, n));
  for (AtomId q = 0; q < f.num_atoms(); ++q) {
    const int rk = f.atom(q).rank;
    if (rk + std::max(m, n) >= f.depth()) continue;  // some Δ would sit on a leaf
    for (AtomId r : f.ch_r(q, n))
      for (AtomId s : f.ch_r(q, m))
        builder.add_piece(q, r, s, Projection::kDelta, Projection::kDelta,
                          random_coefficients<Scalar>(rng, f, r, s));
  }
  ShiftOperator<Scalar> t = builder.build(Normalization::kHaar);
  t.set_flags({true, true});
  return t;
}

/// Bit (2(j-1) + (k-1)) of the mask enables the pieces P^j_R T P^k_S (1 = Δ, 2 = E).
inline constexpr unsigned kAllPieces = 0b1111;
inline constexpr unsigned kDeltaDeltaPieces = 0b0001;

/// Generalized Haar shift of complexity (m, n): all enabled P^j T P^k pieces,
/// each rescaled to ‖K^{j,k}_{R,S}‖_∞ = |Q|^{-1}/4 so that ‖K_Q‖_∞ ≤ |Q|^{-1}.
template <typename Scalar = double>
ShiftOperator<Scalar> make_generalized_shift(std::uint64_t seed, const Filtration& f, int m, int n,
                                             unsigned piece_mask = kAllPieces) {
  if (m < 0 || n < 0 || m > f.depth() || n > f.depth())
    throw std::invalid_argument("shift complexity exceeds the depth");
  std::mt19937_64 rng(seed);
  ShiftBuilder<Scalar> builder(f, std::max(m, n));
  for (AtomId q = 0; q < f.num_atoms(); ++q) {
    const int rk = f.atom(q).rank;
    if (rk + std::max(m, n) > f.depth()) continue;
    for (AtomId r : f.ch_r(q, n))
      for (AtomId s : f.ch_r(q, m))
        for (int j = 1; j <= 2; ++j)
          for (int k = 1; k <= 2; ++k) {
            if (!(piece_mask >> (2 * (j - 1) + (k - 1)) & 1u)) continue;
            builder.add_piece(q, r, s, static_cast<Projection>(j), static_cast<Projection>(k),
                              random_coefficients<Scalar>(rng, f, r, s));
          }
  }
  ShiftOperator<Scalar> t = builder.build(Normalization::kGeneralized);
  t.set_flags({true, piece_mask == kDeltaDeltaPieces});
  return t;
}

// ---------------------------------------------------------------------------
// Structural check

/// Y_Q = M (1_Q ⊗ I_d) for every atom, by bottom-up column sums.
template <typename Scalar>
std::vector<Mat<Scalar>> indicator_images(const Filtration& f, const Mat<Scalar>& m, int dim) {
  std::vector<Mat<Scalar>> y(f.num_atoms());
  for (AtomId q = f.num_atoms(); q-- > 0;) {
    const Atom& a = f.atom(q);
    if (a.children.empty()) {
      y[q] = m.middleCols(static_cast<Eigen::Index>(a.leaf_begin) * dim, dim);
    } else {
      y[q] = y[a.children.front()];
      for (std::size_t c = 1; c < a.children.size(); ++c) y[q] += y[a.children[c]];
    }
  }
  return y;
}

/// Euclidean column norms of D^{1/2} x on the rows of atom q, where x has q's rows.
template <typename Scalar>
Vec<Scalar> local_column_norms(const Filtration& f, const MatrixMeasure<Scalar>& v, AtomId q,
                               const Mat<Scalar>& x) {
  const Atom& a = f.atom(q);
  const int d = v.dim();
  Vec<Scalar> s = Vec<Scalar>::Zero(x.cols());
  for (std::size_t l = a.leaf_begin; l < a.leaf_end; ++l) {
    const auto blk = x.middleRows(static_cast<Eigen::Index>(l - a.leaf_begin) * d, d);
    s += (v.leaf_sqrt(l) * blk).colwise().squaredNorm().transpose();
  }
  return s.cwiseSqrt();
}

struct LocalizationWitness {
  bool dual = false;  // found on T*_V rather than T_W
  AtomId q = kNoAtom;
  AtomId r = kNoAtom;
  int component = 0;
  int clause = 0;
  double residual = 0;
};

struct WellLocalizedReport {
  bool pass = true;
  // A single finite tree has one equivalence class, so "localized" holds
  // trivially; only lower triangularity is checked.
  bool localized_trivially = true;
  double max_residual = 0;
  double scale = 0;
  std::size_t pairs_checked = 0;
  std::optional<LocalizationWitness> witness;
};

/// Which clause of r-lower triangularity forces Δ_R T 1_Q = 0 (0 if none).
/// Q^{(r+1)} above the root is a set copy of the root, so clause (2) is then vacuous.
inline int forbidden_clause(const Filtration& f, AtomId q, AtomId r_atom, int r) {
  const int rq = f.atom(q).rank;
  const int rr = f.atom(r_atom).rank;
  if (!f.contains(q, r_atom) && rr >= r + rq) return 1;
  if (rq >= r + 1 && rr >= rq - 1 && !f.contains(f.ancestor(q, r + 1), r_atom)) return 2;
  return 0;
}

namespace detail {

template <typename Scalar>
void check_lower_triangular(const Filtration& f, const Mat<Scalar>& m, const MatrixMeasure<Scalar>& out,
                            int r, double tol, bool dual, WellLocalizedReport& rep) {
  const int d = out.dim();
  const auto y = indicator_images(f, m, d);
  double scale = 0;
  for (AtomId q = 0; q < f.num_atoms(); ++q)
    scale = std::max(scale, double(local_column_norms(f, out, f.root(), y[q]).maxCoeff()));
  rep.scale = std::max(rep.scale, scale);
  std::vector<Mat<Scalar>> deltas(f.num_atoms());
  for (AtomId q = 0; q < f.num_atoms(); ++q) {
    for (AtomId ra = 0; ra < f.num_atoms(); ++ra) {
      if (f.is_leaf(ra)) continue;
      const int clause = forbidden_clause(f, q, ra, r);
      if (clause == 0) continue;
      if (deltas[ra].size() == 0) deltas[ra] = weighted_delta_local(f, out, ra);
      const auto o = coefficient_offset(f, ra, d);
      const auto k = coefficient_count(f, ra, d);
      const Mat<Scalar> z = deltas[ra] * y[q].middleRows(o, k);
      const Vec<Scalar> norms = local_column_norms(f, out, ra, z);
      ++rep.pairs_checked;
      for (int i = 0; i < d; ++i) {
        const double res = static_cast<double>(norms(i));
        rep.max_residual = std::max(rep.max_residual, res);
        if (res > tol * scale && !rep.witness) {
          rep.pass = false;
          rep.witness = LocalizationWitness{dual, q, ra, i, clause, res};
        }
      }
    }
  }
}

}  // namespace detail

/// Exhaustive check that Δ^V_R T_W 1_Q e = 0 in L²(V) whenever a clause of
/// r-lower triangularity applies, and dually Δ^W_R T*_V 1_Q e = 0 in L²(W).
/// Residuals are compared against tol * max_{Q,e} ‖T 1_Q e‖.
template <typename Scalar>
WellLocalizedReport check_well_localized(const Filtration& f, const ShiftOperator<Scalar>& t,
                                         const MatrixMeasure<Scalar>& w,
                                         const MatrixMeasure<Scalar>& v, int r, double tol = 1e-9) {
  WellLocalizedReport rep;
  detail::check_lower_triangular(f, weighted_matrix(f, t, w), v, r, tol, false, rep);
  detail::check_lower_triangular(f, adjoint_weighted(f, t, v), w, r, tol, true, rep);
  return rep;
}

}  // namespace mwh
