#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <variant>
#include <vector>

namespace mwh {

/// Index of an atom in breadth-first order (root is 0).
using AtomId = std::size_t;

inline constexpr AtomId kNoAtom = std::numeric_limits<AtomId>::max();

/// A node of the filtration tree. Atoms are identified by (path, rank), never
/// by their leaf sets, so an atom with a single child and that child stay
/// distinct even though they coincide as sets.
struct Atom {
  AtomId id = 0;
  int rank = 0;
  std::vector<int> path;  // child indices from the root
  double sigma_mass = 0.0;
  AtomId parent = kNoAtom;
  std::vector<AtomId> children;
  // Leaves of a subtree are contiguous in leaf order.
  std::size_t leaf_begin = 0;
  std::size_t leaf_end = 0;

  std::size_t num_leaves() const { return leaf_end - leaf_begin; }
};

/// Child counts for the non-leaf atoms: either one count for every atom, or
/// one count per non-leaf atom in breadth-first order.
class Branching {
 public:
  static Branching uniform(int count) { return Branching(count); }
  static Branching per_atom(std::vector<int> counts) { return Branching(std::move(counts)); }

  bool is_uniform() const { return std::holds_alternative<int>(spec_); }
  int uniform_count() const { return std::get<int>(spec_); }
  const std::vector<int>& counts() const { return std::get<std::vector<int>>(spec_); }

 private:
  explicit Branching(int count) : spec_(count) {}
  explicit Branching(std::vector<int> counts) : spec_(std::move(counts)) {}
  std::variant<int, std::vector<int>> spec_;
};

/// Number of leaves produced by `branching` over `depth` generations.
std::size_t count_leaves(int depth, const Branching& branching);

/// A finite atomic filtration: a rooted tree whose generations are the atom
/// collections of each rank. All leaves sit at rank `depth`; the root has rank 0.
/// Immutable after construction.
class Filtration {
 public:
  static Filtration build(int depth, const Branching& branching,
                          std::span<const double> leaf_masses);

  int depth() const { return depth_; }
  std::size_t num_atoms() const { return atoms_.size(); }
  std::size_t num_leaves() const { return leaves_.size(); }
  AtomId root() const { return 0; }

  const Atom& atom(AtomId id) const { return atoms_.at(id); }
  const std::vector<Atom>& atoms() const { return atoms_; }
  std::span<const AtomId> generation(int rank) const;
  std::span<const AtomId> leaves() const { return leaves_; }
  AtomId leaf(std::size_t leaf_index) const { return leaves_.at(leaf_index); }

  bool is_leaf(AtomId id) const { return atom(id).rank == depth_; }
  double mass(AtomId id) const { return atom(id).sigma_mass; }
  std::vector<double> leaf_masses() const;

  /// Descendants of `q` exactly `r` generations below it. Ch^0(q) = {q}.
  std::vector<AtomId> ch_r(AtomId q, int r) const;

  /// Order-k ancestor. Throws std::out_of_range when k exceeds the rank.
  AtomId ancestor(AtomId q, int k) const;

  /// Order-k ancestor, clamped at the root.
  AtomId ancestor_or_root(AtomId q, int k) const;

  /// R ⊂ Q in the sense of atoms: set inclusion and rk R >= rk Q.
  bool contains(AtomId q, AtomId r) const;

  /// Least common ancestor.
  AtomId common_ancestor(AtomId a, AtomId b) const;

  /// Number of edges on the path between the two atoms.
  int tree_distance(AtomId a, AtomId b) const;

  /// Atom at `rank` that contains leaf `leaf_index`.
  AtomId atom_containing_leaf(std::size_t leaf_index, int rank) const;

  /// Reconstruct the branching spec (per-atom form).
  Branching branching() const;

 private:
  int depth_ = 0;
  std::vector<Atom> atoms_;
  std::vector<std::size_t> generation_offsets_;  // depth + 2 entries
  std::vector<AtomId> leaves_;
  std::vector<AtomId> atom_order_;  // identity; kept for generation spans
};

}  // namespace mwh
