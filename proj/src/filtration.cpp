#include "mwh/filtration.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace mwh {

namespace {

void check_count(int count) {
  if (count < 1) throw std::invalid_argument("branching counts must be >= 1");
}

}  // namespace

std::size_t count_leaves(int depth, const Branching& branching) {
  if (depth < 0) throw std::invalid_argument("depth must be >= 0");
  if (branching.is_uniform()) {
    check_count(branching.uniform_count());
    std::size_t n = 1;
    for (int i = 0; i < depth; ++i) n *= static_cast<std::size_t>(branching.uniform_count());
    return n;
  }
  const auto& counts = branching.counts();
  std::size_t width = 1;
  std::size_t next = 0;
  for (int rank = 0; rank < depth; ++rank) {
    std::size_t children = 0;
    for (std::size_t i = 0; i < width; ++i) {
      if (next >= counts.size())
        throw std::invalid_argument("per-atom branching list is too short");
      check_count(counts[next]);
      children += static_cast<std::size_t>(counts[next++]);
    }
    width = children;
  }
  if (next != counts.size()) throw std::invalid_argument("per-atom branching list is too long");
  return width;
}

Filtration Filtration::build(int depth, const Branching& branching,
                             std::span<const double> leaf_masses) {
  const std::size_t n_leaves = count_leaves(depth, branching);
  if (leaf_masses.size() != n_leaves)
    throw std::invalid_argument("expected " + std::to_string(n_leaves) + " leaf masses, got " +
                                std::to_string(leaf_masses.size()));
  for (double m : leaf_masses)
    if (!(m >= 0.0)) throw std::invalid_argument("leaf masses must be nonnegative");

  Filtration f;
  f.depth_ = depth;
  f.atoms_.push_back(Atom{});
  f.generation_offsets_.push_back(0);
  std::size_t next_count = 0;
  for (int rank = 0; rank < depth; ++rank) {
    const std::size_t begin = f.generation_offsets_.back();
    const std::size_t end = f.atoms_.size();
    f.generation_offsets_.push_back(end);
    for (std::size_t id = begin; id < end; ++id) {
      const int count =
          branching.is_uniform() ? branching.uniform_count() : branching.counts()[next_count++];
      for (int c = 0; c < count; ++c) {
        Atom child;
        child.id = f.atoms_.size();
        child.rank = rank + 1;
        child.path = f.atoms_[id].path;
        child.path.push_back(c);
        child.parent = id;
        f.atoms_[id].children.push_back(child.id);
        f.atoms_.push_back(std::move(child));
      }
    }
  }
  f.generation_offsets_.push_back(f.atoms_.size());

  const std::size_t leaf_offset = f.generation_offsets_[static_cast<std::size_t>(depth)];
  for (std::size_t id = leaf_offset; id < f.atoms_.size(); ++id) {
    const std::size_t li = id - leaf_offset;
    f.leaves_.push_back(id);
    f.atoms_[id].leaf_begin = li;
    f.atoms_[id].leaf_end = li + 1;
    f.atoms_[id].sigma_mass = leaf_masses[li];
  }
  // Bottom-up aggregation; BFS order makes leaf ranges contiguous.
  for (std::size_t id = leaf_offset; id-- > 0;) {
    Atom& a = f.atoms_[id];
    a.leaf_begin = f.atoms_[a.children.front()].leaf_begin;
    a.leaf_end = f.atoms_[a.children.back()].leaf_end;
    a.sigma_mass = 0.0;
    for (AtomId c : a.children) a.sigma_mass += f.atoms_[c].sigma_mass;
  }
  f.atom_order_.resize(f.atoms_.size());
  std::iota(f.atom_order_.begin(), f.atom_order_.end(), AtomId{0});
  return f;
}

std::span<const AtomId> Filtration::generation(int rank) const {
  if (rank < 0 || rank > depth_) throw std::out_of_range("rank outside the filtration");
  const auto b = generation_offsets_[static_cast<std::size_t>(rank)];
  const auto e = generation_offsets_[static_cast<std::size_t>(rank) + 1];
  return std::span<const AtomId>(atom_order_).subspan(b, e - b);
}

std::vector<double> Filtration::leaf_masses() const {
  std::vector<double> out;
  out.reserve(leaves_.size());
  for (AtomId l : leaves_) out.push_back(atoms_[l].sigma_mass);
  return out;
}

std::vector<AtomId> Filtration::ch_r(AtomId q, int r) const {
  if (r < 0) throw std::invalid_argument("ch_r needs r >= 0");
  if (atom(q).rank + r > depth_) throw std::out_of_range("ch_r: r exceeds the remaining depth");
  std::vector<AtomId> level{q};
  for (int i = 0; i < r; ++i) {
    std::vector<AtomId> next;
    for (AtomId a : level)
      next.insert(next.end(), atoms_[a].children.begin(), atoms_[a].children.end());
    level = std::move(next);
  }
  return level;
}

AtomId Filtration::ancestor(AtomId q, int k) const {
  if (k < 0) throw std::invalid_argument("ancestor order must be >= 0");
  if (k > atom(q).rank) throw std::out_of_range("ancestor: no atom above the root");
  for (int i = 0; i < k; ++i) q = atoms_[q].parent;
  return q;
}

AtomId Filtration::ancestor_or_root(AtomId q, int k) const {
  return ancestor(q, std::min(k, atom(q).rank));
}

bool Filtration::contains(AtomId q, AtomId r) const {
  const Atom& a = atom(q);
  const Atom& b = atom(r);
  if (b.rank < a.rank) return false;
  return ancestor(r, b.rank - a.rank) == q;
}

AtomId Filtration::common_ancestor(AtomId a, AtomId b) const {
  int ra = atom(a).rank;
  int rb = atom(b).rank;
  while (ra > rb) { a = atoms_[a].parent; --ra; }
  while (rb > ra) { b = atoms_[b].parent; --rb; }
  while (a != b) { a = atoms_[a].parent; b = atoms_[b].parent; }
  return a;
}

int Filtration::tree_distance(AtomId a, AtomId b) const {
  const AtomId s = common_ancestor(a, b);
  return (atom(a).rank - atom(s).rank) + (atom(b).rank - atom(s).rank);
}

AtomId Filtration::atom_containing_leaf(std::size_t leaf_index, int rank) const {
  return ancestor(leaf(leaf_index), depth_ - rank);
}

Branching Filtration::branching() const {
  std::vector<int> counts;
  for (const Atom& a : atoms_)
    if (a.rank < depth_) counts.push_back(static_cast<int>(a.children.size()));
  return Branching::per_atom(std::move(counts));
}

}  // namespace mwh
