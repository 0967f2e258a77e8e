#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mwh/filtration.hpp"

using namespace mwh;

namespace {

Filtration binary(int depth, double leaf_mass = 1.0) {
  std::vector<double> m(count_leaves(depth, Branching::uniform(2)), leaf_mass);
  return Filtration::build(depth, Branching::uniform(2), m);
}

}  // namespace

TEST(Filtration, DepthOneAggregation) {
  const std::vector<double> m{1, 1};
  auto f = Filtration::build(1, Branching::uniform(2), m);
  EXPECT_EQ(f.num_atoms(), 3u);
  EXPECT_DOUBLE_EQ(f.mass(f.root()), 2.0);
  EXPECT_DOUBLE_EQ(f.mass(1), 1.0);
  EXPECT_DOUBLE_EQ(f.mass(2), 1.0);
}

TEST(Filtration, DyadicLebesgueModel) {
  auto f = binary(2, 0.25);
  for (AtomId q = 0; q < f.num_atoms(); ++q)
    EXPECT_DOUBLE_EQ(f.mass(q), std::pow(2.0, -f.atom(q).rank));
}

TEST(Filtration, SingleChildAtomsStayDistinct) {
  // Root has two children; the first has one child, the second two.
  const std::vector<double> m{1, 1, 1};
  auto f = Filtration::build(2, Branching::per_atom({2, 1, 2}), m);
  const AtomId a = f.root() + 1;
  ASSERT_EQ(f.atom(a).children.size(), 1u);
  const AtomId c = f.atom(a).children[0];
  EXPECT_NE(a, c);
  EXPECT_EQ(f.atom(c).rank, 2);
  EXPECT_DOUBLE_EQ(f.mass(a), f.mass(c));
  EXPECT_EQ(f.ch_r(a, 1), std::vector<AtomId>{c});
}

TEST(Filtration, BuildErrors) {
  const std::vector<double> three{1, 1, 1};
  EXPECT_THROW(Filtration::build(1, Branching::uniform(2), three), std::invalid_argument);
  const std::vector<double> neg{1, -1};
  EXPECT_THROW(Filtration::build(1, Branching::uniform(2), neg), std::invalid_argument);
}

TEST(Filtration, ChR) {
  auto f = binary(2);
  EXPECT_EQ(f.ch_r(3, 0), std::vector<AtomId>{3});
  auto leaves = f.ch_r(f.root(), 2);
  EXPECT_EQ(leaves.size(), 4u);
  for (AtomId l : leaves) EXPECT_TRUE(f.is_leaf(l));
  EXPECT_THROW(f.ch_r(f.root(), 3), std::out_of_range);
}

TEST(Filtration, Ancestor) {
  auto f = binary(2);
  const AtomId leaf = f.leaf(3);
  EXPECT_EQ(f.ancestor(leaf, 0), leaf);
  EXPECT_EQ(f.ancestor(leaf, 2), f.root());
  EXPECT_THROW(f.ancestor(f.root(), 1), std::out_of_range);
  EXPECT_EQ(f.ancestor_or_root(f.root(), 4), f.root());
}

TEST(Filtration, TreeDistance) {
  auto f = binary(1);
  EXPECT_EQ(f.tree_distance(1, 1), 0);
  EXPECT_EQ(f.tree_distance(1, 2), 2);
  auto g = binary(2);
  EXPECT_EQ(g.tree_distance(g.leaf(0), g.root()), 2);
}

TEST(Filtration, Properties) {
  const std::vector<double> m{0.5, 0.25, 0.0, 1.5, 2.0, 0.75, 0.1, 0.2, 0.3};
  auto f = Filtration::build(2, Branching::uniform(3), m);
  for (AtomId q = 0; q < f.num_atoms(); ++q) {
    const int rem = f.depth() - f.atom(q).rank;
    for (int r = 0; r <= rem; ++r) {
      double s = 0;
      for (AtomId c : f.ch_r(q, r)) {
        s += f.mass(c);
        EXPECT_EQ(f.ancestor(c, r), q);
      }
      EXPECT_NEAR(s, f.mass(q), 1e-12 * std::max(1.0, f.mass(q)));
    }
    for (AtomId p = 0; p < f.num_atoms(); ++p) {
      const AtomId s = f.common_ancestor(q, p);
      const int rs = f.atom(s).rank;
      EXPECT_EQ(f.tree_distance(q, p), (f.atom(q).rank - rs) + (f.atom(p).rank - rs));
      for (AtomId x = 0; x < f.num_atoms(); ++x)
        EXPECT_LE(f.tree_distance(q, p), f.tree_distance(q, x) + f.tree_distance(x, p));
    }
  }
}

TEST(Filtration, BreadthFirstOrderAndBranchingRoundTrip) {
  const std::vector<double> m{1, 1, 1, 1, 1};
  auto f = Filtration::build(2, Branching::per_atom({2, 3, 2}), m);
  for (AtomId q = 1; q < f.num_atoms(); ++q) EXPECT_GE(f.atom(q).rank, f.atom(q - 1).rank);
  EXPECT_EQ(f.branching().counts(), (std::vector<int>{2, 3, 2}));
  auto g = Filtration::build(2, f.branching(), m);
  EXPECT_EQ(g.num_atoms(), f.num_atoms());
}
