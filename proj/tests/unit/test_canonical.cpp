//
// SPDX-License-Identifier: Apache-2.0
//

#include <algorithm>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "flexiflow/metrics.h"
#include "test_util.h"

namespace flexiflow {
namespace {

MolecularGraph random_graph(Rng &rng, int n, int n_atom_types,
                            double bond_prob) {
  MolecularGraph g;
  g.atoms.resize(n);
  g.charges.resize(n);
  for (int i = 0; i < n; ++i) {
    g.atoms[i] = rng.index(n_atom_types);
    g.charges[i] = rng.uniform() < 0.2 ? rng.index(3) : 1;
  }
  g.bonds = BondMatrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rng.uniform() < bond_prob)
        g.set_bond(i, j, static_cast<BondType>(1 + rng.index(4)));
  g.conformers.push_back(Coords::Zero(n, 3));
  return g;
}

MolecularGraph uniform_graph(int n, const std::vector<std::pair<int, int>> &edges) {
  MolecularGraph g;
  g.atoms.assign(n, 1);
  g.charges.assign(n, 1);
  g.bonds = BondMatrix::Zero(n, n);
  for (auto [i, j]: edges)
    g.set_bond(i, j, BondType::kSingle);
  g.conformers.push_back(Coords::Zero(n, 3));
  return g;
}

/// Minimum serialization over every permutation; a complete invariant.
std::vector<int> brute_force_form(const MolecularGraph &g) {
  const int n = g.num_atoms();
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best;
  do {
    std::vector<int> s;
    for (int v: perm)
      s.push_back(g.atoms[v]);
    for (int v: perm)
      s.push_back(g.charges[v]);
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b)
        s.push_back(g.bonds(perm[a], perm[b]));
    if (best.empty() || s < best)
      best = s;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

TEST(CanonicalKey, InvariantUnderAllPermutations) {
  Rng rng(8);
  for (int trial = 0; trial < 3; ++trial) {
    const auto g = random_graph(rng, 6, 2, 0.4);
    const auto key = canonical_key(g);
    std::vector<int> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    int count = 0;
    do {
      EXPECT_EQ(canonical_key(permute_atoms(g, perm)), key);
      ++count;
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_EQ(count, 720);
  }
}

TEST(CanonicalKey, SymmetricGraphs) {
  // Cycles, the cube and K_{3,3} exercise twin pruning and deep
  // individualization where refinement alone cannot split anything.
  std::vector<MolecularGraph> graphs;
  graphs.push_back(uniform_graph(6, { { 0, 1 }, { 1, 2 }, { 2, 3 }, { 3, 4 }, { 4, 5 }, { 5, 0 } }));
  graphs.push_back(uniform_graph(6, { { 0, 1 }, { 1, 2 }, { 2, 0 }, { 3, 4 }, { 4, 5 }, { 5, 3 } }));
  graphs.push_back(uniform_graph(6, { { 0, 3 }, { 0, 4 }, { 0, 5 }, { 1, 3 }, { 1, 4 }, { 1, 5 }, { 2, 3 }, { 2, 4 }, { 2, 5 } }));
  graphs.push_back(uniform_graph(8, { { 0, 1 }, { 1, 2 }, { 2, 3 }, { 3, 0 }, { 4, 5 }, { 5, 6 }, { 6, 7 }, { 7, 4 }, { 0, 4 }, { 1, 5 }, { 2, 6 }, { 3, 7 } }));
  graphs.push_back(uniform_graph(7, {}));

  // 2C3 and C6 share the color refinement result but are not isomorphic.
  EXPECT_NE(canonical_key(graphs[0]), canonical_key(graphs[1]));

  Rng rng(31);
  for (const auto &g: graphs) {
    const auto key = canonical_key(g);
    std::vector<int> perm(g.num_atoms());
    std::iota(perm.begin(), perm.end(), 0);
    for (int trial = 0; trial < 40; ++trial) {
      std::shuffle(perm.begin(), perm.end(), rng.engine());
      EXPECT_EQ(canonical_key(permute_atoms(g, perm)), key);
    }
  }
}

TEST(CanonicalKey, DistinguishesExactlyTheIsomorphismClasses) {
  // Every 4-atom graph over two elements with bonds {none, single, double};
  // brute-force minimal forms define the classes.
  std::set<std::vector<int>> classes;
  std::set<std::string> keys;
  for (int atoms = 0; atoms < 16; ++atoms) {
    for (int code = 0; code < 729; ++code) {
      MolecularGraph g;
      for (int i = 0; i < 4; ++i)
        g.atoms.push_back(1 + ((atoms >> i) & 1));
      g.charges.assign(4, 1);
      g.bonds = BondMatrix::Zero(4, 4);
      int c = code;
      for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) {
          g.set_bond(i, j, static_cast<BondType>(c % 3));
          c /= 3;
        }
      classes.insert(brute_force_form(g));
      keys.insert(canonical_key(g));
    }
  }
  EXPECT_EQ(keys.size(), classes.size());
}

TEST(CanonicalKey, AgreesWithBruteForceOnRandomGraphs) {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + rng.index(5);
    const auto a = random_graph(rng, n, 2, 0.5);
    auto b = a;
    // Usually a near miss of a: one bond flipped.
    if (rng.uniform() < 0.7) {
      const int i = rng.index(n);
      int j = rng.index(n);
      if (i == j)
        j = (i + 1) % n;
      b.set_bond(i, j, b.bonds(i, j) == 0 ? BondType::kSingle : BondType::kNone);
    }
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    b = permute_atoms(b, perm);
    EXPECT_EQ(canonical_key(a) == canonical_key(b),
              brute_force_form(a) == brute_force_form(b));
  }
}

TEST(CanonicalOrder, IsAPermutation) {
  Rng rng(2);
  const auto g = random_graph(rng, 9, 3, 0.3);
  auto order = canonical_order(g);
  std::sort(order.begin(), order.end());
  for (int i = 0; i < 9; ++i)
    EXPECT_EQ(order[i], i);
  EXPECT_TRUE(canonical_order(MolecularGraph{}).empty());
}

TEST(PermuteAtoms, MovesConformerRows) {
  auto g = testing::chain_graph({ 1, 2, 3 });
  const auto p = permute_atoms(g, { 2, 0, 1 });
  EXPECT_EQ(p.atoms, (std::vector<int>{ 3, 1, 2 }));
  EXPECT_EQ(p.conformers[0](0, 0), 3.0);
  EXPECT_EQ(p.bond(0, 2), BondType::kSingle);
  EXPECT_EQ(p.bond(0, 1), BondType::kNone);
}

}  // namespace
}  // namespace flexiflow
