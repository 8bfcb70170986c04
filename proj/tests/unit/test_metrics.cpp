//
// SPDX-License-Identifier: Apache-2.0
//

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "flexiflow/metrics.h"
#include "test_util.h"

namespace flexiflow {
namespace {

// Horn's closed-form quaternion superposition: the optimal rotation maximizes
// q^T N q, so the best residual follows from the top eigenvalue of N. Shares
// nothing with the SVD route.
double horn_rmsd(const Coords &a, const Coords &b) {
  Coords p = a, q = b;
  center_coords(p);
  center_coords(q);
  const Eigen::Matrix3d s = p.transpose() * q;
  const double sxx = s(0, 0), sxy = s(0, 1), sxz = s(0, 2);
  const double syx = s(1, 0), syy = s(1, 1), syz = s(1, 2);
  const double szx = s(2, 0), szy = s(2, 1), szz = s(2, 2);
  Eigen::Matrix4d n;
  n << sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,  //
      syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,   //
      szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,  //
      sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(n);
  const double lmax = es.eigenvalues().maxCoeff();
  const double e = p.squaredNorm() + q.squaredNorm() - 2.0 * lmax;
  return std::sqrt(std::max(0.0, e) / static_cast<double>(a.rows()));
}

Coords segment(double length) {
  Coords c = Coords::Zero(2, 3);
  c(1, 0) = length;
  return c;
}

TEST(KabschRmsd, RigidCopyIsZero) {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Coords a = testing::random_coords(rng, 9);
    Coords b = testing::rotate(a, testing::random_rotation(rng));
    b.rowwise() += Eigen::RowVector3d(rng.normal(), rng.normal(), 3.0);
    EXPECT_LT(kabsch_rmsd(a, b), 1e-10);
  }
}

TEST(KabschRmsd, MatchesQuaternionOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 3 + rng.index(10);
    const Coords a = testing::random_coords(rng, n);
    const Coords b = testing::random_coords(rng, n);
    EXPECT_NEAR(kabsch_rmsd(a, b), horn_rmsd(a, b), 1e-9);
  }
}

TEST(KabschRmsd, MirrorImageNeedsProperRotation) {
  Rng rng(5);
  const Coords a = testing::random_coords(rng, 6);
  Coords mirror = a;
  mirror.col(2) *= -1.0;
  const double r = kabsch_rmsd(a, mirror);
  EXPECT_GT(r, 1e-3);
  EXPECT_NEAR(r, horn_rmsd(a, mirror), 1e-9);
}

TEST(KabschRmsd, SegmentsClosedForm) {
  // Two-point sets align along their axis; each end is off by half the
  // length difference.
  EXPECT_NEAR(kabsch_rmsd(segment(1.0), segment(1.6)), 0.3, 1e-12);
}

TEST(KabschRmsd, RejectsBadShapes) {
  EXPECT_THROW(kabsch_rmsd(Coords(0, 3), Coords(0, 3)), std::invalid_argument);
  EXPECT_THROW(kabsch_rmsd(Coords::Zero(2, 3), Coords::Zero(3, 3)),
               std::invalid_argument);
}

TEST(ConformerDiversity, SegmentSet) {
  const std::vector<Coords> s = { segment(1.0), segment(1.2), segment(2.0) };
  // nearest neighbors: 0.1, 0.1, 0.4
  EXPECT_NEAR(conformer_diversity(s), 0.2, 1e-12);
}

TEST(ConformerDiversity, MatchesExhaustiveScan) {
  Rng rng(21);
  std::vector<Coords> s;
  for (int k = 0; k < 8; ++k)
    s.push_back(testing::random_coords(rng, 5));
  double expected = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < s.size(); ++j)
      if (i != j)
        best = std::min(best, horn_rmsd(s[i], s[j]));
    expected += best;
  }
  expected /= static_cast<double>(s.size());
  EXPECT_NEAR(conformer_diversity(s), expected, 1e-9);
}

TEST(ConformerDiversity, IdenticalSetIsZeroAndSingletonThrows) {
  const std::vector<Coords> same(4, segment(1.3));
  EXPECT_NEAR(conformer_diversity(same), 0.0, 1e-12);
  const std::vector<Coords> one(1, segment(1.0));
  EXPECT_THROW(conformer_diversity(one), std::invalid_argument);
}

TEST(CovAmr, HandBuiltSegments) {
  const std::vector<Coords> gen = { segment(1.0), segment(1.2), segment(2.0) };
  const std::vector<Coords> ref = { segment(1.1), segment(3.0) };
  const std::vector<double> deltas = { 0.125, 0.5, 0.625 };
  const auto r = cov_amr(gen, ref, deltas);
  // RMSD table (gen x ref): [0.05 1.0; 0.05 0.9; 0.45 0.5]
  EXPECT_NEAR(r.amr_r, (0.05 + 0.5) / 2.0, 1e-12);
  EXPECT_NEAR(r.amr_p, (0.05 + 0.05 + 0.45) / 3.0, 1e-12);
  EXPECT_EQ(r.cov_r, (std::vector<double>{ 0.5, 0.5, 1.0 }));
  EXPECT_NEAR(r.cov_p[0], 2.0 / 3.0, 1e-15);
  EXPECT_EQ(r.cov_p[1], 1.0);
  EXPECT_EQ(r.cov_p[2], 1.0);
}

TEST(CovAmr, CoverageIsMonotoneAndGridIsStandard) {
  const auto grid = default_coverage_grid();
  ASSERT_EQ(grid.size(), 21u);
  EXPECT_EQ(grid.front(), 0.0);
  EXPECT_EQ(grid.back(), 2.5);
  Rng rng(4);
  std::vector<Coords> gen, ref;
  for (int k = 0; k < 6; ++k) {
    gen.push_back(testing::random_coords(rng, 6, 0.8));
    ref.push_back(testing::random_coords(rng, 6, 0.8));
  }
  const auto r = cov_amr(gen, ref, grid);
  EXPECT_EQ(r.cov_r.front(), 0.0);
  for (std::size_t k = 1; k < grid.size(); ++k) {
    EXPECT_GE(r.cov_r[k], r.cov_r[k - 1]);
    EXPECT_GE(r.cov_p[k], r.cov_p[k - 1]);
  }
}

// ---------------------------------------------------------------------------

// QM9 indices: H=0 C=1 N=2 O=3 F=4; charges -1=0, 0=1, +1=2.
MolecularGraph with_hydrogens(std::vector<int> heavy,
                              std::vector<std::array<int, 3>> bonds,
                              std::vector<int> n_h,
                              std::vector<int> charges = {}) {
  MolecularGraph g;
  const int k = static_cast<int>(heavy.size());
  int n = k;
  for (int h: n_h)
    n += h;
  g.atoms = heavy;
  g.atoms.resize(n, 0);
  g.charges.assign(n, 1);
  for (std::size_t i = 0; i < charges.size(); ++i)
    g.charges[i] = charges[i];
  g.bonds = BondMatrix::Zero(n, n);
  for (auto [i, j, t]: bonds)
    g.set_bond(i, j, static_cast<BondType>(t));
  int next = k;
  for (int i = 0; i < k; ++i)
    for (int h = 0; h < n_h[i]; ++h)
      g.set_bond(i, next++, BondType::kSingle);
  g.conformers.push_back(Coords::Zero(n, 3));
  return g;
}

TEST(Stability, NeutralAndChargedAtoms) {
  const auto vocab = Vocabularies::qm9();
  const auto table = ValenceTable::qm9();
  const auto methane = with_hydrogens({ 1 }, {}, { 4 });
  EXPECT_TRUE(is_valid(methane, vocab, table));
  const auto ammonium = with_hydrogens({ 2 }, {}, { 4 }, { 2 });
  EXPECT_TRUE(is_valid(ammonium, vocab, table));
  const auto bad_ammonium = with_hydrogens({ 2 }, {}, { 4 });
  EXPECT_FALSE(is_valid(bad_ammonium, vocab, table));
  const auto hydroxide = with_hydrogens({ 3 }, {}, { 1 }, { 0 });
  EXPECT_TRUE(is_valid(hydroxide, vocab, table));
  const auto carbocation = with_hydrogens({ 1 }, {}, { 3 }, { 2 });
  EXPECT_FALSE(is_valid(carbocation, vocab, table));
}

TEST(Stability, AromaticCountsOneAndAHalfRoundedHalfUp) {
  const auto vocab = Vocabularies::qm9();
  const auto table = ValenceTable::qm9();
  // Carbon with two aromatic bonds and one H: 1.5 + 1.5 + 1 = 4.
  auto g = with_hydrogens({ 1, 1, 1 }, { { 0, 1, 4 }, { 1, 2, 4 } },
                          { 1, 0, 0 });
  EXPECT_DOUBLE_EQ(valence_sum(g, 0), 2.5);
  EXPECT_DOUBLE_EQ(valence_sum(g, 1), 3.0);
  // Three aromatic bonds: 4.5 rounds up to 5, unstable for carbon.
  auto h = with_hydrogens({ 1, 1, 1, 1 }, { { 0, 1, 4 }, { 0, 2, 4 }, { 0, 3, 4 } },
                          { 0, 0, 0, 0 });
  EXPECT_FALSE(atom_stability(h, vocab, table)[0]);
  // 2.5 rounds to 3: stable for neutral nitrogen.
  auto n = with_hydrogens({ 2, 1, 1 }, { { 0, 1, 4 }, { 0, 2, 1 } }, { 0, 0, 0 });
  EXPECT_TRUE(atom_stability(n, vocab, table)[0]);
}

TEST(Fragments, CountsComponents) {
  auto g = with_hydrogens({ 1, 1 }, {}, { 4, 4 });
  EXPECT_EQ(count_fragments(g), 2);
  EXPECT_FALSE(is_connected(g));
  EXPECT_FALSE(is_valid(g, Vocabularies::qm9(), ValenceTable::qm9()));
  g.set_bond(0, 1, BondType::kSingle);
  EXPECT_EQ(count_fragments(g), 1);
}

TEST(GraphMetrics, CountsValidityUniquenessNovelty) {
  const auto vocab = Vocabularies::qm9();
  const auto table = ValenceTable::qm9();
  const auto methane = with_hydrogens({ 1 }, {}, { 4 });
  const auto water = with_hydrogens({ 3 }, {}, { 2 });
  const auto two_methanes = with_hydrogens({ 1, 1 }, {}, { 4, 4 });
  const auto ch5 = with_hydrogens({ 1 }, {}, { 5 });

  const std::vector<MolecularGraph> samples = { methane, methane, water,
                                                two_methanes, ch5 };
  const std::set<std::string> train = { canonical_key(methane) };
  const auto m = graph_metrics(samples, train, table, vocab);
  EXPECT_EQ(m.n_samples, 5);
  EXPECT_EQ(m.n_valid, 3);
  EXPECT_EQ(m.n_unique, 2);
  EXPECT_DOUBLE_EQ(m.validity, 0.6);
  EXPECT_DOUBLE_EQ(m.uniqueness, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.novelty, 0.5);
  // Every atom is stable except the pentavalent carbon.
  EXPECT_DOUBLE_EQ(m.atom_stability, (5 + 5 + 3 + 10 + 5.0) / 29.0);
  EXPECT_DOUBLE_EQ(m.mol_stability, 0.8);
}

TEST(GraphMetrics, EmptyInput) {
  const auto m = graph_metrics({}, {}, ValenceTable::qm9(), Vocabularies::qm9());
  EXPECT_EQ(m.n_samples, 0);
  EXPECT_EQ(m.validity, 0.0);
}

TEST(MetricsReport, JsonHasOnlyComputedParts) {
  MetricsReport r;
  r.d_s = 0.25;
  const auto j = r.to_json();
  EXPECT_TRUE(j.contains("d_s"));
  EXPECT_FALSE(j.contains("graphs"));
  EXPECT_FALSE(j.contains("coverage"));
}

TEST(ValenceTable, GeomExtendsQm9) {
  const auto t = ValenceTable::geom();
  EXPECT_TRUE(t.allows("S", 0, 6));
  EXPECT_TRUE(t.allows("N", 1, 4));
  EXPECT_FALSE(t.allows("Xe", 0, 0));
  EXPECT_EQ(t.elements().size(), 12u);
}

}  // namespace
}  // namespace flexiflow
