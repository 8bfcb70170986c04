//
// SPDX-License-Identifier: Apache-2.0
//

#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "flexiflow/data_io.h"
#include "flexiflow/geometry.h"
#include "test_util.h"

namespace flexiflow {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string &name) {
  const auto p = fs::temp_directory_path()
                 / ("flexiflow_test_" + name + "_"
                    + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
  fs::remove_all(p);
  return p;
}

std::vector<std::uint8_t> slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  return { std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>() };
}

TEST(SelectRepresentative, TrivialCases) {
  Rng rng(1);
  const Coords c = testing::random_coords(rng, 4);
  EXPECT_EQ(select_representative(std::vector<Coords>{ c }), 0);
  EXPECT_EQ(select_representative(std::vector<Coords>{ c, Coords(-c) }), 0);
  EXPECT_THROW(select_representative(std::vector<Coords>{}),
               std::invalid_argument);
}

TEST(SelectRepresentative, MatchesExhaustiveScan) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Coords> s;
    for (int k = 0; k < 7; ++k)
      s.push_back(testing::random_coords(rng, 5));
    int expected = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 7; ++k) {
      double d = 0.0;
      for (int i = 0; i < 5; ++i)
        for (int a = 0; a < 3; ++a) {
          double mean = 0.0;
          for (int l = 0; l < 7; ++l)
            mean += s[l](i, a) / 7.0;
          d += (s[k](i, a) - mean) * (s[k](i, a) - mean);
        }
      if (d < best) {
        best = d;
        expected = k;
      }
    }
    EXPECT_EQ(select_representative(s), expected);
  }
}

TEST(SelectRepresentative, InvariantToCommonRotation) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Coords> s, rotated;
    const auto r = testing::random_rotation(rng);
    for (int k = 0; k < 6; ++k) {
      s.push_back(testing::random_coords(rng, 4));
      rotated.push_back(testing::rotate(s.back(), r));
    }
    EXPECT_EQ(select_representative(s), select_representative(rotated));
  }
}

TEST(TrainingTuples, OnePerConformerSharingTheGraph) {
  auto g = testing::chain_graph({ 1, 3 });
  auto single = build_training_tuples(g);
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(&single[0].x(), &single[0].y());

  for (int k = 1; k < 23; ++k)
    g.conformers.push_back(g.conformers[0] * (1.0 + k));
  g.representative = 4;
  const auto tuples = build_training_tuples(g);
  ASSERT_EQ(tuples.size(), 23u);
  for (int k = 0; k < 23; ++k) {
    EXPECT_EQ(&tuples[k].x(), &g.conformers[4]);
    EXPECT_EQ(&tuples[k].y(), &g.conformers[k]);
    EXPECT_EQ(&tuples[k].bonds(), &g.bonds);
  }
  EXPECT_EQ(build_training_tuples(g, false).size(), 22u);
}

TEST(TrainingTuples, DatasetUnionSizes) {
  Dataset ds;
  for (int m: { 2, 3, 5 }) {
    auto g = testing::chain_graph({ 1, 1 });
    g.conformers.resize(m, g.conformers[0]);
    ds.molecules.push_back(g);
  }
  EXPECT_EQ(build_training_tuples(ds).size(), 10u);
  EXPECT_EQ(ds.num_tuples(), 10u);
}

TEST(Preprocess, CentersScalesAndDropsFragments) {
  const auto raw = generate_toy_molecules(5, 6);
  auto input = raw;
  for (auto &g: input)
    for (auto &c: g.conformers)
      c.rowwise() += Eigen::RowVector3d(3.0, -1.0, 7.0);
  auto broken = input[0];
  broken.bonds.setZero();
  input.push_back(broken);

  PreprocessReport report;
  const auto ds = preprocess(input, Vocabularies::qm9(), ValenceTable::qm9(),
                             std::nullopt, &report);
  EXPECT_EQ(report.kept, 6);
  ASSERT_EQ(report.dropped.size(), 1u);
  EXPECT_NE(report.dropped[0].find("fragmented"), std::string::npos);

  for (const auto &g: ds.molecules) {
    EXPECT_TRUE(validate_graph(g, ds.vocab).empty());
    for (const auto &c: g.conformers)
      EXPECT_LT(centroid(c).norm(), 1e-12);
    EXPECT_EQ(g.representative, select_representative(g.conformers));
  }
  EXPECT_NEAR(pooled_coordinate_std(ds.molecules), 1.0, 1e-6);
  EXPECT_GT(ds.scale, 0.3);

  // A fixed scale is applied as given.
  const auto fixed = preprocess(raw, Vocabularies::qm9(), ValenceTable::qm9(), 2.0);
  EXPECT_EQ(fixed.scale, 2.0);
}

TEST(Preprocess, DropsUnstableMolecules) {
  auto g = testing::chain_graph({ 1, 1 });  // C-C without hydrogens
  PreprocessReport report;
  const auto ds = preprocess({ g }, Vocabularies::qm9(), ValenceTable::qm9(),
                             std::nullopt, &report);
  EXPECT_TRUE(ds.molecules.empty());
  ASSERT_EQ(report.dropped.size(), 1u);
  EXPECT_NE(report.dropped[0].find("unstable"), std::string::npos);
}

TEST(ToyDataset, ValenceCorrectAndDistinct) {
  const auto ds = generate_toy_dataset(42, 20);
  ASSERT_EQ(ds.molecules.size(), 20u);
  std::set<std::string> keys;
  for (const auto &g: ds.molecules)
    keys.insert(canonical_key(g));
  EXPECT_EQ(keys.size(), 20u);
  const auto m = graph_metrics(ds.molecules, {}, ValenceTable::qm9(), ds.vocab);
  EXPECT_EQ(m.atom_stability, 1.0);
  EXPECT_EQ(m.validity, 1.0);
  for (const auto &g: ds.molecules)
    EXPECT_EQ(g.num_conformers(), 5);
}

TEST(ToyDataset, DeterministicPerSeed) {
  const auto a = generate_toy_dataset(9, 5);
  const auto b = generate_toy_dataset(9, 5);
  const auto c = generate_toy_dataset(10, 5);
  ASSERT_EQ(a.molecules.size(), b.molecules.size());
  for (std::size_t k = 0; k < a.molecules.size(); ++k)
    EXPECT_EQ(encode_record(a.molecules[k]), encode_record(b.molecules[k]));
  EXPECT_EQ(a.scale, b.scale);
  EXPECT_NE(encode_record(a.molecules[0]), encode_record(c.molecules[0]));
}

TEST(ToyDataset, TorsionsGiveDiversityAndBondsStayIdeal) {
  const auto vocab = Vocabularies::qm9();
  const auto mols = generate_toy_molecules(17, 25);
  int rotatable = 0;
  for (const auto &g: mols) {
    if (!rotatable_bonds(g).empty()) {
      ++rotatable;
      EXPECT_GT(conformer_diversity(g.conformers), 1e-3);
    }
    for (const auto &c: g.conformers)
      for (int i = 0; i < g.num_atoms(); ++i)
        for (int j = i + 1; j < g.num_atoms(); ++j)
          if (g.bonds(i, j) != 0) {
            const double ideal = ideal_bond_length(
                vocab.atom_types[g.atoms[i]], vocab.atom_types[g.atoms[j]],
                g.bond(i, j));
            EXPECT_NEAR((c.row(i) - c.row(j)).norm(), ideal, 0.1 * ideal);
          }
  }
  EXPECT_GT(rotatable, 5);
}

TEST(DatasetFiles, RoundTripIsByteIdentical) {
  const auto ds = generate_toy_dataset(3, 4);
  const auto a = temp_dir("rt_a"), b = temp_dir("rt_b");
  write_dataset(a, ds);
  const auto back = read_dataset(a);
  write_dataset(b, back);
  EXPECT_EQ(back.scale, ds.scale);
  EXPECT_EQ(back.vocab, ds.vocab);
  int files = 0;
  for (const auto &e: fs::directory_iterator(a)) {
    EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename()));
    if (e.path().extension() == ".ffr")
      ++files;
  }
  EXPECT_EQ(files, 4);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(DatasetFiles, DetectsCorruptionAndVersionMismatch) {
  const auto ds = generate_toy_dataset(3, 2);
  const auto dir = temp_dir("corrupt");
  write_dataset(dir, ds);
  {
    std::fstream f(dir / "mol_000001.ffr",
                   std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(30);
    f.put('\x7f');
  }
  EXPECT_THROW(read_dataset(dir), DatasetError);

  write_dataset(dir, ds);
  std::ifstream in(dir / "index.json");
  auto index = nlohmann::json::parse(in);
  in.close();
  index["format_version"] = 99;
  std::ofstream(dir / "index.json") << index.dump();
  EXPECT_THROW(read_dataset(dir), DatasetError);
  fs::remove_all(dir);
}

TEST(Records, RejectBadBytes) {
  const auto g = generate_toy_molecules(1, 1)[0];
  auto bytes = encode_record(g);
  EXPECT_EQ(bytes.size(), 20 + 2 * g.num_atoms()
                              + g.num_atoms() * g.num_atoms()
                              + 5 * g.num_atoms() * 12);
  auto short_bytes = bytes;
  short_bytes.pop_back();
  EXPECT_THROW(decode_record(short_bytes), DatasetError);
  bytes[4] = 2;
  EXPECT_THROW(decode_record(bytes), DatasetError);
}

TEST(Sdf, GroupsConsecutiveConformers) {
  std::vector<std::string> warnings;
  const auto mols = read_sdf(fs::path(FLEXIFLOW_TEST_DATA_DIR) / "three_molecules.sdf",
                             Vocabularies::qm9(), &warnings);
  EXPECT_TRUE(warnings.empty());
  ASSERT_EQ(mols.size(), 3u);
  for (const auto &g: mols) {
    EXPECT_EQ(g.num_conformers(), 2);
    EXPECT_TRUE(validate_graph(g, Vocabularies::qm9()).empty());
  }
  EXPECT_EQ(mols[0].num_atoms(), 3);
  EXPECT_EQ(mols[2].charges[0], 2);  // N+ from M  CHG
  EXPECT_NEAR(mols[0].conformers[1](1, 0), 0.95, 1e-12);
}

TEST(Sdf, WriteReadRoundTripWithCharges) {
  auto g = generate_toy_molecules(4, 1)[0];
  g.charges[0] = 0;
  std::stringstream ss;
  write_sdf_record(ss, g, g.conformers[0], Vocabularies::qm9(), "mol");
  write_sdf_record(ss, g, g.conformers[1], Vocabularies::qm9(), "mol");
  const auto back = read_sdf(ss, Vocabularies::qm9());
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].atoms, g.atoms);
  EXPECT_EQ(back[0].charges, g.charges);
  EXPECT_EQ(back[0].bonds, g.bonds);
  EXPECT_EQ(back[0].num_conformers(), 2);
  EXPECT_LT((back[0].conformers[1] - g.conformers[1]).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Sdf, SkipsUnknownElements) {
  std::stringstream ss;
  ss << "x\n\n\n  1  0  0  0  0  0  0  0  0  0999 V2000\n"
     << "    0.0000    0.0000    0.0000 Xe  0  0  0  0  0  0  0  0  0  0  0  0\n"
     << "M  END\n$$$$\n";
  std::vector<std::string> warnings;
  EXPECT_TRUE(read_sdf(ss, Vocabularies::qm9(), &warnings).empty());
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("Xe"), std::string::npos);
}

TEST(Xyz, WritesHeaderAndRows) {
  const auto g = testing::chain_graph({ 1, 3 });
  std::stringstream ss;
  write_xyz_record(ss, g, g.conformers[0], Vocabularies::qm9(), "hello");
  std::string line;
  std::getline(ss, line);
  EXPECT_EQ(line, "2");
  std::getline(ss, line);
  EXPECT_EQ(line, "hello");
  std::getline(ss, line);
  EXPECT_EQ(line.substr(0, 2), "C ");
}

}  // namespace
}  // namespace flexiflow
