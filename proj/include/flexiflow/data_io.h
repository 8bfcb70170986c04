//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef FLEXIFLOW_DATA_IO_H_
#define FLEXIFLOW_DATA_IO_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "flexiflow/core_types.h"
#include "flexiflow/metrics.h"

namespace flexiflow {

class DatasetError: public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kDatasetFormatVersion = 1;

/// Preprocessed molecules with their vocabularies and coordinate scale.
/// Coordinates are stored divided by `scale`.
struct Dataset {
  Vocabularies vocab;
  double scale = 1.0;
  std::vector<MolecularGraph> molecules;

  /// hist[n] = number of molecules with n atoms.
  std::vector<int> atom_count_histogram() const;
  std::size_t num_tuples(bool include_representative = true) const;
};

/// Index of the conformer closest (Frobenius) to the elementwise mean
/// conformer; the lowest index wins ties. Throws on an empty set.
int select_representative(std::span<const Coords> conformers);

/// One tuple per conformer, x fixed to the representative. With
/// `include_representative` false the y = x tuple is skipped unless it is
/// the only one.
std::vector<TrainingTuple> build_training_tuples(const MolecularGraph &g,
                                                 bool include_representative = true);

std::vector<TrainingTuple> build_training_tuples(const Dataset &ds,
                                                 bool include_representative = true);

/// sqrt of the mean squared deviation of every coordinate component around
/// the pooled mean.
double pooled_coordinate_std(std::span<const MolecularGraph> molecules);

struct PreprocessReport {
  int kept = 0;
  std::vector<std::string> dropped;
};

/// Centers each conformer, drops fragmented molecules and molecules with
/// unstable atoms, divides by `scale` (computed from the kept molecules when
/// absent) and selects representatives.
Dataset preprocess(std::vector<MolecularGraph> raw, const Vocabularies &vocab,
                   const ValenceTable &table,
                   std::optional<double> scale = std::nullopt,
                   PreprocessReport *report = nullptr);

struct ToyOptions {
  int n_conformers = 5;
  int min_heavy = 2;
  int max_heavy = 4;
};

/// Small neutral {H, C, N, O} chains and rings with hydrogens filled to the
/// QM9 valences, distinct canonical keys, coordinates in Angstrom and
/// centered. Conformers come from a restraint-minimized embedding with
/// random torsions about rotatable bonds.
std::vector<MolecularGraph> generate_toy_molecules(std::uint64_t seed,
                                                   int n_molecules,
                                                   const ToyOptions &opts = {});

/// generate_toy_molecules followed by preprocess with the QM9 vocabulary.
Dataset generate_toy_dataset(std::uint64_t seed, int n_molecules,
                             const ToyOptions &opts = {});

/// Directory with index.json and one binary record per molecule.
void write_dataset(const std::filesystem::path &dir, const Dataset &ds);
Dataset read_dataset(const std::filesystem::path &dir);

/// Binary record bytes: magic "FFMR", u32 version, n, m, representative,
/// u8 atoms[n], u8 charges[n], u8 bonds[n*n], f32 coords[m*n*3], all
/// little-endian and row-major.
std::vector<std::uint8_t> encode_record(const MolecularGraph &g);
MolecularGraph decode_record(std::span<const std::uint8_t> bytes);

/// V2000 molfile records. Consecutive records with identical graphs become
/// conformers of one molecule. Records with unknown elements or charges are
/// skipped with a warning.
std::vector<MolecularGraph> read_sdf(std::istream &in, const Vocabularies &vocab,
                                     std::vector<std::string> *warnings = nullptr);
std::vector<MolecularGraph> read_sdf(const std::filesystem::path &path,
                                     const Vocabularies &vocab,
                                     std::vector<std::string> *warnings = nullptr);

void write_sdf_record(std::ostream &out, const MolecularGraph &g,
                      const Coords &coords, const Vocabularies &vocab,
                      const std::string &title);
void write_xyz_record(std::ostream &out, const MolecularGraph &g,
                      const Coords &coords, const Vocabularies &vocab,
                      const std::string &comment);

}  // namespace flexiflow

#endif  // FLEXIFLOW_DATA_IO_H_
