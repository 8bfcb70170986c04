//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef FLEXIFLOW_CORE_TYPES_H_
#define FLEXIFLOW_CORE_TYPES_H_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace flexiflow {

/// Atom coordinates, one row per atom.
using Coords = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Dense bond-type matrix. Entry (i, j) indexes Vocabularies::bond_types;
/// 0 always means "no bond".
using BondMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>;

enum class BondType : std::uint8_t {
  kNone = 0,
  kSingle = 1,
  kDouble = 2,
  kTriple = 3,
  kAromatic = 4,
};

/// Bond order contribution used for valence sums (aromatic counts 1.5).
double bond_order(BondType type);

/// Ordered atom, bond and charge vocabularies. The order is part of a trained
/// model and is stored in datasets and checkpoints.
struct Vocabularies {
  std::vector<std::string> atom_types;
  std::vector<std::string> bond_types;
  std::vector<int> charge_types;

  /// (H, C, N, O, F) with charges {-1, 0, +1}.
  static Vocabularies qm9();
  /// (H, B, C, N, O, F, Si, P, S, Cl, Br, I) with charges {-1, 0, +1}.
  static Vocabularies geom();

  int num_atom_types() const { return static_cast<int>(atom_types.size()); }
  int num_bond_types() const { return static_cast<int>(bond_types.size()); }
  int num_charge_types() const {
    return static_cast<int>(charge_types.size());
  }

  std::optional<int> atom_index(std::string_view symbol) const;
  std::optional<int> charge_index(int charge) const;

  /// Empty when every set is non-empty and duplicate free, and bond index 0
  /// is "none".
  std::vector<std::string> validate() const;

  bool operator==(const Vocabularies &) const = default;
};

/// A molecular graph with its conformer set. Atom order is shared by the
/// graph and every conformer.
struct MolecularGraph {
  std::vector<int> atoms;
  std::vector<int> charges;
  BondMatrix bonds;
  std::vector<Coords> conformers;
  int representative = 0;

  int num_atoms() const { return static_cast<int>(atoms.size()); }
  int num_conformers() const { return static_cast<int>(conformers.size()); }

  const Coords &representative_conformer() const {
    return conformers.at(static_cast<std::size_t>(representative));
  }

  BondType bond(int i, int j) const {
    return static_cast<BondType>(bonds(i, j));
  }

  /// Sets bonds (i, j) and (j, i).
  void set_bond(int i, int j, BondType type);
};

/// Lists every violated MolecularGraph invariant, naming the field and index.
/// Never throws; an empty result means the graph is well formed.
std::vector<std::string> validate_graph(const MolecularGraph &g);

/// Same as above, additionally checking that indices fall inside `vocab`.
std::vector<std::string> validate_graph(const MolecularGraph &g,
                                        const Vocabularies &vocab);

/// One (atoms+charges, bonds, x, y) record. Non-owning view into a
/// MolecularGraph: x is the representative conformer, y one member of the
/// conformer set. The graph must outlive the tuple.
class TrainingTuple {
public:
  TrainingTuple(const MolecularGraph &graph, int y_index)
      : graph_(&graph), y_index_(y_index) { }

  const MolecularGraph &graph() const { return *graph_; }
  int y_index() const { return y_index_; }
  int num_atoms() const { return graph_->num_atoms(); }

  const std::vector<int> &atoms() const { return graph_->atoms; }
  const std::vector<int> &charges() const { return graph_->charges; }
  const BondMatrix &bonds() const { return graph_->bonds; }
  const Coords &x() const { return graph_->representative_conformer(); }
  const Coords &y() const {
    return graph_->conformers[static_cast<std::size_t>(y_index_)];
  }

private:
  const MolecularGraph *graph_;
  int y_index_;
};

/// Subtracts the centroid from every row.
void center_coords(Coords &c);
Eigen::RowVector3d centroid(const Coords &c);

}  // namespace flexiflow

#endif  // FLEXIFLOW_CORE_TYPES_H_
