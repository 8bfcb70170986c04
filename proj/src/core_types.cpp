//
// SPDX-License-Identifier: Apache-2.0
//

#include "flexiflow/core_types.h"

#include <algorithm>
#include <set>
#include <string>

namespace flexiflow {

double bond_order(BondType type) {
  switch (type) {
  case BondType::kNone:
    return 0.0;
  case BondType::kSingle:
    return 1.0;
  case BondType::kDouble:
    return 2.0;
  case BondType::kTriple:
    return 3.0;
  case BondType::kAromatic:
    return 1.5;
  }
  return 0.0;
}

Vocabularies Vocabularies::qm9() {
  return {
    { "H", "C", "N", "O", "F" },
    { "none", "single", "double", "triple", "aromatic" },
    { -1, 0, 1 },
  };
}

Vocabularies Vocabularies::geom() {
  return {
    { "H", "B", "C", "N", "O", "F", "Si", "P", "S", "Cl", "Br", "I" },
    { "none", "single", "double", "triple", "aromatic" },
    { -1, 0, 1 },
  };
}

std::optional<int> Vocabularies::atom_index(std::string_view symbol) const {
  auto it = std::find(atom_types.begin(), atom_types.end(), symbol);
  if (it == atom_types.end())
    return std::nullopt;
  return static_cast<int>(it - atom_types.begin());
}

std::optional<int> Vocabularies::charge_index(int charge) const {
  auto it = std::find(charge_types.begin(), charge_types.end(), charge);
  if (it == charge_types.end())
    return std::nullopt;
  return static_cast<int>(it - charge_types.begin());
}

namespace {
  template <class T>
  bool has_duplicates(const std::vector<T> &v) {
    std::set<T> seen(v.begin(), v.end());
    return seen.size() != v.size();
  }
}  // namespace

std::vector<std::string> Vocabularies::validate() const {
  std::vector<std::string> errors;
  if (atom_types.empty())
    errors.emplace_back("atom_types is empty");
  if (bond_types.empty())
    errors.emplace_back("bond_types is empty");
  if (charge_types.empty())
    errors.emplace_back("charge_types is empty");
  if (has_duplicates(atom_types))
    errors.emplace_back("atom_types has duplicates");
  if (has_duplicates(bond_types))
    errors.emplace_back("bond_types has duplicates");
  if (has_duplicates(charge_types))
    errors.emplace_back("charge_types has duplicates");
  if (!bond_types.empty() && bond_types.front() != "none")
    errors.emplace_back("bond_types[0] must be \"none\"");
  if (atom_types.size() > 255 || bond_types.size() > 255
      || charge_types.size() > 255)
    errors.emplace_back("vocabulary larger than 255 entries");
  return errors;
}

void MolecularGraph::set_bond(int i, int j, BondType type) {
  bonds(i, j) = static_cast<std::uint8_t>(type);
  bonds(j, i) = static_cast<std::uint8_t>(type);
}

std::vector<std::string> validate_graph(const MolecularGraph &g) {
  std::vector<std::string> errors;
  const int n = g.num_atoms();

  if (static_cast<int>(g.charges.size()) != n) {
    errors.push_back("charges has " + std::to_string(g.charges.size())
                     + " entries, expected " + std::to_string(n));
  }

  if (g.bonds.rows() != n || g.bonds.cols() != n) {
    errors.push_back("bonds has shape " + std::to_string(g.bonds.rows()) + "x"
                     + std::to_string(g.bonds.cols()) + ", expected "
                     + std::to_string(n) + "x" + std::to_string(n));
  } else {
    for (int i = 0; i < n; ++i) {
      if (g.bonds(i, i) != 0)
        errors.push_back("bonds diagonal nonzero at (" + std::to_string(i)
                         + "," + std::to_string(i) + ")");
      for (int j = i + 1; j < n; ++j) {
        if (g.bonds(i, j) != g.bonds(j, i))
          errors.push_back("bonds asymmetric at (" + std::to_string(i) + ","
                           + std::to_string(j) + ")");
      }
    }
  }

  if (g.conformers.empty())
    errors.emplace_back("conformers is empty");
  for (std::size_t k = 0; k < g.conformers.size(); ++k) {
    if (g.conformers[k].rows() != n) {
      errors.push_back("conformers[" + std::to_string(k) + "] has "
                       + std::to_string(g.conformers[k].rows())
                       + " rows, expected " + std::to_string(n));
    } else if (!g.conformers[k].allFinite()) {
      errors.push_back("conformers[" + std::to_string(k)
                       + "] has non-finite coordinates");
    }
  }

  if (g.representative < 0 || g.representative >= g.num_conformers()) {
    errors.push_back("representative index " + std::to_string(g.representative)
                     + " out of range");
  }
  return errors;
}

std::vector<std::string> validate_graph(const MolecularGraph &g,
                                        const Vocabularies &vocab) {
  auto errors = validate_graph(g);
  for (int i = 0; i < g.num_atoms(); ++i) {
    if (g.atoms[i] < 0 || g.atoms[i] >= vocab.num_atom_types())
      errors.push_back("atoms[" + std::to_string(i) + "] out of vocabulary");
  }
  for (std::size_t i = 0; i < g.charges.size(); ++i) {
    if (g.charges[i] < 0 || g.charges[i] >= vocab.num_charge_types())
      errors.push_back("charges[" + std::to_string(i) + "] out of vocabulary");
  }
  if (g.bonds.rows() == g.num_atoms() && g.bonds.cols() == g.num_atoms()) {
    for (int i = 0; i < g.num_atoms(); ++i) {
      for (int j = 0; j < g.num_atoms(); ++j) {
        if (g.bonds(i, j) >= vocab.num_bond_types())
          errors.push_back("bonds(" + std::to_string(i) + ","
                           + std::to_string(j) + ") out of vocabulary");
      }
    }
  }
  return errors;
}

Eigen::RowVector3d centroid(const Coords &c) {
  if (c.rows() == 0)
    return Eigen::RowVector3d::Zero();
  return c.colwise().mean();
}

void center_coords(Coords &c) {
  if (c.rows() == 0)
    return;
  const Eigen::RowVector3d mean = centroid(c);
  c.rowwise() -= mean;
}

}  // namespace flexiflow
