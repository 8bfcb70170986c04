//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef FLEXIFLOW_GEOMETRY_H_
#define FLEXIFLOW_GEOMETRY_H_

#include <string>
#include <utility>
#include <vector>

#include "flexiflow/core_types.h"

namespace flexiflow {

/// Single-bond covalent radius in Angstrom; 0.75 for unknown elements.
double covalent_radius(const std::string &element);

/// Sum of covalent radii, shortened for double (x0.87), triple (x0.78) and
/// aromatic (x0.93) bonds.
double ideal_bond_length(const std::string &a, const std::string &b,
                         BondType type);

/// Ideal angle in radians around an atom: 180 deg for a triple bond or two
/// double bonds, 120 deg for one double or aromatic bond, tetrahedral
/// otherwise.
double ideal_bond_angle(const MolecularGraph &g, int center);

/// A pairwise distance term. With `lower_bound_only` the term is zero
/// beyond `target` (steric repulsion).
struct DistanceRestraint {
  int i = 0;
  int j = 0;
  double target = 0.0;
  double weight = 1.0;
  bool lower_bound_only = false;
};

struct RestraintOptions {
  bool angles = true;
  bool repulsion = true;
  double repulsion_distance = 2.0;
  double repulsion_distance_h = 1.6;
};

/// Bond lengths, 1-3 distances from ideal angles, and steric lower bounds
/// for every pair further apart.
std::vector<DistanceRestraint> build_restraints(const MolecularGraph &g,
                                                const Vocabularies &vocab,
                                                const RestraintOptions &opts = {});

/// Sum of weight * (d - target)^2; fills `grad` (same shape as c) when
/// non-null.
double restraint_energy(const Coords &c,
                        const std::vector<DistanceRestraint> &restraints,
                        Coords *grad = nullptr);

/// Gradient descent with backtracking line search.
Coords minimize_restraints(Coords start,
                           const std::vector<DistanceRestraint> &restraints,
                           int max_iter = 2000, double grad_tol = 1e-8);

/// Bonds whose torsion changes the geometry: single, not in a ring, each end
/// has another neighbor and neither end is linear.
std::vector<std::pair<int, int>> rotatable_bonds(const MolecularGraph &g);

/// Atoms reachable from j without crossing the bond (i, j), j included.
std::vector<int> bond_side(const MolecularGraph &g, int i, int j);

/// Rotates `moving` atoms about the axis through atoms i and j.
void rotate_about_bond(Coords &c, int i, int j, const std::vector<int> &moving,
                       double angle);

}  // namespace flexiflow

#endif  // FLEXIFLOW_GEOMETRY_H_
