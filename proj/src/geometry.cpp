//
// SPDX-License-Identifier: Apache-2.0
//

#include "flexiflow/geometry.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include <Eigen/Geometry>

namespace flexiflow {

double covalent_radius(const std::string &element) {
  static const std::map<std::string, double> radii = {
    { "H", 0.31 },  { "B", 0.84 },  { "C", 0.76 },  { "N", 0.71 },
    { "O", 0.66 },  { "F", 0.57 },  { "Si", 1.11 }, { "P", 1.07 },
    { "S", 1.05 },  { "Cl", 1.02 }, { "Br", 1.20 }, { "I", 1.39 },
  };
  auto it = radii.find(element);
  return it == radii.end() ? 0.75 : it->second;
}

double ideal_bond_length(const std::string &a, const std::string &b,
                         BondType type) {
  const double single = covalent_radius(a) + covalent_radius(b);
  switch (type) {
  case BondType::kDouble:
    return 0.87 * single;
  case BondType::kTriple:
    return 0.78 * single;
  case BondType::kAromatic:
    return 0.93 * single;
  default:
    return single;
  }
}

double ideal_bond_angle(const MolecularGraph &g, int center) {
  int doubles = 0, triples = 0, aromatic = 0;
  for (int j = 0; j < g.num_atoms(); ++j) {
    switch (g.bond(center, j)) {
    case BondType::kDouble:
      ++doubles;
      break;
    case BondType::kTriple:
      ++triples;
      break;
    case BondType::kAromatic:
      ++aromatic;
      break;
    default:
      break;
    }
  }
  if (triples > 0 || doubles > 1)
    return std::numbers::pi;
  if (doubles == 1 || aromatic > 0)
    return 2.0 * std::numbers::pi / 3.0;
  return std::acos(-1.0 / 3.0);
}

namespace {
  std::vector<std::vector<int>> adjacency(const MolecularGraph &g) {
    std::vector<std::vector<int>> adj(g.num_atoms());
    for (int i = 0; i < g.num_atoms(); ++i)
      for (int j = 0; j < g.num_atoms(); ++j)
        if (i != j && g.bonds(i, j) != 0)
          adj[i].push_back(j);
    return adj;
  }
}  // namespace

std::vector<DistanceRestraint> build_restraints(const MolecularGraph &g,
                                                const Vocabularies &vocab,
                                                const RestraintOptions &opts) {
  const int n = g.num_atoms();
  const auto adj = adjacency(g);
  auto sym = [&](int i) { return vocab.atom_types.at(g.atoms[i]); };

  std::vector<DistanceRestraint> out;
  // 0 = unrelated, 1 = bonded, 2 = share a neighbor
  Eigen::MatrixXi relation = Eigen::MatrixXi::Zero(n, n);

  for (int i = 0; i < n; ++i) {
    for (int j: adj[i]) {
      if (j <= i)
        continue;
      out.push_back({ i, j, ideal_bond_length(sym(i), sym(j), g.bond(i, j)),
                      10.0, false });
      relation(i, j) = relation(j, i) = 1;
    }
  }

  if (opts.angles) {
    for (int c = 0; c < n; ++c) {
      const double theta = ideal_bond_angle(g, c);
      for (std::size_t a = 0; a < adj[c].size(); ++a) {
        for (std::size_t b = a + 1; b < adj[c].size(); ++b) {
          const int i = adj[c][a], j = adj[c][b];
          if (relation(i, j) != 0)
            continue;
          const double di = ideal_bond_length(sym(c), sym(i), g.bond(c, i));
          const double dj = ideal_bond_length(sym(c), sym(j), g.bond(c, j));
          const double d13 =
              std::sqrt(di * di + dj * dj - 2.0 * di * dj * std::cos(theta));
          out.push_back({ std::min(i, j), std::max(i, j), d13, 2.0, false });
          relation(i, j) = relation(j, i) = 2;
        }
      }
    }
  }

  if (opts.repulsion) {
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (relation(i, j) != 0)
          continue;
        const bool has_h = sym(i) == "H" || sym(j) == "H";
        out.push_back({ i, j,
                        has_h ? opts.repulsion_distance_h
                              : opts.repulsion_distance,
                        1.0, true });
      }
    }
  }
  return out;
}

double restraint_energy(const Coords &c,
                        const std::vector<DistanceRestraint> &restraints,
                        Coords *grad) {
  if (grad != nullptr)
    *grad = Coords::Zero(c.rows(), 3);
  double e = 0.0;
  for (const auto &r: restraints) {
    const Eigen::RowVector3d diff = c.row(r.i) - c.row(r.j);
    const double d = diff.norm();
    const double delta = d - r.target;
    if (r.lower_bound_only && delta >= 0.0)
      continue;
    e += r.weight * delta * delta;
    if (grad != nullptr && d > 1e-12) {
      const Eigen::RowVector3d g = (2.0 * r.weight * delta / d) * diff;
      grad->row(r.i) += g;
      grad->row(r.j) -= g;
    }
  }
  return e;
}

Coords minimize_restraints(Coords x,
                           const std::vector<DistanceRestraint> &restraints,
                           int max_iter, double grad_tol) {
  Coords grad;
  double e = restraint_energy(x, restraints, &grad);
  double step = 0.05;
  for (int it = 0; it < max_iter; ++it) {
    const double gnorm2 = grad.squaredNorm();
    if (gnorm2 < grad_tol * grad_tol)
      break;
    bool accepted = false;
    while (step > 1e-12) {
      Coords trial = x - step * grad;
      Coords trial_grad;
      const double e_trial = restraint_energy(trial, restraints, &trial_grad);
      if (e_trial <= e - 1e-4 * step * gnorm2) {
        x = std::move(trial);
        grad = std::move(trial_grad);
        e = e_trial;
        step *= 1.5;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted)
      break;
  }
  return x;
}

std::vector<int> bond_side(const MolecularGraph &g, int i, int j) {
  const int n = g.num_atoms();
  std::vector<bool> seen(n, false);
  std::vector<int> stack = { j }, out;
  seen[j] = true;
  seen[i] = true;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    out.push_back(v);
    for (int u = 0; u < n; ++u) {
      if (u == v || seen[u] || g.bonds(v, u) == 0)
        continue;
      seen[u] = true;
      stack.push_back(u);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::pair<int, int>> rotatable_bonds(const MolecularGraph &g) {
  const int n = g.num_atoms();
  const auto adj = adjacency(g);
  auto linear = [&](int v) {
    return std::abs(ideal_bond_angle(g, v) - std::numbers::pi) < 1e-9;
  };
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (g.bond(i, j) != BondType::kSingle)
        continue;
      if (adj[i].size() < 2 || adj[j].size() < 2 || linear(i) || linear(j))
        continue;
      // In a ring, j's side also reaches one of i's other neighbors.
      const auto side = bond_side(g, i, j);
      bool ring = false;
      for (int k: adj[i])
        if (k != j && std::binary_search(side.begin(), side.end(), k))
          ring = true;
      if (!ring)
        out.emplace_back(i, j);
    }
  }
  return out;
}

void rotate_about_bond(Coords &c, int i, int j, const std::vector<int> &moving,
                       double angle) {
  const Eigen::Vector3d origin = c.row(i).transpose();
  const Eigen::Vector3d axis = (c.row(j) - c.row(i)).transpose().normalized();
  const Eigen::Matrix3d r = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
  for (int v: moving) {
    const Eigen::Vector3d p = c.row(v).transpose() - origin;
    c.row(v) = (r * p + origin).transpose();
  }
}

}  // namespace flexiflow
