//
// SPDX-License-Identifier: Apache-2.0
//

#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

#include "flexiflow/data_io.h"
#include "flexiflow/geometry.h"
#include "flexiflow/rng.h"

namespace flexiflow {
namespace {
  // QM9 vocabulary indices.
  constexpr int kH = 0, kC = 1, kN = 2, kO = 3;
  constexpr int kNeutral = 1;

  int neutral_valence(int atom) {
    switch (atom) {
    case kC:
      return 4;
    case kN:
      return 3;
    case kO:
      return 2;
    default:
      return 1;
    }
  }

  int bond_sum(const MolecularGraph &g, int i, int n) {
    int s = 0;
    for (int j = 0; j < n; ++j)
      if (j != i)
        s += g.bonds(i, j);
    return s;
  }

  /// Heavy-atom skeleton with hydrogens filled, or nullopt if the draw
  /// breaks a valence.
  std::optional<MolecularGraph> draw_graph(Rng &rng, const ToyOptions &opts) {
    const int k = opts.min_heavy
                  + rng.index(opts.max_heavy - opts.min_heavy + 1);
    std::vector<int> heavy(k);
    for (auto &a: heavy) {
      const double u = rng.uniform();
      a = u < 0.6 ? kC : (u < 0.8 ? kN : kO);
    }

    MolecularGraph g;
    g.atoms = heavy;
    g.bonds = BondMatrix::Zero(k, k);
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i + 1 < k; ++i)
      edges.emplace_back(i, i + 1);
    bool ring = false;
    if (k >= 3 && rng.uniform() < 0.3) {
      edges.emplace_back(0, k - 1);
      ring = true;
    }
    for (auto [i, j]: edges)
      g.set_bond(i, j, BondType::kSingle);

    if (rng.uniform() < 0.5) {
      const auto [i, j] = edges[rng.index(static_cast<int>(edges.size()))];
      const int spare = std::min(neutral_valence(g.atoms[i]) - bond_sum(g, i, k),
                                 neutral_valence(g.atoms[j]) - bond_sum(g, j, k));
      if (!ring && spare >= 2 && rng.uniform() < 0.3)
        g.set_bond(i, j, BondType::kTriple);
      else if (spare >= 1)
        g.set_bond(i, j, BondType::kDouble);
    }

    std::vector<int> n_h(k);
    int total = k;
    for (int i = 0; i < k; ++i) {
      n_h[i] = neutral_valence(g.atoms[i]) - bond_sum(g, i, k);
      if (n_h[i] < 0)
        return std::nullopt;
      total += n_h[i];
    }

    MolecularGraph full;
    full.atoms = heavy;
    full.bonds = BondMatrix::Zero(total, total);
    full.bonds.topLeftCorner(k, k) = g.bonds;
    int next = k;
    for (int i = 0; i < k; ++i) {
      for (int h = 0; h < n_h[i]; ++h) {
        full.atoms.push_back(kH);
        full.set_bond(i, next++, BondType::kSingle);
      }
    }
    full.charges.assign(total, kNeutral);
    return full;
  }

  Coords embed(const MolecularGraph &g, const Vocabularies &vocab, Rng &rng) {
    const int n = g.num_atoms();
    const auto restraints = build_restraints(g, vocab);
    const double box = 1.5 * std::cbrt(static_cast<double>(n));
    Coords best;
    double best_e = std::numeric_limits<double>::infinity();
    for (int attempt = 0; attempt < 3; ++attempt) {
      Coords c(n, 3);
      for (int i = 0; i < n; ++i)
        for (int d = 0; d < 3; ++d)
          c(i, d) = rng.uniform(-box, box);
      c = minimize_restraints(std::move(c), restraints, 4000);
      const double e = restraint_energy(c, restraints);
      if (e < best_e) {
        best_e = e;
        best = std::move(c);
      }
    }
    return best;
  }
}  // namespace

std::vector<MolecularGraph> generate_toy_molecules(std::uint64_t seed,
                                                   int n_molecules,
                                                   const ToyOptions &opts) {
  if (n_molecules < 1)
    throw std::invalid_argument("generate_toy_molecules: n_molecules < 1");
  if (opts.min_heavy < 1 || opts.max_heavy < opts.min_heavy
      || opts.n_conformers < 1)
    throw std::invalid_argument("generate_toy_molecules: bad options");

  const Vocabularies vocab = Vocabularies::qm9();
  const Rng root(seed);
  std::vector<MolecularGraph> out;
  std::set<std::string> keys;
  const int max_attempts = 200 * n_molecules + 1000;

  for (int attempt = 0; attempt < max_attempts
                        && static_cast<int>(out.size()) < n_molecules;
       ++attempt) {
    Rng rng = root.derive(static_cast<std::uint64_t>(attempt));
    auto drawn = draw_graph(rng, opts);
    if (!drawn)
      continue;
    MolecularGraph g = std::move(*drawn);
    if (!keys.insert(canonical_key(g)).second)
      continue;

    const Coords base = embed(g, vocab, rng);
    const auto restraints = build_restraints(g, vocab);
    const auto rotatable = rotatable_bonds(g);
    for (int k = 0; k < opts.n_conformers; ++k) {
      Coords c = base;
      for (auto [i, j]: rotatable)
        rotate_about_bond(c, i, j, bond_side(g, i, j),
                          rng.uniform(0.0, 2.0 * std::numbers::pi));
      if (!rotatable.empty())
        c = minimize_restraints(std::move(c), restraints, 300);
      center_coords(c);
      g.conformers.push_back(std::move(c));
    }
    out.push_back(std::move(g));
  }
  if (static_cast<int>(out.size()) < n_molecules)
    throw std::runtime_error("generate_toy_molecules: only "
                             + std::to_string(out.size())
                             + " distinct graphs found; raise max_heavy");
  return out;
}

Dataset generate_toy_dataset(std::uint64_t seed, int n_molecules,
                             const ToyOptions &opts) {
  return preprocess(generate_toy_molecules(seed, n_molecules, opts),
                    Vocabularies::qm9(), ValenceTable::qm9());
}

}  // namespace flexiflow
