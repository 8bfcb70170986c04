//
// SPDX-License-Identifier: Apache-2.0
//

#include "flexiflow/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <Eigen/SVD>

namespace flexiflow {

double kabsch_rmsd(const Coords &a, const Coords &b) {
  if (a.rows() == 0 || a.rows() != b.rows())
    throw std::invalid_argument("kabsch_rmsd: coordinate sets must be "
                                "non-empty and of equal size");

  Coords p = a, q = b;
  center_coords(p);
  center_coords(q);

  const Eigen::Matrix3d h = p.transpose() * q;
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU
                                               | Eigen::ComputeFullV);
  const Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Eigen::Matrix3d r = v * d * u.transpose();

  const Coords aligned = p * r.transpose();
  return std::sqrt((aligned - q).squaredNorm() / static_cast<double>(a.rows()));
}

Eigen::MatrixXd pairwise_rmsd(std::span<const Coords> a,
                              std::span<const Coords> b) {
  Eigen::MatrixXd out(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      out(i, j) = kabsch_rmsd(a[i], b[j]);
  return out;
}

double conformer_diversity(std::span<const Coords> conformers) {
  const std::size_t m = conformers.size();
  if (m < 2)
    throw std::invalid_argument("conformer_diversity: need at least two "
                                "conformers");
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j)
      d(i, j) = d(j, i) = kabsch_rmsd(conformers[i], conformers[j]);

  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j)
      if (j != i)
        best = std::min(best, d(i, j));
    total += best;
  }
  return total / static_cast<double>(m);
}

std::vector<double> default_coverage_grid() {
  std::vector<double> grid;
  for (int k = 0; k <= 20; ++k)
    grid.push_back(0.125 * k);
  return grid;
}

CoverageResult cov_amr(std::span<const Coords> generated,
                       std::span<const Coords> reference,
                       std::span<const double> deltas) {
  if (generated.empty() || reference.empty())
    throw std::invalid_argument("cov_amr: empty conformer set");

  const Eigen::MatrixXd d = pairwise_rmsd(generated, reference);
  const Eigen::VectorXd min_over_gen = d.colwise().minCoeff().transpose();
  const Eigen::VectorXd min_over_ref = d.rowwise().minCoeff();

  CoverageResult res;
  res.deltas.assign(deltas.begin(), deltas.end());
  for (double delta: deltas) {
    res.cov_r.push_back((min_over_gen.array() < delta).cast<double>().mean());
    res.cov_p.push_back((min_over_ref.array() < delta).cast<double>().mean());
  }
  res.amr_r = min_over_gen.mean();
  res.amr_p = min_over_ref.mean();
  return res;
}

// ---------------------------------------------------------------------------

ValenceTable ValenceTable::qm9() {
  ValenceTable t;
  t.set("H", 0, { 1 });
  t.set("C", 0, { 4 });
  t.set("N", 0, { 3 });
  t.set("N", 1, { 4 });
  t.set("N", -1, { 2 });
  t.set("O", 0, { 2 });
  t.set("O", 1, { 3 });
  t.set("O", -1, { 1 });
  t.set("F", 0, { 1 });
  return t;
}

ValenceTable ValenceTable::geom() {
  ValenceTable t = qm9();
  t.set("B", 0, { 3 });
  t.set("C", 1, { 3 });
  t.set("C", -1, { 3 });
  t.set("Si", 0, { 4 });
  t.set("P", 0, { 3, 5 });
  t.set("P", 1, { 4 });
  t.set("S", 0, { 2, 4, 6 });
  t.set("S", 1, { 3 });
  t.set("S", -1, { 1 });
  t.set("Cl", 0, { 1 });
  t.set("Br", 0, { 1 });
  t.set("I", 0, { 1 });
  return t;
}

void ValenceTable::set(const std::string &element, int charge,
                       std::vector<int> valences) {
  table_[{ element, charge }] = std::move(valences);
}

const std::vector<int> *ValenceTable::find(const std::string &element,
                                           int charge) const {
  auto it = table_.find({ element, charge });
  return it == table_.end() ? nullptr : &it->second;
}

bool ValenceTable::allows(const std::string &element, int charge,
                          int valence) const {
  const auto *v = find(element, charge);
  return v != nullptr && std::find(v->begin(), v->end(), valence) != v->end();
}

std::set<std::string> ValenceTable::elements() const {
  std::set<std::string> out;
  for (const auto &[key, _]: table_)
    out.insert(key.first);
  return out;
}

double valence_sum(const MolecularGraph &g, int atom) {
  double sum = 0.0;
  for (int j = 0; j < g.num_atoms(); ++j)
    if (j != atom)
      sum += bond_order(g.bond(atom, j));
  return sum;
}

std::vector<bool> atom_stability(const MolecularGraph &g,
                                 const Vocabularies &vocab,
                                 const ValenceTable &table) {
  std::vector<bool> out(g.num_atoms());
  for (int i = 0; i < g.num_atoms(); ++i) {
    const int valence = static_cast<int>(std::floor(valence_sum(g, i) + 0.5));
    out[i] = table.allows(vocab.atom_types.at(g.atoms[i]),
                          vocab.charge_types.at(g.charges[i]), valence);
  }
  return out;
}

int count_fragments(const MolecularGraph &g) {
  const int n = g.num_atoms();
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto root = [&](int v) {
    while (parent[v] != v)
      v = parent[v] = parent[parent[v]];
    return v;
  };
  int components = n;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (g.bonds(i, j) == 0)
        continue;
      const int a = root(i), b = root(j);
      if (a != b) {
        parent[a] = b;
        --components;
      }
    }
  }
  return components;
}

bool is_connected(const MolecularGraph &g) {
  return count_fragments(g) == 1;
}

bool is_valid(const MolecularGraph &g, const Vocabularies &vocab,
              const ValenceTable &table) {
  if (!is_connected(g))
    return false;
  const auto stable = atom_stability(g, vocab, table);
  return std::all_of(stable.begin(), stable.end(), [](bool s) { return s; });
}

GraphMetrics graph_metrics(std::span<const MolecularGraph> samples,
                           const std::set<std::string> &train_keys,
                           const ValenceTable &table,
                           const Vocabularies &vocab) {
  GraphMetrics m;
  m.n_samples = static_cast<int>(samples.size());
  if (samples.empty())
    return m;

  std::size_t atoms_total = 0, atoms_stable = 0;
  int mols_stable = 0;
  std::set<std::string> keys;
  for (const auto &g: samples) {
    const auto stable = atom_stability(g, vocab, table);
    const auto n_stable = std::count(stable.begin(), stable.end(), true);
    atoms_total += stable.size();
    atoms_stable += static_cast<std::size_t>(n_stable);
    const bool all_stable = n_stable == static_cast<long>(stable.size());
    mols_stable += all_stable ? 1 : 0;
    if (all_stable && is_connected(g)) {
      ++m.n_valid;
      keys.insert(canonical_key(g));
    }
  }

  m.n_unique = static_cast<int>(keys.size());
  m.validity = static_cast<double>(m.n_valid) / m.n_samples;
  m.mol_stability = static_cast<double>(mols_stable) / m.n_samples;
  m.atom_stability = atoms_total == 0 ? 0.0
                                      : static_cast<double>(atoms_stable)
                                            / static_cast<double>(atoms_total);
  if (m.n_valid > 0)
    m.uniqueness = static_cast<double>(m.n_unique) / m.n_valid;
  if (m.n_unique > 0) {
    const auto novel = std::count_if(keys.begin(), keys.end(),
                                     [&](const std::string &k) {
                                       return train_keys.count(k) == 0;
                                     });
    m.novelty = static_cast<double>(novel) / m.n_unique;
  }
  return m;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  if (graphs) {
    j["graphs"] = {
      { "n_samples", graphs->n_samples },
      { "n_valid", graphs->n_valid },
      { "n_unique", graphs->n_unique },
      { "validity", graphs->validity },
      { "uniqueness", graphs->uniqueness },
      { "novelty", graphs->novelty },
      { "atom_stability", graphs->atom_stability },
      { "mol_stability", graphs->mol_stability },
    };
  }
  if (d_s)
    j["d_s"] = *d_s;
  if (d_s_minimized)
    j["d_s_minimized"] = *d_s_minimized;
  if (coverage) {
    j["coverage"] = {
      { "deltas", coverage->deltas }, { "cov_r", coverage->cov_r },
      { "cov_p", coverage->cov_p },   { "amr_r", coverage->amr_r },
      { "amr_p", coverage->amr_p },
    };
  }
  if (!notes.empty())
    j["notes"] = notes;
  return j;
}

}  // namespace flexiflow
