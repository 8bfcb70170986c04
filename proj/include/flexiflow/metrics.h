//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef FLEXIFLOW_METRICS_H_
#define FLEXIFLOW_METRICS_H_

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "flexiflow/core_types.h"

namespace flexiflow {

// ---------------------------------------------------------------------------
// RMSD machinery
// ---------------------------------------------------------------------------

/// RMSD after optimal rigid superposition (Kabsch). Both sets are centered,
/// the proper rotation comes from the SVD of the cross-covariance with the
/// determinant sign corrected. Throws std::invalid_argument on empty or
/// mismatched inputs.
double kabsch_rmsd(const Coords &a, const Coords &b);

/// Full symmetric matrix of pairwise Kabsch RMSDs.
Eigen::MatrixXd pairwise_rmsd(std::span<const Coords> a,
                              std::span<const Coords> b);

/// Mean over conformers of the RMSD to the nearest other conformer.
/// Requires at least two conformers.
double conformer_diversity(std::span<const Coords> conformers);

/// The coverage thresholds 0.0, 0.125, ..., 2.5 Angstrom.
std::vector<double> default_coverage_grid();

struct CoverageResult {
  std::vector<double> deltas;
  std::vector<double> cov_r;
  std::vector<double> cov_p;
  double amr_r = 0.0;
  double amr_p = 0.0;
};

/// Coverage and average-minimum-RMSD, recall (reference side) and precision
/// (generated side). A conformer counts as covered when the RMSD is strictly
/// below the threshold.
CoverageResult cov_amr(std::span<const Coords> generated,
                       std::span<const Coords> reference,
                       std::span<const double> deltas);

// ---------------------------------------------------------------------------
// Graph-level generation metrics
// ---------------------------------------------------------------------------

/// Allowed total valences per (element, formal charge).
class ValenceTable {
public:
  /// H:1; C:4; N:3 (+1: 4, -1: 2); O:2 (+1: 3, -1: 1); F:1.
  static ValenceTable qm9();
  /// The QM9 table extended to the GEOM element set.
  static ValenceTable geom();

  void set(const std::string &element, int charge, std::vector<int> valences);

  /// nullptr when the pair is not in the table.
  const std::vector<int> *find(const std::string &element, int charge) const;

  bool allows(const std::string &element, int charge, int valence) const;

  /// Elements with at least one entry.
  std::set<std::string> elements() const;

private:
  std::map<std::pair<std::string, int>, std::vector<int>> table_;
};

/// Bond-order sum of atom i (aromatic bonds count 1.5).
double valence_sum(const MolecularGraph &g, int atom);

/// Per-atom stability: the half-up rounded valence sum is an allowed valence
/// for the atom's (element, charge).
std::vector<bool> atom_stability(const MolecularGraph &g,
                                 const Vocabularies &vocab,
                                 const ValenceTable &table);

/// True when the bond graph has exactly one connected component.
bool is_connected(const MolecularGraph &g);

/// Number of connected components of the bond graph.
int count_fragments(const MolecularGraph &g);

/// Connected and every atom stable.
bool is_valid(const MolecularGraph &g, const Vocabularies &vocab,
              const ValenceTable &table);

struct GraphMetrics {
  int n_samples = 0;
  int n_valid = 0;
  int n_unique = 0;
  double validity = 0.0;
  double uniqueness = 0.0;
  double novelty = 0.0;
  double atom_stability = 0.0;
  double mol_stability = 0.0;
};

/// Validity is connectivity plus valence stability. Uniqueness is
/// |distinct canonical keys| / |valid samples|; novelty is the fraction of
/// those distinct keys that are absent from `train_keys`.
GraphMetrics graph_metrics(std::span<const MolecularGraph> samples,
                           const std::set<std::string> &train_keys,
                           const ValenceTable &table,
                           const Vocabularies &vocab);

/// Everything `eval` reports. Optional parts stay empty when not computed.
struct MetricsReport {
  std::optional<GraphMetrics> graphs;
  std::optional<double> d_s;
  std::optional<double> d_s_minimized;
  std::optional<CoverageResult> coverage;
  std::vector<std::string> notes;

  nlohmann::json to_json() const;
};

// ---------------------------------------------------------------------------
// Canonical labeling
// ---------------------------------------------------------------------------

/// Canonical atom order: result[k] is the original index of the atom placed
/// at canonical position k. Colors start from (element, charge) and are
/// refined by the sorted multiset of (neighbor color, bond type); remaining
/// ties are broken by individualizing each tied atom in turn and keeping the
/// lexicographically smallest serialization.
std::vector<int> canonical_order(const MolecularGraph &g);

/// Serialized atoms, charges and upper-triangle bonds under canonical_order.
/// Equal for isomorphic graphs, different otherwise.
std::string canonical_key(const MolecularGraph &g);

/// Reorders atoms (and every conformer) by `order`, as returned by
/// canonical_order.
MolecularGraph permute_atoms(const MolecularGraph &g,
                             const std::vector<int> &order);

}  // namespace flexiflow

#endif  // FLEXIFLOW_METRICS_H_
