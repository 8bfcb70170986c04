//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef FLEXIFLOW_ENERGY_ORACLE_H_
#define FLEXIFLOW_ENERGY_ORACLE_H_

#include <cstdio>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "flexiflow/core_types.h"

namespace flexiflow {

class OracleError: public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Force-field style energy evaluator with local minimization.
class EnergyOracle {
public:
  virtual ~EnergyOracle() = default;

  virtual std::string name() const = 0;
  virtual double energy(const MolecularGraph &g, const Coords &c) = 0;
  virtual Coords minimize(const MolecularGraph &g, const Coords &c,
                          int max_steps) = 0;
};

/// U(c) = |c - reference|^2 against a fixed reference; minimizes exactly.
class QuadraticOracle: public EnergyOracle {
public:
  explicit QuadraticOracle(Coords reference): reference_(std::move(reference)) { }

  std::string name() const override { return "quadratic"; }
  double energy(const MolecularGraph &g, const Coords &c) override;
  Coords minimize(const MolecularGraph &g, const Coords &c,
                  int max_steps) override;

private:
  Coords reference_;
};

/// Harmonic bond stretching toward ideal lengths only. Minimization leaves
/// torsions free, so distinct rotamers stay distinct.
class HarmonicBondOracle: public EnergyOracle {
public:
  explicit HarmonicBondOracle(Vocabularies vocab): vocab_(std::move(vocab)) { }

  std::string name() const override { return "harmonic-bond"; }
  double energy(const MolecularGraph &g, const Coords &c) override;
  Coords minimize(const MolecularGraph &g, const Coords &c,
                  int max_steps) override;

private:
  Vocabularies vocab_;
};

/// External evaluator speaking JSON lines over stdin/stdout. Each request is
/// {"op": "energy"|"minimize", "elements": [...], "charges": [...],
///  "bonds": [[i, j, order], ...], "coords": [[x, y, z], ...],
///  "max_steps": k}; the reply is {"energy": e} or {"coords": [...]}, or
/// {"error": "..."}.
class SubprocessOracle: public EnergyOracle {
public:
  SubprocessOracle(std::string command, Vocabularies vocab);
  ~SubprocessOracle() override;

  SubprocessOracle(const SubprocessOracle &) = delete;
  SubprocessOracle &operator=(const SubprocessOracle &) = delete;

  std::string name() const override { return "subprocess:" + command_; }
  double energy(const MolecularGraph &g, const Coords &c) override;
  Coords minimize(const MolecularGraph &g, const Coords &c,
                  int max_steps) override;

private:
  std::string request(const std::string &line);

  std::string command_;
  Vocabularies vocab_;
  int pid_ = -1;
  std::FILE *to_child_ = nullptr;
  std::FILE *from_child_ = nullptr;
};

/// Oracle named by FLEXIFLOW_ENERGY_ORACLE: "harmonic" or "cmd:<command>".
/// nullptr when the variable is unset or empty.
std::unique_ptr<EnergyOracle> oracle_from_environment(const Vocabularies &vocab);

/// E(c) - E(minimize(c)); nullopt without an oracle or when it fails.
std::optional<double> strain(EnergyOracle *oracle, const MolecularGraph &g,
                             const Coords &c, int max_steps = 500);

}  // namespace flexiflow

#endif  // FLEXIFLOW_ENERGY_ORACLE_H_
