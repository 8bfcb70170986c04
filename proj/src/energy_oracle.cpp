//
// SPDX-License-Identifier: Apache-2.0
//

#include "flexiflow/energy_oracle.h"

#include <csignal>
#include <cstdlib>
#include <cstring>

#include <nlohmann/json.hpp>
#include <sys/wait.h>
#include <unistd.h>

#include "flexiflow/geometry.h"

namespace flexiflow {

double QuadraticOracle::energy(const MolecularGraph &, const Coords &c) {
  if (c.rows() != reference_.rows())
    throw OracleError("quadratic oracle: atom count mismatch");
  return (c - reference_).squaredNorm();
}

Coords QuadraticOracle::minimize(const MolecularGraph &, const Coords &c,
                                 int) {
  if (c.rows() != reference_.rows())
    throw OracleError("quadratic oracle: atom count mismatch");
  return reference_;
}

double HarmonicBondOracle::energy(const MolecularGraph &g, const Coords &c) {
  return restraint_energy(c, build_restraints(g, vocab_, { false, false }));
}

Coords HarmonicBondOracle::minimize(const MolecularGraph &g, const Coords &c,
                                    int max_steps) {
  return minimize_restraints(c, build_restraints(g, vocab_, { false, false }),
                             max_steps, 1e-10);
}

// ---------------------------------------------------------------------------

namespace {
  nlohmann::json encode_molecule(const MolecularGraph &g, const Coords &c,
                                 const Vocabularies &vocab) {
    nlohmann::json j;
    j["elements"] = nlohmann::json::array();
    j["charges"] = nlohmann::json::array();
    for (int i = 0; i < g.num_atoms(); ++i) {
      j["elements"].push_back(vocab.atom_types.at(g.atoms[i]));
      j["charges"].push_back(vocab.charge_types.at(g.charges[i]));
    }
    j["bonds"] = nlohmann::json::array();
    for (int i = 0; i < g.num_atoms(); ++i)
      for (int k = i + 1; k < g.num_atoms(); ++k)
        if (g.bonds(i, k) != 0)
          j["bonds"].push_back({ i, k, bond_order(g.bond(i, k)) });
    j["coords"] = nlohmann::json::array();
    for (int i = 0; i < c.rows(); ++i)
      j["coords"].push_back({ c(i, 0), c(i, 1), c(i, 2) });
    return j;
  }
}  // namespace

SubprocessOracle::SubprocessOracle(std::string command, Vocabularies vocab)
    : command_(std::move(command)), vocab_(std::move(vocab)) {
  int down[2], up[2];
  if (::pipe(down) != 0 || ::pipe(up) != 0)
    throw OracleError("pipe() failed");
  pid_ = ::fork();
  if (pid_ < 0)
    throw OracleError("fork() failed");
  if (pid_ == 0) {
    ::dup2(down[0], STDIN_FILENO);
    ::dup2(up[1], STDOUT_FILENO);
    ::close(down[0]);
    ::close(down[1]);
    ::close(up[0]);
    ::close(up[1]);
    ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char *>(nullptr));
    ::_exit(127);
  }
  ::close(down[0]);
  ::close(up[1]);
  to_child_ = ::fdopen(down[1], "w");
  from_child_ = ::fdopen(up[0], "r");
  std::signal(SIGPIPE, SIG_IGN);
}

SubprocessOracle::~SubprocessOracle() {
  if (to_child_ != nullptr)
    std::fclose(to_child_);
  if (from_child_ != nullptr)
    std::fclose(from_child_);
  if (pid_ > 0) {
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }
}

std::string SubprocessOracle::request(const std::string &line) {
  if (std::fputs(line.c_str(), to_child_) < 0 || std::fputc('\n', to_child_) < 0
      || std::fflush(to_child_) != 0)
    throw OracleError(name() + ": write failed");
  std::string reply;
  char buf[4096];
  while (std::fgets(buf, sizeof(buf), from_child_) != nullptr) {
    reply += buf;
    if (!reply.empty() && reply.back() == '\n')
      return reply;
  }
  throw OracleError(name() + ": no reply");
}

double SubprocessOracle::energy(const MolecularGraph &g, const Coords &c) {
  auto req = encode_molecule(g, c, vocab_);
  req["op"] = "energy";
  const auto reply = nlohmann::json::parse(request(req.dump()));
  if (reply.contains("error"))
    throw OracleError(name() + ": " + reply["error"].get<std::string>());
  return reply.at("energy").get<double>();
}

Coords SubprocessOracle::minimize(const MolecularGraph &g, const Coords &c,
                                  int max_steps) {
  auto req = encode_molecule(g, c, vocab_);
  req["op"] = "minimize";
  req["max_steps"] = max_steps;
  const auto reply = nlohmann::json::parse(request(req.dump()));
  if (reply.contains("error"))
    throw OracleError(name() + ": " + reply["error"].get<std::string>());
  const auto &rows = reply.at("coords");
  if (static_cast<int>(rows.size()) != c.rows())
    throw OracleError(name() + ": coordinate count mismatch");
  Coords out(c.rows(), 3);
  for (int i = 0; i < c.rows(); ++i)
    for (int d = 0; d < 3; ++d)
      out(i, d) = rows[i][d].get<double>();
  return out;
}

std::unique_ptr<EnergyOracle> oracle_from_environment(const Vocabularies &vocab) {
  const char *spec = std::getenv("FLEXIFLOW_ENERGY_ORACLE");
  if (spec == nullptr || *spec == '\0')
    return nullptr;
  const std::string s(spec);
  if (s == "harmonic")
    return std::make_unique<HarmonicBondOracle>(vocab);
  if (s.rfind("cmd:", 0) == 0)
    return std::make_unique<SubprocessOracle>(s.substr(4), vocab);
  throw OracleError("FLEXIFLOW_ENERGY_ORACLE: unknown oracle \"" + s + "\"");
}

std::optional<double> strain(EnergyOracle *oracle, const MolecularGraph &g,
                             const Coords &c, int max_steps) {
  if (oracle == nullptr)
    return std::nullopt;
  try {
    const double before = oracle->energy(g, c);
    const double after = oracle->energy(g, oracle->minimize(g, c, max_steps));
    return before - after;
  } catch (const OracleError &) {
    return std::nullopt;
  } catch (const nlohmann::json::exception &) {
    return std::nullopt;
  }
}

}  // namespace flexiflow
