//
// SPDX-License-Identifier: Apache-2.0
//

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "flexiflow/data_io.h"

namespace flexiflow {
namespace {
  std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
      return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  int field_int(const std::string &line, std::size_t pos, std::size_t len) {
    if (pos >= line.size())
      return 0;
    const auto f = trim(line.substr(pos, len));
    return f.empty() ? 0 : std::stoi(f);
  }

  double field_double(const std::string &line, std::size_t pos,
                      std::size_t len) {
    return std::stod(trim(line.substr(pos, len)));
  }

  /// Atom-block charge code: 1..3 -> +3..+1, 5..7 -> -1..-3.
  int charge_from_code(int code) {
    return code >= 1 && code <= 7 && code != 4 ? 4 - code : 0;
  }

  struct RawRecord {
    std::vector<std::string> elements;
    std::vector<int> charges;
    std::vector<std::array<int, 3>> bonds;  // 0-based i, j, type
    Coords coords;
  };

  /// Reads lines up to and including "$$$$". False at end of input.
  bool next_block(std::istream &in, std::vector<std::string> &lines) {
    lines.clear();
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r')
        line.pop_back();
      if (line.rfind("$$$$", 0) == 0)
        return true;
      lines.push_back(line);
    }
    return std::any_of(lines.begin(), lines.end(),
                       [](const std::string &l) { return !trim(l).empty(); });
  }

  RawRecord parse_block(const std::vector<std::string> &lines) {
    if (lines.size() < 4)
      throw std::runtime_error("missing header or counts line");
    const auto &counts = lines[3];
    if (counts.find("V3000") != std::string::npos)
      throw std::runtime_error("V3000 molfiles are not supported");
    const int n_atoms = field_int(counts, 0, 3);
    const int n_bonds = field_int(counts, 3, 3);
    if (lines.size() < static_cast<std::size_t>(4 + n_atoms + n_bonds))
      throw std::runtime_error("truncated atom or bond block");

    RawRecord r;
    r.coords.resize(n_atoms, 3);
    for (int i = 0; i < n_atoms; ++i) {
      const auto &l = lines[4 + i];
      if (l.size() < 34)
        throw std::runtime_error("short atom line " + std::to_string(i + 1));
      r.coords(i, 0) = field_double(l, 0, 10);
      r.coords(i, 1) = field_double(l, 10, 10);
      r.coords(i, 2) = field_double(l, 20, 10);
      r.elements.push_back(trim(l.substr(31, 3)));
      r.charges.push_back(charge_from_code(field_int(l, 36, 3)));
    }
    for (int b = 0; b < n_bonds; ++b) {
      const auto &l = lines[4 + n_atoms + b];
      const int i = field_int(l, 0, 3) - 1;
      const int j = field_int(l, 3, 3) - 1;
      const int t = field_int(l, 6, 3);
      if (i < 0 || j < 0 || i >= n_atoms || j >= n_atoms || i == j)
        throw std::runtime_error("bad bond line " + std::to_string(b + 1));
      r.bonds.push_back({ i, j, t });
    }

    bool chg_seen = false;
    for (std::size_t k = 4 + n_atoms + n_bonds; k < lines.size(); ++k) {
      const auto &l = lines[k];
      if (l.rfind("M  END", 0) == 0)
        break;
      if (l.rfind("M  CHG", 0) != 0)
        continue;
      if (!chg_seen) {
        std::fill(r.charges.begin(), r.charges.end(), 0);
        chg_seen = true;
      }
      const int entries = field_int(l, 6, 3);
      for (int e = 0; e < entries; ++e) {
        const int atom = field_int(l, 9 + 8 * e + 1, 3) - 1;
        const int value = field_int(l, 9 + 8 * e + 5, 3);
        if (atom < 0 || atom >= n_atoms)
          throw std::runtime_error("M  CHG atom out of range");
        r.charges[atom] = value;
      }
    }
    return r;
  }

  bool same_graph(const MolecularGraph &a, const MolecularGraph &b) {
    return a.atoms == b.atoms && a.charges == b.charges && a.bonds == b.bonds;
  }
}  // namespace

std::vector<MolecularGraph> read_sdf(std::istream &in,
                                     const Vocabularies &vocab,
                                     std::vector<std::string> *warnings) {
  std::vector<MolecularGraph> out;
  std::vector<std::string> lines;
  int record = 0;
  auto warn = [&](const std::string &msg) {
    if (warnings != nullptr)
      warnings->push_back("sdf record " + std::to_string(record) + ": " + msg);
  };

  while (next_block(in, lines)) {
    RawRecord raw;
    try {
      raw = parse_block(lines);
    } catch (const std::exception &e) {
      warn(e.what());
      ++record;
      continue;
    }

    const int n = static_cast<int>(raw.elements.size());
    MolecularGraph g;
    g.bonds = BondMatrix::Zero(n, n);
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      const auto a = vocab.atom_index(raw.elements[i]);
      const auto c = vocab.charge_index(raw.charges[i]);
      if (!a) {
        warn("element " + raw.elements[i] + " not in vocabulary");
        ok = false;
      } else if (!c) {
        warn("charge " + std::to_string(raw.charges[i]) + " not in vocabulary");
        ok = false;
      } else {
        g.atoms.push_back(*a);
        g.charges.push_back(*c);
      }
    }
    for (const auto &[i, j, t]: raw.bonds) {
      if (!ok)
        break;
      if (t < 1 || t >= vocab.num_bond_types()) {
        warn("bond type " + std::to_string(t) + " not in vocabulary");
        ok = false;
      } else {
        g.set_bond(i, j, static_cast<BondType>(t));
      }
    }
    ++record;
    if (!ok)
      continue;

    if (!out.empty() && same_graph(out.back(), g)) {
      out.back().conformers.push_back(std::move(raw.coords));
    } else {
      g.conformers.push_back(std::move(raw.coords));
      out.push_back(std::move(g));
    }
  }
  return out;
}

std::vector<MolecularGraph> read_sdf(const std::filesystem::path &path,
                                     const Vocabularies &vocab,
                                     std::vector<std::string> *warnings) {
  std::ifstream in(path);
  if (!in)
    throw DatasetError("cannot open " + path.string());
  return read_sdf(in, vocab, warnings);
}

void write_sdf_record(std::ostream &out, const MolecularGraph &g,
                      const Coords &coords, const Vocabularies &vocab,
                      const std::string &title) {
  const int n = g.num_atoms();
  std::vector<std::array<int, 3>> bonds;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (g.bonds(i, j) != 0)
        bonds.push_back({ i + 1, j + 1, g.bonds(i, j) });

  char buf[128];
  out << title << "\n  flexiflow\n\n";
  std::snprintf(buf, sizeof(buf), "%3d%3d  0  0  0  0  0  0  0  0999 V2000\n",
                n, static_cast<int>(bonds.size()));
  out << buf;
  for (int i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof(buf),
                  "%10.4f%10.4f%10.4f %-3s 0  0  0  0  0  0  0  0  0  0  0  0\n",
                  coords(i, 0), coords(i, 1), coords(i, 2),
                  vocab.atom_types.at(g.atoms[i]).c_str());
    out << buf;
  }
  for (const auto &[i, j, t]: bonds) {
    std::snprintf(buf, sizeof(buf), "%3d%3d%3d  0\n", i, j, t);
    out << buf;
  }

  std::vector<std::pair<int, int>> charged;
  for (int i = 0; i < n; ++i)
    if (const int q = vocab.charge_types.at(g.charges[i]); q != 0)
      charged.emplace_back(i + 1, q);
  for (std::size_t k = 0; k < charged.size(); k += 8) {
    const std::size_t cnt = std::min<std::size_t>(8, charged.size() - k);
    std::snprintf(buf, sizeof(buf), "M  CHG%3zu", cnt);
    out << buf;
    for (std::size_t e = 0; e < cnt; ++e) {
      std::snprintf(buf, sizeof(buf), " %3d %3d", charged[k + e].first,
                    charged[k + e].second);
      out << buf;
    }
    out << "\n";
  }
  out << "M  END\n$$$$\n";
}

void write_xyz_record(std::ostream &out, const MolecularGraph &g,
                      const Coords &coords, const Vocabularies &vocab,
                      const std::string &comment) {
  char buf[128];
  out << g.num_atoms() << "\n" << comment << "\n";
  for (int i = 0; i < g.num_atoms(); ++i) {
    std::snprintf(buf, sizeof(buf), "%-2s %14.8f %14.8f %14.8f\n",
                  vocab.atom_types.at(g.atoms[i]).c_str(), coords(i, 0),
                  coords(i, 1), coords(i, 2));
    out << buf;
  }
}

}  // namespace flexiflow
