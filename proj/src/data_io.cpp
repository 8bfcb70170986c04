//
// SPDX-License-Identifier: Apache-2.0
//

#include "flexiflow/data_io.h"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>
#include <zlib.h>

namespace flexiflow {

std::vector<int> Dataset::atom_count_histogram() const {
  std::vector<int> hist;
  for (const auto &g: molecules) {
    if (static_cast<int>(hist.size()) <= g.num_atoms())
      hist.resize(g.num_atoms() + 1, 0);
    ++hist[g.num_atoms()];
  }
  return hist;
}

std::size_t Dataset::num_tuples(bool include_representative) const {
  std::size_t total = 0;
  for (const auto &g: molecules)
    total += build_training_tuples(g, include_representative).size();
  return total;
}

int select_representative(std::span<const Coords> conformers) {
  if (conformers.empty())
    throw std::invalid_argument("select_representative: empty conformer set");
  Coords mean = Coords::Zero(conformers[0].rows(), 3);
  for (const auto &c: conformers)
    mean += c;
  mean /= static_cast<double>(conformers.size());

  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < conformers.size(); ++k) {
    const double d = (conformers[k] - mean).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

std::vector<TrainingTuple> build_training_tuples(const MolecularGraph &g,
                                                 bool include_representative) {
  std::vector<TrainingTuple> out;
  for (int k = 0; k < g.num_conformers(); ++k)
    if (include_representative || k != g.representative
        || g.num_conformers() == 1)
      out.emplace_back(g, k);
  return out;
}

std::vector<TrainingTuple> build_training_tuples(const Dataset &ds,
                                                 bool include_representative) {
  std::vector<TrainingTuple> out;
  for (const auto &g: ds.molecules) {
    auto t = build_training_tuples(g, include_representative);
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

double pooled_coordinate_std(std::span<const MolecularGraph> molecules) {
  double sum = 0.0, count = 0.0;
  for (const auto &g: molecules)
    for (const auto &c: g.conformers) {
      sum += c.sum();
      count += static_cast<double>(c.size());
    }
  if (count == 0.0)
    return 0.0;
  const double mean = sum / count;
  double sq = 0.0;
  for (const auto &g: molecules)
    for (const auto &c: g.conformers)
      sq += (c.array() - mean).square().sum();
  return std::sqrt(sq / count);
}

Dataset preprocess(std::vector<MolecularGraph> raw, const Vocabularies &vocab,
                   const ValenceTable &table, std::optional<double> scale,
                   PreprocessReport *report) {
  Dataset ds;
  ds.vocab = vocab;
  PreprocessReport local;
  PreprocessReport &rep = report != nullptr ? *report : local;

  for (std::size_t r = 0; r < raw.size(); ++r) {
    auto &g = raw[r];
    const std::string tag = "record " + std::to_string(r) + ": ";
    if (g.num_conformers() > 0 && g.representative >= g.num_conformers())
      g.representative = 0;
    if (auto errors = validate_graph(g, vocab); !errors.empty()) {
      rep.dropped.push_back(tag + "malformed (" + errors.front() + ")");
      continue;
    }
    if (g.num_atoms() == 0) {
      rep.dropped.push_back(tag + "no atoms");
      continue;
    }
    if (const int k = count_fragments(g); k != 1) {
      rep.dropped.push_back(tag + "fragmented (" + std::to_string(k)
                            + " components)");
      continue;
    }
    const auto stable = atom_stability(g, vocab, table);
    if (auto it = std::find(stable.begin(), stable.end(), false);
        it != stable.end()) {
      rep.dropped.push_back(tag + "unstable atom "
                            + std::to_string(it - stable.begin()));
      continue;
    }
    for (auto &c: g.conformers)
      center_coords(c);
    ds.molecules.push_back(std::move(g));
  }

  ds.scale = scale.value_or(pooled_coordinate_std(ds.molecules));
  if (!(ds.scale > 0.0) || !std::isfinite(ds.scale))
    ds.scale = 1.0;
  for (auto &g: ds.molecules) {
    for (auto &c: g.conformers)
      c /= ds.scale;
    g.representative = select_representative(g.conformers);
  }
  rep.kept = static_cast<int>(ds.molecules.size());
  return ds;
}

// ---------------------------------------------------------------------------
// Binary records
// ---------------------------------------------------------------------------

namespace {
  constexpr char kMagic[4] = { 'F', 'F', 'M', 'R' };

  void put_u32(std::vector<std::uint8_t> &out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b)
      out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  }

  std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t &pos) {
    if (pos + 4 > in.size())
      throw DatasetError("record truncated");
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b)
      v |= static_cast<std::uint32_t>(in[pos + b]) << (8 * b);
    pos += 4;
    return v;
  }

  std::uint8_t to_u8(int v, const char *what) {
    if (v < 0 || v > 255)
      throw DatasetError(std::string(what) + " index out of 8-bit range");
    return static_cast<std::uint8_t>(v);
  }

  std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    return static_cast<std::uint32_t>(
        ::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
  }

  std::vector<std::uint8_t> read_file(const std::filesystem::path &p) {
    std::ifstream in(p, std::ios::binary);
    if (!in)
      throw DatasetError("cannot open " + p.string());
    return { std::istreambuf_iterator<char>(in),
             std::istreambuf_iterator<char>() };
  }

  std::string record_name(std::size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "mol_%06zu.ffr", k);
    return buf;
  }
}  // namespace

std::vector<std::uint8_t> encode_record(const MolecularGraph &g) {
  const int n = g.num_atoms();
  const int m = g.num_conformers();
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kDatasetFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(n));
  put_u32(out, static_cast<std::uint32_t>(m));
  put_u32(out, static_cast<std::uint32_t>(g.representative));
  for (int v: g.atoms)
    out.push_back(to_u8(v, "atom"));
  for (int v: g.charges)
    out.push_back(to_u8(v, "charge"));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      out.push_back(g.bonds(i, j));
  for (const auto &c: g.conformers) {
    for (int i = 0; i < n; ++i) {
      for (int d = 0; d < 3; ++d) {
        const float f = static_cast<float>(c(i, d));
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(out, bits);
      }
    }
  }
  return out;
}

MolecularGraph decode_record(std::span<const std::uint8_t> in) {
  if (in.size() < 4 || std::memcmp(in.data(), kMagic, 4) != 0)
    throw DatasetError("bad record magic");
  std::size_t pos = 4;
  const auto version = get_u32(in, pos);
  if (version != kDatasetFormatVersion)
    throw DatasetError("record version " + std::to_string(version)
                       + " unsupported (expected "
                       + std::to_string(kDatasetFormatVersion) + ")");
  const int n = static_cast<int>(get_u32(in, pos));
  const int m = static_cast<int>(get_u32(in, pos));
  MolecularGraph g;
  g.representative = static_cast<int>(get_u32(in, pos));

  const std::size_t need = static_cast<std::size_t>(n) * 2
                           + static_cast<std::size_t>(n) * n
                           + static_cast<std::size_t>(m) * n * 12;
  if (in.size() - pos != need)
    throw DatasetError("record size mismatch");

  g.atoms.assign(in.begin() + pos, in.begin() + pos + n);
  pos += n;
  g.charges.assign(in.begin() + pos, in.begin() + pos + n);
  pos += n;
  g.bonds.resize(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      g.bonds(i, j) = in[pos++];
  for (int k = 0; k < m; ++k) {
    Coords c(n, 3);
    for (int i = 0; i < n; ++i) {
      for (int d = 0; d < 3; ++d) {
        const std::uint32_t bits = get_u32(in, pos);
        float f;
        std::memcpy(&f, &bits, 4);
        c(i, d) = f;
      }
    }
    g.conformers.push_back(std::move(c));
  }
  return g;
}

void write_dataset(const std::filesystem::path &dir, const Dataset &ds) {
  std::filesystem::create_directories(dir);
  nlohmann::json index;
  index["format_version"] = kDatasetFormatVersion;
  index["record_count"] = ds.molecules.size();
  index["vocabularies"] = {
    { "atom_types", ds.vocab.atom_types },
    { "bond_types", ds.vocab.bond_types },
    { "charge_types", ds.vocab.charge_types },
  };
  index["scale"] = ds.scale;
  index["records"] = nlohmann::json::array();
  for (std::size_t k = 0; k < ds.molecules.size(); ++k) {
    const auto bytes = encode_record(ds.molecules[k]);
    const auto name = record_name(k);
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char *>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out)
      throw DatasetError("cannot write " + (dir / name).string());
    index["records"].push_back({
        { "file", name },
        { "crc32", crc32_of(bytes) },
        { "n_atoms", ds.molecules[k].num_atoms() },
        { "n_conformers", ds.molecules[k].num_conformers() },
    });
  }
  std::ofstream out(dir / "index.json", std::ios::trunc);
  out << index.dump(2) << "\n";
  if (!out)
    throw DatasetError("cannot write " + (dir / "index.json").string());
}

Dataset read_dataset(const std::filesystem::path &dir) {
  std::ifstream in(dir / "index.json");
  if (!in)
    throw DatasetError("cannot open " + (dir / "index.json").string());
  nlohmann::json index;
  try {
    in >> index;
  } catch (const nlohmann::json::exception &e) {
    throw DatasetError(std::string("index.json: ") + e.what());
  }

  const int version = index.value("format_version", -1);
  if (version != kDatasetFormatVersion)
    throw DatasetError("dataset version " + std::to_string(version)
                       + " unsupported (expected "
                       + std::to_string(kDatasetFormatVersion) + ")");

  Dataset ds;
  const auto &voc = index.at("vocabularies");
  ds.vocab.atom_types = voc.at("atom_types").get<std::vector<std::string>>();
  ds.vocab.bond_types = voc.at("bond_types").get<std::vector<std::string>>();
  ds.vocab.charge_types = voc.at("charge_types").get<std::vector<int>>();
  ds.scale = index.at("scale").get<double>();

  const auto &records = index.at("records");
  const auto count = index.at("record_count").get<std::size_t>();
  if (records.size() != count)
    throw DatasetError("record_count " + std::to_string(count) + " but "
                       + std::to_string(records.size()) + " records listed");

  for (const auto &r: records) {
    const auto name = r.at("file").get<std::string>();
    const auto bytes = read_file(dir / name);
    if (crc32_of(bytes) != r.at("crc32").get<std::uint32_t>())
      throw DatasetError("checksum mismatch in " + name);
    auto g = decode_record(bytes);
    if (auto errors = validate_graph(g, ds.vocab); !errors.empty())
      throw DatasetError(name + ": " + errors.front());
    ds.molecules.push_back(std::move(g));
  }
  return ds;
}

}  // namespace flexiflow
