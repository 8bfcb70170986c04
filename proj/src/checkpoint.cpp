//
// SPDX-License-Identifier: Apache-2.0
//

#include "flexiflow/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>

namespace flexiflow {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {
  constexpr char kMagic[4] = { 'F', 'F', 'C', 'K' };

  template <class T>
  void put(std::ostream &out, T v) {
    out.write(reinterpret_cast<const char *>(&v), sizeof v);
  }

  template <class T>
  T get(std::istream &in) {
    T v{};
    in.read(reinterpret_cast<char *>(&v), sizeof v);
    if (!in)
      throw CheckpointError("truncated checkpoint");
    return v;
  }
}  // namespace

void save_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt) {
  nlohmann::json header;
  header["version"] = kCheckpointVersion;
  header["model"] = to_json(ckpt.model);
  header["interpolant"] = to_json(ckpt.interpolant);
  header["vocabularies"] = {
    { "atom_types", ckpt.vocab.atom_types },
    { "bond_types", ckpt.vocab.bond_types },
    { "charge_types", ckpt.vocab.charge_types },
  };
  header["scale"] = ckpt.scale;
  header["atom_histogram"] = ckpt.atom_histogram;
  header["seed"] = ckpt.seed;
  header["iteration"] = ckpt.iteration;
  header["epoch"] = ckpt.epoch;
  header["cursor"] = ckpt.cursor;
  header["extra"] = ckpt.extra;

  std::vector<torch::Tensor> blobs;
  auto &index = header["tensors"] = nlohmann::json::array();
  for (const auto &[group, tensors]: ckpt.groups)
    for (const auto &[name, t]: tensors) {
      index.push_back({ { "group", group },
                        { "name", name },
                        { "shape", t.sizes().vec() } });
      blobs.push_back(t.detach().to(torch::kFloat64).contiguous());
    }

  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw CheckpointError("cannot write " + tmp);
    const auto text = header.dump();
    out.write(kMagic, 4);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto &b: blobs)
      out.write(reinterpret_cast<const char *>(b.data_ptr<double>()),
                static_cast<std::streamsize>(b.numel() * sizeof(double)));
    if (!out)
      throw CheckpointError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw CheckpointError("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError(path.string() + " is not a checkpoint");
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint version " + std::to_string(version)
                          + " unsupported (expected "
                          + std::to_string(kCheckpointVersion) + ")");
  const auto len = get<std::uint64_t>(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in)
    throw CheckpointError("truncated checkpoint header");

  Checkpoint c;
  try {
    const auto h = nlohmann::json::parse(text);
    c.model = model_config_from_json(h.at("model"));
    c.interpolant = interpolant_config_from_json(h.at("interpolant"));
    const auto &v = h.at("vocabularies");
    c.vocab.atom_types = v.at("atom_types").get<std::vector<std::string>>();
    c.vocab.bond_types = v.at("bond_types").get<std::vector<std::string>>();
    c.vocab.charge_types = v.at("charge_types").get<std::vector<int>>();
    c.scale = h.at("scale").get<double>();
    c.atom_histogram = h.at("atom_histogram").get<std::vector<int>>();
    c.seed = h.at("seed").get<std::uint64_t>();
    c.iteration = h.at("iteration").get<long>();
    c.epoch = h.at("epoch").get<int>();
    c.cursor = h.at("cursor").get<long>();
    c.extra = h.value("extra", nlohmann::json::object());
    for (const auto &e: h.at("tensors")) {
      const auto shape = e.at("shape").get<std::vector<int64_t>>();
      auto t = torch::empty(shape, torch::kFloat64);
      in.read(reinterpret_cast<char *>(t.data_ptr<double>()),
              static_cast<std::streamsize>(t.numel() * sizeof(double)));
      if (!in)
        throw CheckpointError("truncated tensor data");
      c.groups[e.at("group").get<std::string>()][e.at("name").get<std::string>()] = t;
    }
  } catch (const nlohmann::json::exception &e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  }
  return c;
}

TensorGroup named_parameters_of(const torch::nn::Module &m) {
  TensorGroup g;
  for (const auto &item: m.named_parameters())
    g[item.key()] = item.value().detach().clone();
  return g;
}

void load_parameters(torch::nn::Module &m, const TensorGroup &group) {
  torch::NoGradGuard guard;
  auto params = m.named_parameters();
  if (params.size() != group.size())
    throw CheckpointError("parameter count mismatch: model has "
                          + std::to_string(params.size()) + ", checkpoint "
                          + std::to_string(group.size()));
  for (auto &item: params) {
    const auto it = group.find(item.key());
    if (it == group.end())
      throw CheckpointError("checkpoint lacks parameter " + item.key());
    if (it->second.sizes() != item.value().sizes())
      throw CheckpointError("shape mismatch for " + item.key());
    item.value().copy_(it->second);
  }
}

}  // namespace flexiflow
