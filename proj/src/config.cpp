//
// SPDX-License-Identifier: Apache-2.0
//

#include "flexiflow/config.h"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace flexiflow {

std::vector<std::string> InterpolantConfig::validate() const {
  std::vector<std::string> errors;
  if (!(sigma >= 0.0))
    errors.emplace_back("interpolant.sigma must be >= 0");
  if (!(beta_alpha > 0.0) || !(beta_beta > 0.0))
    errors.emplace_back("interpolant beta parameters must be > 0");
  return errors;
}

ModelConfig ModelConfig::small() {
  ModelConfig c;
  c.n_layers = 6;
  c.d_message = c.d_message_hidden = 64;
  c.n_attn_heads = 12;
  return c;
}

ModelConfig ModelConfig::medium() {
  ModelConfig c;
  c.n_layers = 8;
  return c;
}

ModelConfig ModelConfig::large() { return {}; }

ModelConfig ModelConfig::preset(const std::string &name) {
  if (name == "small")
    return small();
  if (name == "medium")
    return medium();
  if (name == "large")
    return large();
  if (name == "tiny") {
    ModelConfig c;
    c.n_layers = 2;
    c.d_model = 32;
    c.d_edge = 16;
    c.d_coord = 8;
    c.d_message = c.d_message_hidden = 16;
    c.n_attn_heads = 4;
    c.time_embed_dim = 16;
    return c;
  }
  throw ConfigError("unknown model preset \"" + name + "\"");
}

std::vector<std::string> ModelConfig::validate() const {
  std::vector<std::string> errors;
  const std::vector<std::pair<const char *, int>> dims = {
    { "n_layers", n_layers },
    { "d_model", d_model },
    { "d_edge", d_edge },
    { "d_coord", d_coord },
    { "d_message", d_message },
    { "d_message_hidden", d_message_hidden },
    { "n_attn_heads", n_attn_heads },
    { "time_embed_dim", time_embed_dim },
    { "ff_mult", ff_mult },
    { "n_atom_types", n_atom_types },
    { "n_bond_types", n_bond_types },
    { "n_charge_types", n_charge_types },
  };
  for (const auto &[name, v]: dims)
    if (v <= 0)
      errors.push_back(std::string("model.") + name + " must be positive");
  if (n_attn_heads > 0 && d_model % n_attn_heads != 0)
    errors.emplace_back("model.d_model must be divisible by n_attn_heads");
  if (time_embed_dim % 2 != 0)
    errors.emplace_back("model.time_embed_dim must be even");
  if (fault != "none" && fault != "coord_bias")
    errors.emplace_back("model.fault must be none or coord_bias");
  return errors;
}

double TrainConfig::lr_at(long iteration) const {
  if (warmup_iters <= 0 || iteration >= warmup_iters)
    return learning_rate;
  const double frac = static_cast<double>(std::max(0L, iteration))
                      / static_cast<double>(warmup_iters);
  return learning_rate
         * (warmup_start_factor + (1.0 - warmup_start_factor) * frac);
}

std::vector<std::string> TrainConfig::validate() const {
  auto errors = model.validate();
  auto more = interpolant.validate();
  errors.insert(errors.end(), more.begin(), more.end());
  if (!(learning_rate > 0.0))
    errors.emplace_back("optimizer.learning_rate must be > 0");
  if (!(weight_decay >= 0.0))
    errors.emplace_back("optimizer.weight_decay must be >= 0");
  if (!(ema_decay >= 0.0 && ema_decay <= 1.0))
    errors.emplace_back("optimizer.ema_decay must lie in [0, 1]");
  if (!(warmup_start_factor > 0.0 && warmup_start_factor <= 1.0))
    errors.emplace_back("optimizer.warmup_start_factor must lie in (0, 1]");
  if (epochs < 1)
    errors.emplace_back("training.epochs must be >= 1");
  if (batch_atoms < 1)
    errors.emplace_back("training.batch_atoms must be >= 1");
  if (dtype != "float32" && dtype != "float64")
    errors.emplace_back("training.dtype must be float32 or float64");
  return errors;
}

// ---------------------------------------------------------------------------

namespace {
  void check_keys(const YAML::Node &node, const std::string &section,
                  const std::set<std::string> &allowed) {
    if (!node)
      return;
    if (!node.IsMap())
      throw ConfigError(section + ": expected a mapping");
    for (const auto &kv: node) {
      const auto key = kv.first.as<std::string>();
      if (allowed.count(key) == 0)
        throw ConfigError("unknown key \"" + (section.empty() ? key : section + "." + key)
                          + "\"");
    }
  }

  template <class T>
  void read(const YAML::Node &node, const char *key, T &out) {
    if (node && node[key]) {
      try {
        out = node[key].as<T>();
      } catch (const YAML::Exception &e) {
        throw ConfigError(std::string("bad value for \"") + key + "\": " + e.what());
      }
    }
  }
}  // namespace

TrainConfig parse_train_config(const std::string &yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception &e) {
    throw ConfigError(std::string("YAML: ") + e.what());
  }
  TrainConfig cfg;
  if (!root || root.IsNull())
    return cfg;
  check_keys(root, "", { "seed", "dataset", "out_dir", "model", "interpolant",
                         "optimizer", "training", "loss" });
  read(root, "seed", cfg.seed);
  read(root, "dataset", cfg.dataset);
  read(root, "out_dir", cfg.out_dir);

  if (const auto m = root["model"]) {
    check_keys(m, "model", { "preset", "n_layers", "d_model", "d_edge", "d_coord",
                             "d_message", "d_message_hidden", "n_attn_heads",
                             "time_embed_dim", "ff_mult", "n_atom_types",
                             "n_bond_types", "n_charge_types", "fault" });
    if (m["preset"])
      cfg.model = ModelConfig::preset(m["preset"].as<std::string>());
    read(m, "n_layers", cfg.model.n_layers);
    read(m, "d_model", cfg.model.d_model);
    read(m, "d_edge", cfg.model.d_edge);
    read(m, "d_coord", cfg.model.d_coord);
    read(m, "d_message", cfg.model.d_message);
    read(m, "d_message_hidden", cfg.model.d_message_hidden);
    read(m, "n_attn_heads", cfg.model.n_attn_heads);
    read(m, "time_embed_dim", cfg.model.time_embed_dim);
    read(m, "ff_mult", cfg.model.ff_mult);
    read(m, "n_atom_types", cfg.model.n_atom_types);
    read(m, "n_bond_types", cfg.model.n_bond_types);
    read(m, "n_charge_types", cfg.model.n_charge_types);
    read(m, "fault", cfg.model.fault);
  }
  if (const auto i = root["interpolant"]) {
    check_keys(i, "interpolant", { "sigma", "beta_alpha", "beta_beta" });
    read(i, "sigma", cfg.interpolant.sigma);
    read(i, "beta_alpha", cfg.interpolant.beta_alpha);
    read(i, "beta_beta", cfg.interpolant.beta_beta);
  }
  if (const auto o = root["optimizer"]) {
    check_keys(o, "optimizer", { "learning_rate", "weight_decay",
                                 "warmup_start_factor", "warmup_iters", "beta1",
                                 "beta2", "eps", "ema_decay" });
    read(o, "learning_rate", cfg.learning_rate);
    read(o, "weight_decay", cfg.weight_decay);
    read(o, "warmup_start_factor", cfg.warmup_start_factor);
    read(o, "warmup_iters", cfg.warmup_iters);
    read(o, "beta1", cfg.adam_beta1);
    read(o, "beta2", cfg.adam_beta2);
    read(o, "eps", cfg.adam_eps);
    read(o, "ema_decay", cfg.ema_decay);
  }
  if (const auto t = root["training"]) {
    check_keys(t, "training", { "epochs", "max_steps", "batch_atoms",
                                "include_representative_tuple", "dtype",
                                "checkpoint_every", "log_every" });
    read(t, "epochs", cfg.epochs);
    read(t, "max_steps", cfg.max_steps);
    read(t, "batch_atoms", cfg.batch_atoms);
    read(t, "include_representative_tuple", cfg.include_representative_tuple);
    read(t, "dtype", cfg.dtype);
    read(t, "checkpoint_every", cfg.checkpoint_every);
    read(t, "log_every", cfg.log_every);
  }
  if (const auto l = root["loss"]) {
    check_keys(l, "loss", { "coord", "atom", "charge", "bond", "adjacency", "align" });
    read(l, "coord", cfg.loss.coord);
    read(l, "atom", cfg.loss.atom);
    read(l, "charge", cfg.loss.charge);
    read(l, "bond", cfg.loss.bond);
    read(l, "adjacency", cfg.loss.adjacency);
    read(l, "align", cfg.loss.align);
  }

  if (auto errors = cfg.validate(); !errors.empty())
    throw ConfigError(errors.front());
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str());
}

std::string train_config_to_yaml(const TrainConfig &cfg) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "seed" << YAML::Value << cfg.seed;
  out << YAML::Key << "dataset" << YAML::Value << cfg.dataset;
  out << YAML::Key << "out_dir" << YAML::Value << cfg.out_dir;

  const auto &m = cfg.model;
  out << YAML::Key << "model" << YAML::Value << YAML::BeginMap
      << YAML::Key << "n_layers" << YAML::Value << m.n_layers
      << YAML::Key << "d_model" << YAML::Value << m.d_model
      << YAML::Key << "d_edge" << YAML::Value << m.d_edge
      << YAML::Key << "d_coord" << YAML::Value << m.d_coord
      << YAML::Key << "d_message" << YAML::Value << m.d_message
      << YAML::Key << "d_message_hidden" << YAML::Value << m.d_message_hidden
      << YAML::Key << "n_attn_heads" << YAML::Value << m.n_attn_heads
      << YAML::Key << "time_embed_dim" << YAML::Value << m.time_embed_dim
      << YAML::Key << "ff_mult" << YAML::Value << m.ff_mult
      << YAML::Key << "n_atom_types" << YAML::Value << m.n_atom_types
      << YAML::Key << "n_bond_types" << YAML::Value << m.n_bond_types
      << YAML::Key << "n_charge_types" << YAML::Value << m.n_charge_types
      << YAML::Key << "fault" << YAML::Value << m.fault << YAML::EndMap;

  out << YAML::Key << "interpolant" << YAML::Value << YAML::BeginMap
      << YAML::Key << "sigma" << YAML::Value << cfg.interpolant.sigma
      << YAML::Key << "beta_alpha" << YAML::Value << cfg.interpolant.beta_alpha
      << YAML::Key << "beta_beta" << YAML::Value << cfg.interpolant.beta_beta
      << YAML::EndMap;

  out << YAML::Key << "optimizer" << YAML::Value << YAML::BeginMap
      << YAML::Key << "learning_rate" << YAML::Value << cfg.learning_rate
      << YAML::Key << "weight_decay" << YAML::Value << cfg.weight_decay
      << YAML::Key << "warmup_start_factor" << YAML::Value << cfg.warmup_start_factor
      << YAML::Key << "warmup_iters" << YAML::Value << cfg.warmup_iters
      << YAML::Key << "beta1" << YAML::Value << cfg.adam_beta1
      << YAML::Key << "beta2" << YAML::Value << cfg.adam_beta2
      << YAML::Key << "eps" << YAML::Value << cfg.adam_eps
      << YAML::Key << "ema_decay" << YAML::Value << cfg.ema_decay << YAML::EndMap;

  out << YAML::Key << "training" << YAML::Value << YAML::BeginMap
      << YAML::Key << "epochs" << YAML::Value << cfg.epochs
      << YAML::Key << "max_steps" << YAML::Value << cfg.max_steps
      << YAML::Key << "batch_atoms" << YAML::Value << cfg.batch_atoms
      << YAML::Key << "include_representative_tuple" << YAML::Value
      << cfg.include_representative_tuple
      << YAML::Key << "dtype" << YAML::Value << cfg.dtype
      << YAML::Key << "checkpoint_every" << YAML::Value << cfg.checkpoint_every
      << YAML::Key << "log_every" << YAML::Value << cfg.log_every << YAML::EndMap;

  out << YAML::Key << "loss" << YAML::Value << YAML::BeginMap
      << YAML::Key << "coord" << YAML::Value << cfg.loss.coord
      << YAML::Key << "atom" << YAML::Value << cfg.loss.atom
      << YAML::Key << "charge" << YAML::Value << cfg.loss.charge
      << YAML::Key << "bond" << YAML::Value << cfg.loss.bond
      << YAML::Key << "adjacency" << YAML::Value << cfg.loss.adjacency
      << YAML::Key << "align" << YAML::Value << cfg.loss.align << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

nlohmann::json to_json(const ModelConfig &m) {
  return {
    { "n_layers", m.n_layers },
    { "d_model", m.d_model },
    { "d_edge", m.d_edge },
    { "d_coord", m.d_coord },
    { "d_message", m.d_message },
    { "d_message_hidden", m.d_message_hidden },
    { "n_attn_heads", m.n_attn_heads },
    { "time_embed_dim", m.time_embed_dim },
    { "ff_mult", m.ff_mult },
    { "n_atom_types", m.n_atom_types },
    { "n_bond_types", m.n_bond_types },
    { "n_charge_types", m.n_charge_types },
    { "fault", m.fault },
  };
}

ModelConfig model_config_from_json(const nlohmann::json &j) {
  ModelConfig m;
  m.n_layers = j.at("n_layers");
  m.d_model = j.at("d_model");
  m.d_edge = j.at("d_edge");
  m.d_coord = j.at("d_coord");
  m.d_message = j.at("d_message");
  m.d_message_hidden = j.at("d_message_hidden");
  m.n_attn_heads = j.at("n_attn_heads");
  m.time_embed_dim = j.at("time_embed_dim");
  m.ff_mult = j.at("ff_mult");
  m.n_atom_types = j.at("n_atom_types");
  m.n_bond_types = j.at("n_bond_types");
  m.n_charge_types = j.at("n_charge_types");
  m.fault = j.value("fault", "none");
  return m;
}

nlohmann::json to_json(const InterpolantConfig &c) {
  return { { "sigma", c.sigma }, { "beta_alpha", c.beta_alpha },
           { "beta_beta", c.beta_beta } };
}

InterpolantConfig interpolant_config_from_json(const nlohmann::json &j) {
  InterpolantConfig c;
  c.sigma = j.at("sigma");
  c.beta_alpha = j.at("beta_alpha");
  c.beta_beta = j.at("beta_beta");
  return c;
}

}  // namespace flexiflow
