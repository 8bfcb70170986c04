//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef FLEXIFLOW_CONFIG_H_
#define FLEXIFLOW_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace flexiflow {

class ConfigError: public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct InterpolantConfig {
  double sigma = 0.2;
  double beta_alpha = 2.0;
  double beta_beta = 1.0;

  std::vector<std::string> validate() const;
};

struct ModelConfig {
  int n_layers = 12;
  int d_model = 384;
  int d_edge = 128;
  int d_coord = 64;
  int d_message = 128;
  int d_message_hidden = 128;
  int n_attn_heads = 32;
  int time_embed_dim = 64;
  /// Hidden width of the feed-forward MLPs as a multiple of d_model.
  int ff_mult = 4;
  int n_atom_types = 5;
  int n_bond_types = 5;
  int n_charge_types = 3;
  /// "none", or "coord_bias" to add a fixed vector to every lifted
  /// coordinate channel (breaks rotation equivariance; used by `verify`).
  std::string fault = "none";

  /// Small / Medium / Large model sizes: (6, 384, 64, 12), (8, 384, 128, 32)
  /// and (12, 384, 128, 32) as (layers, width, message width, heads).
  static ModelConfig small();
  static ModelConfig medium();
  static ModelConfig large();
  /// "small", "medium", "large" or "tiny" (2 layers, width 32).
  static ModelConfig preset(const std::string &name);

  std::vector<std::string> validate() const;
  bool operator==(const ModelConfig &) const = default;
};

struct LossWeights {
  double coord = 1.0;
  double atom = 1.0;
  double charge = 1.0;
  double bond = 1.0;
  double adjacency = 1.0;
  double align = 1.0;
};

struct TrainConfig {
  ModelConfig model;
  InterpolantConfig interpolant;
  LossWeights loss;

  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double warmup_start_factor = 1e-2;
  int warmup_iters = 10000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double ema_decay = 0.999;

  int epochs = 1;
  /// Stop after this many optimizer steps; negative means no limit.
  int max_steps = -1;
  /// Upper bound on the total atom count of one batch.
  int batch_atoms = 256;
  bool include_representative_tuple = true;
  /// "float32" or "float64".
  std::string dtype = "float32";
  std::uint64_t seed = 42;

  std::string dataset;
  std::string out_dir = "run";
  int checkpoint_every = 1000;
  int log_every = 10;

  /// Linear warmup from learning_rate * warmup_start_factor at iteration 0
  /// to learning_rate at warmup_iters, constant afterwards.
  double lr_at(long iteration) const;

  std::vector<std::string> validate() const;
};

/// Nested YAML sections: model, interpolant, optimizer, training, loss, plus
/// top-level seed, dataset and out_dir. Unknown keys are errors.
TrainConfig parse_train_config(const std::string &yaml_text);
TrainConfig load_train_config(const std::filesystem::path &path);
std::string train_config_to_yaml(const TrainConfig &cfg);

nlohmann::json to_json(const ModelConfig &cfg);
ModelConfig model_config_from_json(const nlohmann::json &j);
nlohmann::json to_json(const InterpolantConfig &cfg);
InterpolantConfig interpolant_config_from_json(const nlohmann::json &j);

}  // namespace flexiflow

#endif  // FLEXIFLOW_CONFIG_H_
