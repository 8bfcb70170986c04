//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef FLEXIFLOW_CHECKPOINT_H_
#define FLEXIFLOW_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "flexiflow/config.h"
#include "flexiflow/core_types.h"

namespace flexiflow {

class CheckpointError: public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kCheckpointVersion = 1;

/// Named tensors keyed by parameter path ("layers.0.ff.phi.0.weight").
using TensorGroup = std::map<std::string, torch::Tensor>;

/// File layout: "FFCK", u32 version, u64 header length, JSON header, then
/// the tensors as little-endian float64 in header order.
struct Checkpoint {
  ModelConfig model;
  InterpolantConfig interpolant;
  Vocabularies vocab;
  double scale = 1.0;
  std::vector<int> atom_histogram;
  std::uint64_t seed = 0;
  long iteration = 0;
  int epoch = 0;
  long cursor = 0;
  /// "params", "ema", "adam_m", "adam_v".
  std::map<std::string, TensorGroup> groups;
  /// Free-form extras (training config text, last losses).
  nlohmann::json extra = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt);
Checkpoint load_checkpoint(const std::filesystem::path &path);

TensorGroup named_parameters_of(const torch::nn::Module &m);
/// Copies `group` into the module's parameters. Missing or extra keys and
/// shape mismatches throw CheckpointError.
void load_parameters(torch::nn::Module &m, const TensorGroup &group);

}  // namespace flexiflow

#endif  // FLEXIFLOW_CHECKPOINT_H_
