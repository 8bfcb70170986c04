//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef FLEXIFLOW_SAMPLER_H_
#define FLEXIFLOW_SAMPLER_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "flexiflow/batch.h"
#include "flexiflow/config.h"
#include "flexiflow/core_types.h"
#include "flexiflow/net.h"
#include "flexiflow/rng.h"

namespace flexiflow {

/// Maps a noisy state to predictions. Lets tests substitute oracle models.
using Predictor = std::function<ModelOutput(const MolBatch &)>;

/// Evaluation-mode, no-grad wrapper around a network.
Predictor network_predictor(FlexiFlowNet net);

enum class SampleMode { kFresh, kFixedX };

/// t = 0 state for one molecule. x, atoms, charges and bonds come from
/// `x_rng`, y from `y_rng` (pass the same stream twice for fresh sampling).
/// Coordinates are projected to zero centroid.
MolBatch sample_prior(int64_t n_atoms, const ModelConfig &cfg, Rng &x_rng,
                      Rng &y_rng, torch::ScalarType dtype = torch::kFloat32);

struct SampleOptions {
  int n_steps = 100;
  /// Coordinates are multiplied by this on output.
  double scale = 1.0;
  torch::ScalarType dtype = torch::kFloat32;
};

/// Euler integration of a batch of priors. Categorical jumps of member b use
/// streams[b]. With `share_x` every member carries the same x-branch state,
/// driven by member 0's predictions and stream. Returns one graph per member
/// holding the x conformer then the y conformer; the final categories are the
/// argmax of the last x-branch logits. `calls` receives the model call count.
std::vector<MolecularGraph> integrate(const Predictor &predict, MolBatch state,
                                      std::span<Rng> streams,
                                      const SampleOptions &opts,
                                      bool share_x = false, int *calls = nullptr);

/// One molecule. In kFixedX mode the x noise, categorical prior and all
/// categorical jumps come from Rng(fixed_seed) and only y depends on `rng`.
MolecularGraph generate(const Predictor &predict, const ModelConfig &cfg,
                        int64_t n_atoms, const SampleOptions &opts,
                        SampleMode mode, std::uint64_t fixed_seed, Rng &rng,
                        int *calls = nullptr);

/// Fresh samples for several molecules in one padded batch; each member owns
/// a stream drawn from `rng`.
std::vector<MolecularGraph> generate_batch(const Predictor &predict,
                                           const ModelConfig &cfg,
                                           std::span<const int> atom_counts,
                                           const SampleOptions &opts, Rng &rng);

/// One graph with m + 1 conformers: the x conformer (representative, index
/// 0) followed by m y conformers sharing the fixed x noise from fixed_seed.
MolecularGraph generate_ensemble(const Predictor &predict, const ModelConfig &cfg,
                                 int64_t n_atoms, int m, const SampleOptions &opts,
                                 std::uint64_t fixed_seed, Rng &rng);

/// Draws n with probability proportional to hist[n].
int sample_atom_count(std::span<const int> hist, Rng &rng);

/// "<stem>_s<seed>_nfe<steps>.<ext>"
std::string sample_file_name(const std::string &stem, std::uint64_t seed,
                             int n_steps, const std::string &ext);

}  // namespace flexiflow

#endif  // FLEXIFLOW_SAMPLER_H_
