//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef FLEXIFLOW_NET_H_
#define FLEXIFLOW_NET_H_

#include <stdexcept>
#include <string>
#include <utility>

#include <torch/torch.h>

#include "flexiflow/batch.h"
#include "flexiflow/config.h"
#include "flexiflow/rng.h"

namespace flexiflow {

class DivergenceError: public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Hidden state of both branches. Coordinates are B x N x 3 x C: rotations
/// act on the spatial axis, linear maps on the channel axis.
struct LayerState {
  torch::Tensor h_x, h_y;  // B x N x d
  torch::Tensor e_x, e_y;  // B x N x N x d_edge
  torch::Tensor x, y;      // B x N x 3 x C
  torch::Tensor mask;      // B x N bool
  torch::Tensor pair;      // B x N x N bool, i != j
};

/// sqrt(sum of squares over `dim` + 1e-12).
torch::Tensor safe_norm(const torch::Tensor &v, int64_t dim, bool keepdim = false);

/// gamma_c * c / (RMS over real atoms of |c_i| + 1e-6), per channel.
class EquivariantNormImpl: public torch::nn::Module {
public:
  explicit EquivariantNormImpl(int channels);
  torch::Tensor forward(const torch::Tensor &c, const torch::Tensor &mask = {});

  torch::Tensor gamma;
};
TORCH_MODULE(EquivariantNorm);

/// Invariant and coordinate feed-forward updates, weights shared between
/// the x and y branches.
class FeedForwardImpl: public torch::nn::Module {
public:
  explicit FeedForwardImpl(const ModelConfig &cfg);
  void forward(torch::Tensor &h, torch::Tensor &c, const torch::Tensor &mask);

  torch::nn::LayerNorm norm_h{ nullptr };
  EquivariantNorm norm_c{ nullptr };
  torch::nn::Sequential phi{ nullptr };
  torch::nn::Sequential psi{ nullptr };
  torch::nn::Linear w_f{ nullptr };
  torch::nn::Linear w_g{ nullptr };
};
TORCH_MODULE(FeedForward);

/// Split message tensors. Each part is B x N x N x (heads | C | d_edge).
struct Messages {
  torch::Tensor inv, equi, edge;
};

/// One network layer: feed-forward, messages, graph attention.
class FlexiFlowLayerImpl: public torch::nn::Module {
public:
  explicit FlexiFlowLayerImpl(const ModelConfig &cfg);

  void forward(LayerState &s);
  /// Messages from the normalized features of the current state.
  std::pair<Messages, Messages> messages(const LayerState &s);
  void attend(LayerState &s, const Messages &wx, const Messages &wy);

  int heads, channels, d_edge;
  FeedForward ff{ nullptr };
  torch::nn::LayerNorm norm_h{ nullptr };
  torch::nn::LayerNorm norm_e{ nullptr };
  EquivariantNorm norm_c{ nullptr };
  torch::nn::Linear w_h{ nullptr };
  torch::nn::Sequential mlp_x{ nullptr };
  torch::nn::Sequential mlp_y{ nullptr };
  torch::nn::Linear w_v{ nullptr };
  torch::nn::Linear w_z{ nullptr };
  torch::nn::Linear w_r{ nullptr };
  torch::nn::Linear w_s{ nullptr };

private:
  Messages split(const torch::Tensor &omega) const;
};
TORCH_MODULE(FlexiFlowLayer);

/// Edge update from distances and inner products of the coordinate
/// channels; the output is symmetrized.
class EdgeUpdateImpl: public torch::nn::Module {
public:
  explicit EdgeUpdateImpl(const ModelConfig &cfg);
  torch::Tensor forward(const torch::Tensor &c, const torch::Tensor &h,
                        const torch::Tensor &e, const torch::Tensor &mask,
                        const torch::Tensor &pair);

  torch::nn::LayerNorm norm_h{ nullptr };
  torch::nn::LayerNorm norm_e{ nullptr };
  EquivariantNorm norm_c{ nullptr };
  torch::nn::Linear w_h{ nullptr };
  torch::nn::Sequential mlp{ nullptr };
};
TORCH_MODULE(EdgeUpdate);

class FlexiFlowNetImpl: public torch::nn::Module {
public:
  explicit FlexiFlowNetImpl(const ModelConfig &cfg);

  /// Full pass. Throws DivergenceError naming the stage on non-finite
  /// state, std::invalid_argument on out-of-vocabulary indices.
  ModelOutput forward(const MolBatch &state);

  LayerState featurize(const MolBatch &state);
  ModelOutput refine(LayerState &s);

  const ModelConfig &config() const { return cfg_; }

  torch::nn::Sequential embed_h{ nullptr };
  torch::nn::Sequential embed_e{ nullptr };
  torch::nn::Linear lift{ nullptr };
  torch::nn::ModuleList layers{ nullptr };
  FeedForward final_ff{ nullptr };
  EdgeUpdate edge_update{ nullptr };
  torch::nn::Linear coord_out{ nullptr };
  torch::nn::LayerNorm norm_atom{ nullptr };
  torch::nn::LayerNorm norm_bond{ nullptr };
  torch::nn::Sequential atom_head{ nullptr };
  torch::nn::Sequential charge_head{ nullptr };
  torch::nn::Sequential bond_head{ nullptr };

private:
  ModelConfig cfg_;
};
TORCH_MODULE(FlexiFlowNet);

/// Sinusoidal embedding of 1000 t, B -> B x dim.
torch::Tensor time_embedding(const torch::Tensor &t, int dim);

/// Builds a network with torch's RNG seeded from `seed`.
FlexiFlowNet make_network(const ModelConfig &cfg, std::uint64_t seed);

int64_t parameter_count(const torch::nn::Module &m);

/// Overwrites every parameter with a draw from `rng`: gains near 1, other
/// weights ~ N(0, scale^2 / fan_in). Used to exercise layers that start at
/// zero.
void randomize_parameters(torch::nn::Module &m, Rng &rng, double scale = 1.0);

}  // namespace flexiflow

#endif  // FLEXIFLOW_NET_H_
