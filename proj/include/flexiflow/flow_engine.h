//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef FLEXIFLOW_FLOW_ENGINE_H_
#define FLEXIFLOW_FLOW_ENGINE_H_

#include <functional>
#include <vector>

#include <Eigen/Dense>
#include <torch/torch.h>

#include "flexiflow/config.h"
#include "flexiflow/rng.h"

namespace flexiflow {

/// t ~ Beta(beta_alpha, beta_beta).
double sample_time(const InterpolantConfig &cfg, Rng &rng);

/// t * x1 + (1 - t) * x0 + sigma * eps with eps ~ N(0, I). No centering.
torch::Tensor interpolate_coords(const torch::Tensor &x0, const torch::Tensor &x1,
                                 double t, double sigma, Rng &rng);

/// The straight-line field x1 - x0.
torch::Tensor target_velocity(const torch::Tensor &x0, const torch::Tensor &x1);

/// Elementwise: a1 with probability t, else a0.
torch::Tensor cat_interp(double t, const torch::Tensor &a0,
                         const torch::Tensor &a1, Rng &rng);

/// cat_interp on the upper triangle of [..., N, N] bond matrices, mirrored,
/// with a zero diagonal.
torch::Tensor cat_interp_symmetric(double t, const torch::Tensor &b0,
                                   const torch::Tensor &b1, Rng &rng);

/// x_t + dt * (x_hat - x_t) / (1 - t), with dt clamped to 1 - t. With
/// `recenter` the result is projected to zero centroid over the atom axis
/// (second to last), honoring `mask` when given. Throws when t >= 1.
torch::Tensor euler_coord_step(const torch::Tensor &x_t,
                               const torch::Tensor &x_hat, double t, double dt,
                               const torch::Tensor &mask = {},
                               bool recenter = true);

/// Each element jumps with probability min(1, dt / (1 - t)) to a draw from
/// its row of p_hat ([..., K]); otherwise keeps a_t. Throws when t >= 1 or
/// a row does not sum to 1 within 1e-6.
torch::Tensor cat_update(const torch::Tensor &p_hat, const torch::Tensor &a_t,
                         double t, double dt, Rng &rng);

/// cat_update on the upper triangle of [..., N, N, K] / [..., N, N], mirrored.
torch::Tensor cat_update_symmetric(const torch::Tensor &p_hat,
                                   const torch::Tensor &b_t, double t,
                                   double dt, Rng &rng);

/// Uniform categorical draws in [0, k).
torch::Tensor uniform_categorical(at::IntArrayRef shape, int64_t k, Rng &rng);

/// Symmetric uniform bond draws with a zero diagonal.
torch::Tensor uniform_categorical_symmetric(int64_t batch, int64_t n, int64_t k,
                                            Rng &rng);

// ---------------------------------------------------------------------------
// Block-Jacobian harness
// ---------------------------------------------------------------------------

/// One block of a flow: maps the full input vector to that block's outputs.
using BlockMap = std::function<Eigen::VectorXd(const Eigen::VectorXd &)>;

struct JacobianReport {
  double det_full = 0.0;
  double det_blocks = 0.0;
  std::vector<double> block_dets;
  /// Largest |J_ij| with i and j in different blocks.
  double max_offdiag = 0.0;
};

/// Central-difference Jacobian of f at z.
Eigen::MatrixXd finite_difference_jacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd &)> &f,
    const Eigen::VectorXd &z, double h = 1e-5);

/// Evaluates the stacked flow's Jacobian at z. Block b owns the consecutive
/// input and output coordinates given by block_sizes[b]. Throws on
/// non-finite derivatives.
JacobianReport jacobian_block_check(const std::vector<BlockMap> &blocks,
                                    const std::vector<int> &block_sizes,
                                    const Eigen::VectorXd &z, double h = 1e-5);

/// psi(z)_i = z_i^2 + prod_{k in block(i)} z_k, on n_blocks blocks.
std::vector<BlockMap> toy_block_flow(int n_blocks, int block_size);

}  // namespace flexiflow

#endif  // FLEXIFLOW_FLOW_ENGINE_H_
