//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef FLEXIFLOW_VERIFY_H_
#define FLEXIFLOW_VERIFY_H_

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <torch/torch.h>

#include "flexiflow/batch.h"
#include "flexiflow/config.h"
#include "flexiflow/net.h"
#include "flexiflow/rng.h"

namespace flexiflow {

struct CheckResult {
  std::string name;
  bool pass = false;
  /// The measured statistic and the bound it was held to.
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
};

/// Random state with the given atom counts (padded), uniform categories,
/// symmetric bonds, zero-centroid Gaussian coordinates and t ~ U(0, 1).
MolBatch random_state(const ModelConfig &cfg, const std::vector<int> &atom_counts,
                      Rng &rng, torch::ScalarType dtype = torch::kFloat64);

/// Uniform random proper rotation (unit quaternion).
Eigen::Matrix3d random_rotation(Rng &rng);

/// Applies R to the last axis of [..., 3] coordinates.
torch::Tensor rotate(const torch::Tensor &coords, const Eigen::Matrix3d &r);

/// max |a - b| / max |b| (absolute when b is all zero).
double max_relative_error(const torch::Tensor &a, const torch::Tensor &b);

/// Permutes the atom axis of every field of a batch (bonds on both axes).
MolBatch permute_batch(const MolBatch &s, const torch::Tensor &perm);

/// Two layers, width 32.
ModelConfig verify_model_config();
/// Two layers, width 8.
ModelConfig gradient_model_config();

/// Independent rotations of x and y: coordinates follow, logits stay put.
CheckResult check_rotation_equivariance(const ModelConfig &cfg,
                                        torch::ScalarType dtype, int trials,
                                        std::uint64_t seed, double tol);

CheckResult check_permutation_equivariance(const ModelConfig &cfg, int trials,
                                           int max_atoms, std::uint64_t seed,
                                           double tol);

/// x-branch outputs bit-identical when only y changes.
CheckResult check_y_independence(const ModelConfig &cfg, int trials,
                                 std::uint64_t seed);

/// Toy block flow at random points in [0.5, 1.5]^8.
CheckResult check_jacobian_factorization(int points, std::uint64_t seed,
                                         double det_tol, double offdiag_tol);

/// Analytic vs central-difference gradients of the full loss on a 3-atom
/// instance at float64, for every parameter entry. Passes when at least
/// `min_fraction` of the entries agree within `tol` relative (entries where
/// both values are below 1e-9 count as agreeing).
CheckResult check_gradients(const ModelConfig &cfg, std::uint64_t seed,
                            double tol, double min_fraction);

/// Every suite above at default sizes. With cfg.fault set, the equivariance
/// checks are expected to fail.
std::vector<CheckResult> run_verify_suite(const ModelConfig &cfg,
                                          std::uint64_t seed);

}  // namespace flexiflow

#endif  // FLEXIFLOW_VERIFY_H_
