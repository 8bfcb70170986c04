//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef FLEXIFLOW_BATCH_H_
#define FLEXIFLOW_BATCH_H_

#include <span>

#include <torch/torch.h>

#include "flexiflow/core_types.h"
#include "flexiflow/rng.h"

namespace flexiflow {

/// A padded batch of molecules. At time t it is the noisy state fed to the
/// network; with t = 1 and clean data it holds the training targets.
///
///   atoms, charges: B x N int64      bonds: B x N x N int64 (symmetric)
///   x, y:           B x N x 3        t:     B
///   mask:           B x N bool (true for real atoms)
///
/// Padding atoms carry index 0 and zero coordinates.
struct MolBatch {
  torch::Tensor atoms;
  torch::Tensor charges;
  torch::Tensor bonds;
  torch::Tensor x;
  torch::Tensor y;
  torch::Tensor t;
  torch::Tensor mask;

  int64_t batch_size() const { return atoms.size(0); }
  int64_t max_atoms() const { return atoms.size(1); }

  MolBatch to(torch::ScalarType dtype) const;
  MolBatch clone() const;
  /// Rows [start, start + length).
  MolBatch slice(int64_t start, int64_t length) const;
};

/// Network predictions for both branches. Bond logits are symmetric in the
/// two atom axes.
struct ModelOutput {
  torch::Tensor x_hat;            // B x N x 3
  torch::Tensor y_hat;            // B x N x 3
  torch::Tensor atom_logits_x;    // B x N x |A|
  torch::Tensor atom_logits_y;
  torch::Tensor charge_logits_x;  // B x N x |C|
  torch::Tensor charge_logits_y;
  torch::Tensor bond_logits_x;    // B x N x N x |B|
  torch::Tensor bond_logits_y;
};

/// Pads tuples into a target batch (t = 1).
MolBatch collate(std::span<const TrainingTuple> tuples,
                 torch::ScalarType dtype = torch::kFloat32);

/// B x N x N bool, true where both atoms are real and i != j.
torch::Tensor pair_mask(const torch::Tensor &mask, bool exclude_self = true);

/// Subtracts the per-molecule centroid of real atoms from [B,] N x 3
/// coordinates and zeroes padding rows.
torch::Tensor remove_com(const torch::Tensor &x, const torch::Tensor &mask = {});

/// Standard normal tensor filled from `rng` in row-major order.
torch::Tensor normal_tensor(at::IntArrayRef shape, Rng &rng,
                            torch::ScalarType dtype = torch::kFloat64);

/// Coordinates of a tensor row as Eigen, and back.
Coords to_coords(const torch::Tensor &x);
torch::Tensor from_coords(const Coords &c,
                          torch::ScalarType dtype = torch::kFloat64);

}  // namespace flexiflow

#endif  // FLEXIFLOW_BATCH_H_
