//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef FLEXIFLOW_LOSSES_H_
#define FLEXIFLOW_LOSSES_H_

#include <map>
#include <string>

#include <torch/torch.h>

#include "flexiflow/batch.h"
#include "flexiflow/config.h"

namespace flexiflow {

/// Scalar loss tensors (graph attached). Every molecule contributes its own
/// per-size normalized value; the batch value is the mean over molecules.
struct LossBreakdown {
  torch::Tensor l_coord;
  torch::Tensor l_atom;
  torch::Tensor l_charge;
  torch::Tensor l_bond;
  torch::Tensor l_adj_x;
  torch::Tensor l_adj_y;
  torch::Tensor l_align_bond;
  torch::Tensor l_align_type;
  torch::Tensor l_align_charge;
  torch::Tensor total;

  /// Component name -> value, including "total".
  std::map<std::string, double> values() const;
};

/// (1/n) sum_i |pred_i - target_i|^2 over real atoms.
torch::Tensor coord_mse(const torch::Tensor &pred, const torch::Tensor &target,
                        const torch::Tensor &mask);

/// coord_mse for x plus coord_mse for y.
torch::Tensor coord_loss(const ModelOutput &out, const MolBatch &target);

/// -(1/normalizer) sum of log softmax(logits)[target] over elements where
/// `weight` is true. logits [..., K]; target and weight share the leading
/// shape, whose first axis is the batch; normalizer is B.
torch::Tensor categorical_nll(const torch::Tensor &logits,
                              const torch::Tensor &target,
                              const torch::Tensor &weight,
                              const torch::Tensor &normalizer);

/// (1/n^2) sum_ij B_ij |D^pred_ij - D^target_ij|, B_ij = [bond_ij > 0].
torch::Tensor adjacency_regularizer(const torch::Tensor &pred,
                                    const torch::Tensor &target,
                                    const torch::Tensor &target_bonds,
                                    const torch::Tensor &mask);

struct AlignmentTerms {
  torch::Tensor bond, type, charge;
};

/// y-on-x logit alignment plus y-branch NLL for bonds, atom types and charges.
AlignmentTerms alignment_regularizer(const ModelOutput &out,
                                     const MolBatch &target);

/// All components; categorical NLLs use the x-branch logits.
LossBreakdown total_loss(const ModelOutput &out, const MolBatch &target,
                         const LossWeights &w = {});

}  // namespace flexiflow

#endif  // FLEXIFLOW_LOSSES_H_
