//
// SPDX-License-Identifier: Apache-2.0
//

#include "flexiflow/losses.h"

#include <stdexcept>

namespace flexiflow {

namespace {
  constexpr double kAlignEps = 1e-8;

  torch::Tensor atom_counts(const torch::Tensor &mask, torch::ScalarType dtype) {
    return mask.to(dtype).sum(1).clamp_min(1.0);
  }

  /// Per-molecule sum of v over all but the batch axis.
  torch::Tensor per_molecule(const torch::Tensor &v) {
    return v.reshape({ v.size(0), -1 }).sum(1);
  }

  torch::Tensor atom_pairs(const torch::Tensor &mask) {
    return mask.unsqueeze(-1) & mask.unsqueeze(-2);
  }
}  // namespace

std::map<std::string, double> LossBreakdown::values() const {
  auto v = [](const torch::Tensor &t) { return t.item<double>(); };
  return { { "coord", v(l_coord) },
           { "atom", v(l_atom) },
           { "charge", v(l_charge) },
           { "bond", v(l_bond) },
           { "adj_x", v(l_adj_x) },
           { "adj_y", v(l_adj_y) },
           { "align_bond", v(l_align_bond) },
           { "align_type", v(l_align_type) },
           { "align_charge", v(l_align_charge) },
           { "total", v(total) } };
}

torch::Tensor coord_mse(const torch::Tensor &pred, const torch::Tensor &target,
                        const torch::Tensor &mask) {
  if (pred.sizes() != target.sizes())
    throw std::invalid_argument("coord_mse: shape mismatch");
  const auto m = mask.to(pred.scalar_type()).unsqueeze(-1);
  const auto sq = per_molecule((pred - target).square() * m);
  return (sq / atom_counts(mask, pred.scalar_type())).mean();
}

torch::Tensor coord_loss(const ModelOutput &out, const MolBatch &target) {
  return coord_mse(out.x_hat, target.x.to(out.x_hat.scalar_type()), target.mask)
         + coord_mse(out.y_hat, target.y.to(out.y_hat.scalar_type()), target.mask);
}

torch::Tensor categorical_nll(const torch::Tensor &logits,
                              const torch::Tensor &target,
                              const torch::Tensor &weight,
                              const torch::Tensor &normalizer) {
  const auto k = logits.size(-1);
  if (target.numel() > 0
      && (target.min().item<int64_t>() < 0 || target.max().item<int64_t>() >= k))
    throw std::invalid_argument("categorical_nll: target index out of range");
  const auto logp = torch::log_softmax(logits, -1)
                        .gather(-1, target.unsqueeze(-1))
                        .squeeze(-1);
  const auto nll = -per_molecule(logp * weight.to(logits.scalar_type()));
  return (nll / normalizer).mean();
}

torch::Tensor adjacency_regularizer(const torch::Tensor &pred,
                                    const torch::Tensor &target,
                                    const torch::Tensor &target_bonds,
                                    const torch::Tensor &mask) {
  if (pred.sizes() != target.sizes())
    throw std::invalid_argument("adjacency_regularizer: shape mismatch");
  auto dist = [](const torch::Tensor &c) {
    const auto diff = c.unsqueeze(2) - c.unsqueeze(1);
    return torch::sqrt(diff.square().sum(-1).clamp_min(1e-12));
  };
  const auto bonded = ((target_bonds > 0) & atom_pairs(mask)).to(pred.scalar_type());
  const auto dev = per_molecule(bonded * (dist(pred) - dist(target)).abs());
  const auto n = atom_counts(mask, pred.scalar_type());
  return (dev / n.square()).mean();
}

AlignmentTerms alignment_regularizer(const ModelOutput &out,
                                     const MolBatch &target) {
  const auto dtype = out.x_hat.scalar_type();
  const auto n = atom_counts(target.mask, dtype);
  const auto atom_w = target.mask.to(dtype);
  const auto pair_w = atom_pairs(target.mask).to(dtype);

  auto gap = [&](const torch::Tensor &a, const torch::Tensor &b,
                 const torch::Tensor &w, const torch::Tensor &denom) {
    const auto sq = (a - b).square().sum(-1) * w;
    return (per_molecule(sq) / (denom + kAlignEps)).mean();
  };

  AlignmentTerms t;
  t.bond = gap(out.bond_logits_x, out.bond_logits_y, pair_w, torch::sqrt(n.square()))
           + categorical_nll(out.bond_logits_y, target.bonds, pair_w, n.square());
  t.type = gap(out.atom_logits_x, out.atom_logits_y, atom_w, torch::sqrt(n))
           + categorical_nll(out.atom_logits_y, target.atoms, atom_w, n);
  t.charge = gap(out.charge_logits_x, out.charge_logits_y, atom_w, torch::sqrt(n))
             + categorical_nll(out.charge_logits_y, target.charges, atom_w, n);
  return t;
}

LossBreakdown total_loss(const ModelOutput &out, const MolBatch &target,
                         const LossWeights &w) {
  const auto dtype = out.x_hat.scalar_type();
  const auto n = atom_counts(target.mask, dtype);
  const auto pairs = atom_pairs(target.mask);
  const auto tx = target.x.to(dtype), ty = target.y.to(dtype);

  LossBreakdown l;
  l.l_coord = coord_loss(out, target);
  l.l_atom = categorical_nll(out.atom_logits_x, target.atoms, target.mask, n);
  l.l_charge = categorical_nll(out.charge_logits_x, target.charges, target.mask, n);
  l.l_bond = categorical_nll(out.bond_logits_x, target.bonds, pairs, n.square());
  l.l_adj_x = adjacency_regularizer(out.x_hat, tx, target.bonds, target.mask);
  l.l_adj_y = adjacency_regularizer(out.y_hat, ty, target.bonds, target.mask);
  const auto align = alignment_regularizer(out, target);
  l.l_align_bond = align.bond;
  l.l_align_type = align.type;
  l.l_align_charge = align.charge;
  l.total = w.coord * l.l_coord + w.atom * l.l_atom + w.charge * l.l_charge
            + w.bond * l.l_bond + w.adjacency * (l.l_adj_x + l.l_adj_y)
            + w.align * (l.l_align_bond + l.l_align_type + l.l_align_charge);
  return l;
}

}  // namespace flexiflow
