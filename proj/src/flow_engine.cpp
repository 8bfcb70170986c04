//
// SPDX-License-Identifier: Apache-2.0
//

#include "flexiflow/flow_engine.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "flexiflow/batch.h"

namespace flexiflow {

// ---------------------------------------------------------------------------
// Batch helpers
// ---------------------------------------------------------------------------

MolBatch MolBatch::to(torch::ScalarType dtype) const {
  MolBatch b = *this;
  b.x = x.to(dtype);
  b.y = y.to(dtype);
  b.t = t.to(dtype);
  return b;
}

MolBatch MolBatch::clone() const {
  return { atoms.clone(), charges.clone(), bonds.clone(), x.clone(),
           y.clone(),     t.clone(),       mask.clone() };
}

MolBatch MolBatch::slice(int64_t start, int64_t length) const {
  auto s = [&](const torch::Tensor &v) { return v.narrow(0, start, length); };
  return { s(atoms), s(charges), s(bonds), s(x), s(y), s(t), s(mask) };
}

MolBatch collate(std::span<const TrainingTuple> tuples,
                 torch::ScalarType dtype) {
  const auto b = static_cast<int64_t>(tuples.size());
  int64_t n = 0;
  for (const auto &tp: tuples)
    n = std::max<int64_t>(n, tp.num_atoms());

  auto i64 = torch::TensorOptions().dtype(torch::kInt64);
  MolBatch out;
  out.atoms = torch::zeros({ b, n }, i64);
  out.charges = torch::zeros({ b, n }, i64);
  out.bonds = torch::zeros({ b, n, n }, i64);
  out.x = torch::zeros({ b, n, 3 }, torch::kFloat64);
  out.y = torch::zeros({ b, n, 3 }, torch::kFloat64);
  out.t = torch::ones({ b }, torch::kFloat64);
  out.mask = torch::zeros({ b, n }, torch::kBool);

  auto atoms = out.atoms.accessor<int64_t, 2>();
  auto charges = out.charges.accessor<int64_t, 2>();
  auto bonds = out.bonds.accessor<int64_t, 3>();
  auto x = out.x.accessor<double, 3>();
  auto y = out.y.accessor<double, 3>();
  auto mask = out.mask.accessor<bool, 2>();
  for (int64_t k = 0; k < b; ++k) {
    const auto &tp = tuples[k];
    for (int i = 0; i < tp.num_atoms(); ++i) {
      atoms[k][i] = tp.atoms()[i];
      charges[k][i] = tp.charges()[i];
      mask[k][i] = true;
      for (int j = 0; j < tp.num_atoms(); ++j)
        bonds[k][i][j] = tp.bonds()(i, j);
      for (int d = 0; d < 3; ++d) {
        x[k][i][d] = tp.x()(i, d);
        y[k][i][d] = tp.y()(i, d);
      }
    }
  }
  return out.to(dtype);
}

torch::Tensor pair_mask(const torch::Tensor &mask, bool exclude_self) {
  auto pm = mask.unsqueeze(-1) & mask.unsqueeze(-2);
  if (exclude_self) {
    const auto n = mask.size(-1);
    pm = pm & ~torch::eye(n, torch::TensorOptions().dtype(torch::kBool));
  }
  return pm;
}

torch::Tensor remove_com(const torch::Tensor &x, const torch::Tensor &mask) {
  if (!mask.defined())
    return x - x.mean(-2, true);
  const auto m = mask.unsqueeze(-1).to(x.scalar_type());
  const auto count = m.sum(-2, true).clamp_min(1.0);
  const auto com = (x * m).sum(-2, true) / count;
  return (x - com) * m;
}

torch::Tensor normal_tensor(at::IntArrayRef shape, Rng &rng,
                            torch::ScalarType dtype) {
  auto out = torch::empty(shape, torch::kFloat64);
  double *p = out.data_ptr<double>();
  for (int64_t i = 0; i < out.numel(); ++i)
    p[i] = rng.normal();
  return out.to(dtype);
}

Coords to_coords(const torch::Tensor &x) {
  const auto c = x.detach().to(torch::kFloat64).contiguous();
  Coords out(c.size(0), 3);
  std::copy_n(c.data_ptr<double>(), c.numel(), out.data());
  return out;
}

torch::Tensor from_coords(const Coords &c, torch::ScalarType dtype) {
  auto out = torch::empty({ c.rows(), 3 }, torch::kFloat64);
  std::copy_n(c.data(), c.size(), out.data_ptr<double>());
  return out.to(dtype);
}

// ---------------------------------------------------------------------------
// Interpolants and updates
// ---------------------------------------------------------------------------

double sample_time(const InterpolantConfig &cfg, Rng &rng) {
  return rng.beta(cfg.beta_alpha, cfg.beta_beta);
}

torch::Tensor interpolate_coords(const torch::Tensor &x0, const torch::Tensor &x1,
                                 double t, double sigma, Rng &rng) {
  if (x0.sizes() != x1.sizes())
    throw std::invalid_argument("interpolate_coords: shape mismatch");
  auto out = x1 * t + x0 * (1.0 - t);
  if (sigma != 0.0)
    out = out + sigma * normal_tensor(x0.sizes(), rng, x0.scalar_type());
  return out;
}

torch::Tensor target_velocity(const torch::Tensor &x0, const torch::Tensor &x1) {
  if (x0.sizes() != x1.sizes())
    throw std::invalid_argument("target_velocity: shape mismatch");
  return x1 - x0;
}

torch::Tensor cat_interp(double t, const torch::Tensor &a0,
                         const torch::Tensor &a1, Rng &rng) {
  if (a0.sizes() != a1.sizes())
    throw std::invalid_argument("cat_interp: shape mismatch");
  auto out = a0.to(torch::kInt64).contiguous().clone();
  const auto target = a1.to(torch::kInt64).contiguous();
  int64_t *o = out.data_ptr<int64_t>();
  const int64_t *p = target.data_ptr<int64_t>();
  for (int64_t i = 0; i < out.numel(); ++i)
    if (rng.uniform() < t)
      o[i] = p[i];
  return out;
}

torch::Tensor cat_interp_symmetric(double t, const torch::Tensor &b0,
                                   const torch::Tensor &b1, Rng &rng) {
  if (b0.sizes() != b1.sizes() || b0.dim() < 2)
    throw std::invalid_argument("cat_interp_symmetric: shape mismatch");
  const int64_t n = b0.size(-1);
  auto src = b0.to(torch::kInt64).reshape({ -1, n, n }).contiguous();
  auto tgt = b1.to(torch::kInt64).reshape({ -1, n, n }).contiguous();
  auto out = torch::zeros_like(src);
  auto s = src.accessor<int64_t, 3>();
  auto g = tgt.accessor<int64_t, 3>();
  auto o = out.accessor<int64_t, 3>();
  for (int64_t k = 0; k < out.size(0); ++k)
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = i + 1; j < n; ++j) {
        const int64_t v = rng.uniform() < t ? g[k][i][j] : s[k][i][j];
        o[k][i][j] = o[k][j][i] = v;
      }
  return out.reshape(b0.sizes());
}

torch::Tensor euler_coord_step(const torch::Tensor &x_t,
                               const torch::Tensor &x_hat, double t, double dt,
                               const torch::Tensor &mask, bool recenter) {
  if (!(t < 1.0))
    throw std::invalid_argument("euler_coord_step: t must be < 1");
  if (x_t.sizes() != x_hat.sizes())
    throw std::invalid_argument("euler_coord_step: shape mismatch");
  auto out = dt >= 1.0 - t ? x_hat.clone() : x_t + (x_hat - x_t) * (dt / (1.0 - t));
  return recenter ? remove_com(out, mask) : out;
}

namespace {
  /// Inverse-CDF draw from a probability row.
  int64_t draw(const double *row, int64_t k, double u) {
    double cum = 0.0;
    int64_t last = 0;
    for (int64_t c = 0; c < k; ++c) {
      if (row[c] <= 0.0)
        continue;
      cum += row[c];
      last = c;
      if (u < cum)
        return c;
    }
    return last;
  }

  void check_rows(const torch::Tensor &p) {
    if (!torch::isfinite(p).all().item<bool>() || (p < 0).any().item<bool>())
      throw std::invalid_argument("cat_update: probabilities must be finite "
                                  "and non-negative");
    const auto dev = (p.sum(-1) - 1.0).abs().max().item<double>();
    if (dev > 1e-6)
      throw std::invalid_argument("cat_update: probability rows must sum to 1");
  }

  double jump_probability(double t, double dt) {
    if (!(t < 1.0))
      throw std::invalid_argument("cat_update: t must be < 1");
    dt = std::min(dt, 1.0 - t);
    return std::min(1.0, dt / (1.0 - t));
  }
}  // namespace

torch::Tensor cat_update(const torch::Tensor &p_hat, const torch::Tensor &a_t,
                         double t, double dt, Rng &rng) {
  const double jump = jump_probability(t, dt);
  const int64_t k = p_hat.size(-1);
  if (p_hat.numel() / k != a_t.numel())
    throw std::invalid_argument("cat_update: shape mismatch");
  const auto p = p_hat.detach().to(torch::kFloat64).reshape({ -1, k }).contiguous();
  check_rows(p);
  auto out = a_t.to(torch::kInt64).contiguous().clone();
  int64_t *o = out.data_ptr<int64_t>();
  const double *pr = p.data_ptr<double>();
  for (int64_t i = 0; i < out.numel(); ++i) {
    if (rng.uniform() < jump)
      o[i] = draw(pr + i * k, k, rng.uniform());
  }
  return out;
}

torch::Tensor cat_update_symmetric(const torch::Tensor &p_hat,
                                   const torch::Tensor &b_t, double t,
                                   double dt, Rng &rng) {
  const double jump = jump_probability(t, dt);
  const int64_t n = b_t.size(-1);
  const int64_t k = p_hat.size(-1);
  const auto p = p_hat.detach().to(torch::kFloat64).reshape({ -1, n, n, k }).contiguous();
  auto out = b_t.to(torch::kInt64).reshape({ -1, n, n }).contiguous().clone();
  if (p.size(0) != out.size(0))
    throw std::invalid_argument("cat_update_symmetric: shape mismatch");
  const auto iu = torch::triu_indices(n, n, 1);
  if (iu.size(1) > 0)
    check_rows(p.index({ torch::indexing::Slice(), iu[0], iu[1] }));
  auto o = out.accessor<int64_t, 3>();
  const double *pr = p.data_ptr<double>();
  for (int64_t b = 0; b < out.size(0); ++b)
    for (int64_t i = 0; i < n; ++i) {
      o[b][i][i] = 0;
      for (int64_t j = i + 1; j < n; ++j) {
        if (rng.uniform() < jump) {
          const double *row = pr + ((b * n + i) * n + j) * k;
          o[b][i][j] = o[b][j][i] = draw(row, k, rng.uniform());
        } else {
          o[b][j][i] = o[b][i][j];
        }
      }
    }
  return out.reshape(b_t.sizes());
}

torch::Tensor uniform_categorical(at::IntArrayRef shape, int64_t k, Rng &rng) {
  auto out = torch::empty(shape, torch::kInt64);
  int64_t *o = out.data_ptr<int64_t>();
  for (int64_t i = 0; i < out.numel(); ++i)
    o[i] = rng.index(static_cast<int>(k));
  return out;
}

torch::Tensor uniform_categorical_symmetric(int64_t batch, int64_t n, int64_t k,
                                            Rng &rng) {
  auto out = torch::zeros({ batch, n, n }, torch::kInt64);
  auto o = out.accessor<int64_t, 3>();
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = i + 1; j < n; ++j)
        o[b][i][j] = o[b][j][i] = rng.index(static_cast<int>(k));
  return out;
}

// ---------------------------------------------------------------------------
// Block-Jacobian harness
// ---------------------------------------------------------------------------

Eigen::MatrixXd finite_difference_jacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd &)> &f,
    const Eigen::VectorXd &z, double h) {
  const Eigen::VectorXd f0 = f(z);
  Eigen::MatrixXd j(f0.size(), z.size());
  for (Eigen::Index c = 0; c < z.size(); ++c) {
    Eigen::VectorXd zp = z, zm = z;
    zp(c) += h;
    zm(c) -= h;
    j.col(c) = (f(zp) - f(zm)) / (2.0 * h);
  }
  return j;
}

JacobianReport jacobian_block_check(const std::vector<BlockMap> &blocks,
                                    const std::vector<int> &block_sizes,
                                    const Eigen::VectorXd &z, double h) {
  if (blocks.size() != block_sizes.size())
    throw std::invalid_argument("jacobian_block_check: one size per block");
  int total = 0;
  for (int s: block_sizes)
    total += s;
  if (total != z.size())
    throw std::invalid_argument("jacobian_block_check: sizes must cover z");

  auto full = [&](const Eigen::VectorXd &v) {
    Eigen::VectorXd out(total);
    int off = 0;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const Eigen::VectorXd part = blocks[b](v);
      if (part.size() != block_sizes[b])
        throw std::invalid_argument("jacobian_block_check: block output size");
      out.segment(off, block_sizes[b]) = part;
      off += block_sizes[b];
    }
    return out;
  };

  const Eigen::MatrixXd j = finite_difference_jacobian(full, z, h);
  if (!j.allFinite())
    throw std::runtime_error("jacobian_block_check: non-finite derivative");

  JacobianReport r;
  r.det_full = j.determinant();
  r.det_blocks = 1.0;
  std::vector<int> owner(total);
  int off = 0;
  for (std::size_t b = 0; b < block_sizes.size(); ++b) {
    const int s = block_sizes[b];
    const double d = j.block(off, off, s, s).determinant();
    r.block_dets.push_back(d);
    r.det_blocks *= d;
    std::fill(owner.begin() + off, owner.begin() + off + s, static_cast<int>(b));
    off += s;
  }
  for (int a = 0; a < total; ++a)
    for (int c = 0; c < total; ++c)
      if (owner[a] != owner[c])
        r.max_offdiag = std::max(r.max_offdiag, std::abs(j(a, c)));
  return r;
}

std::vector<BlockMap> toy_block_flow(int n_blocks, int block_size) {
  std::vector<BlockMap> blocks;
  for (int b = 0; b < n_blocks; ++b) {
    const int off = b * block_size;
    blocks.emplace_back([off, block_size](const Eigen::VectorXd &z) {
      const Eigen::VectorXd own = z.segment(off, block_size);
      const double prod = own.prod();
      Eigen::VectorXd out = own.array().square() + prod;
      return out;
    });
  }
  return blocks;
}

}  // namespace flexiflow
