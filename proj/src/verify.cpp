//
// SPDX-License-Identifier: Apache-2.0
//

#include "flexiflow/verify.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "flexiflow/flow_engine.h"
#include "flexiflow/losses.h"
#include "flexiflow/training.h"

namespace flexiflow {

using torch::indexing::Slice;

MolBatch random_state(const ModelConfig &cfg, const std::vector<int> &atom_counts,
                      Rng &rng, torch::ScalarType dtype) {
  const auto b = static_cast<int64_t>(atom_counts.size());
  const int64_t n = *std::max_element(atom_counts.begin(), atom_counts.end());
  MolBatch s;
  s.atoms = torch::zeros({ b, n }, torch::kInt64);
  s.charges = torch::zeros({ b, n }, torch::kInt64);
  s.bonds = torch::zeros({ b, n, n }, torch::kInt64);
  s.x = torch::zeros({ b, n, 3 }, torch::kFloat64);
  s.y = torch::zeros({ b, n, 3 }, torch::kFloat64);
  s.t = torch::zeros({ b }, torch::kFloat64);
  s.mask = torch::zeros({ b, n }, torch::kBool);
  for (int64_t k = 0; k < b; ++k) {
    const int64_t m = atom_counts[k];
    s.atoms[k].index_put_({ Slice(0, m) },
                          uniform_categorical({ m }, cfg.n_atom_types, rng));
    s.charges[k].index_put_({ Slice(0, m) },
                            uniform_categorical({ m }, cfg.n_charge_types, rng));
    s.bonds[k].index_put_({ Slice(0, m), Slice(0, m) },
                          uniform_categorical_symmetric(1, m, cfg.n_bond_types, rng)[0]);
    s.x[k].index_put_({ Slice(0, m) }, remove_com(normal_tensor({ m, 3 }, rng)));
    s.y[k].index_put_({ Slice(0, m) }, remove_com(normal_tensor({ m, 3 }, rng)));
    s.t[k] = rng.uniform();
    s.mask[k].index_put_({ Slice(0, m) }, true);
  }
  return s.to(dtype);
}

Eigen::Matrix3d random_rotation(Rng &rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  return q.toRotationMatrix();
}

torch::Tensor rotate(const torch::Tensor &coords, const Eigen::Matrix3d &r) {
  auto rt = torch::empty({ 3, 3 }, torch::kFloat64);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      rt[i][j] = r(j, i);
  return torch::matmul(coords, rt.to(coords.scalar_type()));
}

double max_relative_error(const torch::Tensor &a, const torch::Tensor &b) {
  const auto a64 = a.detach().to(torch::kFloat64);
  const auto b64 = b.detach().to(torch::kFloat64);
  const double diff = (a64 - b64).abs().max().item<double>();
  const double ref = b64.abs().max().item<double>();
  return ref > 0.0 ? diff / ref : diff;
}

MolBatch permute_batch(const MolBatch &s, const torch::Tensor &perm) {
  MolBatch p = s;
  p.atoms = s.atoms.index_select(1, perm);
  p.charges = s.charges.index_select(1, perm);
  p.bonds = s.bonds.index_select(1, perm).index_select(2, perm);
  p.x = s.x.index_select(1, perm);
  p.y = s.y.index_select(1, perm);
  p.mask = s.mask.index_select(1, perm);
  return p;
}

ModelConfig verify_model_config() {
  ModelConfig c = ModelConfig::preset("tiny");
  c.n_layers = 2;
  c.d_model = 32;
  return c;
}

ModelConfig gradient_model_config() {
  ModelConfig c = ModelConfig::preset("tiny");
  c.n_layers = 2;
  c.d_model = c.d_edge = c.d_coord = 8;
  c.d_message = c.d_message_hidden = 8;
  c.n_attn_heads = 2;
  c.time_embed_dim = 8;
  c.ff_mult = 2;
  return c;
}

namespace {
  FlexiFlowNet random_network(const ModelConfig &cfg, std::uint64_t seed,
                              torch::ScalarType dtype) {
    auto net = make_network(cfg, seed);
    net->to(dtype);
    Rng rng = Rng(seed).derive(7);
    randomize_parameters(*net, rng);
    net->eval();
    return net;
  }

  std::string fmt(double v) {
    std::ostringstream os;
    os.precision(3);
    os << std::scientific << v;
    return os.str();
  }
}  // namespace

CheckResult check_rotation_equivariance(const ModelConfig &cfg,
                                        torch::ScalarType dtype, int trials,
                                        std::uint64_t seed, double tol) {
  torch::NoGradGuard guard;
  auto net = random_network(cfg, seed, dtype);
  Rng rng = Rng(seed).derive(11);
  double worst = 0.0;
  for (int k = 0; k < trials; ++k) {
    const auto s = random_state(cfg, { 6, 4 }, rng, dtype);
    const auto rx = random_rotation(rng), ry = random_rotation(rng);
    MolBatch r = s;
    r.x = rotate(s.x, rx);
    r.y = rotate(s.y, ry);
    const auto a = net->forward(s);
    const auto b = net->forward(r);
    worst = std::max({ worst,
                       max_relative_error(b.x_hat, rotate(a.x_hat, rx)),
                       max_relative_error(b.y_hat, rotate(a.y_hat, ry)),
                       max_relative_error(b.atom_logits_x, a.atom_logits_x),
                       max_relative_error(b.atom_logits_y, a.atom_logits_y),
                       max_relative_error(b.charge_logits_x, a.charge_logits_x),
                       max_relative_error(b.charge_logits_y, a.charge_logits_y),
                       max_relative_error(b.bond_logits_x, a.bond_logits_x),
                       max_relative_error(b.bond_logits_y, a.bond_logits_y) });
  }
  const std::string prec = dtype == torch::kFloat64 ? "float64" : "float32";
  return { "rotation_equivariance_" + prec, worst < tol, worst, tol,
           std::to_string(trials) + " trials, independent R_x and R_y" };
}

CheckResult check_permutation_equivariance(const ModelConfig &cfg, int trials,
                                           int max_atoms, std::uint64_t seed,
                                           double tol) {
  torch::NoGradGuard guard;
  auto net = random_network(cfg, seed, torch::kFloat32);
  Rng rng = Rng(seed).derive(13);
  double worst = 0.0;
  for (int k = 0; k < trials; ++k) {
    const int n = 2 + rng.index(max_atoms - 1);
    const auto s = random_state(cfg, { n }, rng, torch::kFloat32);
    std::vector<int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.engine());
    const auto perm = torch::tensor(order, torch::kInt64);
    const auto a = net->forward(s);
    const auto b = net->forward(permute_batch(s, perm));
    auto p1 = [&](const torch::Tensor &t) { return t.index_select(1, perm); };
    auto p2 = [&](const torch::Tensor &t) { return p1(t).index_select(2, perm); };
    worst = std::max({ worst,
                       max_relative_error(b.x_hat, p1(a.x_hat)),
                       max_relative_error(b.y_hat, p1(a.y_hat)),
                       max_relative_error(b.atom_logits_x, p1(a.atom_logits_x)),
                       max_relative_error(b.atom_logits_y, p1(a.atom_logits_y)),
                       max_relative_error(b.charge_logits_x, p1(a.charge_logits_x)),
                       max_relative_error(b.charge_logits_y, p1(a.charge_logits_y)),
                       max_relative_error(b.bond_logits_x, p2(a.bond_logits_x)),
                       max_relative_error(b.bond_logits_y, p2(a.bond_logits_y)) });
  }
  return { "permutation_equivariance", worst < tol, worst, tol,
           std::to_string(trials) + " permutations, n <= " + std::to_string(max_atoms) };
}

CheckResult check_y_independence(const ModelConfig &cfg, int trials,
                                 std::uint64_t seed) {
  torch::NoGradGuard guard;
  auto net = random_network(cfg, seed, torch::kFloat32);
  Rng rng = Rng(seed).derive(17);
  int mismatches = 0;
  for (int k = 0; k < trials; ++k) {
    const auto s = random_state(cfg, { 5, 3 }, rng, torch::kFloat32);
    MolBatch other = s;
    other.y = remove_com(normal_tensor(s.y.sizes(), rng, torch::kFloat32), s.mask);
    const auto a = net->forward(s);
    const auto b = net->forward(other);
    const bool same = torch::equal(a.x_hat, b.x_hat)
                      && torch::equal(a.atom_logits_x, b.atom_logits_x)
                      && torch::equal(a.charge_logits_x, b.charge_logits_x)
                      && torch::equal(a.bond_logits_x, b.bond_logits_x);
    const bool y_moved = !torch::equal(a.y_hat, b.y_hat);
    if (!same || !y_moved)
      ++mismatches;
  }
  return { "x_branch_y_independence", mismatches == 0,
           static_cast<double>(mismatches), 0.0,
           std::to_string(trials) + " trials, bitwise comparison" };
}

CheckResult check_jacobian_factorization(int points, std::uint64_t seed,
                                         double det_tol, double offdiag_tol) {
  const auto blocks = toy_block_flow(2, 4);
  Rng rng = Rng(seed).derive(19);
  double worst_det = 0.0, worst_off = 0.0;
  for (int k = 0; k < points; ++k) {
    Eigen::VectorXd z(8);
    for (int i = 0; i < 8; ++i)
      z(i) = rng.uniform(0.5, 1.5);
    const auto r = jacobian_block_check(blocks, { 4, 4 }, z);
    worst_det = std::max(worst_det,
                         std::abs(r.det_full - r.det_blocks) / std::abs(r.det_full));
    worst_off = std::max(worst_off, r.max_offdiag);
  }
  CheckResult res{ "jacobian_factorization", worst_det < det_tol && worst_off < offdiag_tol,
                   worst_det, det_tol, "" };
  res.detail = std::to_string(points) + " points; max off-block entry " + fmt(worst_off)
               + " (bound " + fmt(offdiag_tol) + ")";
  return res;
}

CheckResult check_gradients(const ModelConfig &cfg, std::uint64_t seed, double tol,
                            double min_fraction) {
  auto net = random_network(cfg, seed, torch::kFloat64);
  Rng rng = Rng(seed).derive(23);
  auto target = random_state(cfg, { 3 }, rng, torch::kFloat64);
  target.t.fill_(1.0);
  const auto state = make_noisy_batch(target, InterpolantConfig{}, cfg, rng);
  auto loss_value = [&] { return total_loss(net->forward(state), target).total; };

  net->zero_grad();
  loss_value().backward();

  const double h = 1e-6;
  long total = 0, good = 0;
  double worst = 0.0;
  torch::NoGradGuard guard;
  for (auto &p: net->parameters()) {
    const auto grad = p.grad().contiguous();
    double *data = p.data_ptr<double>();
    const double *g = grad.data_ptr<double>();
    for (int64_t i = 0; i < p.numel(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double up = loss_value().item<double>();
      data[i] = saved - h;
      const double down = loss_value().item<double>();
      data[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double scale = std::max(std::abs(fd), std::abs(g[i]));
      const double rel = scale > 0.0 ? std::abs(fd - g[i]) / scale : 0.0;
      ++total;
      if (scale < 1e-9 || rel <= tol)
        ++good;
      else
        worst = std::max(worst, rel);
    }
  }
  const double frac = static_cast<double>(good) / static_cast<double>(total);
  return { "gradient_check", frac >= min_fraction, frac, min_fraction,
           std::to_string(good) + "/" + std::to_string(total)
               + " entries within " + fmt(tol) + "; worst outlier " + fmt(worst) };
}

std::vector<CheckResult> run_verify_suite(const ModelConfig &cfg, std::uint64_t seed) {
  ModelConfig g = gradient_model_config();
  g.fault = cfg.fault;
  return {
    check_rotation_equivariance(cfg, torch::kFloat32, 20, seed, 1e-4),
    check_rotation_equivariance(cfg, torch::kFloat64, 20, seed, 1e-8),
    check_permutation_equivariance(cfg, 20, 6, seed, 1e-5),
    check_y_independence(cfg, 20, seed),
    check_jacobian_factorization(100, seed, 1e-5, 1e-6),
    check_gradients(g, seed, 1e-4, 0.99),
  };
}

}  // namespace flexiflow
