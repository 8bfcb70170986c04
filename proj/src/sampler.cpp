//
// SPDX-License-Identifier: Apache-2.0
//

#include "flexiflow/sampler.h"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "flexiflow/flow_engine.h"

namespace flexiflow {

using torch::indexing::Slice;

Predictor network_predictor(FlexiFlowNet net) {
  net->eval();
  return [net](const MolBatch &state) mutable {
    torch::NoGradGuard guard;
    return net->forward(state);
  };
}

MolBatch sample_prior(int64_t n_atoms, const ModelConfig &cfg, Rng &x_rng,
                      Rng &y_rng, torch::ScalarType dtype) {
  if (n_atoms < 1)
    throw std::invalid_argument("sample_prior: n_atoms must be >= 1");
  MolBatch s;
  s.x = remove_com(normal_tensor({ 1, n_atoms, 3 }, x_rng));
  s.atoms = uniform_categorical({ 1, n_atoms }, cfg.n_atom_types, x_rng);
  s.charges = uniform_categorical({ 1, n_atoms }, cfg.n_charge_types, x_rng);
  s.bonds = uniform_categorical_symmetric(1, n_atoms, cfg.n_bond_types, x_rng);
  s.y = remove_com(normal_tensor({ 1, n_atoms, 3 }, y_rng));
  s.t = torch::zeros({ 1 }, torch::kFloat64);
  s.mask = torch::ones({ 1, n_atoms }, torch::kBool);
  return s.to(dtype);
}

namespace {
  MolBatch pad_stack(const std::vector<MolBatch> &parts) {
    int64_t n = 0;
    for (const auto &p: parts)
      n = std::max(n, p.max_atoms());
    const auto b = static_cast<int64_t>(parts.size());
    const auto dtype = parts.front().x.scalar_type();
    const auto i64 = torch::kInt64;
    MolBatch s;
    s.atoms = torch::zeros({ b, n }, i64);
    s.charges = torch::zeros({ b, n }, i64);
    s.bonds = torch::zeros({ b, n, n }, i64);
    s.x = torch::zeros({ b, n, 3 }, dtype);
    s.y = torch::zeros({ b, n, 3 }, dtype);
    s.t = torch::zeros({ b }, dtype);
    s.mask = torch::zeros({ b, n }, torch::kBool);
    for (int64_t k = 0; k < b; ++k) {
      const auto &p = parts[k];
      const auto m = p.max_atoms();
      s.atoms[k].index_put_({ Slice(0, m) }, p.atoms[0]);
      s.charges[k].index_put_({ Slice(0, m) }, p.charges[0]);
      s.bonds[k].index_put_({ Slice(0, m), Slice(0, m) }, p.bonds[0]);
      s.x[k].index_put_({ Slice(0, m) }, p.x[0]);
      s.y[k].index_put_({ Slice(0, m) }, p.y[0]);
      s.mask[k].index_put_({ Slice(0, m) }, p.mask[0]);
    }
    return s;
  }

  torch::Tensor probs(const torch::Tensor &logits) {
    return torch::softmax(logits.detach().to(torch::kFloat64), -1);
  }

  /// Replaces every member's x-branch prediction with member 0's.
  void broadcast_x(ModelOutput &out) {
    auto first = [](torch::Tensor &t) { t = t.narrow(0, 0, 1).expand_as(t).clone(); };
    first(out.x_hat);
    first(out.atom_logits_x);
    first(out.charge_logits_x);
    first(out.bond_logits_x);
  }
}  // namespace

std::vector<MolecularGraph> integrate(const Predictor &predict, MolBatch s,
                                      std::span<Rng> streams,
                                      const SampleOptions &opts, bool share_x,
                                      int *calls) {
  if (opts.n_steps < 1)
    throw std::invalid_argument("n_steps must be >= 1");
  const auto b_count = s.batch_size();
  if (static_cast<int64_t>(streams.size()) < (share_x ? 1 : b_count))
    throw std::invalid_argument("integrate: one stream per member required");
  s = s.to(opts.dtype);
  std::vector<int64_t> sizes(b_count);
  for (int64_t b = 0; b < b_count; ++b)
    sizes[b] = s.mask[b].sum().item<int64_t>();

  const double dt = 1.0 / opts.n_steps;
  int n_calls = 0;
  for (int k = 0; k < opts.n_steps; ++k) {
    const double t = k * dt;
    const bool last = k + 1 == opts.n_steps;
    const double step = last ? 1.0 - t : dt;
    s.t.fill_(t);
    auto out = predict(s);
    ++n_calls;
    if (share_x)
      broadcast_x(out);

    s.x = euler_coord_step(s.x, out.x_hat.detach().to(s.x.scalar_type()), t, step, s.mask);
    s.y = euler_coord_step(s.y, out.y_hat.detach().to(s.y.scalar_type()), t, step, s.mask);
    if (!torch::isfinite(s.x).all().item<bool>() || !torch::isfinite(s.y).all().item<bool>())
      throw DivergenceError("non-finite coordinates at step " + std::to_string(k));

    const int64_t members = share_x ? 1 : b_count;
    for (int64_t b = 0; b < members; ++b) {
      const auto n = sizes[b];
      auto atoms = s.atoms[b].index({ Slice(0, n) });
      auto charges = s.charges[b].index({ Slice(0, n) });
      auto bonds = s.bonds[b].index({ Slice(0, n), Slice(0, n) });
      const auto la = out.atom_logits_x[b].index({ Slice(0, n) });
      const auto lc = out.charge_logits_x[b].index({ Slice(0, n) });
      const auto lb = out.bond_logits_x[b].index({ Slice(0, n), Slice(0, n) });
      torch::Tensor na, nc, nb;
      if (last) {
        na = la.argmax(-1);
        nc = lc.argmax(-1);
        nb = lb.argmax(-1) * (1 - torch::eye(n, torch::kInt64));
      } else {
        auto &rng = streams[static_cast<std::size_t>(b)];
        na = cat_update(probs(la), atoms, t, step, rng);
        nc = cat_update(probs(lc), charges, t, step, rng);
        nb = cat_update_symmetric(probs(lb), bonds, t, step, rng);
      }
      const auto rows = share_x ? Slice() : Slice(b, b + 1);
      s.atoms.index_put_({ rows, Slice(0, n) }, na);
      s.charges.index_put_({ rows, Slice(0, n) }, nc);
      s.bonds.index_put_({ rows, Slice(0, n), Slice(0, n) }, nb);
    }
  }
  if (calls)
    *calls = n_calls;

  std::vector<MolecularGraph> graphs;
  for (int64_t b = 0; b < b_count; ++b) {
    const auto n = sizes[b];
    MolecularGraph g;
    const auto a = s.atoms[b].index({ Slice(0, n) }).contiguous();
    const auto c = s.charges[b].index({ Slice(0, n) }).contiguous();
    const auto e = s.bonds[b].index({ Slice(0, n), Slice(0, n) }).contiguous();
    g.atoms.assign(a.data_ptr<int64_t>(), a.data_ptr<int64_t>() + n);
    g.charges.assign(c.data_ptr<int64_t>(), c.data_ptr<int64_t>() + n);
    g.bonds = BondMatrix::Zero(n, n);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < n; ++j)
        g.bonds(i, j) = static_cast<std::uint8_t>(i == j ? 0 : e[i][j].item<int64_t>());
    g.conformers.push_back(to_coords(s.x[b].index({ Slice(0, n) })) * opts.scale);
    g.conformers.push_back(to_coords(s.y[b].index({ Slice(0, n) })) * opts.scale);
    g.representative = 0;
    graphs.push_back(std::move(g));
  }
  return graphs;
}

MolecularGraph generate(const Predictor &predict, const ModelConfig &cfg,
                        int64_t n_atoms, const SampleOptions &opts,
                        SampleMode mode, std::uint64_t fixed_seed, Rng &rng,
                        int *calls) {
  std::vector<Rng> streams;
  MolBatch prior;
  if (mode == SampleMode::kFixedX) {
    Rng xs(fixed_seed);
    prior = sample_prior(n_atoms, cfg, xs, rng, opts.dtype);
    streams.push_back(xs);
  } else {
    prior = sample_prior(n_atoms, cfg, rng, rng, opts.dtype);
    streams.emplace_back(rng.next_u64());
  }
  return integrate(predict, prior, streams, opts, false, calls).front();
}

std::vector<MolecularGraph> generate_batch(const Predictor &predict,
                                           const ModelConfig &cfg,
                                           std::span<const int> atom_counts,
                                           const SampleOptions &opts, Rng &rng) {
  if (atom_counts.empty())
    return {};
  std::vector<Rng> streams;
  std::vector<MolBatch> priors;
  for (int n: atom_counts) {
    Rng member(rng.next_u64());
    priors.push_back(sample_prior(n, cfg, member, member, opts.dtype));
    streams.push_back(member);
  }
  return integrate(predict, pad_stack(priors), streams, opts);
}

MolecularGraph generate_ensemble(const Predictor &predict, const ModelConfig &cfg,
                                 int64_t n_atoms, int m, const SampleOptions &opts,
                                 std::uint64_t fixed_seed, Rng &rng) {
  if (m < 1)
    throw std::invalid_argument("generate_ensemble: m must be >= 1");
  Rng xs(fixed_seed);
  const auto prior = sample_prior(n_atoms, cfg, xs, rng, opts.dtype);
  std::vector<MolBatch> members{ prior };
  for (int k = 1; k < m; ++k) {
    auto p = prior.clone();
    p.y = remove_com(normal_tensor({ 1, n_atoms, 3 }, rng)).to(opts.dtype);
    members.push_back(p);
  }
  std::vector<Rng> streams{ xs };
  const auto graphs = integrate(predict, pad_stack(members), streams, opts, true);

  MolecularGraph g = graphs.front();
  g.conformers.resize(1);
  for (const auto &h: graphs) {
    if (h.atoms != g.atoms || h.charges != g.charges || h.bonds != g.bonds)
      throw std::logic_error("generate_ensemble: decoded graphs disagree");
    g.conformers.push_back(h.conformers[1]);
  }
  return g;
}

int sample_atom_count(std::span<const int> hist, Rng &rng) {
  const long total = std::accumulate(hist.begin(), hist.end(), 0L);
  if (total <= 0)
    throw std::invalid_argument("empty atom-count histogram");
  long r = static_cast<long>(rng.next_u64() % static_cast<std::uint64_t>(total));
  for (std::size_t n = 0; n < hist.size(); ++n) {
    if (r < hist[n])
      return static_cast<int>(n);
    r -= hist[n];
  }
  return static_cast<int>(hist.size()) - 1;
}

std::string sample_file_name(const std::string &stem, std::uint64_t seed,
                             int n_steps, const std::string &ext) {
  return stem + "_s" + std::to_string(seed) + "_nfe" + std::to_string(n_steps)
         + "." + ext;
}

}  // namespace flexiflow
