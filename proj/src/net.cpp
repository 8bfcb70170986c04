//
// SPDX-License-Identifier: Apache-2.0
//

#include "flexiflow/net.h"

#include <cmath>
#include <sstream>

namespace flexiflow {

namespace nn = torch::nn;

namespace {
  nn::Sequential mlp(int in, int hidden, int out, bool zero_last = false) {
    nn::Linear last(hidden, out);
    if (zero_last) {
      nn::init::zeros_(last->weight);
      nn::init::zeros_(last->bias);
    }
    return nn::Sequential(nn::Linear(in, hidden), nn::SiLU(), last);
  }

  nn::Linear linear(int in, int out, bool bias = true, bool zero = false) {
    nn::Linear l(nn::LinearOptions(in, out).bias(bias));
    if (zero) {
      nn::init::zeros_(l->weight);
      if (bias)
        nn::init::zeros_(l->bias);
    }
    return l;
  }

  nn::LayerNorm layer_norm(int d) {
    return nn::LayerNorm(nn::LayerNormOptions({ d }));
  }

  /// B x N x F -> (B x N x N x F, B x N x N x F) holding features of i and j.
  std::pair<torch::Tensor, torch::Tensor> pair_expand(const torch::Tensor &f) {
    const auto b = f.size(0), n = f.size(1), d = f.size(2);
    return { f.unsqueeze(2).expand({ b, n, n, d }),
             f.unsqueeze(1).expand({ b, n, n, d }) };
  }

  torch::Tensor symmetrize(const torch::Tensor &e) {
    return 0.5 * (e + e.transpose(1, 2));
  }

  /// Channelwise inner products <c_i, c_j>: B x N x 3 x C -> B x N x N x C.
  torch::Tensor channel_products(const torch::Tensor &c) {
    return torch::einsum("bisc,bjsc->bijc", { c, c });
  }

  torch::Tensor masked_softmax(const torch::Tensor &logits,
                               const torch::Tensor &pair) {
    const auto keep = pair.unsqueeze(-1);
    auto a = torch::softmax(logits.masked_fill(~keep, -1e9), 2);
    return a * keep.to(a.scalar_type());
  }

  void check_finite(const LayerState &s, const std::string &stage) {
    const std::pair<const char *, const torch::Tensor *> parts[] = {
      { "h_x", &s.h_x }, { "h_y", &s.h_y }, { "e_x", &s.e_x },
      { "e_y", &s.e_y }, { "x", &s.x },     { "y", &s.y },
    };
    for (const auto &[name, t]: parts)
      if (!torch::isfinite(*t).all().item<bool>())
        throw DivergenceError("non-finite " + std::string(name) + " after "
                              + stage);
  }
}  // namespace

torch::Tensor safe_norm(const torch::Tensor &v, int64_t dim, bool keepdim) {
  return torch::sqrt(v.square().sum(dim, keepdim) + 1e-12);
}

torch::Tensor time_embedding(const torch::Tensor &t, int dim) {
  const int half = dim / 2;
  const auto opts = torch::TensorOptions().dtype(t.scalar_type());
  const auto freqs
      = torch::exp(-std::log(10000.0) * torch::arange(half, opts) / half);
  const auto args = (t * 1000.0).unsqueeze(-1) * freqs;
  return torch::cat({ torch::sin(args), torch::cos(args) }, -1);
}

// ---------------------------------------------------------------------------

EquivariantNormImpl::EquivariantNormImpl(int channels) {
  gamma = register_parameter("gamma", torch::ones({ channels }));
}

torch::Tensor EquivariantNormImpl::forward(const torch::Tensor &c,
                                           const torch::Tensor &mask) {
  const auto sq = c.square().sum(-2);  // B x N x C
  torch::Tensor mean;
  if (mask.defined()) {
    const auto m = mask.unsqueeze(-1).to(c.scalar_type());
    mean = (sq * m).sum(1) / m.sum(1).clamp_min(1.0);
  } else {
    mean = sq.mean(1);
  }
  const auto rms = torch::sqrt(mean.clamp_min(1e-20));  // B x C
  return gamma * c / (rms.unsqueeze(1).unsqueeze(1) + 1e-6);
}

FeedForwardImpl::FeedForwardImpl(const ModelConfig &cfg) {
  const int d = cfg.d_model, c = cfg.d_coord, hidden = cfg.ff_mult * d;
  norm_h = register_module("norm_h", layer_norm(d));
  norm_c = register_module("norm_c", EquivariantNorm(c));
  phi = register_module("phi", mlp(d + c, hidden, d, true));
  psi = register_module("psi", mlp(d, hidden, c));
  w_f = register_module("w_f", linear(c, c, false));
  w_g = register_module("w_g", linear(c, c, false, true));
}

void FeedForwardImpl::forward(torch::Tensor &h, torch::Tensor &c,
                              const torch::Tensor &mask) {
  const auto ht = norm_h(h);
  const auto ct = norm_c(c, mask);
  h = h + phi->forward(torch::cat({ ht, safe_norm(ct, -2) }, -1));
  c = c + w_g(w_f(ct) * psi->forward(ht).unsqueeze(-2));
}

// ---------------------------------------------------------------------------

FlexiFlowLayerImpl::FlexiFlowLayerImpl(const ModelConfig &cfg)
    : heads(cfg.n_attn_heads), channels(cfg.d_coord), d_edge(cfg.d_edge) {
  const int d = cfg.d_model, c = cfg.d_coord, dm = cfg.d_message;
  const int out = heads + c + d_edge;
  ff = register_module("ff", FeedForward(cfg));
  norm_h = register_module("norm_h", layer_norm(d));
  norm_e = register_module("norm_e", layer_norm(d_edge));
  norm_c = register_module("norm_c", EquivariantNorm(c));
  w_h = register_module("w_h", linear(d, dm));
  mlp_x = register_module("mlp_x", mlp(2 * dm + c + d_edge, cfg.d_message_hidden, out));
  mlp_y = register_module("mlp_y",
                          mlp(2 * dm + 2 * c + d_edge, cfg.d_message_hidden, out));
  w_v = register_module("w_v", linear(d, d));
  w_z = register_module("w_z", linear(d, d, false, true));
  w_r = register_module("w_r", linear(c, c, false));
  w_s = register_module("w_s", linear(c, c, false, true));
}

Messages FlexiFlowLayerImpl::split(const torch::Tensor &omega) const {
  return { omega.narrow(-1, 0, heads), omega.narrow(-1, heads, channels),
           omega.narrow(-1, heads + channels, d_edge) };
}

std::pair<Messages, Messages> FlexiFlowLayerImpl::messages(const LayerState &s) {
  const auto xt = norm_c(s.x, s.mask);
  const auto yt = norm_c(s.y, s.mask);
  const auto ex = norm_e(s.e_x);
  const auto ey = norm_e(s.e_y);
  const auto xp = channel_products(xt);
  const auto yp = channel_products(yt);

  const auto [hxi, hxj] = pair_expand(w_h(norm_h(s.h_x)));
  const auto [hyi, hyj] = pair_expand(w_h(norm_h(s.h_y)));
  const auto hpx = torch::cat({ hxi, hxj }, -1);
  const auto hpy = torch::cat({ hyi, hyj }, -1);

  const auto omega_x = mlp_x->forward(torch::cat({ hpx, xp, ex }, -1));
  const auto omega_y = mlp_y->forward(torch::cat({ hpx * hpy, xp, yp, ex * ey }, -1));
  return { split(omega_x), split(omega_y) };
}

void FlexiFlowLayerImpl::attend(LayerState &s, const Messages &wx,
                                const Messages &wy) {
  const auto pairf = s.pair.unsqueeze(-1).to(s.h_x.scalar_type());
  auto branch = [&](torch::Tensor &h, torch::Tensor &c, torch::Tensor &e,
                    const Messages &w) {
    const auto b = h.size(0), n = h.size(1), d = h.size(2);
    const auto ht = norm_h(h);
    const auto ct = norm_c(c, s.mask);

    const auto alpha = masked_softmax(w.inv, s.pair);  // B x N x N x H
    const auto v = w_v(ht).view({ b, n, heads, d / heads });
    const auto agg = torch::einsum("bijk,bjkf->bikf", { alpha, v });
    const auto weight = torch::sqrt(alpha.square().sum(2) + 1e-12).unsqueeze(-1);
    const auto h_msg = w_z((agg * weight).reshape({ b, n, d }));

    const auto beta = masked_softmax(w.equi, s.pair);  // B x N x N x C
    const auto xr = w_r(ct);
    const auto diff = xr.unsqueeze(2) - xr.unsqueeze(1);  // B x N x N x 3 x C
    const auto unit = diff / safe_norm(diff, 3, true);
    const auto agg_c = torch::einsum("bijc,bijsc->bisc", { beta, unit });
    const auto weight_c = torch::sqrt(beta.square().sum(2) + 1e-12).unsqueeze(2);
    const auto c_msg = w_s(agg_c * weight_c);

    h = h + h_msg;
    c = c + c_msg;
    e = e + symmetrize(w.edge) * pairf;
  };
  branch(s.h_x, s.x, s.e_x, wx);
  branch(s.h_y, s.y, s.e_y, wy);
}

void FlexiFlowLayerImpl::forward(LayerState &s) {
  ff->forward(s.h_x, s.x, s.mask);
  ff->forward(s.h_y, s.y, s.mask);
  const auto [wx, wy] = messages(s);
  attend(s, wx, wy);
}

// ---------------------------------------------------------------------------

EdgeUpdateImpl::EdgeUpdateImpl(const ModelConfig &cfg) {
  const int dm = cfg.d_message, c = cfg.d_coord, de = cfg.d_edge;
  norm_h = register_module("norm_h", layer_norm(cfg.d_model));
  norm_e = register_module("norm_e", layer_norm(de));
  norm_c = register_module("norm_c", EquivariantNorm(c));
  w_h = register_module("w_h", linear(cfg.d_model, dm));
  mlp = register_module("mlp", flexiflow::mlp(2 * dm + 2 * c + de, de, de));
}

torch::Tensor EdgeUpdateImpl::forward(const torch::Tensor &c,
                                      const torch::Tensor &h,
                                      const torch::Tensor &e,
                                      const torch::Tensor &mask,
                                      const torch::Tensor &pair) {
  const auto ct = norm_c(c, mask);
  const auto [hi, hj] = pair_expand(w_h(norm_h(h)));
  const auto diff = ct.unsqueeze(2) - ct.unsqueeze(1);
  const auto dist2 = diff.square().sum(3);
  const auto feats
      = torch::cat({ hi, hj, dist2, channel_products(ct), norm_e(e) }, -1);
  const auto pairf = pair.unsqueeze(-1).to(e.scalar_type());
  return e + symmetrize(mlp->forward(feats)) * pairf;
}

// ---------------------------------------------------------------------------

FlexiFlowNetImpl::FlexiFlowNetImpl(const ModelConfig &cfg): cfg_(cfg) {
  const auto errors = cfg.validate();
  if (!errors.empty())
    throw ConfigError(errors.front());
  const int d = cfg.d_model, de = cfg.d_edge, c = cfg.d_coord;
  const int in_h = cfg.n_atom_types + cfg.n_charge_types + cfg.time_embed_dim;
  embed_h = register_module("embed_h", mlp(in_h, d, d));
  embed_e = register_module("embed_e", mlp(cfg.n_bond_types, de, de));
  lift = register_module("lift", linear(1, c, false));
  layers = register_module("layers", nn::ModuleList());
  for (int l = 0; l < cfg.n_layers; ++l)
    layers->push_back(FlexiFlowLayer(cfg));
  final_ff = register_module("final_ff", FeedForward(cfg));
  edge_update = register_module("edge_update", EdgeUpdate(cfg));
  coord_out = register_module("coord_out", linear(c, 1, false));
  norm_atom = register_module("norm_atom", layer_norm(d));
  norm_bond = register_module("norm_bond", layer_norm(de));
  atom_head = register_module("atom_head", mlp(d, d, cfg.n_atom_types));
  charge_head = register_module("charge_head", mlp(d, d, cfg.n_charge_types));
  bond_head = register_module("bond_head", mlp(de, de, cfg.n_bond_types));
}

LayerState FlexiFlowNetImpl::featurize(const MolBatch &st) {
  auto in_range = [](const torch::Tensor &v, int k, const char *what) {
    if (v.numel() > 0
        && (v.min().item<int64_t>() < 0 || v.max().item<int64_t>() >= k))
      throw std::invalid_argument(std::string(what) + " index out of range");
  };
  in_range(st.atoms, cfg_.n_atom_types, "atom");
  in_range(st.charges, cfg_.n_charge_types, "charge");
  in_range(st.bonds, cfg_.n_bond_types, "bond");

  const auto dtype = lift->weight.scalar_type();
  const auto b = st.atoms.size(0), n = st.atoms.size(1);
  const auto temb = time_embedding(st.t.to(dtype), cfg_.time_embed_dim)
                        .unsqueeze(1)
                        .expand({ b, n, cfg_.time_embed_dim });
  const auto node = torch::cat({ torch::one_hot(st.atoms, cfg_.n_atom_types).to(dtype),
                                 torch::one_hot(st.charges, cfg_.n_charge_types).to(dtype),
                                 temb },
                               -1);
  const auto maskf = st.mask.to(dtype);

  LayerState s;
  s.mask = st.mask;
  s.pair = pair_mask(st.mask);
  s.h_x = embed_h->forward(node);
  s.h_y = s.h_x;
  s.e_x = embed_e->forward(torch::one_hot(st.bonds, cfg_.n_bond_types).to(dtype));
  s.e_y = s.e_x;

  auto lift_coords = [&](const torch::Tensor &v) {
    auto c = lift(v.to(dtype).unsqueeze(-1));  // B x N x 3 x C
    if (cfg_.fault == "coord_bias") {
      const auto bias = torch::tensor({ 0.3, -0.2, 0.5 }, dtype).view({ 1, 1, 3, 1 });
      c = c + bias;
    }
    return c * maskf.unsqueeze(-1).unsqueeze(-1);
  };
  s.x = lift_coords(st.x);
  s.y = lift_coords(st.y);
  return s;
}

ModelOutput FlexiFlowNetImpl::refine(LayerState &s) {
  final_ff->forward(s.h_x, s.x, s.mask);
  final_ff->forward(s.h_y, s.y, s.mask);
  s.e_x = edge_update->forward(s.x, s.h_x, s.e_x, s.mask, s.pair);
  s.e_y = edge_update->forward(s.y, s.h_y, s.e_y, s.mask, s.pair);
  check_finite(s, "refinement");

  ModelOutput out;
  out.x_hat = remove_com(coord_out(s.x).squeeze(-1), s.mask);
  out.y_hat = remove_com(coord_out(s.y).squeeze(-1), s.mask);
  const auto hx = norm_atom(s.h_x), hy = norm_atom(s.h_y);
  out.atom_logits_x = atom_head->forward(hx);
  out.atom_logits_y = atom_head->forward(hy);
  out.charge_logits_x = charge_head->forward(hx);
  out.charge_logits_y = charge_head->forward(hy);
  out.bond_logits_x = symmetrize(bond_head->forward(norm_bond(s.e_x)));
  out.bond_logits_y = symmetrize(bond_head->forward(norm_bond(s.e_y)));
  return out;
}

ModelOutput FlexiFlowNetImpl::forward(const MolBatch &state) {
  auto s = featurize(state);
  check_finite(s, "featurization");
  for (std::size_t l = 0; l < layers->size(); ++l) {
    layers[l]->as<FlexiFlowLayer>()->forward(s);
    check_finite(s, "layer " + std::to_string(l));
  }
  return refine(s);
}

// ---------------------------------------------------------------------------

FlexiFlowNet make_network(const ModelConfig &cfg, std::uint64_t seed) {
  torch::manual_seed(seed);
  return FlexiFlowNet(cfg);
}

int64_t parameter_count(const torch::nn::Module &m) {
  int64_t total = 0;
  for (const auto &p: m.parameters())
    total += p.numel();
  return total;
}

void randomize_parameters(torch::nn::Module &m, Rng &rng, double scale) {
  torch::NoGradGuard guard;
  for (auto &item: m.named_parameters()) {
    const auto &name = item.key();
    auto &p = item.value();
    const bool gain = name.ends_with("gamma")
                      || (name.find("norm") != std::string::npos
                          && name.ends_with(".weight"));
    auto draw = normal_tensor(p.sizes(), rng, p.scalar_type());
    if (gain)
      p.copy_(1.0 + 0.1 * draw);
    else if (p.dim() >= 2)
      p.copy_(draw * (scale / std::sqrt(static_cast<double>(p.size(1)))));
    else
      p.copy_(0.1 * scale * draw);
  }
}

}  // namespace flexiflow
