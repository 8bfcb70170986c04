//
// SPDX-License-Identifier: Apache-2.0
//

#include "flexiflow/training.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

#include "flexiflow/flow_engine.h"

namespace flexiflow {

namespace {
  constexpr std::uint64_t kEpochKey = 0x45504f4348000000ULL;

  torch::ScalarType parse_dtype(const std::string &s) {
    return s == "float64" ? torch::kFloat64 : torch::kFloat32;
  }

  std::vector<torch::Tensor> params_of(torch::nn::Module &m) {
    return m.parameters();
  }
}  // namespace

MolBatch make_noisy_batch(const MolBatch &target, const InterpolantConfig &icfg,
                          const ModelConfig &mcfg, Rng &rng,
                          std::optional<double> force_t) {
  const auto dtype = target.x.scalar_type();
  const auto tgt = target.to(torch::kFloat64);
  MolBatch s;
  s.mask = target.mask;
  s.atoms = torch::zeros_like(target.atoms);
  s.charges = torch::zeros_like(target.charges);
  s.bonds = torch::zeros_like(target.bonds);
  s.x = torch::zeros_like(tgt.x);
  s.y = torch::zeros_like(tgt.y);
  s.t = torch::zeros({ target.batch_size() }, torch::kFloat64);

  using torch::indexing::Slice;
  for (int64_t b = 0; b < target.batch_size(); ++b) {
    const int64_t n = target.mask[b].sum().item<int64_t>();
    const double t = force_t ? *force_t : sample_time(icfg, rng);
    s.t[b] = t;
    auto x0 = remove_com(normal_tensor({ n, 3 }, rng));
    auto y0 = remove_com(normal_tensor({ n, 3 }, rng));
    const auto x1 = tgt.x[b].index({ Slice(0, n) });
    const auto y1 = tgt.y[b].index({ Slice(0, n) });
    s.x[b].index_put_({ Slice(0, n) },
                      remove_com(interpolate_coords(x0, x1, t, icfg.sigma, rng)));
    s.y[b].index_put_({ Slice(0, n) },
                      remove_com(interpolate_coords(y0, y1, t, icfg.sigma, rng)));

    const auto a1 = target.atoms[b].index({ Slice(0, n) });
    const auto c1 = target.charges[b].index({ Slice(0, n) });
    const auto b1 = target.bonds[b].index({ Slice(0, n), Slice(0, n) });
    const auto a0 = uniform_categorical({ n }, mcfg.n_atom_types, rng);
    const auto c0 = uniform_categorical({ n }, mcfg.n_charge_types, rng);
    const auto b0 = uniform_categorical_symmetric(1, n, mcfg.n_bond_types, rng)[0];
    s.atoms[b].index_put_({ Slice(0, n) }, cat_interp(t, a0, a1, rng));
    s.charges[b].index_put_({ Slice(0, n) }, cat_interp(t, c0, c1, rng));
    s.bonds[b].index_put_({ Slice(0, n), Slice(0, n) },
                          cat_interp_symmetric(t, b0, b1, rng));
  }
  return s.to(dtype);
}

// ---------------------------------------------------------------------------

Adam::Adam(std::vector<torch::Tensor> ps, double beta1, double beta2, double eps,
           double weight_decay)
    : params(std::move(ps)), beta1_(beta1), beta2_(beta2), eps_(eps),
      weight_decay_(weight_decay) {
  for (const auto &p: params) {
    m.push_back(torch::zeros_like(p));
    v.push_back(torch::zeros_like(p));
  }
}

void Adam::step(double lr) {
  torch::NoGradGuard guard;
  ++steps;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto &p = params[k];
    if (!p.grad().defined())
      continue;
    auto g = p.grad();
    if (weight_decay_ != 0.0)
      g = g + weight_decay_ * p;
    m[k].mul_(beta1_).add_(g, 1.0 - beta1_);
    v[k].mul_(beta2_).addcmul_(g, g, 1.0 - beta2_);
    const auto denom = (v[k] / c2).sqrt_().add_(eps_);
    p.addcdiv_(m[k], denom, -lr / c1);
  }
}

Ema::Ema(const std::vector<torch::Tensor> &params) {
  for (const auto &p: params)
    shadow.push_back(p.detach().clone());
}

void Ema::update(const std::vector<torch::Tensor> &params, double decay) {
  torch::NoGradGuard guard;
  for (std::size_t k = 0; k < params.size(); ++k)
    shadow[k].mul_(decay).add_(params[k].detach(), 1.0 - decay);
}

std::vector<std::vector<std::size_t>> atom_budget_batches(
    const std::vector<TrainingTuple> &tuples, int budget, Rng &rng) {
  std::vector<std::size_t> order(tuples.size());
  std::iota(order.begin(), order.end(), std::size_t{ 0 });
  std::shuffle(order.begin(), order.end(), rng.engine());

  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> cur;
  int atoms = 0;
  for (auto k: order) {
    const int n = tuples[k].num_atoms();
    if (!cur.empty() && atoms + n > budget) {
      batches.push_back(std::move(cur));
      cur.clear();
      atoms = 0;
    }
    cur.push_back(k);
    atoms += n;
  }
  if (!cur.empty())
    batches.push_back(std::move(cur));
  return batches;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(TrainConfig cfg, const Dataset &ds)
    : cfg_(std::move(cfg)), ds_(ds) {
  if (const auto errors = cfg_.validate(); !errors.empty())
    throw ConfigError(errors.front());
  if (ds_.molecules.empty())
    throw std::invalid_argument("training dataset is empty");
  cfg_.model.n_atom_types = ds_.vocab.num_atom_types();
  cfg_.model.n_bond_types = ds_.vocab.num_bond_types();
  cfg_.model.n_charge_types = ds_.vocab.num_charge_types();
  tuples_ = build_training_tuples(ds_, cfg_.include_representative_tuple);
  dtype_ = parse_dtype(cfg_.dtype);
  net_ = make_network(cfg_.model, cfg_.seed);
  net_->to(dtype_);
  adam_ = std::make_unique<Adam>(params_of(*net_), cfg_.adam_beta1,
                                 cfg_.adam_beta2, cfg_.adam_eps,
                                 cfg_.weight_decay);
  ema_ = std::make_unique<Ema>(params_of(*net_));
}

const std::vector<std::size_t> &Trainer::current_batch() {
  if (plan_epoch_ != epoch_) {
    Rng rng = Rng(cfg_.seed).derive(kEpochKey + static_cast<std::uint64_t>(epoch_));
    plan_ = atom_budget_batches(tuples_, cfg_.batch_atoms, rng);
    plan_epoch_ = epoch_;
  }
  return plan_[static_cast<std::size_t>(cursor_)];
}

bool Trainer::done() const {
  if (cfg_.max_steps >= 0 && iteration_ >= cfg_.max_steps)
    return true;
  return epoch_ >= cfg_.epochs;
}

StepRecord Trainer::step() {
  const auto &idx = current_batch();
  std::vector<TrainingTuple> picked;
  for (auto k: idx)
    picked.push_back(tuples_[k]);
  const auto target = collate(picked, dtype_);

  Rng rng = Rng(cfg_.seed).derive(static_cast<std::uint64_t>(iteration_));
  const auto state = make_noisy_batch(target, cfg_.interpolant, cfg_.model, rng);

  net_->train();
  net_->zero_grad();
  const auto out = net_->forward(state);
  const auto loss = total_loss(out, target, cfg_.loss);

  StepRecord rec;
  rec.iteration = iteration_;
  rec.epoch = epoch_;
  rec.lr = cfg_.lr_at(iteration_);
  rec.losses = loss.values();
  for (const auto &[name, value]: rec.losses)
    if (!std::isfinite(value))
      throw DivergenceError("non-finite loss component " + name + " at iteration "
                            + std::to_string(iteration_));

  loss.total.backward();
  adam_->step(rec.lr);
  ema_->update(adam_->params, cfg_.ema_decay);

  ++iteration_;
  if (++cursor_ >= static_cast<long>(plan_.size())) {
    cursor_ = 0;
    ++epoch_;
  }
  return rec;
}

void Trainer::run(std::ostream *log) {
  const std::filesystem::path out_dir = cfg_.out_dir;
  if (!cfg_.out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream(out_dir / "config.yaml") << train_config_to_yaml(cfg_);
  }
  std::map<std::string, double> epoch_sum;
  long epoch_steps = 0;
  while (!done()) {
    const auto rec = step();
    for (const auto &[k, v]: rec.losses)
      epoch_sum[k] += v;
    ++epoch_steps;
    if (log && (cfg_.log_every <= 1 || rec.iteration % cfg_.log_every == 0)) {
      nlohmann::json j = { { "iteration", rec.iteration },
                           { "epoch", rec.epoch },
                           { "lr", rec.lr } };
      for (const auto &[k, v]: rec.losses)
        j[k] = v;
      *log << j.dump() << "\n";
    }
    if (epoch_ != rec.epoch && log) {
      nlohmann::json j = { { "event", "epoch_end" }, { "epoch", rec.epoch },
                           { "steps", epoch_steps } };
      for (const auto &[k, v]: epoch_sum)
        j["mean_" + k] = v / static_cast<double>(epoch_steps);
      *log << j.dump() << "\n";
      epoch_sum.clear();
      epoch_steps = 0;
    }
    if (!cfg_.out_dir.empty() && cfg_.checkpoint_every > 0
        && iteration_ % cfg_.checkpoint_every == 0)
      save_checkpoint(out_dir / "checkpoint.ffck", checkpoint());
  }
  if (log)
    log->flush();
  if (!cfg_.out_dir.empty())
    save_checkpoint(out_dir / "checkpoint.ffck", checkpoint());
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.model = cfg_.model;
  c.interpolant = cfg_.interpolant;
  c.vocab = ds_.vocab;
  c.scale = ds_.scale;
  c.atom_histogram = ds_.atom_count_histogram();
  c.seed = cfg_.seed;
  c.iteration = iteration_;
  c.epoch = epoch_;
  c.cursor = cursor_;
  c.extra["train_config"] = train_config_to_yaml(cfg_);
  c.extra["adam_steps"] = adam_->steps;

  const auto named = net_->named_parameters();
  std::size_t k = 0;
  for (const auto &item: named) {
    c.groups["params"][item.key()] = item.value().detach().clone();
    c.groups["ema"][item.key()] = ema_->shadow[k].clone();
    c.groups["adam_m"][item.key()] = adam_->m[k].clone();
    c.groups["adam_v"][item.key()] = adam_->v[k].clone();
    ++k;
  }
  return c;
}

void Trainer::resume(const Checkpoint &ckpt) {
  if (!(ckpt.model == cfg_.model))
    throw CheckpointError("checkpoint model config differs from training config");
  load_parameters(*net_, ckpt.groups.at("params"));
  torch::NoGradGuard guard;
  std::size_t k = 0;
  for (const auto &item: net_->named_parameters()) {
    auto copy = [&](const char *group, torch::Tensor &dst) {
      dst.copy_(ckpt.groups.at(group).at(item.key()));
    };
    copy("ema", ema_->shadow[k]);
    copy("adam_m", adam_->m[k]);
    copy("adam_v", adam_->v[k]);
    ++k;
  }
  adam_->steps = ckpt.extra.value("adam_steps", ckpt.iteration);
  iteration_ = ckpt.iteration;
  epoch_ = ckpt.epoch;
  cursor_ = ckpt.cursor;
  plan_epoch_ = -1;
}

FlexiFlowNet Trainer::ema_network() const {
  auto net = make_network(cfg_.model, cfg_.seed);
  net->to(dtype_);
  TensorGroup g;
  std::size_t k = 0;
  for (const auto &item: net_->named_parameters())
    g[item.key()] = ema_->shadow[k++];
  load_parameters(*net, g);
  net->eval();
  return net;
}

}  // namespace flexiflow
