//
// SPDX-License-Identifier: Apache-2.0
//

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "flexiflow/checkpoint.h"
#include "flexiflow/training.h"

namespace flexiflow {
namespace {

namespace fs = std::filesystem;

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.model = ModelConfig::preset("tiny");
  cfg.dtype = "float64";
  cfg.warmup_iters = 20;
  cfg.batch_atoms = 40;
  cfg.epochs = 1000;
  cfg.out_dir = "";
  cfg.seed = 5;
  return cfg;
}

const Dataset &toy() {
  static const Dataset ds = generate_toy_dataset(3, 4, ToyOptions{ 3, 2, 3 });
  return ds;
}

fs::path temp_dir(const std::string &name) {
  const auto dir = fs::temp_directory_path() / ("flexiflow_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

MolBatch toy_target() {
  const auto tuples = build_training_tuples(toy());
  return collate(std::span(tuples).subspan(0, 3), torch::kFloat64);
}

TEST(MakeNoisyBatch, EndpointAtTOne) {
  InterpolantConfig icfg;
  icfg.sigma = 0.0;
  const auto target = toy_target();
  Rng rng(1);
  const auto s = make_noisy_batch(target, icfg, ModelConfig::preset("tiny"), rng, 1.0);
  EXPECT_TRUE(torch::equal(s.atoms, target.atoms));
  EXPECT_TRUE(torch::equal(s.charges, target.charges));
  EXPECT_TRUE(torch::equal(s.bonds, target.bonds));
  EXPECT_LT((s.x - remove_com(target.x, target.mask)).abs().max().item<double>(), 1e-12);
  EXPECT_LT((s.y - remove_com(target.y, target.mask)).abs().max().item<double>(), 1e-12);
}

TEST(MakeNoisyBatch, PureNoiseAtTZero) {
  InterpolantConfig icfg;
  icfg.sigma = 0.0;
  const auto target = toy_target();
  const auto mcfg = ModelConfig::preset("tiny");
  Rng a(2), b(2);
  const auto s0 = make_noisy_batch(target, icfg, mcfg, a, 0.0);
  // Different targets, same stream: t = 0 ignores the target entirely.
  auto other = target.clone();
  other.x = other.x * 3.0 + 1.0;
  other.atoms = torch::zeros_like(other.atoms);
  const auto s1 = make_noisy_batch(other, icfg, mcfg, b, 0.0);
  EXPECT_TRUE(torch::equal(s0.x, s1.x));
  EXPECT_TRUE(torch::equal(s0.atoms, s1.atoms));
  const auto centroid = (s0.x * s0.mask.unsqueeze(-1)).sum(1);
  EXPECT_LT(centroid.abs().max().item<double>(), 1e-12);
}

// Kolmogorov-Smirnov against F(t) = t^2 at the 1% level.
TEST(MakeNoisyBatch, TimeIsBetaTwoOne) {
  const auto target = toy_target();
  const auto mcfg = ModelConfig::preset("tiny");
  Rng rng(3);
  std::vector<double> ts;
  for (int k = 0; k < 4000; ++k) {
    const auto s = make_noisy_batch(target, InterpolantConfig{}, mcfg, rng);
    for (int64_t b = 0; b < s.batch_size(); ++b)
      ts.push_back(s.t[b].item<double>());
  }
  std::sort(ts.begin(), ts.end());
  const double n = static_cast<double>(ts.size());
  double d = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double f = ts[i] * ts[i];
    d = std::max({ d, std::abs((i + 1) / n - f), std::abs(i / n - f) });
  }
  EXPECT_LT(d, 1.628 / std::sqrt(n));
}

TEST(LearningRate, WarmupSchedule) {
  TrainConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.lr_at(0), 1e-5);
  EXPECT_DOUBLE_EQ(cfg.lr_at(10000), 1e-3);
  EXPECT_DOUBLE_EQ(cfg.lr_at(50000), 1e-3);
  double prev = 0.0;
  for (long i = 0; i <= 12000; i += 500) {
    EXPECT_GE(cfg.lr_at(i), prev);
    prev = cfg.lr_at(i);
  }
}

TEST(Ema, DecayExtremes) {
  auto p = torch::tensor({ 1.0, 2.0 }, torch::kFloat64);
  Ema keep({ p });
  Ema follow({ p });
  torch::NoGradGuard guard;
  p.add_(5.0);
  keep.update({ p }, 1.0);
  follow.update({ p }, 0.0);
  EXPECT_TRUE(torch::equal(keep.shadow[0], torch::tensor({ 1.0, 2.0 }, torch::kFloat64)));
  EXPECT_TRUE(torch::equal(follow.shadow[0], p));
}

TEST(AtomBudgetBatches, EveryTupleOncePerEpoch) {
  const auto tuples = build_training_tuples(toy());
  Rng rng(4);
  const auto plan = atom_budget_batches(tuples, 30, rng);
  std::vector<int> seen(tuples.size(), 0);
  for (const auto &batch: plan) {
    int atoms = 0;
    for (auto i: batch) {
      ++seen[i];
      atoms += tuples[i].num_atoms();
    }
    EXPECT_TRUE(atoms <= 30 || batch.size() == 1);
  }
  for (int s: seen)
    EXPECT_EQ(s, 1);
}

TEST(Trainer, StepIsFiniteAndMovesParameters) {
  auto cfg = tiny_config();
  Trainer tr(cfg, toy());
  const auto before = tr.net()->parameters()[0].clone();
  const auto rec = tr.step();
  for (const auto &[k, v]: rec.losses)
    EXPECT_TRUE(std::isfinite(v)) << k;
  bool moved = false;
  for (const auto &p: tr.net()->parameters())
    moved = moved || p.grad().defined();
  EXPECT_TRUE(moved);
  tr.step();
  EXPECT_FALSE(torch::equal(before, tr.net()->parameters()[0]));
}

TEST(Trainer, SameSeedSameLossTrace) {
  const auto cfg = tiny_config();
  Trainer a(cfg, toy()), b(cfg, toy());
  for (int k = 0; k < 10; ++k)
    EXPECT_EQ(a.step().losses.at("total"), b.step().losses.at("total")) << k;
}

TEST(Trainer, ResumeReproducesNextStep) {
  const auto dir = temp_dir("resume");
  auto cfg = tiny_config();
  Trainer full(cfg, toy());
  for (int k = 0; k < 7; ++k)
    full.step();
  save_checkpoint(dir / "ck.ffck", full.checkpoint());
  const double expected = full.step().losses.at("total");

  Trainer resumed(cfg, toy());
  resumed.resume(load_checkpoint(dir / "ck.ffck"));
  EXPECT_EQ(resumed.iteration(), 7);
  EXPECT_EQ(resumed.step().losses.at("total"), expected);
}

TEST(Trainer, RunWritesCheckpointAndLog) {
  const auto dir = temp_dir("run");
  auto cfg = tiny_config();
  cfg.out_dir = dir.string();
  cfg.max_steps = 6;
  cfg.log_every = 2;
  cfg.checkpoint_every = 3;
  Trainer tr(cfg, toy());
  std::ostringstream log;
  tr.run(&log);
  EXPECT_TRUE(fs::exists(dir / "checkpoint.ffck"));
  const auto ck = load_checkpoint(dir / "checkpoint.ffck");
  EXPECT_EQ(ck.iteration, 6);
  EXPECT_TRUE(ck.groups.count("ema"));
  EXPECT_NE(log.str().find("\"iteration\":4"), std::string::npos);
}

TEST(Trainer, OverfitsFewTuples) {
  auto cfg = tiny_config();
  cfg.model.d_model = 64;
  cfg.model.n_attn_heads = 4;
  cfg.learning_rate = 3e-3;
  cfg.warmup_iters = 50;
  cfg.batch_atoms = 1000;
  cfg.max_steps = 500;
  cfg.interpolant.sigma = 0.0;
  const auto ds = generate_toy_dataset(11, 2, ToyOptions{ 5, 2, 3 });
  Trainer tr(cfg, ds);
  ASSERT_EQ(tr.tuples().size(), 10u);
  double at10 = 0.0, tail = 0.0;
  int tail_n = 0;
  while (!tr.done()) {
    const auto r = tr.step();
    if (r.iteration == 10)
      at10 = r.losses.at("total");
    if (r.iteration >= 450) {
      tail += r.losses.at("total");
      ++tail_n;
    }
  }
  EXPECT_LE(tail / tail_n, 0.2 * at10) << at10 << " -> " << tail / tail_n;
}

TEST(Checkpoint, RoundTripAndErrors) {
  const auto dir = temp_dir("ckpt");
  auto net = make_network(ModelConfig::preset("tiny"), 1);
  Checkpoint ck;
  ck.model = ModelConfig::preset("tiny");
  ck.vocab = Vocabularies::qm9();
  ck.scale = 1.7;
  ck.atom_histogram = { 0, 1, 3 };
  ck.iteration = 12;
  ck.groups["params"] = named_parameters_of(*net);
  save_checkpoint(dir / "a.ffck", ck);
  const auto back = load_checkpoint(dir / "a.ffck");
  EXPECT_EQ(back.model, ck.model);
  EXPECT_EQ(back.vocab, ck.vocab);
  EXPECT_EQ(back.scale, 1.7);
  EXPECT_EQ(back.atom_histogram, ck.atom_histogram);
  auto other = make_network(ModelConfig::preset("tiny"), 2);
  load_parameters(*other, back.groups.at("params"));
  const auto a = net->parameters(), b = other->parameters();
  for (std::size_t k = 0; k < a.size(); ++k)
    EXPECT_TRUE(torch::equal(a[k], b[k]));

  std::ofstream(dir / "bad.ffck") << "NOPE";
  EXPECT_THROW(load_checkpoint(dir / "bad.ffck"), CheckpointError);
  EXPECT_THROW(load_checkpoint(dir / "missing.ffck"), CheckpointError);

  auto group = back.groups.at("params");
  group.erase(group.begin());
  EXPECT_THROW(load_parameters(*other, group), CheckpointError);
}

TEST(Checkpoint, RejectsNewerVersion) {
  const auto dir = temp_dir("ckpt_version");
  Checkpoint ck;
  ck.model = ModelConfig::preset("tiny");
  ck.vocab = Vocabularies::qm9();
  save_checkpoint(dir / "a.ffck", ck);
  std::fstream f(dir / "a.ffck", std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(4);
  const char version[4] = { 99, 0, 0, 0 };
  f.write(version, 4);
  f.close();
  EXPECT_THROW(load_checkpoint(dir / "a.ffck"), CheckpointError);
}

TEST(TrainConfig, YamlRoundTrip) {
  auto cfg = parse_train_config(R"(
seed: 9
dataset: data/toy
model: {preset: tiny, d_model: 48, n_attn_heads: 4}
optimizer: {learning_rate: 2.0e-3, warmup_iters: 100}
training: {batch_atoms: 64, dtype: float64}
loss: {align: 0.5}
)");
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_EQ(cfg.model.d_model, 48);
  EXPECT_EQ(cfg.model.n_layers, 2);
  EXPECT_DOUBLE_EQ(cfg.lr_at(100), 2e-3);
  EXPECT_EQ(cfg.loss.align, 0.5);
  const auto again = parse_train_config(train_config_to_yaml(cfg));
  EXPECT_EQ(again.model, cfg.model);
  EXPECT_EQ(again.batch_atoms, 64);
  EXPECT_EQ(again.dtype, "float64");
}

TEST(TrainConfig, Errors) {
  EXPECT_THROW(parse_train_config("model: {d_modle: 3}"), ConfigError);
  EXPECT_THROW(parse_train_config("model: {d_model: 30, n_attn_heads: 4}"), ConfigError);
  EXPECT_THROW(parse_train_config("optimizer: {ema_decay: 1.5}"), ConfigError);
  EXPECT_THROW(parse_train_config("model: {preset: huge}"), ConfigError);
}

}  // namespace
}  // namespace flexiflow
