//
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include "flexiflow/metrics.h"
#include "flexiflow/sampler.h"
#include "flexiflow/verify.h"

namespace flexiflow {
namespace {

/// Predicts a fixed 3-atom molecule whatever the state: the exact
/// denoiser for a one-point data distribution.
struct Oracle {
  ModelConfig cfg;
  torch::Tensor x1, y1;
  std::vector<int64_t> atoms{ 1, 2, 0 }, charges{ 1, 1, 0 };

  Oracle(): cfg(verify_model_config()) {
    x1 = torch::tensor({ 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0 }, torch::kFloat64).view({ 3, 3 });
    x1 = remove_com(x1);
    y1 = remove_com(x1 * 1.5);
  }

  ModelOutput operator()(const MolBatch &s) const {
    const auto b = s.batch_size();
    const auto dt = s.x.scalar_type();
    auto one_hot = [&](const std::vector<int64_t> &v, int64_t k) {
      return (torch::one_hot(torch::tensor(v, torch::kLong), k).to(dt) * 30.0)
          .unsqueeze(0)
          .expand({ b, -1, -1 });
    };
    auto bonds = torch::zeros({ 3, 3 }, torch::kLong);
    bonds[0][1] = bonds[1][0] = 1;
    bonds[0][2] = bonds[2][0] = 1;
    ModelOutput o;
    o.x_hat = x1.to(dt).unsqueeze(0).expand({ b, -1, -1 });
    o.y_hat = y1.to(dt).unsqueeze(0).expand({ b, -1, -1 });
    o.atom_logits_x = o.atom_logits_y = one_hot(atoms, cfg.n_atom_types);
    o.charge_logits_x = o.charge_logits_y = one_hot(charges, cfg.n_charge_types);
    o.bond_logits_x = o.bond_logits_y
        = (torch::one_hot(bonds, cfg.n_bond_types).to(dt) * 30.0).unsqueeze(0).expand({ b, -1, -1, -1 });
    return o;
  }
};

TEST(SamplePrior, FixedStreamReproducesXOnly) {
  const auto cfg = verify_model_config();
  Rng x1(5), x2(5), y1(1), y2(2);
  const auto a = sample_prior(6, cfg, x1, y1, torch::kFloat64);
  const auto b = sample_prior(6, cfg, x2, y2, torch::kFloat64);
  EXPECT_TRUE(torch::equal(a.x, b.x));
  EXPECT_TRUE(torch::equal(a.atoms, b.atoms));
  EXPECT_TRUE(torch::equal(a.charges, b.charges));
  EXPECT_TRUE(torch::equal(a.bonds, b.bonds));
  EXPECT_FALSE(torch::equal(a.y, b.y));
  EXPECT_LT(a.x.sum(1).abs().max().item<double>(), 1e-12);
  EXPECT_LT(a.y.sum(1).abs().max().item<double>(), 1e-12);
  EXPECT_THROW(sample_prior(0, cfg, x1, y1), std::invalid_argument);
}

// Removing the mean of n iid unit normals leaves variance 1 - 1/n.
TEST(SamplePrior, CenteredVariance) {
  const auto cfg = verify_model_config();
  Rng rng(6);
  const int n = 4, draws = 25000;
  double sq = 0.0;
  for (int k = 0; k < draws; ++k)
    sq += sample_prior(n, cfg, rng, rng, torch::kFloat64).x.square().sum().item<double>();
  EXPECT_NEAR(sq / (draws * n * 3.0), 1.0 - 1.0 / n, 0.01);
}

TEST(Generate, OracleEndpointIndependentOfStepCount) {
  const Oracle oracle;
  const Predictor p = oracle;
  SampleOptions opts;
  opts.dtype = torch::kFloat64;
  opts.scale = 2.0;
  for (int steps: { 1, 10, 100 }) {
    opts.n_steps = steps;
    Rng rng(7);
    int calls = 0;
    const auto g = generate(p, oracle.cfg, 3, opts, SampleMode::kFresh, 0, rng, &calls);
    EXPECT_EQ(calls, steps);
    EXPECT_EQ(g.atoms, (std::vector<int>{ 1, 2, 0 }));
    EXPECT_EQ(g.bonds(0, 1), 1);
    EXPECT_EQ(g.bonds(1, 2), 0);
    ASSERT_EQ(g.num_conformers(), 2);
    EXPECT_LT((g.conformers[0] - 2.0 * to_coords(oracle.x1)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((g.conformers[1] - 2.0 * to_coords(oracle.y1)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Generate, FixedXSharesGraphAcrossYSeeds) {
  auto cfg = verify_model_config();
  auto net = make_network(cfg, 8);
  Rng init(8);
  randomize_parameters(*net, init);
  const auto p = network_predictor(net);
  SampleOptions opts;
  opts.n_steps = 8;
  Rng r1(1), r2(2);
  const auto a = generate(p, cfg, 5, opts, SampleMode::kFixedX, 99, r1);
  const auto b = generate(p, cfg, 5, opts, SampleMode::kFixedX, 99, r2);
  EXPECT_EQ(canonical_key(a), canonical_key(b));
  EXPECT_EQ(a.atoms, b.atoms);
  EXPECT_EQ(a.bonds, b.bonds);
  EXPECT_EQ(a.conformers[0], b.conformers[0]);
  EXPECT_NE(a.conformers[1], b.conformers[1]);
}

TEST(Generate, SeedDeterminesOutput) {
  auto cfg = verify_model_config();
  auto net = make_network(cfg, 9);
  Rng init(9);
  randomize_parameters(*net, init);
  const auto p = network_predictor(net);
  SampleOptions opts;
  opts.n_steps = 5;
  Rng r1(3), r2(3);
  const auto a = generate(p, cfg, 4, opts, SampleMode::kFresh, 0, r1);
  const auto b = generate(p, cfg, 4, opts, SampleMode::kFresh, 0, r2);
  EXPECT_EQ(a.atoms, b.atoms);
  EXPECT_EQ(a.conformers[0], b.conformers[0]);
  EXPECT_EQ(a.conformers[1], b.conformers[1]);
}

TEST(GenerateEnsemble, OneMemberHasTwoConformers) {
  const Oracle oracle;
  SampleOptions opts;
  opts.n_steps = 4;
  Rng rng(10);
  const auto g = generate_ensemble(oracle, oracle.cfg, 3, 1, opts, 5, rng);
  EXPECT_EQ(g.num_conformers(), 2);
  EXPECT_EQ(g.representative, 0);
  EXPECT_THROW(generate_ensemble(oracle, oracle.cfg, 3, 0, opts, 5, rng), std::invalid_argument);
}

TEST(GenerateEnsemble, CallsPerEnsembleEqualSteps) {
  auto cfg = verify_model_config();
  auto net = make_network(cfg, 11);
  Rng init(11);
  randomize_parameters(*net, init);
  const auto inner = network_predictor(net);
  int calls = 0;
  const Predictor p = [&](const MolBatch &s) {
    ++calls;
    return inner(s);
  };
  SampleOptions opts;
  opts.n_steps = 6;
  Rng rng(12);
  const auto g = generate_ensemble(p, cfg, 4, 5, opts, 7, rng);
  EXPECT_EQ(calls, 6);
  EXPECT_EQ(g.num_conformers(), 6);
  // The y conformers start from distinct noise.
  EXPECT_GT(conformer_diversity(std::span(g.conformers).subspan(1)), 0.0);
}

// With the x-branch prediction rotated along with the fixed noise the graph
// is unchanged and the x conformer rotates.
TEST(GenerateEnsemble, FixedNoiseRotationEquivariance) {
  auto cfg = verify_model_config();
  auto net = make_network(cfg, 13);
  Rng init(13);
  randomize_parameters(*net, init);
  net->to(torch::kFloat64);
  const auto p = network_predictor(net);
  SampleOptions opts;
  opts.n_steps = 5;
  opts.dtype = torch::kFloat64;
  Rng xs(3), ys(4);
  auto prior = sample_prior(5, cfg, xs, ys, torch::kFloat64);
  Rng rr(5);
  const auto r = random_rotation(rr);
  auto rotated = prior.clone();
  rotated.x = rotate(prior.x, r);
  rotated.y = rotate(prior.y, r);
  std::vector<Rng> s1{ Rng(6) }, s2{ Rng(6) };
  const auto a = integrate(p, prior, s1, opts).front();
  const auto b = integrate(p, rotated, s2, opts).front();
  EXPECT_EQ(a.atoms, b.atoms);
  EXPECT_EQ(a.bonds, b.bonds);
  const Coords expected = a.conformers[0] * r.transpose();
  EXPECT_LT((b.conformers[0] - expected).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(SampleAtomCount, FollowsHistogram) {
  const std::vector<int> hist{ 0, 0, 1, 0, 3 };
  Rng rng(14);
  int fours = 0;
  for (int k = 0; k < 20000; ++k) {
    const int n = sample_atom_count(hist, rng);
    ASSERT_TRUE(n == 2 || n == 4);
    fours += n == 4;
  }
  EXPECT_NEAR(fours / 20000.0, 0.75, 0.015);
}

TEST(SampleFileName, EmbedsSeedAndSteps) {
  EXPECT_EQ(sample_file_name("samples", 7, 100, "sdf"), "samples_s7_nfe100.sdf");
}

}  // namespace
}  // namespace flexiflow
