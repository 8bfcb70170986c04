//
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include "flexiflow/net.h"
#include "flexiflow/verify.h"

namespace flexiflow {
namespace {

constexpr auto kF64 = torch::kFloat64;

FlexiFlowNet random_net(const ModelConfig &cfg, std::uint64_t seed) {
  auto net = make_network(cfg, seed);
  Rng rng(seed);
  randomize_parameters(*net, rng);
  net->to(kF64);
  return net;
}

/// c: B x N x 3 x C, rotated on the spatial axis.
torch::Tensor rotate_channels(const torch::Tensor &c, const Eigen::Matrix3d &r) {
  return rotate(c.transpose(-1, -2), r).transpose(-1, -2);
}

TEST(Featurize, ShapesAndSharedLift) {
  const auto cfg = verify_model_config();
  auto net = random_net(cfg, 1);
  Rng rng(1);
  auto s = random_state(cfg, { 5, 3 }, rng);
  s.y = s.x.clone();
  const auto st = net->featurize(s);
  EXPECT_EQ(st.h_x.sizes(), (std::vector<int64_t>{ 2, 5, cfg.d_model }));
  EXPECT_EQ(st.e_x.sizes(), (std::vector<int64_t>{ 2, 5, 5, cfg.d_edge }));
  EXPECT_EQ(st.x.sizes(), (std::vector<int64_t>{ 2, 5, 3, cfg.d_coord }));
  EXPECT_TRUE(torch::equal(st.x, st.y));
  EXPECT_TRUE(torch::equal(st.h_x, st.h_y));
  EXPECT_TRUE(torch::equal(st.e_x, st.e_y));
}

TEST(Featurize, LiftCommutesWithRotation) {
  const auto cfg = verify_model_config();
  auto net = random_net(cfg, 2);
  Rng rng(2);
  auto s = random_state(cfg, { 4 }, rng);
  const auto r = random_rotation(rng);
  auto rs = s;
  rs.x = rotate(s.x, r);
  const auto a = net->featurize(rs).x;
  const auto b = rotate_channels(net->featurize(s).x, r);
  EXPECT_LT(max_relative_error(a, b), 1e-12);
}

TEST(Featurize, RejectsOutOfVocabulary) {
  const auto cfg = verify_model_config();
  auto net = random_net(cfg, 3);
  Rng rng(3);
  auto s = random_state(cfg, { 3 }, rng);
  s.atoms[0][0] = cfg.n_atom_types;
  EXPECT_THROW(net->forward(s), std::invalid_argument);
}

TEST(EquivariantNorm, ScaleInvariantAndEquivariant) {
  torch::manual_seed(4);
  EquivariantNorm norm(6);
  norm->to(kF64);
  Rng rng(4);
  const auto c = normal_tensor({ 1, 5, 3, 6 }, rng);
  const auto mask = torch::ones({ 1, 5 }, torch::kBool);
  const auto base = norm(c, mask);
  EXPECT_LT(max_relative_error(norm(5.0 * c, mask), base), 1e-6);
  const auto r = random_rotation(rng);
  EXPECT_LT(max_relative_error(norm(rotate_channels(c, r), mask), rotate_channels(base, r)), 1e-12);
}

TEST(EquivariantNorm, UnitRmsUnchanged) {
  EquivariantNorm norm(2);
  norm->to(kF64);
  // Each channel: one atom with |c| = 1.
  auto c = torch::zeros({ 1, 1, 3, 2 }, kF64);
  c[0][0][0][0] = 1.0;
  c[0][0][1][1] = -1.0;
  EXPECT_LT((norm(c) - c).abs().max().item<double>(), 1e-5);
}

TEST(FeedForward, IdenticalBranchesGiveIdenticalOutputs) {
  const auto cfg = verify_model_config();
  torch::manual_seed(5);
  FeedForward ff(cfg);
  Rng rng(5);
  randomize_parameters(*ff, rng);
  ff->to(kF64);
  const auto mask = torch::ones({ 1, 4 }, torch::kBool);
  auto h1 = normal_tensor({ 1, 4, cfg.d_model }, rng);
  auto c1 = normal_tensor({ 1, 4, 3, cfg.d_coord }, rng);
  auto h2 = h1.clone(), c2 = c1.clone();
  ff(h1, c1, mask);
  ff(h2, c2, mask);
  EXPECT_TRUE(torch::equal(h1, h2));
  EXPECT_TRUE(torch::equal(c1, c2));
}

TEST(FeedForward, ZeroInitPassesCoordinatesThrough) {
  const auto cfg = verify_model_config();
  torch::manual_seed(6);
  FeedForward ff(cfg);
  ff->to(kF64);
  Rng rng(6);
  auto h = normal_tensor({ 1, 4, cfg.d_model }, rng);
  auto c = normal_tensor({ 1, 4, 3, cfg.d_coord }, rng);
  const auto h0 = h.clone(), c0 = c.clone();
  ff(h, c, torch::ones({ 1, 4 }, torch::kBool));
  EXPECT_TRUE(torch::equal(c, c0));
  EXPECT_TRUE(torch::equal(h, h0));
}

TEST(FeedForward, CoordinateUpdateIsEquivariant) {
  const auto cfg = verify_model_config();
  torch::manual_seed(7);
  FeedForward ff(cfg);
  Rng rng(7);
  randomize_parameters(*ff, rng);
  ff->to(kF64);
  const auto mask = torch::ones({ 1, 4 }, torch::kBool);
  auto h1 = normal_tensor({ 1, 4, cfg.d_model }, rng);
  auto c1 = normal_tensor({ 1, 4, 3, cfg.d_coord }, rng);
  const auto r = random_rotation(rng);
  auto h2 = h1.clone();
  auto c2 = rotate_channels(c1, r);
  ff(h1, c1, mask);
  ff(h2, c2, mask);
  EXPECT_LT(max_relative_error(h2, h1), 1e-12);
  EXPECT_LT(max_relative_error(c2, rotate_channels(c1, r)), 1e-12);
}

LayerState layer_state(FlexiFlowNet &net, const ModelConfig &cfg, Rng &rng,
                       const std::vector<int> &counts) {
  return net->featurize(random_state(cfg, counts, rng));
}

TEST(Messages, InvariantUnderIndependentRotations) {
  const auto cfg = verify_model_config();
  auto net = random_net(cfg, 8);
  Rng rng(8);
  auto s = layer_state(net, cfg, rng, { 5 });
  auto layer = net->layers[0]->as<FlexiFlowLayer>();
  const auto [wx, wy] = layer->messages(s);
  auto rs = s;
  rs.x = rotate_channels(s.x, random_rotation(rng));
  rs.y = rotate_channels(s.y, random_rotation(rng));
  const auto [rx, ry] = layer->messages(rs);
  for (const auto &[a, b]: { std::pair{ wx.inv, rx.inv }, std::pair{ wx.equi, rx.equi },
                             std::pair{ wy.inv, ry.inv }, std::pair{ wy.edge, ry.edge } })
    EXPECT_LT(max_relative_error(b, a), 1e-12);
}

TEST(Messages, PermutationEquivariant) {
  const auto cfg = verify_model_config();
  auto net = random_net(cfg, 9);
  Rng rng(9);
  auto state = random_state(cfg, { 4 }, rng);
  const auto perm = torch::tensor({ 2, 0, 3, 1 }, torch::kLong);
  auto layer = net->layers[0]->as<FlexiFlowLayer>();
  const auto [wx, wy] = layer->messages(net->featurize(state));
  const auto [px, py] = layer->messages(net->featurize(permute_batch(state, perm)));
  const auto permuted = wx.inv.index_select(1, perm).index_select(2, perm);
  EXPECT_LT(max_relative_error(px.inv, permuted), 1e-12);
  const auto permuted_y = wy.equi.index_select(1, perm).index_select(2, perm);
  EXPECT_LT(max_relative_error(py.equi, permuted_y), 1e-12);
}

TEST(Attention, SingleAtomIsUnchanged) {
  const auto cfg = verify_model_config();
  auto net = random_net(cfg, 10);
  Rng rng(10);
  auto s = layer_state(net, cfg, rng, { 1 });
  auto layer = net->layers[0]->as<FlexiFlowLayer>();
  const auto [wx, wy] = layer->messages(s);
  auto after = s;
  after.h_x = s.h_x.clone();
  after.x = s.x.clone();
  after.e_x = s.e_x.clone();
  layer->attend(after, wx, wy);
  EXPECT_TRUE(torch::equal(after.h_x, s.h_x));
  EXPECT_TRUE(torch::equal(after.x, s.x));
  EXPECT_TRUE(torch::equal(after.e_x, s.e_x));
}

TEST(EdgeUpdate, SymmetricAndRotationInvariant) {
  const auto cfg = verify_model_config();
  auto net = random_net(cfg, 11);
  Rng rng(11);
  auto s = layer_state(net, cfg, rng, { 5 });
  const auto e = net->edge_update(s.x, s.h_x, s.e_x, s.mask, s.pair);
  EXPECT_LT((e - e.transpose(1, 2)).abs().max().item<double>(), 1e-14);
  const auto er = net->edge_update(rotate_channels(s.x, random_rotation(rng)), s.h_x, s.e_x,
                                   s.mask, s.pair);
  EXPECT_LT(max_relative_error(er, e), 1e-12);
}

TEST(Refine, SharedHeadsOnIdenticalBranches) {
  const auto cfg = verify_model_config();
  auto net = random_net(cfg, 12);
  Rng rng(12);
  auto s = layer_state(net, cfg, rng, { 4 });
  s.h_y = s.h_x.clone();
  s.e_y = s.e_x.clone();
  s.y = s.x.clone();
  const auto out = net->refine(s);
  EXPECT_TRUE(torch::equal(out.atom_logits_x, out.atom_logits_y));
  EXPECT_TRUE(torch::equal(out.charge_logits_x, out.charge_logits_y));
  EXPECT_TRUE(torch::equal(out.bond_logits_x, out.bond_logits_y));
  EXPECT_TRUE(torch::equal(out.x_hat, out.y_hat));
}

TEST(Forward, OutputShapesAndSymmetricBonds) {
  const auto cfg = verify_model_config();
  auto net = random_net(cfg, 13);
  Rng rng(13);
  const auto out = net->forward(random_state(cfg, { 6, 4 }, rng));
  EXPECT_EQ(out.x_hat.sizes(), (std::vector<int64_t>{ 2, 6, 3 }));
  EXPECT_EQ(out.atom_logits_y.sizes(), (std::vector<int64_t>{ 2, 6, cfg.n_atom_types }));
  EXPECT_EQ(out.charge_logits_x.sizes(), (std::vector<int64_t>{ 2, 6, cfg.n_charge_types }));
  EXPECT_EQ(out.bond_logits_x.sizes(), (std::vector<int64_t>{ 2, 6, 6, cfg.n_bond_types }));
  EXPECT_TRUE(torch::equal(out.bond_logits_x, out.bond_logits_x.transpose(1, 2)));
}

TEST(Forward, PaddingDoesNotLeak) {
  const auto cfg = verify_model_config();
  auto net = random_net(cfg, 14);
  Rng rng(14);
  const auto batch = random_state(cfg, { 3, 6 }, rng);
  const auto alone = net->forward(batch.slice(0, 1));
  const auto joint = net->forward(batch);
  using torch::indexing::Slice;
  EXPECT_LT(max_relative_error(joint.x_hat[0].index({ Slice(0, 3) }), alone.x_hat[0].index({ Slice(0, 3) })),
            1e-10);
  EXPECT_LT(max_relative_error(joint.atom_logits_x[0].index({ Slice(0, 3) }),
                               alone.atom_logits_x[0].index({ Slice(0, 3) })),
            1e-10);
}

TEST(Forward, CenteringIsIdempotent) {
  const auto cfg = verify_model_config();
  auto net = random_net(cfg, 15);
  Rng rng(15);
  auto s = random_state(cfg, { 5 }, rng);
  const auto a = net->forward(s);
  auto c = s;
  c.x = remove_com(s.x, s.mask);
  c.y = remove_com(s.y, s.mask);
  const auto b = net->forward(c);
  EXPECT_LT(max_relative_error(b.x_hat, a.x_hat), 1e-12);
}

TEST(Forward, NonFiniteInputRaisesDivergence) {
  const auto cfg = verify_model_config();
  auto net = random_net(cfg, 16);
  Rng rng(16);
  auto s = random_state(cfg, { 3 }, rng);
  s.x[0][0][0] = std::numeric_limits<double>::quiet_NaN();
  try {
    net->forward(s);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError &e) {
    EXPECT_NE(std::string(e.what()).find("featurization"), std::string::npos) << e.what();
  }
}

TEST(Verify, RotationEquivariance) {
  const auto r64 = check_rotation_equivariance(verify_model_config(), kF64, 5, 1, 1e-8);
  EXPECT_TRUE(r64.pass) << r64.value;
  const auto r32 = check_rotation_equivariance(verify_model_config(), torch::kFloat32, 5, 2, 1e-4);
  EXPECT_TRUE(r32.pass) << r32.value;
}

TEST(Verify, FaultBreaksRotationEquivariance) {
  auto cfg = verify_model_config();
  cfg.fault = "coord_bias";
  EXPECT_FALSE(check_rotation_equivariance(cfg, kF64, 3, 1, 1e-8).pass);
}

TEST(Verify, PermutationAndYIndependence) {
  EXPECT_TRUE(check_permutation_equivariance(verify_model_config(), 5, 6, 3, 1e-5).pass);
  EXPECT_TRUE(check_y_independence(verify_model_config(), 5, 4).pass);
}

TEST(ParameterCount, PresetsNearTableSizes) {
  const std::vector<std::pair<std::string, double>> targets = {
    { "small", 17.2e6 }, { "medium", 24.7e6 }, { "large", 37.7e6 }
  };
  for (const auto &[name, target]: targets) {
    torch::NoGradGuard guard;
    const auto n = static_cast<double>(parameter_count(*make_network(ModelConfig::preset(name), 0)));
    EXPECT_NEAR(n / target, 1.0, 0.2) << name << " " << n;
  }
}

}  // namespace
}  // namespace flexiflow
