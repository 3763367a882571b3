#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "dint/checkpoint.hpp"
#include "dint/config.hpp"
#include "dint/trainer.hpp"
#include "dint/verify/suites.hpp"

using namespace dint;
namespace fs = std::filesystem;

namespace {

NetworkConfig tiny_net() {
  NetworkConfig c;
  c.channel_scale = 1.0 / 16;
  c.dropout_prob = 0.0;
  return c;
}

TrainConfig tiny_train(std::uint64_t iters) {
  TrainConfig t;
  t.base_lr = 0.01;
  t.batch_size = 2;
  t.max_iterations = iters;
  t.seed = 5;
  t.use_augment = false;
  return t;
}

}  // namespace

// SGD -----------------------------------------------------------------------------

TEST(Sgd, HeavyBallUpdate) {
  Rng rng(1);
  Network net = Network::build(tiny_net(), rng);
  auto params = net.parameters();
  Param& p = *params[0].param;
  const Tensor theta0 = p.value;
  p.grad.fill(1.0);
  TrainConfig cfg = tiny_train(1);
  cfg.base_lr = 0.5;
  cfg.momentum = 0.9;
  sgd_momentum_step(net, cfg);
  EXPECT_EQ(p.velocity, Tensor(p.value.shape(), -0.5));
  EXPECT_EQ(p.grad, Tensor(p.value.shape()));
  p.grad.fill(1.0);
  sgd_momentum_step(net, cfg);
  EXPECT_NEAR(p.velocity[0], -0.95, 1e-15);
  EXPECT_NEAR(p.value[0], theta0[0] - 1.45, 1e-12);
}

TEST(Sgd, LayerMultiplierZeroFreezes) {
  Rng rng(2);
  Network net = Network::build(tiny_net(), rng);
  TrainConfig cfg = tiny_train(1);
  cfg.lr_multipliers["s1.conv1"] = 0.0;
  EXPECT_EQ(cfg.lr_for("s1.conv1"), 0.0);
  EXPECT_EQ(cfg.lr_for("s2.conv1"), cfg.base_lr);
  const Tensor frozen = net.block("s1.conv1").params.weights.value;
  const Tensor moving = net.block("s2.conv1").params.weights.value;
  for (auto& p : net.parameters()) p.param->grad.fill(1.0);
  sgd_momentum_step(net, cfg);
  EXPECT_EQ(net.block("s1.conv1").params.weights.value, frozen);
  EXPECT_NE(net.block("s2.conv1").params.weights.value, moving);
}

TEST(Sgd, NonFiniteGradientNamed) {
  Rng rng(3);
  Network net = Network::build(tiny_net(), rng);
  net.parameters()[2].param->grad[0] = std::nan("");
  try {
    sgd_momentum_step(net, tiny_train(1), 17);
    FAIL();
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(net.parameters()[2].name), std::string::npos);
    EXPECT_NE(msg.find("17"), std::string::npos);
  }
}

TEST(TrainConfig, Validation) {
  TrainConfig c = tiny_train(1);
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = tiny_train(1);
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = tiny_train(1);
  c.lr_multipliers["s1.conv1"] = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(RoundToStorage, IsFloat32) {
  Rng rng(4);
  Network net = Network::build(tiny_net(), rng);
  net.parameters()[0].param->value[0] = 0.1;
  round_to_storage(net);
  EXPECT_EQ(net.parameters()[0].param->value[0], static_cast<double>(0.1f));
}

// Training loop ---------------------------------------------------------------------

TEST(TrainLoop, DeterministicAndResumable) {
  const auto data = verify::overfit_fixture(9, 3, 32);
  const NetworkConfig nc = tiny_net();
  TrainConfig tc = tiny_train(6);
  tc.checkpoint_every = 3;

  std::vector<Checkpoint> sunk;
  Rng r1(tc.seed);
  Network n1 = Network::build(nc, r1);
  const TrainResult a = train_loop(n1, data, tc, std::nullopt, [&](const Checkpoint& c) { sunk.push_back(c); });
  Rng r2(tc.seed);
  Network n2 = Network::build(nc, r2);
  const TrainResult b = train_loop(n2, data, tc);

  ASSERT_EQ(a.trace.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(a.trace[i].iteration, i);
    EXPECT_EQ(std::bit_cast<std::uint64_t>(a.trace[i].loss), std::bit_cast<std::uint64_t>(b.trace[i].loss));
  }
  EXPECT_EQ(a.final_checkpoint.serialize(), b.final_checkpoint.serialize());

  ASSERT_FALSE(sunk.empty());
  const Checkpoint& mid = sunk.front();
  EXPECT_EQ(mid.iteration, 3u);
  Rng r3(0);
  Network n3 = Network::build(nc, r3);
  const TrainResult c = train_loop(n3, data, tc, mid);
  ASSERT_EQ(c.trace.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(c.trace[i].loss, a.trace[3 + i].loss);
  EXPECT_EQ(c.final_checkpoint.serialize(), a.final_checkpoint.serialize());
}

TEST(TrainLoop, ResumeRejectsOtherConfig) {
  const auto data = verify::overfit_fixture(9, 2, 32);
  TrainConfig tc = tiny_train(1);
  Rng r(1);
  Network net = Network::build(tiny_net(), r);
  const TrainResult a = train_loop(net, data, tc);
  tc.base_lr = 0.02;
  tc.max_iterations = 2;
  EXPECT_THROW(train_loop(net, data, tc, a.final_checkpoint), TrainingError);
}

TEST(TrainLoop, EmptyDatasetRejected) {
  Rng r(1);
  Network net = Network::build(tiny_net(), r);
  EXPECT_THROW(train_loop(net, {}, tiny_train(1)), std::invalid_argument);
}

TEST(PrepareSample, PadsAndMasksPadding) {
  const auto s = verify::overfit_fixture(1, 1, 40)[0];
  const PreparedSample p = prepare_sample(s, 32, kLogEpsilon);
  EXPECT_EQ(p.image.shape(), (Shape{1, 3, 64, 64}));
  EXPECT_EQ(p.mask(0, 0, 39, 39), 1.0);
  EXPECT_EQ(p.mask(0, 0, 40, 0), 0.0);
  EXPECT_EQ(p.mask(0, 0, 0, 63), 0.0);
  EXPECT_DOUBLE_EQ(p.log_albedo(0, 0, 0, 0), std::log(std::max(s.albedo(0, 0, 0, 0), kLogEpsilon)));
}

// Checkpoints -----------------------------------------------------------------------

TEST(Checkpoint, SerializeRoundTripIsByteIdentical) {
  Rng rng(6);
  Network net = Network::build(tiny_net(), rng);
  round_to_storage(net);
  const Checkpoint ck = capture_checkpoint(net, 42, Rng(7), sha256("cfg"));
  const auto bytes = ck.serialize();
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "DINT");
  const Checkpoint back = Checkpoint::deserialize(bytes);
  EXPECT_EQ(back.iteration, 42u);
  EXPECT_EQ(back.rng, Rng(7).state());
  EXPECT_EQ(back.serialize(), bytes);

  Rng other(99);
  Network net2 = Network::build(tiny_net(), other);
  restore_checkpoint(back, net2);
  const auto p1 = net.parameters(), p2 = net2.parameters();
  for (std::size_t i = 0; i < p1.size(); ++i) EXPECT_EQ(p1[i].param->value, p2[i].param->value);
}

TEST(Checkpoint, CorruptionDetected) {
  Rng rng(6);
  Network net = Network::build(tiny_net(), rng);
  auto bytes = capture_checkpoint(net, 1, Rng(0), {}).serialize();

  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(Checkpoint::deserialize(bad), CheckpointError);
  bad = bytes;
  bad[4] = 9;
  EXPECT_THROW(Checkpoint::deserialize(bad), CheckpointError);
  bad.assign(bytes.begin(), bytes.end() - 5);
  EXPECT_THROW(Checkpoint::deserialize(bad), CheckpointError);
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(Checkpoint::deserialize(bad), CheckpointError);
}

TEST(Checkpoint, RestoreRejectsOtherTopology) {
  Rng rng(6);
  Network net = Network::build(tiny_net(), rng);
  const Checkpoint ck = capture_checkpoint(net, 0, Rng(0), {});
  NetworkConfig hc = tiny_net();
  hc.use_hypercolumn = true;
  Network other = Network::build(hc, rng);
  try {
    restore_checkpoint(ck, other);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("s1.conv6"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, FileRoundTripAndMissingFile) {
  const fs::path dir = fs::temp_directory_path() / "dint_test_ckpt";
  fs::create_directories(dir);
  Rng rng(6);
  Network net = Network::build(tiny_net(), rng);
  const Checkpoint ck = capture_checkpoint(net, 3, Rng(1), {});
  save_checkpoint(ck, dir / "a.ckpt");
  EXPECT_EQ(load_checkpoint(dir / "a.ckpt").serialize(), ck.serialize());
  EXPECT_THROW(load_checkpoint(dir / "none.ckpt"), CheckpointError);
  fs::remove_all(dir);
}

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(to_hex(sha256("")), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(to_hex(sha256("abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Fingerprint, SensitiveToTrajectoryFieldsOnly) {
  const NetworkConfig nc = tiny_net();
  TrainConfig a = tiny_train(10), b = tiny_train(500);
  b.checkpoint_every = 7;
  EXPECT_EQ(config_fingerprint(nc, a), config_fingerprint(nc, b));
  b.momentum = 0.5;
  EXPECT_NE(config_fingerprint(nc, a), config_fingerprint(nc, b));
  NetworkConfig hc = nc;
  hc.use_hypercolumn = true;
  EXPECT_NE(config_fingerprint(nc, a), config_fingerprint(hc, a));
}

// Config ------------------------------------------------------------------------------

TEST(Config, ParsesSections) {
  const RunConfig rc = RunConfig::parse(
      "[network]\nchannel_scale = 0.25\nhypercolumn = true\n"
      "[train]\nbase_lr = 0.02\nbatch_size = 4\nseed = 11\n"
      "[loss]\nlambda = 0.5\ngradient_loss = yes\n"
      "[augment]\ncrop_h = 32\ncrop_w = 48\nrotate_zoom = true\n"
      "[lr]\ns1.conv1 = 0.1\n"
      "[eval]\nmit_total = true\n"
      "[data]\nmanifest = m.tsv\nsplit = test\n"
      "[output]\ndir = out\n",
      "/base");
  EXPECT_EQ(rc.network.channel_scale, 0.25);
  EXPECT_TRUE(rc.network.use_hypercolumn);
  EXPECT_EQ(rc.train.base_lr, 0.02);
  EXPECT_EQ(rc.train.batch_size, 4u);
  EXPECT_EQ(rc.train.seed, 11u);
  EXPECT_TRUE(rc.train.loss.use_gradient_loss);
  EXPECT_EQ(rc.train.augment.crop_w, 48u);
  EXPECT_TRUE(rc.train.augment.enable_rotate_zoom);
  EXPECT_EQ(rc.train.lr_for("s1.conv1"), 0.1 * 0.02);
  EXPECT_TRUE(rc.eval.mit_total);
  EXPECT_EQ(rc.manifest, fs::path("/base/m.tsv"));
  EXPECT_EQ(rc.split, "test");
  EXPECT_EQ(rc.output_dir, fs::path("/base/out"));
}

TEST(Config, RejectsTyposAndBadValues) {
  EXPECT_THROW(RunConfig::parse("[train]\nbase_lrr = 0.1\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("[trian]\nbase_lr = 0.1\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("[train]\nbase_lr = fast\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("[train]\nbatch_size = -2\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("[network]\nhypercolumn = maybe\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("[loss]\nlambda = 2\n"), std::exception);
  EXPECT_THROW(RunConfig::load("/nonexistent/run.ini"), ConfigError);
}

TEST(Config, DefaultsWhenEmpty) {
  const RunConfig rc = RunConfig::parse("");
  EXPECT_EQ(rc.network.channel_scale, 1.0);
  EXPECT_EQ(rc.train.loss.lambda, 0.5);
  EXPECT_EQ(rc.network.dropout_prob, 0.5);
}
