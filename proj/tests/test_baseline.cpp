#include <doctest.h>

#include <cstring>
#include <limits>
#include <vector>

#include "helpers.hpp"
#include "retarget/baseline.hpp"
#include "retarget/errors.hpp"

using namespace retarget;

namespace {

struct Banks {
  KinematicChain human_chain = builtin_chain("human-upper-14");
  KinematicChain robot_chain = builtin_chain("toy-robot-8");
  PoseBank human = build_pose_bank(human_chain, Domain::human, 300, 11);
  PoseBank robot = build_pose_bank(robot_chain, Domain::robot, 500, 12);
};

TrainConfig small_config() {
  TrainConfig c;
  c.hidden_width = 32;
  c.hidden_layers = 2;
  c.latent_dim = 8;
  c.batch = 16;
  c.seed = 4;
  return c;
}

}  // namespace

TEST_CASE("nearest row: exact hit and ties") {
  std::mt19937_64 gen(1);
  std::vector<LinkRotationSet> rows;
  for (int i = 0; i < 20; ++i) rows.push_back(test::random_links(gen));
  double d = -1.0;
  CHECK(nearest_robot_row(rows, rows[7], &d) == 7);
  CHECK(d < 1e-12);

  // Duplicate rows: the lower index wins.
  rows[3] = rows[15];
  CHECK(nearest_robot_row(rows, rows[15]) == 3);
  CHECK_THROWS_AS(nearest_robot_row(std::span<const LinkRotationSet>{}, rows[0]), ValidationError);
}

TEST_CASE("generated pairs are minimal against a brute-force rescan") {
  Banks b;
  const auto pairs = generate_pairs(b.human, b.robot, 60, 5);
  REQUIRE(pairs.size() == 60);
  CHECK(pairs.human_chain == "human-upper-14");
  CHECK(pairs.robot_chain == "toy-robot-8");
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(pairs.human_index[i] == Rng(derive_seed(5, i)).index(b.human.size()));
    const auto target = b.human.links(pairs.human_index[i]);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < b.robot.size(); ++r) {
      best = std::min(best, rotation_distance(target, b.robot.links(r)));
    }
    CHECK(pairs.distances[i] == best);
    CHECK(rotation_distance(target, b.robot.links(pairs.robot_index[i])) == best);
  }
  CHECK_NOTHROW(validate_pairs(pairs, b.human, b.robot));
}

TEST_CASE("pair generation is deterministic across worker counts") {
  Banks b;
  const auto one = generate_pairs(b.human, b.robot, 40, 9, 1);
  const auto four = generate_pairs(b.human, b.robot, 40, 9, 4);
  CHECK(one == four);
  CHECK(encode_pairs(one) == encode_pairs(four));
  CHECK_FALSE(generate_pairs(b.human, b.robot, 40, 10) == one);
}

TEST_CASE("validate_pairs catches inconsistencies") {
  Banks b;
  const auto good = generate_pairs(b.human, b.robot, 10, 1);
  auto bad = good;
  bad.distances[2] += 1e-3;
  CHECK_THROWS_AS(validate_pairs(bad, b.human, b.robot), ValidationError);
  bad = good;
  bad.robot_index[0] = b.robot.size();
  CHECK_THROWS_AS(validate_pairs(bad, b.human, b.robot), ValidationError);
  bad = good;
  bad.robot_chain = "tiago-like-14";
  CHECK_THROWS_AS(validate_pairs(bad, b.human, b.robot), ValidationError);
}

TEST_CASE("pairs file round trip and damage") {
  Banks b;
  const auto pairs = generate_pairs(b.human, b.robot, 25, 3);
  const auto bytes = encode_pairs(pairs);
  CHECK(bytes.size() == 128 + 25 * 24);
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "RTGTPAIR");
  CHECK(decode_pairs(bytes) == pairs);

  test::TempDir dir("pairs");
  save_pairs(pairs, dir / "p.pairs");
  CHECK(load_pairs(dir / "p.pairs") == pairs);

  for (std::size_t pos : {std::size_t{24}, std::size_t{40}, std::size_t{130}, bytes.size() - 1}) {
    auto bad = bytes;
    bad[pos] ^= 0x01;
    CHECK_THROWS_AS(decode_pairs(bad), ChecksumError);
  }
  // A damaged count is caught by the size check first.
  auto count = bytes;
  count[20] ^= 0x01;
  CHECK_THROWS_AS(decode_pairs(count), FormatError);
  auto cut = bytes;
  cut.resize(bytes.size() - 5);
  CHECK_THROWS_AS(decode_pairs(cut), FormatError);
  auto version = bytes;
  version[8] = 7;
  CHECK_THROWS_AS(decode_pairs(version), VersionError);
}

TEST_CASE("baseline architecture") {
  Banks b;
  const auto model = make_baseline_model(b.human_chain, b.robot_chain, small_config());
  const std::vector<std::size_t> dims{56, 32, 32, 8, 32, 32, 8};
  CHECK(model.net.layer_dims == dims);
  CHECK(model.net.output_activation == nn::OutputActivation::limit_squash);
}

TEST_CASE("baseline memorizes a tiny paired set") {
  Banks b;
  const auto pairs = generate_pairs(b.human, b.robot, 8, 2);
  auto cfg = small_config();
  cfg.batch = 8;
  cfg.epochs = 3000;
  cfg.lr = 1e-3;
  auto model = make_baseline_model(b.human_chain, b.robot_chain, cfg);
  const auto log = train_baseline(model, pairs, b.human, b.robot, cfg);
  REQUIRE(log.size() == 3000);
  CHECK(log.back().l_rec < log.front().l_rec);
  CHECK(log.back().total == log.back().l_rec);
  // Mean absolute joint error over the memorized pairs.
  double l1 = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto h = b.human.human_pose(b.human_chain, pairs.human_index[i]);
    const auto target = b.robot.robot_pose(b.robot_chain, pairs.robot_index[i]);
    const auto got = baseline_retarget(model, h);
    for (std::size_t j = 0; j < got.joint_count(); ++j) {
      l1 += std::abs(got[j] - target[j]);
      ++n;
    }
  }
  CHECK(l1 / static_cast<double>(n) < 0.01);
}

TEST_CASE("baseline training: zero epochs, determinism, validation") {
  Banks b;
  const auto pairs = generate_pairs(b.human, b.robot, 64, 2);
  auto cfg = small_config();
  cfg.epochs = 0;
  auto m0 = make_baseline_model(b.human_chain, b.robot_chain, cfg);
  const auto init = m0.net;
  CHECK(train_baseline(m0, pairs, b.human, b.robot, cfg).empty());
  CHECK(m0.net == init);

  cfg.epochs = 3;
  ValidationSet val;
  for (std::size_t i = 0; i < 4; ++i) {
    val.humans.push_back(b.human.human_pose(b.human_chain, i));
    val.references.push_back(RobotPose::zero(b.robot_chain));
  }
  auto m1 = make_baseline_model(b.human_chain, b.robot_chain, cfg);
  auto m2 = make_baseline_model(b.human_chain, b.robot_chain, cfg);
  const auto l1 = train_baseline(m1, pairs, b.human, b.robot, cfg, &val);
  const auto l2 = train_baseline(m2, pairs, b.human, b.robot, cfg, &val);
  CHECK(l1 == l2);
  CHECK(m1.net == m2.net);
  CHECK(l1.back().val_mse == doctest::Approx(baseline_validation_mse(m1, val)));
}

TEST_CASE("baseline model files") {
  Banks b;
  const auto model = make_baseline_model(b.human_chain, b.robot_chain, small_config());
  test::TempDir dir("base");
  save_baseline(model, dir / "b.rtb");
  const auto loaded = load_baseline(dir / "b.rtb");
  CHECK(loaded.net == model.net);
  CHECK(loaded.config == model.config);
  CHECK(loaded.robot_chain == model.robot_chain);
  const auto bytes = encode_baseline(model);
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "RTGTBASE");
  auto bad = bytes;
  bad[bytes.size() / 2] ^= 0x40;
  CHECK_THROWS_AS(decode_baseline(bad), ChecksumError);
  // A retarget checkpoint is not a baseline.
  TrainConfig c = small_config();
  const auto rtm = encode_checkpoint(make_retarget_model(b.human_chain, b.robot_chain, c));
  CHECK_THROWS_AS(decode_baseline(rtm), FormatError);
}
