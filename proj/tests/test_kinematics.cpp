#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "helpers.hpp"
#include "retarget/errors.hpp"
#include "retarget/kinematics.hpp"
#include "retarget/pose_data.hpp"

using namespace retarget;

namespace {

constexpr double kPi = std::numbers::pi;
const Vec3 kZ{0.0, 0.0, 1.0};

KinematicChain serial_z_chain() {
  std::vector<JointSpec> joints(4);
  for (std::size_t i = 0; i < joints.size(); ++i) {
    joints[i].name = "j" + std::to_string(i);
    if (i > 0) {
      joints[i].parent = i - 1;
    }
    joints[i].kind = JointKind::revolute;
    joints[i].axis = kZ;
    joints[i].limits = {-kPi, kPi};
  }
  return KinematicChain("serial-z", joints, {0, 1, 2, 3});
}

// Global rotations via Eigen, composing parent * rest * local.
std::vector<Eigen::Quaterniond> eigen_fk(const KinematicChain& chain,
                                         const std::vector<Eigen::Quaterniond>& locals) {
  std::vector<Eigen::Quaterniond> out;
  for (std::size_t j = 0; j < chain.joint_count(); ++j) {
    const auto& spec = chain.joint(j);
    const Eigen::Quaterniond parent =
        spec.parent ? out[*spec.parent] : Eigen::Quaterniond::Identity();
    out.push_back(parent * test::to_eigen(spec.rest_rotation) * locals[j]);
  }
  return out;
}

}  // namespace

TEST_CASE("builtin chains load and have the documented shapes") {
  const auto names = builtin_chain_names();
  REQUIRE(names.size() == 3);
  const auto human = builtin_chain("human-upper-14");
  CHECK(human.joint_count() == 14);
  CHECK(human.all_spherical());
  const auto toy = builtin_chain("toy-robot-8");
  CHECK(toy.joint_count() == 8);
  CHECK(toy.all_revolute());
  const auto tiago = builtin_chain("tiago-like-14");
  CHECK(tiago.joint_count() == 14);
  CHECK(tiago.all_revolute());
  CHECK_THROWS_AS(builtin_chain("no-such-chain"), ValidationError);
}

TEST_CASE("chain json round trip") {
  for (const auto& name : builtin_chain_names()) {
    const auto chain = builtin_chain(name);
    const auto again = KinematicChain::from_json(chain.to_json());
    CHECK(again == chain);
    CHECK(again.to_json() == chain.to_json());
  }
}

TEST_CASE("chain validation") {
  const auto base = serial_z_chain();
  auto joints = std::vector<JointSpec>(base.joints().begin(), base.joints().end());
  SUBCASE("parent must precede child") {
    joints[1].parent = 2;
    CHECK_THROWS_AS(KinematicChain("bad", joints, {0, 1, 2, 3}), ValidationError);
  }
  SUBCASE("revolute axis must be unit") {
    joints[2].axis = {0.0, 0.0, 2.0};
    CHECK_THROWS_AS(KinematicChain("bad", joints, {0, 1, 2, 3}), ValidationError);
  }
  SUBCASE("limits must be ordered and finite") {
    joints[0].limits = {1.0, -1.0};
    CHECK_THROWS_AS(KinematicChain("bad", joints, {0, 1, 2, 3}), ValidationError);
    joints[0].limits = {-INFINITY, 1.0};
    CHECK_THROWS_AS(KinematicChain("bad", joints, {0, 1, 2, 3}), ValidationError);
  }
  SUBCASE("semantic links must be distinct and in range") {
    CHECK_THROWS_AS(KinematicChain("bad", joints, {0, 1, 1, 3}), ValidationError);
    CHECK_THROWS_AS(KinematicChain("bad", joints, {0, 1, 2, 9}), ValidationError);
  }
  SUBCASE("spherical limits are a swing range") {
    joints[0].kind = JointKind::spherical;
    joints[0].limits = {-0.5, 0.5};
    CHECK_THROWS_AS(KinematicChain("bad", joints, {0, 1, 2, 3}), ValidationError);
  }
}

TEST_CASE("semantic link names") {
  CHECK(semantic_link_name(SemanticLink::left_upper_arm) == "left_upper_arm");
  CHECK(semantic_link_from_name("right_lower_arm") == SemanticLink::right_lower_arm);
  CHECK_FALSE(semantic_link_from_name("left_leg").has_value());
}

TEST_CASE("identity chain gives identity globals") {
  const auto human = builtin_chain("human-upper-14");
  for (const auto& g : forward_kinematics(human, HumanPose::rest(human))) {
    CHECK(g == Quat::identity());
  }
  const auto toy = builtin_chain("toy-robot-8");
  for (const auto& g : forward_kinematics(toy, RobotPose::zero(toy))) {
    CHECK(g == Quat::identity());
  }
}

TEST_CASE("two revolute z joints at pi/2 compose to pi") {
  const auto chain = serial_z_chain();
  const auto globals = forward_kinematics(chain, RobotPose(chain, {kPi / 2, kPi / 2, 0.0, 0.0}));
  CHECK(std::abs(globals[1].w()) < 1e-15);
  CHECK(std::abs(globals[1].z() - 1.0) < 1e-15);
}

TEST_CASE("human forward kinematics matches an Eigen composition") {
  const auto human = builtin_chain("human-upper-14");
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto pose = sample_human_pose(human, rng);
    std::vector<Eigen::Quaterniond> locals;
    for (const auto& q : pose.local_rotations()) {
      locals.push_back(test::to_eigen(q));
    }
    const auto expected = eigen_fk(human, locals);
    const auto globals = forward_kinematics(human, pose);
    for (std::size_t j = 0; j < globals.size(); ++j) {
      CHECK(test::rotation_gap(globals[j], expected[j]) < 1e-13);
      CHECK(std::abs(globals[j].norm() - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("robot forward kinematics matches an Eigen composition") {
  for (const char* name : {"toy-robot-8", "tiago-like-14"}) {
    const auto chain = builtin_chain(name);
    Rng rng(12);
    for (int trial = 0; trial < 100; ++trial) {
      const auto pose = sample_robot_pose(chain, rng);
      std::vector<Eigen::Quaterniond> locals;
      for (std::size_t j = 0; j < chain.joint_count(); ++j) {
        const auto& a = chain.joint(j).axis;
        locals.emplace_back(Eigen::AngleAxisd(pose[j], Eigen::Vector3d(a[0], a[1], a[2])));
      }
      const auto expected = eigen_fk(chain, locals);
      const auto globals = forward_kinematics(chain, pose);
      for (std::size_t j = 0; j < globals.size(); ++j) {
        CHECK(test::rotation_gap(globals[j], expected[j]) < 1e-13);
      }
    }
  }
}

TEST_CASE("forward kinematics rejects mismatched poses") {
  const auto toy = builtin_chain("toy-robot-8");
  const auto tiago = builtin_chain("tiago-like-14");
  CHECK_THROWS_AS(forward_kinematics(toy, RobotPose::zero(tiago)), ValidationError);
  const auto human = builtin_chain("human-upper-14");
  CHECK_THROWS_AS(forward_kinematics(toy, HumanPose::rest(human)), ValidationError);
}

TEST_CASE("FK locality: joints outside the changed subtree are bitwise unchanged") {
  const auto human = builtin_chain("human-upper-14");
  Rng rng(13);
  std::mt19937_64 gen(13);
  for (int trial = 0; trial < 50; ++trial) {
    const auto pose = sample_human_pose(human, rng);
    const auto base = forward_kinematics(human, pose);
    const std::size_t j = rng.index(human.joint_count());
    std::vector<Quat> locals(pose.local_rotations().begin(), pose.local_rotations().end());
    locals[j] = test::random_quat(gen);
    const auto changed = forward_kinematics(human, HumanPose(human, locals));
    for (std::size_t k = 0; k < human.joint_count(); ++k) {
      if (!human.is_ancestor_or_self(j, k)) {
        CHECK(changed[k] == base[k]);
      }
    }
  }
}

TEST_CASE("semantic links of the rest pose are identities") {
  const auto human = builtin_chain("human-upper-14");
  const auto links = semantic_link_rotations(human, HumanPose::rest(human));
  for (const auto& q : links.rotations) {
    CHECK(q == Quat::identity());
  }
}

TEST_CASE("a pose differing only off the link paths keeps the link rotations") {
  const auto human = builtin_chain("human-upper-14");
  std::vector<Quat> locals(human.joint_count());
  for (std::size_t j = 0; j < human.joint_count(); ++j) {
    const auto& name = human.joint(j).name;
    if (name == "head" || name == "neck" || name == "left_wrist") {
      locals[j] = quat_from_axis_angle({0.0, 1.0, 0.0}, 0.3);
    }
  }
  const auto links = semantic_link_rotations(human, HumanPose(human, locals));
  const auto rest = semantic_link_rotations(human, HumanPose::rest(human));
  CHECK(rotation_distance(links, rest) == 0.0);
  for (std::size_t l = 0; l < kSemanticLinkCount; ++l) {
    CHECK(links.rotations[l] == rest.rotations[l]);
  }
}

TEST_CASE("human pose built from robot links reproduces them") {
  const auto human = builtin_chain("human-upper-14");
  for (const char* name : {"toy-robot-8", "tiago-like-14"}) {
    const auto robot = builtin_chain(name);
    Rng rng(14);
    for (int trial = 0; trial < 100; ++trial) {
      const auto target = semantic_link_rotations(robot, sample_robot_pose(robot, rng));
      const auto pose = human_pose_from_links(human, target);
      const auto got = semantic_link_rotations(human, pose);
      for (std::size_t l = 0; l < kSemanticLinkCount; ++l) {
        CHECK(1.0 - std::abs(quat_dot(got.rotations[l], target.rotations[l])) < 1e-12);
      }
      CHECK(rotation_distance(got, target) < 1e-6);
    }
  }
}

TEST_CASE("rotation distance examples") {
  std::mt19937_64 gen(15);
  const auto a = test::random_links(gen);
  CHECK(rotation_distance(a, a) < 1e-15);

  auto flipped = a;
  flipped.rotations[2] = a.rotations[2].negated();
  CHECK(rotation_distance(a, flipped) < 1e-15);

  LinkRotationSet id;
  auto quarter = id;
  quarter.rotations[1] = quat_from_axis_angle({0.6, 0.0, 0.8}, kPi / 2);
  CHECK(std::abs(rotation_distance(id, quarter) - 0.5) < 1e-15);

  LinkRotationSet half;
  const Vec3 axes[4] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0.6, 0.8, 0.0}};
  for (std::size_t l = 0; l < 4; ++l) {
    half.rotations[l] = quat_from_axis_angle(axes[l], kPi);
  }
  CHECK(std::abs(rotation_distance(id, half) - 4.0) < 1e-15);
}

TEST_CASE("rotation distance properties over random pairs") {
  std::mt19937_64 gen(16);
  for (int i = 0; i < 10000; ++i) {
    const auto a = test::random_links(gen);
    const auto b = test::random_links(gen);
    const double d = rotation_distance(a, b);
    CHECK(d >= 0.0);
    CHECK(d <= 4.0);
    CHECK(rotation_distance(b, a) == d);

    auto a_flip = a;
    a_flip.rotations[i % 4] = a.rotations[i % 4].negated();
    CHECK(std::abs(rotation_distance(a_flip, b) - d) <= 1e-12);

    const Quat r = test::random_quat(gen);
    LinkRotationSet ra;
    LinkRotationSet rb;
    for (std::size_t l = 0; l < 4; ++l) {
      ra.rotations[l] = r * a.rotations[l];
      rb.rotations[l] = r * b.rotations[l];
    }
    CHECK(std::abs(rotation_distance(ra, rb) - d) <= 1e-9);
  }
}

TEST_CASE("human pose construction") {
  const auto human = builtin_chain("human-upper-14");
  std::vector<double> values = HumanPose::rest(human).flatten();
  values[4 * 3] = 0.5;
  CHECK_THROWS_WITH_AS(HumanPose::from_components(human, values),
                       doctest::Contains("joint 3 quaternion has norm"), ValidationError);
  values[4 * 3] = -1.0;
  const auto pose = HumanPose::from_components(human, values);
  CHECK(pose.local_rotations()[3].w() == 1.0);
  values.pop_back();
  CHECK_THROWS_AS(HumanPose::from_components(human, values), ValidationError);
  CHECK_THROWS_AS(HumanPose(builtin_chain("toy-robot-8"), {}), ValidationError);
}

TEST_CASE("human swing limits") {
  const auto human = builtin_chain("human-upper-14");
  std::vector<Quat> locals(human.joint_count());
  CHECK(HumanPose(human, locals).within_limits(human));
  locals[0] = quat_from_axis_angle(kZ, 0.5);  // pelvis allows 0.1
  CHECK_FALSE(HumanPose(human, locals).within_limits(human));
}

TEST_CASE("robot pose clamps on construction and checked rejects") {
  const auto toy = builtin_chain("toy-robot-8");
  const RobotPose p(toy, {9.0, -9.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0});
  CHECK(p[0] == 1.6);
  CHECK(p[1] == -1.4);
  CHECK(p[7] == -0.3);
  CHECK_THROWS_AS(RobotPose::checked(toy, {9.0, 0, 0, 0, 0, 0, 0, 0}), ValidationError);
  CHECK_NOTHROW(RobotPose::checked(toy, {1.6, 0, 0, 0, 0, 0, 0, 0}));
  CHECK_THROWS_AS(RobotPose(toy, {0.0, 0.0}), ValidationError);
  CHECK_THROWS_AS(RobotPose(toy, {NAN, 0, 0, 0, 0, 0, 0, 0}), ValidationError);
  CHECK_THROWS_AS(RobotPose::zero(builtin_chain("human-upper-14")), ValidationError);
}

TEST_CASE("load_chain reads a file and resolve_chain falls back to paths") {
  const test::TempDir dir("chain");
  const auto path = dir / "serial.json";
  {
    std::ofstream f(path);
    f << serial_z_chain().to_json();
  }
  CHECK(load_chain(path) == serial_z_chain());
  CHECK(resolve_chain(path.string()) == serial_z_chain());
  CHECK(resolve_chain("toy-robot-8") == builtin_chain("toy-robot-8"));
  CHECK_THROWS_AS(load_chain(dir / "missing.json"), ValidationError);
  {
    std::ofstream f(dir / "broken.json");
    f << "{\"name\": \"x\", \"joints\": [";
  }
  CHECK_THROWS_AS(load_chain(dir / "broken.json"), ValidationError);
}
