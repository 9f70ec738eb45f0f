#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "helpers.hpp"
#include "retarget/errors.hpp"
#include "retarget/quat.hpp"

using namespace retarget;

namespace {

constexpr double kPi = std::numbers::pi;
const Vec3 kX{1.0, 0.0, 0.0};
const Vec3 kZ{0.0, 0.0, 1.0};

void check_quat(const Quat& q, double w, double x, double y, double z, double tol = 1e-12) {
  CHECK(std::abs(q.w() - w) <= tol);
  CHECK(std::abs(q.x() - x) <= tol);
  CHECK(std::abs(q.y() - y) <= tol);
  CHECK(std::abs(q.z() - z) <= tol);
}

}  // namespace

TEST_CASE("identity is the neutral element") {
  std::mt19937_64 gen(1);
  for (int i = 0; i < 100; ++i) {
    const Quat q = test::random_quat(gen).canonical();
    const Quat p = Quat::identity() * q;
    check_quat(p, q.w(), q.x(), q.y(), q.z(), 1e-15);
  }
}

TEST_CASE("same-axis angles add") {
  const Quat half = quat_from_axis_angle(kZ, kPi / 2);
  check_quat(half * half, 0.0, 0.0, 0.0, 1.0, 1e-15);
}

TEST_CASE("q times its conjugate is the identity") {
  std::mt19937_64 gen(2);
  for (int i = 0; i < 100; ++i) {
    const Quat q = test::random_quat(gen);
    check_quat(q * q.conjugate(), 1.0, 0.0, 0.0, 0.0, 1e-14);
  }
}

TEST_CASE("Hamilton product agrees with Eigen") {
  std::mt19937_64 gen(3);
  for (int i = 0; i < 1000; ++i) {
    const Quat a = test::random_quat(gen);
    const Quat b = test::random_quat(gen);
    const Eigen::Quaterniond expected = test::to_eigen(a) * test::to_eigen(b);
    CHECK(test::rotation_gap(a * b, expected) < 1e-14);
  }
}

TEST_CASE("products are unit and canonical") {
  std::mt19937_64 gen(4);
  for (int i = 0; i < 1000; ++i) {
    const Quat p = test::random_quat(gen) * test::random_quat(gen);
    CHECK(std::abs(p.norm() - 1.0) < 1e-12);
    CHECK(p.w() >= 0.0);
  }
}

TEST_CASE("axis-angle examples") {
  check_quat(quat_from_axis_angle(kZ, 0.0), 1.0, 0.0, 0.0, 0.0);
  check_quat(quat_from_axis_angle(kZ, kPi), 0.0, 0.0, 0.0, 1.0, 1e-15);
  // -pi lands on w ~ 0, where either sign is the same rotation.
  CHECK(std::abs(quat_dot(quat_from_axis_angle(kZ, -kPi), quat_from_axis_angle(kZ, kPi))) ==
        doctest::Approx(1.0).epsilon(1e-15));
  const double h = std::sqrt(2.0) / 2.0;
  check_quat(quat_from_axis_angle(kX, kPi / 2), h, h, 0.0, 0.0, 1e-15);
}

TEST_CASE("axis-angle matches Eigen AngleAxis") {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> angle(-4.0, 4.0);
  for (int i = 0; i < 500; ++i) {
    const Quat dir = test::random_quat(gen);
    Eigen::Vector3d axis(dir.x(), dir.y(), dir.z());
    axis.normalize();
    const double a = angle(gen);
    const Quat q = quat_from_axis_angle({axis.x(), axis.y(), axis.z()}, a);
    CHECK(test::rotation_gap(q, Eigen::Quaterniond(Eigen::AngleAxisd(a, axis))) < 1e-14);
    CHECK(q.w() >= 0.0);
  }
}

TEST_CASE("axis-angle rejects non-unit axes and non-finite angles") {
  CHECK_THROWS_AS(quat_from_axis_angle({0.0, 0.0, 1.001}, 0.5), ValidationError);
  CHECK_THROWS_AS(quat_from_axis_angle({0.0, 0.0, 0.0}, 0.5), ValidationError);
  CHECK_NOTHROW(quat_from_axis_angle({0.0, 0.0, 1.0 + 5e-7}, 0.5));
  CHECK_THROWS_AS(quat_from_axis_angle(kZ, std::nan("")), ValidationError);
}

TEST_CASE("construction normalizes and rejects degenerate input") {
  const Quat q(2.0, 0.0, 0.0, 0.0);
  CHECK(q.w() == 1.0);
  CHECK(std::abs(Quat(1.0, 2.0, 3.0, 4.0).norm() - 1.0) < 1e-15);
  CHECK_THROWS_AS(Quat(0.0, 0.0, 0.0, 0.0), ValidationError);
  CHECK_THROWS_AS(Quat(std::nan(""), 0.0, 0.0, 1.0), ValidationError);
  CHECK_THROWS_AS(Quat(INFINITY, 0.0, 0.0, 1.0), ValidationError);
}

TEST_CASE("canonical picks the w >= 0 hemisphere") {
  const Quat q(-0.5, 0.5, -0.5, 0.5);
  const Quat c = q.canonical();
  check_quat(c, 0.5, -0.5, 0.5, -0.5);
  const Quat tie(0.0, -1.0, 0.0, 0.0);
  check_quat(tie.canonical(), 0.0, 1.0, 0.0, 0.0);
  const Quat tie2(0.0, 0.0, -0.6, 0.8);
  check_quat(tie2.canonical(), 0.0, 0.0, 0.6, -0.8, 1e-15);
}

TEST_CASE("rotate agrees with Eigen") {
  std::mt19937_64 gen(6);
  for (int i = 0; i < 200; ++i) {
    const Quat q = test::random_quat(gen);
    const Vec3 v{0.3, -1.2, 2.0};
    const Vec3 r = rotate(q, v);
    const Eigen::Vector3d e = test::to_eigen(q) * Eigen::Vector3d(v[0], v[1], v[2]);
    CHECK(std::abs(r[0] - e.x()) < 1e-12);
    CHECK(std::abs(r[1] - e.y()) < 1e-12);
    CHECK(std::abs(r[2] - e.z()) < 1e-12);
  }
}

TEST_CASE("angle of axis-angle rotations") {
  for (const double a : {0.0, 0.3, 1.0, 2.5, kPi}) {
    CHECK(std::abs(quat_from_axis_angle(kX, a).angle() - a) < 1e-7);
  }
}
