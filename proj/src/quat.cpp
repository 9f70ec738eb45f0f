#include "retarget/quat.hpp"

#include <cmath>

#include "retarget/errors.hpp"

namespace retarget {

Quat::Quat(double w, double x, double y, double z) {
  if (!std::isfinite(w) || !std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z)) {
    throw ValidationError("quaternion has non-finite components");
  }
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (n == 0.0) {
    throw ValidationError("quaternion has zero norm");
  }
  w_ = w / n;
  x_ = x / n;
  y_ = y / n;
  z_ = z / n;
}

Quat Quat::conjugate() const noexcept { return Quat(Unchecked{}, w_, -x_, -y_, -z_); }

Quat Quat::negated() const noexcept { return Quat(Unchecked{}, -w_, -x_, -y_, -z_); }

Quat Quat::canonical() const noexcept {
  bool flip = false;
  if (w_ != 0.0) {
    flip = w_ < 0.0;
  } else if (x_ != 0.0) {
    flip = x_ < 0.0;
  } else if (y_ != 0.0) {
    flip = y_ < 0.0;
  } else {
    flip = z_ < 0.0;
  }
  return flip ? negated() : *this;
}

double Quat::norm() const noexcept { return std::sqrt(w_ * w_ + x_ * x_ + y_ * y_ + z_ * z_); }

double Quat::angle() const noexcept {
  const double v = std::sqrt(x_ * x_ + y_ * y_ + z_ * z_);
  return 2.0 * std::atan2(v, std::abs(w_));
}

Quat quat_multiply(const Quat& a, const Quat& b) noexcept {
  const double w = a.w() * b.w() - a.x() * b.x() - a.y() * b.y() - a.z() * b.z();
  const double x = a.w() * b.x() + a.x() * b.w() + a.y() * b.z() - a.z() * b.y();
  const double y = a.w() * b.y() - a.x() * b.z() + a.y() * b.w() + a.z() * b.x();
  const double z = a.w() * b.z() + a.x() * b.y() - a.y() * b.x() + a.z() * b.w();
  // Product of unit quaternions has norm 1 up to rounding, never zero.
  return Quat(w, x, y, z).canonical();
}

double quat_dot(const Quat& a, const Quat& b) noexcept {
  return a.w() * b.w() + a.x() * b.x() + a.y() * b.y() + a.z() * b.z();
}

Quat quat_from_axis_angle(const Vec3& axis, double angle) {
  if (!std::isfinite(angle)) {
    throw ValidationError("axis-angle: angle is not finite");
  }
  const double n = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
  if (!std::isfinite(n) || std::abs(n - 1.0) > 1e-6) {
    throw ValidationError("axis-angle: axis is not unit length");
  }
  const double s = std::sin(0.5 * angle);
  return Quat(std::cos(0.5 * angle), axis[0] * s, axis[1] * s, axis[2] * s).canonical();
}

Vec3 rotate(const Quat& q, const Vec3& v) noexcept {
  // v' = v + 2w (u x v) + 2 u x (u x v)
  const Vec3 u{q.x(), q.y(), q.z()};
  const Vec3 t{2.0 * (u[1] * v[2] - u[2] * v[1]), 2.0 * (u[2] * v[0] - u[0] * v[2]),
               2.0 * (u[0] * v[1] - u[1] * v[0])};
  return {v[0] + q.w() * t[0] + (u[1] * t[2] - u[2] * t[1]),
          v[1] + q.w() * t[1] + (u[2] * t[0] - u[0] * t[2]),
          v[2] + q.w() * t[2] + (u[0] * t[1] - u[1] * t[0])};
}

}  // namespace retarget
