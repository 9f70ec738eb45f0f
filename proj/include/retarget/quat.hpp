#pragma once

#include <array>

namespace retarget {

using Vec3 = std::array<double, 3>;

// Unit rotation quaternion, Hamilton convention, scalar-first storage.
//
// Every constructed value is normalized. The sign is left alone unless
// canonical() is called, which picks the w >= 0 hemisphere (ties at w == 0
// are broken on the first non-zero vector component).
class Quat {
 public:
  constexpr Quat() noexcept = default;

  // Throws ValidationError on non-finite or zero-norm input.
  Quat(double w, double x, double y, double z);

  static constexpr Quat identity() noexcept { return Quat(); }

  double w() const noexcept { return w_; }
  double x() const noexcept { return x_; }
  double y() const noexcept { return y_; }
  double z() const noexcept { return z_; }

  std::array<double, 4> components() const noexcept { return {w_, x_, y_, z_}; }

  Quat conjugate() const noexcept;
  Quat negated() const noexcept;
  Quat canonical() const noexcept;
  double norm() const noexcept;
  // Rotation angle in [0, pi] of the rotation this quaternion represents.
  double angle() const noexcept;

  friend bool operator==(const Quat&, const Quat&) = default;

 private:
  struct Unchecked {};
  constexpr Quat(Unchecked, double w, double x, double y, double z) noexcept
      : w_(w), x_(x), y_(y), z_(z) {}

  double w_ = 1.0;
  double x_ = 0.0;
  double y_ = 0.0;
  double z_ = 0.0;
};

// Hamilton product a * b, renormalized and canonicalized.
Quat quat_multiply(const Quat& a, const Quat& b) noexcept;

inline Quat operator*(const Quat& a, const Quat& b) noexcept { return quat_multiply(a, b); }

// 4-D dot product; the absolute value is the cosine of half the relative angle.
double quat_dot(const Quat& a, const Quat& b) noexcept;

// Throws ValidationError unless |axis| is within 1e-6 of 1 and angle is finite.
Quat quat_from_axis_angle(const Vec3& axis, double angle);

Vec3 rotate(const Quat& q, const Vec3& v) noexcept;

}  // namespace retarget
