#pragma once

#include <array>

namespace axloc {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

/// Quaternion stored scalar-first: [w, x, y, z] = [u, v].
struct Quat {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  [[nodiscard]] double norm() const;
  [[nodiscard]] Quat operator-() const { return {-w, -x, -y, -z}; }
  friend bool operator==(const Quat&, const Quat&) = default;
};

Quat quat_multiply(const Quat& a, const Quat& b);
Quat quat_conjugate(const Quat& q);

/// Unit norm with the scalar part made non-negative. Throws on a zero quaternion.
Quat canonicalize(const Quat& q);

/// Camera pose: position `x` in scene units and unit orientation `q` (u >= 0).
class Pose {
 public:
  Pose() = default;
  Pose(const Vec3& translation, const Quat& rotation);

  [[nodiscard]] const Vec3& translation() const noexcept { return translation_; }
  [[nodiscard]] const Quat& rotation() const noexcept { return rotation_; }

  friend bool operator==(const Pose&, const Pose&) = default;

 private:
  Vec3 translation_{0.0, 0.0, 0.0};
  Quat rotation_{};
};

/// Log map of a unit quaternion: (v/|v|) * arccos(u); zero when |v| < 1e-12.
/// Negative-scalar inputs are canonicalized first. Throws std::domain_error
/// unless |‖q‖ - 1| <= 1e-9.
Vec3 quat_log(const Quat& q);

/// Inverse of quat_log: [cos|w|, (w/|w|) sin|w|].
Quat quat_exp(const Vec3& w);

/// Geodesic angle between two rotations in degrees, insensitive to quaternion sign.
double rotation_error_deg(const Quat& q1, const Quat& q2);

double translation_error(const Vec3& a, const Vec3& b);

/// Rotation matrix of a unit quaternion (maps camera-frame vectors to world frame for a Pose).
Mat3 quat_to_matrix(const Quat& q);
Quat matrix_to_quat(const Mat3& m);

double norm(const Vec3& v);
Vec3 cross(const Vec3& a, const Vec3& b);

}  // namespace axloc
