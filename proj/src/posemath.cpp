#include "axloc/posemath.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace axloc {

namespace {
constexpr double kNormTolerance = 1e-9;
constexpr double kIdentityGuard = 1e-12;
}  // namespace

double Quat::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Quat quat_multiply(const Quat& a, const Quat& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

Quat quat_conjugate(const Quat& q) { return {q.w, -q.x, -q.y, -q.z}; }

Quat canonicalize(const Quat& q) {
  const double n = q.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw std::domain_error("cannot normalize a zero or non-finite quaternion");
  // Already-unit inputs are left untouched so canonicalization is idempotent.
  Quat out = std::fabs(n - 1.0) <= 1e-15 ? q : Quat{q.w / n, q.x / n, q.y / n, q.z / n};
  if (out.w < 0.0) out = -out;
  return out;
}

Pose::Pose(const Vec3& translation, const Quat& rotation)
    : translation_(translation), rotation_(canonicalize(rotation)) {}

Vec3 quat_log(const Quat& q) {
  const double n = q.norm();
  if (std::fabs(n - 1.0) > kNormTolerance) {
    throw std::domain_error("quat_log: quaternion norm " + std::to_string(n) + " is not 1");
  }
  const Quat c = q.w < 0.0 ? -q : q;
  const double vnorm = std::sqrt(c.x * c.x + c.y * c.y + c.z * c.z);
  if (vnorm < kIdentityGuard) return {0.0, 0.0, 0.0};
  const double angle = std::atan2(vnorm, c.w);
  const double s = angle / vnorm;
  return {c.x * s, c.y * s, c.z * s};
}

Quat quat_exp(const Vec3& w) {
  const double theta = norm(w);
  if (theta == 0.0) return {};
  const double s = std::sin(theta) / theta;
  return {std::cos(theta), w[0] * s, w[1] * s, w[2] * s};
}

double rotation_error_deg(const Quat& q1, const Quat& q2) {
  // 4*atan2(|q1 - s q2|, |q1 + s q2|), s = sign(q1.q2). Same value as
  // 2*acos(|q1.q2|) for unit inputs, accurate near zero, exactly symmetric,
  // and exactly 0 for q2 = +-q1.
  const double dot = q1.w * q2.w + q1.x * q2.x + q1.y * q2.y + q1.z * q2.z;
  const double s = dot < 0.0 ? -1.0 : 1.0;
  const double d[4] = {q1.w - s * q2.w, q1.x - s * q2.x, q1.y - s * q2.y, q1.z - s * q2.z};
  const double p[4] = {q1.w + s * q2.w, q1.x + s * q2.x, q1.y + s * q2.y, q1.z + s * q2.z};
  double dn = 0.0, pn = 0.0;
  for (int i = 0; i < 4; ++i) dn += d[i] * d[i], pn += p[i] * p[i];
  const double angle = 4.0 * std::atan2(std::sqrt(dn), std::sqrt(pn));
  return angle * 180.0 / std::numbers::pi;
}

double translation_error(const Vec3& a, const Vec3& b) {
  return norm(Vec3{a[0] - b[0], a[1] - b[1], a[2] - b[2]});
}

Mat3 quat_to_matrix(const Quat& q) {
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  return {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
           {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
           {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
}

Quat matrix_to_quat(const Mat3& m) {
  const double trace = m[0][0] + m[1][1] + m[2][2];
  Quat q;
  if (trace > 0.0) {
    const double s = 2.0 * std::sqrt(trace + 1.0);
    q = {0.25 * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s};
  } else if (m[0][0] > m[1][1] && m[0][0] > m[2][2]) {
    const double s = 2.0 * std::sqrt(1.0 + m[0][0] - m[1][1] - m[2][2]);
    q = {(m[2][1] - m[1][2]) / s, 0.25 * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s};
  } else if (m[1][1] > m[2][2]) {
    const double s = 2.0 * std::sqrt(1.0 + m[1][1] - m[0][0] - m[2][2]);
    q = {(m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, 0.25 * s, (m[1][2] + m[2][1]) / s};
  } else {
    const double s = 2.0 * std::sqrt(1.0 + m[2][2] - m[0][0] - m[1][1]);
    q = {(m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, 0.25 * s};
  }
  return canonicalize(q);
}

double norm(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

}  // namespace axloc
