#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <numbers>

#include "axloc/posemath.hpp"
#include "axloc/rng.hpp"

using namespace axloc;
using std::numbers::pi;

namespace {

Quat random_canonical(SplitMix64& rng) {
  Quat q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
  return canonicalize(q);
}

Vec3 random_log(SplitMix64& rng, double max_norm) {
  Vec3 d{rng.normal(), rng.normal(), rng.normal()};
  const double n = norm(d);
  const double r = max_norm * rng.uniform();
  return {d[0] / n * r, d[1] / n * r, d[2] / n * r};
}

}  // namespace

TEST_SUITE("posemath") {

TEST_CASE("log and exp examples") {
  const Vec3 zero = quat_log(Quat{1, 0, 0, 0});
  CHECK(zero == Vec3{0, 0, 0});
  const Vec3 w = quat_log(Quat{std::cos(pi / 4), 0, 0, std::sin(pi / 4)});
  CHECK(std::abs(w[0]) < 1e-15);
  CHECK(std::abs(w[1]) < 1e-15);
  CHECK(w[2] == doctest::Approx(pi / 4).epsilon(1e-14));
  const Quat back = quat_exp(w);
  CHECK(back.w == doctest::Approx(std::cos(pi / 4)).epsilon(1e-14));
  CHECK(back.z == doctest::Approx(std::sin(pi / 4)).epsilon(1e-14));

  CHECK(quat_exp(Vec3{0, 0, 0}) == Quat{1, 0, 0, 0});
  const Quat q = quat_exp(Vec3{0, 0, pi / 2});
  CHECK(std::abs(q.w) < 1e-15);
  CHECK(q.x == 0.0);
  CHECK(q.y == 0.0);
  CHECK(q.z == 1.0);
}

TEST_CASE("quat_log rejects non-unit input and canonicalizes") {
  CHECK_THROWS_AS((void)quat_log(Quat{1.1, 0, 0, 0}), std::domain_error);
  CHECK_THROWS_AS((void)quat_log(Quat{0.5, 0.5, 0, 0}), std::domain_error);
  const Quat q = quat_exp(Vec3{0.3, -0.2, 0.5});
  const Vec3 a = quat_log(q);
  const Vec3 b = quat_log(-q);
  for (int i = 0; i < 3; ++i) CHECK(a[i] == b[i]);
  CHECK_THROWS((void)canonicalize(Quat{0, 0, 0, 0}));
}

TEST_CASE("exp has unit norm") {
  SplitMix64 rng(61);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 w{rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4)};
    CHECK(std::abs(quat_exp(w).norm() - 1.0) < 1e-12);
  }
}

TEST_CASE("exp and log are mutual inverses") {
  SplitMix64 rng(67);
  double worst_q = 0.0, worst_w = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Quat q = random_canonical(rng);
    const Quat r = quat_exp(quat_log(q));
    worst_q = std::max({worst_q, std::abs(r.w - q.w), std::abs(r.x - q.x), std::abs(r.y - q.y), std::abs(r.z - q.z)});

    const Vec3 w = random_log(rng, pi / 2 - 1e-6);
    const Vec3 v = quat_log(quat_exp(w));
    worst_w = std::max({worst_w, std::abs(v[0] - w[0]), std::abs(v[1] - w[1]), std::abs(v[2] - w[2])});
  }
  CHECK(worst_q < 1e-9);
  CHECK(worst_w < 1e-9);
}

TEST_CASE("canonical log vectors are bounded") {
  SplitMix64 rng(71);
  for (int i = 0; i < 1000; ++i) CHECK(norm(quat_log(random_canonical(rng))) <= pi / 2 + 1e-12);
}

TEST_CASE("rotation error examples") {
  SplitMix64 rng(73);
  const Quat q = random_canonical(rng);
  CHECK(rotation_error_deg(q, q) == 0.0);
  CHECK(rotation_error_deg(q, -q) == 0.0);
  CHECK(rotation_error_deg(canonicalize(q), canonicalize(-q)) == 0.0);
  CHECK(rotation_error_deg(Quat{1, 0, 0, 0}, quat_exp(Vec3{0, 0, pi / 4})) == doctest::Approx(90.0).epsilon(1e-12));
}

TEST_CASE("rotation error is a metric") {
  SplitMix64 rng(79);
  for (int i = 0; i < 500; ++i) {
    const Quat a = random_canonical(rng), b = random_canonical(rng), c = random_canonical(rng);
    const double ab = rotation_error_deg(a, b);
    CHECK(ab >= 0.0);
    CHECK(ab <= 180.0);
    CHECK(ab == rotation_error_deg(b, a));
    CHECK(rotation_error_deg(a, c) <= ab + rotation_error_deg(b, c) + 1e-9);
    if (ab < 1e-9) CHECK(std::abs(std::abs(a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z) - 1.0) < 1e-12);
  }
  // Small angles stay accurate where an arccos form would lose digits.
  const Quat tiny = quat_exp(Vec3{1e-9, 0, 0});
  CHECK(rotation_error_deg(Quat{1, 0, 0, 0}, tiny) == doctest::Approx(2e-9 * 180.0 / pi).epsilon(1e-6));
}

TEST_CASE("log is continuous at the identity") {
  SplitMix64 rng(83);
  for (int path = 0; path < 20; ++path) {
    const Vec3 dir = random_log(rng, 1.0);
    double prev = 1e9;
    for (double t = 1.0; t > 1e-14; t *= 0.1) {
      const Vec3 w{dir[0] * t, dir[1] * t, dir[2] * t};
      const double n = norm(quat_log(quat_exp(w)));
      CHECK(n <= prev);
      CHECK(std::abs(n - norm(w)) <= 1e-9);
      prev = n;
    }
  }
  CHECK(norm(quat_log(canonicalize(Quat{1, 1e-13, 0, 0}))) == 0.0);
}

TEST_CASE("translation error") {
  CHECK(translation_error({1, 2, 3}, {1, 2, 3}) == 0.0);
  CHECK(translation_error({0, 0, 0}, {3, 4, 0}) == 5.0);
  SplitMix64 rng(89);
  for (int i = 0; i < 100; ++i) {
    const Vec3 a{rng.normal(), rng.normal(), rng.normal()}, b{rng.normal(), rng.normal(), rng.normal()};
    CHECK(translation_error(a, b) == translation_error(b, a));
  }
}

TEST_CASE("pose construction normalizes and canonicalizes") {
  const Pose p({1, 2, 3}, Quat{-2, 0, 0, 0});
  CHECK(p.rotation() == Quat{1, 0, 0, 0});
  SplitMix64 rng(97);
  for (int i = 0; i < 100; ++i) {
    const Pose r({0, 0, 0}, Quat{rng.normal(), rng.normal(), rng.normal(), rng.normal()});
    CHECK(std::abs(r.rotation().norm() - 1.0) < 1e-9);
    CHECK(r.rotation().w >= 0.0);
  }
}

TEST_CASE("matrix conversion") {
  SplitMix64 rng(101);
  for (int i = 0; i < 200; ++i) {
    const Quat q = random_canonical(rng);
    const Quat back = matrix_to_quat(quat_to_matrix(q));
    CHECK(rotation_error_deg(q, back) < 1e-6);
    const Mat3 m = quat_to_matrix(q);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        double dot = 0.0;
        for (int k = 0; k < 3; ++k) dot += m[k][r] * m[k][c];
        CHECK(std::abs(dot - (r == c ? 1.0 : 0.0)) < 1e-12);
      }
  }
  const Mat3 z90 = quat_to_matrix(quat_exp(Vec3{0, 0, pi / 4}));
  CHECK(std::abs(z90[0][1] + 1.0) < 1e-12);
  CHECK(std::abs(z90[1][0] - 1.0) < 1e-12);
  const Quat ab = quat_multiply(quat_exp(Vec3{0, 0, 0.1}), quat_exp(Vec3{0, 0, 0.2}));
  CHECK(rotation_error_deg(ab, quat_exp(Vec3{0, 0, 0.3})) < 1e-9);
  const Quat inv = quat_multiply(quat_exp(Vec3{0.1, 0.4, -0.3}), quat_conjugate(quat_exp(Vec3{0.1, 0.4, -0.3})));
  CHECK(rotation_error_deg(inv, Quat{}) < 1e-9);
}

}  // TEST_SUITE
