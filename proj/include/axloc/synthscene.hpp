#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "axloc/colorspace.hpp"
#include "axloc/image.hpp"
#include "axloc/posemath.hpp"

namespace axloc {

enum class PrimitiveKind {
  Panel,  // vertical axis-aligned rectangle standing on the ground
  Disc,   // flat disc lying on the ground
};

struct ScenePrimitive {
  PrimitiveKind kind = PrimitiveKind::Disc;
  double x = 0.0;  // center on the ground plane
  double y = 0.0;
  double half_length = 0.0;  // panel: half extent along its axis
  double height = 0.0;       // panel: top edge above ground
  int axis = 0;              // panel: 0 spans x (plane y = const), 1 spans y (plane x = const)
  double radius = 0.0;       // disc
  RgbColor color;

  friend bool operator==(const ScenePrimitive&, const ScenePrimitive&) = default;
};

struct Scene {
  std::uint64_t seed = 0;
  double extent = 10.0;  // side of the bounding square, centered on the origin
  std::vector<ScenePrimitive> objects;
};

inline constexpr std::size_t kDefaultSceneObjects = 24;
/// Object palette in CIE Lab: lightness bands are spread over this range, chroma drawn uniformly.
inline constexpr double kObjectLightnessMin = 32.0;
inline constexpr double kObjectLightnessMax = 80.0;
inline constexpr double kObjectChromaMin = 16.0;
inline constexpr double kObjectChromaMax = 28.0;

/// Objects are placed inside the bounding square but outside the annulus
/// 0.28*extent <= r <= 0.5*extent, which is reserved for camera paths.
/// Hues are evenly spread (with jitter) so every object has a distinct hue.
Scene generate_scene(std::uint64_t seed, std::size_t num_objects = kDefaultSceneObjects, double extent = 10.0);

/// Pinhole camera at `position` with orientation `rotation` (camera -> world;
/// camera axes x forward, y left, z up). Focal length equals the image width,
/// principal point at the image center. Objects are painted far to near.
RgbImage render(const Scene& scene, const Vec3& position, const Quat& rotation, std::size_t width,
                std::size_t height);
RgbImage render(const Scene& scene, const Pose& pose, std::size_t width, std::size_t height);

/// Closed circular camera loop looking at a fixed target.
struct Trajectory {
  double center_x = 0.0;
  double center_y = 0.0;
  double radius = 4.0;
  double height = 1.6;
  Vec3 look_at{0.0, 0.0, 0.5};
  double phase = 0.0;  // radians

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

Trajectory default_train_trajectory();
Trajectory default_test_trajectory();

/// Pose of sample `index` out of `count` evenly spaced around the loop.
Pose trajectory_pose(const Trajectory& path, std::size_t index, std::size_t count);

/// Orientation of a camera at `eye` looking at `target` with world z up.
Quat look_at_rotation(const Vec3& eye, const Vec3& target);

struct DatasetManifest {
  std::uint64_t seed = 0;
  double extent = 10.0;
  std::size_t object_count = 0;
  std::size_t width = 32;
  std::size_t height = 32;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  Trajectory train_path;
  Trajectory test_path;
};

struct Sample {
  std::size_t index = 0;
  RgbImage image;
  Pose pose;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Sample> train;
  std::vector<Sample> test;
};

/// Writes scene.txt, images/{train,test}/NNNNNN.ppm and poses_{train,test}.csv into `dir`,
/// rendering with up to `threads` workers. Output does not depend on `threads`.
/// Throws std::runtime_error when the directory cannot be written.
DatasetManifest generate_dataset(const Scene& scene, const Trajectory& train_path, const Trajectory& test_path,
                                 std::size_t n_train, std::size_t n_test, std::size_t width, std::size_t height,
                                 const std::filesystem::path& dir, std::size_t threads = 1);

Dataset load_dataset(const std::filesystem::path& dir);

/// 17-significant-digit pose CSV with header `index,tx,ty,tz,qw,qx,qy,qz`.
void write_pose_csv(const std::filesystem::path& path, const std::vector<std::pair<std::size_t, Pose>>& poses);
std::vector<std::pair<std::size_t, Pose>> read_pose_csv(const std::filesystem::path& path);

/// "%.17g" formatting used by every text file that carries doubles.
std::string format_double(double v);

}  // namespace axloc
