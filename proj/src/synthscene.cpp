#include "axloc/synthscene.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "axloc/colorspace.hpp"
#include "axloc/rng.hpp"

namespace axloc {

namespace fs = std::filesystem;

namespace {

// Flat object color from a hue angle, lightness and chroma, pulled into gamut.
RgbColor object_color(double hue_turns, double lightness, double chroma) {
  const double angle = 2.0 * std::numbers::pi * hue_turns;
  return lab_to_rgb(fit_chroma_to_gamut({lightness, chroma * std::cos(angle), chroma * std::sin(angle)}));
}

double ground_shade(double distance) { return 0.12 + 0.10 * std::exp(-distance / 8.0); }

double sky_shade(double elevation) { return 0.86 + 0.10 * std::min(1.0, elevation * 2.0); }

// Ray parameter of the hit, or a negative value when the ray misses.
double intersect(const ScenePrimitive& obj, const Vec3& origin, const Vec3& dir) {
  if (obj.kind == PrimitiveKind::Disc) {
    if (dir[2] >= 0.0) return -1.0;
    const double t = -origin[2] / dir[2];
    const double hx = origin[0] + t * dir[0] - obj.x;
    const double hy = origin[1] + t * dir[1] - obj.y;
    return hx * hx + hy * hy <= obj.radius * obj.radius ? t : -1.0;
  }
  // Panel: plane y = obj.y spanning x (axis 0) or plane x = obj.x spanning y (axis 1).
  const std::size_t normal_axis = obj.axis == 0 ? 1 : 0;
  const std::size_t span_axis = obj.axis == 0 ? 0 : 1;
  const double plane = normal_axis == 1 ? obj.y : obj.x;
  const double center = span_axis == 0 ? obj.x : obj.y;
  if (dir[normal_axis] == 0.0) return -1.0;
  const double t = (plane - origin[normal_axis]) / dir[normal_axis];
  if (t <= 0.0) return -1.0;
  const double along = origin[span_axis] + t * dir[span_axis] - center;
  const double z = origin[2] + t * dir[2];
  return (std::fabs(along) <= obj.half_length && z >= 0.0 && z <= obj.height) ? t : -1.0;
}

Vec3 object_center(const ScenePrimitive& obj) {
  return {obj.x, obj.y, obj.kind == PrimitiveKind::Panel ? 0.5 * obj.height : 0.0};
}

std::string zero_pad(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", index);
  return buf;
}

void write_manifest(const fs::path& path, const DatasetManifest& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  auto traj = [&out](const std::string& prefix, const Trajectory& t) {
    out << prefix << ".center_x=" << format_double(t.center_x) << '\n'
        << prefix << ".center_y=" << format_double(t.center_y) << '\n'
        << prefix << ".radius=" << format_double(t.radius) << '\n'
        << prefix << ".height=" << format_double(t.height) << '\n'
        << prefix << ".look_at=" << format_double(t.look_at[0]) << ',' << format_double(t.look_at[1]) << ','
        << format_double(t.look_at[2]) << '\n'
        << prefix << ".phase=" << format_double(t.phase) << '\n';
  };
  out << "# synthetic localization dataset\n"
      << "seed=" << m.seed << '\n'
      << "extent=" << format_double(m.extent) << '\n'
      << "objects=" << m.object_count << '\n'
      << "width=" << m.width << '\n'
      << "height=" << m.height << '\n'
      << "n_train=" << m.n_train << '\n'
      << "n_test=" << m.n_test << '\n';
  traj("train_path", m.train_path);
  traj("test_path", m.test_path);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read dataset manifest " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error(path.string() + ": malformed line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error(path.string() + ": missing key " + key);
    return it->second;
  };
  auto traj = [&](const std::string& prefix) {
    Trajectory t;
    t.center_x = std::stod(get(prefix + ".center_x"));
    t.center_y = std::stod(get(prefix + ".center_y"));
    t.radius = std::stod(get(prefix + ".radius"));
    t.height = std::stod(get(prefix + ".height"));
    std::istringstream la(get(prefix + ".look_at"));
    std::string part;
    for (double& v : t.look_at) {
      std::getline(la, part, ',');
      v = std::stod(part);
    }
    t.phase = std::stod(get(prefix + ".phase"));
    return t;
  };
  DatasetManifest m;
  m.seed = std::stoull(get("seed"));
  m.extent = std::stod(get("extent"));
  m.object_count = std::stoul(get("objects"));
  m.width = std::stoul(get("width"));
  m.height = std::stoul(get("height"));
  m.n_train = std::stoul(get("n_train"));
  m.n_test = std::stoul(get("n_test"));
  m.train_path = traj("train_path");
  m.test_path = traj("test_path");
  return m;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Scene generate_scene(std::uint64_t seed, std::size_t num_objects, double extent) {
  if (num_objects == 0) throw std::invalid_argument("generate_scene: need at least one object");
  if (!(extent > 0.0)) throw std::invalid_argument("generate_scene: extent must be positive");
  Scene scene{seed, extent, {}};
  SplitMix64 rng(derive_seed(seed, "scene"));
  const double half = 0.5 * extent;
  const double ring_inner = 0.28 * extent;
  const double ring_outer = 0.5 * extent;
  // Each object gets its own lightness band, and hue turns with lightness, so chroma
  // is a smooth function of L.
  const auto lightness_rank = shuffled_indices(num_objects, derive_seed(seed, "lightness"));
  for (std::size_t i = 0; i < num_objects; ++i) {
    ScenePrimitive obj;
    do {
      obj.x = rng.uniform(-half, half);
      obj.y = rng.uniform(-half, half);
    } while (std::hypot(obj.x, obj.y) >= ring_inner && std::hypot(obj.x, obj.y) <= ring_outer);
    const double scale = extent / 10.0;
    if (rng.uniform() < 0.6) {
      obj.kind = PrimitiveKind::Panel;
      obj.axis = static_cast<int>(rng.below(2));
      obj.half_length = scale * rng.uniform(0.3, 0.8);
      obj.height = scale * rng.uniform(0.4, 1.5);
    } else {
      obj.kind = PrimitiveKind::Disc;
      obj.radius = scale * rng.uniform(0.25, 0.6);
    }
    const double rank = static_cast<double>(lightness_rank[i]);
    const double hue = (rank + 0.5 * rng.uniform()) / static_cast<double>(num_objects);
    const double band = (rank + 0.5) / static_cast<double>(num_objects);
    obj.color = object_color(hue, kObjectLightnessMin + band * (kObjectLightnessMax - kObjectLightnessMin),
                             rng.uniform(kObjectChromaMin, kObjectChromaMax));
    scene.objects.push_back(obj);
  }
  return scene;
}

RgbImage render(const Scene& scene, const Vec3& position, const Quat& rotation, std::size_t width,
                std::size_t height) {
  const Mat3 r = quat_to_matrix(rotation);
  const double focal = static_cast<double>(width);
  const double cx = 0.5 * static_cast<double>(width);
  const double cy = 0.5 * static_cast<double>(height);

  std::vector<Vec3> rays(width * height);
  RgbImage image(width, height);
  for (std::size_t v = 0; v < height; ++v) {
    for (std::size_t u = 0; u < width; ++u) {
      const Vec3 cam{1.0, (cx - static_cast<double>(u) - 0.5) / focal, (cy - static_cast<double>(v) - 0.5) / focal};
      Vec3 d{};
      for (std::size_t i = 0; i < 3; ++i) d[i] = r[i][0] * cam[0] + r[i][1] * cam[1] + r[i][2] * cam[2];
      rays[v * width + u] = d;
      double shade = 0.0;
      if (d[2] < 0.0) {
        const double t = -position[2] / d[2];
        shade = ground_shade(t * std::hypot(d[0], d[1]));
      } else {
        shade = sky_shade(d[2] / norm(d));
      }
      for (std::size_t c = 0; c < 3; ++c) image.at(v, u, c) = shade;
    }
  }

  std::vector<std::size_t> order(scene.objects.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> dist(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Vec3 c = object_center(scene.objects[i]);
    dist[i] = translation_error(c, position);
  }
  std::stable_sort(order.begin(), order.end(), [&dist](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });

  for (std::size_t idx : order) {
    const ScenePrimitive& obj = scene.objects[idx];
    for (std::size_t p = 0; p < rays.size(); ++p) {
      if (intersect(obj, position, rays[p]) > 0.0) {
        image.pixels[p * 3] = obj.color.r;
        image.pixels[p * 3 + 1] = obj.color.g;
        image.pixels[p * 3 + 2] = obj.color.b;
      }
    }
  }
  return image;
}

RgbImage render(const Scene& scene, const Pose& pose, std::size_t width, std::size_t height) {
  return render(scene, pose.translation(), pose.rotation(), width, height);
}

Trajectory default_train_trajectory() { return Trajectory{0.0, 0.0, 4.0, 1.6, {0.0, 0.0, 0.5}, 0.0}; }

Trajectory default_test_trajectory() {
  return Trajectory{0.0, 0.0, 3.85, 1.55, {0.0, 0.0, 0.5}, std::numbers::pi / 100.0};
}

Quat look_at_rotation(const Vec3& eye, const Vec3& target) {
  Vec3 f{target[0] - eye[0], target[1] - eye[1], target[2] - eye[2]};
  const double fn = norm(f);
  if (!(fn > 0.0)) throw std::invalid_argument("look_at_rotation: eye equals target");
  for (double& v : f) v /= fn;
  Vec3 left = cross(Vec3{0.0, 0.0, 1.0}, f);
  const double ln = norm(left);
  if (ln < 1e-12) throw std::invalid_argument("look_at_rotation: viewing direction is vertical");
  for (double& v : left) v /= ln;
  const Vec3 up = cross(f, left);
  Mat3 m{};
  for (std::size_t i = 0; i < 3; ++i) {
    m[i][0] = f[i];
    m[i][1] = left[i];
    m[i][2] = up[i];
  }
  return matrix_to_quat(m);
}

Pose trajectory_pose(const Trajectory& path, std::size_t index, std::size_t count) {
  if (count == 0) throw std::invalid_argument("trajectory_pose: empty trajectory");
  const double angle =
      path.phase + 2.0 * std::numbers::pi * static_cast<double>(index) / static_cast<double>(count);
  const Vec3 eye{path.center_x + path.radius * std::cos(angle), path.center_y + path.radius * std::sin(angle),
                 path.height};
  return Pose(eye, look_at_rotation(eye, path.look_at));
}

void write_pose_csv(const fs::path& path, const std::vector<std::pair<std::size_t, Pose>>& poses) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "index,tx,ty,tz,qw,qx,qy,qz\n";
  for (const auto& [index, pose] : poses) {
    const auto& t = pose.translation();
    const auto& q = pose.rotation();
    out << index << ',' << format_double(t[0]) << ',' << format_double(t[1]) << ',' << format_double(t[2]) << ','
        << format_double(q.w) << ',' << format_double(q.x) << ',' << format_double(q.y) << ','
        << format_double(q.z) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<std::pair<std::size_t, Pose>> read_pose_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read pose file " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "index,tx,ty,tz,qw,qx,qy,qz") throw std::runtime_error(path.string() + ": unexpected header");
  std::vector<std::pair<std::size_t, Pose>> poses;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8) throw std::runtime_error(path.string() + ": expected 8 columns in '" + line + "'");
    const Vec3 t{std::stod(cells[1]), std::stod(cells[2]), std::stod(cells[3])};
    const Quat q{std::stod(cells[4]), std::stod(cells[5]), std::stod(cells[6]), std::stod(cells[7])};
    poses.emplace_back(std::stoul(cells[0]), Pose(t, q));
  }
  return poses;
}

DatasetManifest generate_dataset(const Scene& scene, const Trajectory& train_path, const Trajectory& test_path,
                                 std::size_t n_train, std::size_t n_test, std::size_t width, std::size_t height,
                                 const fs::path& dir, std::size_t threads) {
  std::error_code ec;
  fs::create_directories(dir / "images" / "train", ec);
  if (!ec) fs::create_directories(dir / "images" / "test", ec);
  if (ec) throw std::runtime_error("cannot create dataset directory " + dir.string() + ": " + ec.message());

  DatasetManifest m{scene.seed, scene.extent, scene.objects.size(), width, height, n_train, n_test,
                    train_path, test_path};
  auto emit = [&](const std::string& split, const Trajectory& path, std::size_t count) {
    std::vector<std::pair<std::size_t, Pose>> poses;
    for (std::size_t i = 0; i < count; ++i) poses.emplace_back(i, trajectory_pose(path, i, count));
    // Every sample is a pure function of its index, so workers stride over indices.
    const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(count, 1));
    std::vector<std::exception_ptr> errors(workers);
    auto work = [&](std::size_t w) {
      try {
        for (std::size_t i = w; i < count; i += workers) {
          write_ppm(dir / "images" / split / (zero_pad(i) + ".ppm"), render(scene, poses[i].second, width, height));
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work, w);
    work(0);
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    write_pose_csv(dir / ("poses_" + split + ".csv"), poses);
  };
  emit("train", train_path, n_train);
  emit("test", test_path, n_test);
  write_manifest(dir / "scene.txt", m);
  return m;
}

Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("dataset directory " + dir.string() + " does not exist");
  Dataset ds;
  ds.manifest = read_manifest(dir / "scene.txt");
  auto load_split = [&](const std::string& split) {
    std::vector<Sample> samples;
    for (const auto& [index, pose] : read_pose_csv(dir / ("poses_" + split + ".csv"))) {
      const fs::path img = dir / "images" / split / (zero_pad(index) + ".ppm");
      samples.push_back(Sample{index, read_pnm(img).image, pose});
    }
    return samples;
  };
  ds.train = load_split("train");
  ds.test = load_split("test");
  return ds;
}

}  // namespace axloc
