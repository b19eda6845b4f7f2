#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "axloc/eval.hpp"
#include "support.hpp"

using namespace axloc;
using namespace axloc::testing;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  return out;
}

Dataset tiny_dataset(std::size_t n_train = 8, std::size_t n_test = 4) {
  const Scene sc = generate_scene(2);
  Dataset ds;
  ds.manifest.seed = 2;
  ds.train = render_samples(sc, default_train_trajectory(), n_train);
  ds.test = render_samples(sc, default_test_trajectory(), n_test);
  return ds;
}

void check_same_row(const AblationRow& a, const AblationRow& b) {
  CHECK(a.config == b.config);
  CHECK(a.seed == b.seed);
  CHECK(a.failed == b.failed);
  if (a.failed) return;
  CHECK(a.median_t == b.median_t);
  CHECK(a.median_r_deg == b.median_r_deg);
  CHECK(a.acc_at_5 == b.acc_at_5);
  CHECK(a.acc_at_10 == b.acc_at_10);
  CHECK(a.epochs_to_threshold == b.epochs_to_threshold);
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("lower median") {
  CHECK(lower_median({1, 2, 9}) == 2.0);
  CHECK(lower_median({9, 1, 2}) == 2.0);
  CHECK(lower_median({4, 1, 3, 2}) == 2.0);
  CHECK(lower_median({7}) == 7.0);
  CHECK_THROWS(lower_median({}));

  SplitMix64 rng(1);
  std::vector<double> v(31);
  for (double& x : v) x = rng.normal();
  const double m = lower_median(v);
  for (int k = 0; k < 20; ++k) {
    auto p = v;
    const auto perm = shuffled_indices(p.size(), k);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = v[perm[i]];
    CHECK(lower_median(p) == m);
  }
  for (int copies : {3, 5}) {
    std::vector<double> rep;
    for (int c = 0; c < copies; ++c) rep.insert(rep.end(), v.begin(), v.end());
    CHECK(lower_median(rep) == m);
  }
}

TEST_CASE("pose errors") {
  std::vector<Pose> truth;
  SplitMix64 rng(2);
  for (int i = 0; i < 7; ++i)
    truth.emplace_back(Vec3{rng.normal(), rng.normal(), rng.normal()},
                       Quat{rng.normal(), rng.normal(), rng.normal(), rng.normal()});
  const PoseErrors same = pose_errors(truth, truth);
  CHECK(same.median_t_err == 0.0);
  CHECK(same.median_r_err_deg == 0.0);

  std::vector<Pose> flipped;
  for (const auto& p : truth) flipped.emplace_back(p.translation(), -p.rotation());
  CHECK(pose_errors(truth, flipped).median_r_err_deg == 0.0);

  std::vector<Pose> shifted;
  const double d[] = {1, 2, 9};
  for (int i = 0; i < 3; ++i) {
    auto t = truth[i].translation();
    t[1] += d[i];
    shifted.emplace_back(t, truth[i].rotation());
  }
  const PoseErrors e = pose_errors(std::span(truth).first(3), shifted);
  CHECK(e.median_t_err == 2.0);
  CHECK(e.t_errors.size() == 3);
  CHECK_THROWS(pose_errors(std::span<const Pose>{}, std::span<const Pose>{}));
  CHECK_THROWS(pose_errors(truth, shifted));
}

TEST_CASE("identity-prediction stub agrees with a direct computation over the pose file") {
  TempDir dir("stub");
  const Scene sc = generate_scene(3);
  generate_dataset(sc, default_train_trajectory(), default_test_trajectory(), 4, 9, 16, 16, dir.path());
  const Dataset ds = load_dataset(dir.path());
  std::vector<Pose> truth, stub;
  for (const auto& s : ds.test) {
    truth.push_back(s.pose);
    stub.emplace_back(Vec3{0, 0, 0}, Quat{});
  }
  const PoseErrors e = pose_errors(truth, stub);

  std::vector<double> t, r;
  const auto rows = lines_of(dir.path() / "poses_test.csv");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto c = split_commas(rows[i]);
    const double tx = std::stod(c[1]), ty = std::stod(c[2]), tz = std::stod(c[3]);
    const double qw = std::stod(c[4]);
    t.push_back(std::sqrt(tx * tx + ty * ty + tz * tz));
    r.push_back(2.0 * std::acos(std::min(1.0, std::abs(qw))) * 180.0 / std::acos(-1.0));
  }
  std::sort(t.begin(), t.end());
  std::sort(r.begin(), r.end());
  CHECK(e.median_t_err == doctest::Approx(t[4]).epsilon(1e-14));
  CHECK(e.median_r_err_deg == doctest::Approx(r[4]).epsilon(1e-9));
}

TEST_CASE("colorization accuracy") {
  SplitMix64 rng(4);
  const Tensor truth = random_tensor({2, 3, 3}, rng, -0.5, 0.5);
  std::vector<Tensor> t{truth}, p{truth};
  const double th[] = {5.0, 10.0};
  const auto perfect = colorization_accuracy(p, t, th);
  CHECK(perfect.at(5.0) == 1.0);
  CHECK(perfect.at(10.0) == 1.0);

  // every pixel off by (3,4) Lab units: distance 5 exactly, not strictly below 5
  Tensor off = truth;
  for (std::size_t i = 0; i < 9; ++i) {
    off[i] += 3.0 / kChromaScale;
    off[9 + i] += 4.0 / kChromaScale;
  }
  std::vector<Tensor> po{off};
  const double th3[] = {4.99, 5.0, 5.01, 10.0};
  const auto acc = colorization_accuracy(po, t, th3);
  CHECK(acc.at(4.99) == 0.0);
  CHECK(acc.at(5.01) == 1.0);
  CHECK(acc.at(10.0) == 1.0);

  const Tensor noisy = random_tensor({2, 3, 3}, rng, -0.3, 0.3);
  std::vector<Tensor> pn{noisy};
  std::vector<double> many;
  for (double x = 0.0; x <= 80.0; x += 2.5) many.push_back(x);
  const auto curve = colorization_accuracy(pn, t, many);
  double prev = -1.0;
  for (const auto& [thr, a] : curve) {
    CHECK(a >= prev);
    prev = a;
  }
  std::vector<Tensor> wrong{Tensor(Shape{2, 3, 4})};
  CHECK_THROWS(colorization_accuracy(wrong, t, th));
}

TEST_CASE("prediction and colorization on a model") {
  const Dataset ds = tiny_dataset();
  const auto prepared = prepare_samples(ds.test, compute_normalization(ds.train));
  Model full(small_model(), 1);
  const auto preds = predict(full, prepared, 3);
  REQUIRE(preds.size() == prepared.size());
  for (const auto& p : preds) {
    CHECK(p.chroma.has_value());
    CHECK(p.attention->shape() == Shape{1, 2, 2});
    CHECK(p.rotation.w >= 0.0);
    CHECK(rotation_error_deg(p.rotation, quat_exp(p.log_rotation)) < 1e-6);
  }
  const auto acc = evaluate_colorization(full, prepared);
  CHECK(acc.at(10.0) >= acc.at(5.0));
  const PoseErrors e = evaluate_pose(full, prepared);
  CHECK(e.t_errors.size() == prepared.size());

  Model base(small_model(false, false), 1);
  CHECK_THROWS_AS(evaluate_colorization(base, prepared), std::logic_error);
  CHECK_FALSE(predict(base, prepared)[0].chroma.has_value());
  CHECK_THROWS(evaluate_pose(base, std::span<const PreparedSample>{}));
}

TEST_CASE("metrics json round trip") {
  MetricsReport r;
  r.median_t_err = 1.0 / 3.0;
  r.median_r_err_deg = 12.25;
  r.t_errors = {0.1, 1.0 / 7.0, 1e-300};
  r.r_errors_deg = {3, 4, 5};
  r.colorization_acc = {{5.0, 0.8125}, {10.0, 0.9}};
  r.epochs_to_threshold = 17;
  CHECK(metrics_from_json(metrics_to_json(r)) == r);
  r.epochs_to_threshold.reset();
  r.colorization_acc.clear();
  const std::string text = metrics_to_json(r);
  CHECK(text.find("null") != std::string::npos);
  CHECK(metrics_from_json(text) == r);
}

TEST_CASE("mask normalization") {
  const double ramp[] = {1, 3, 5};
  CHECK(normalize_mask(ramp) == std::vector<double>{0, 0.5, 1});
  const double flat[] = {2, 2, 2, 2};
  CHECK(normalize_mask(flat) == std::vector<double>(4, 0.5));
  const double zero[] = {0, 0};
  CHECK(normalize_mask(zero) == std::vector<double>(2, 0.5));
}

TEST_CASE("mask export") {
  TempDir dir("masks");
  const Dataset ds = tiny_dataset();
  const auto prepared = prepare_samples(ds.test, compute_normalization(ds.train));
  Model full(small_model(), 1);
  export_attention_masks(full, prepared, ds.test, dir.path());
  for (const auto& s : ds.test) {
    char name[32];
    std::snprintf(name, sizeof name, "mask_%06zu.ppm", s.index);
    const LoadedImage mask = read_pnm(dir / name);
    CHECK(mask.image.width == 2);
    CHECK(mask.image.height == 2);
    std::snprintf(name, sizeof name, "image_%06zu.ppm", s.index);
    CHECK(read_pnm(dir / name).image == quantize8(s.image));
  }

  // zero fusion weights and bias make the fused map all zero: the mask is the degenerate constant
  Model dead(small_model(), 1);
  dead.parameter("fuse.weight").value.fill(0.0);
  dead.parameter("fuse.bias").value.fill(0.0);
  TempDir dir2("masks_dead");
  export_attention_masks(dead, prepared, ds.test, dir2.path());
  char name[32];
  std::snprintf(name, sizeof name, "mask_%06zu.ppm", ds.test[0].index);
  for (double v : read_pnm(dir2 / name).image.pixels) CHECK(v == doctest::Approx(128.0 / 255.0));

  Model no_att(small_model(true, false), 1);
  CHECK_THROWS_AS(export_attention_masks(no_att, prepared, ds.test, dir.path()), std::logic_error);
}

TEST_CASE("trajectory export") {
  TempDir dir("traj");
  const Scene sc = generate_scene(3);
  generate_dataset(sc, default_train_trajectory(), default_test_trajectory(), 6, 5, 32, 32, dir / "ds");
  const Dataset ds = load_dataset(dir / "ds");
  const auto prepared = prepare_samples(ds.test, compute_normalization(ds.train));
  Model m(small_model(), 1);
  export_trajectory(prepared, predict(m, prepared), dir / "t.csv");
  const auto rows = lines_of(dir / "t.csv");
  const auto poses = lines_of(dir / "ds" / "poses_test.csv");
  REQUIRE(rows.size() == prepared.size() + 1);
  CHECK(split_commas(rows[0]).size() == 15);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto c = split_commas(rows[i]);
    const auto g = split_commas(poses[i]);
    for (std::size_t k = 0; k < 8; ++k) CHECK(c[k] == g[k]);
  }

  // perfect predictions reproduce the ground-truth columns
  std::vector<Prediction> perfect;
  for (const auto& s : prepared) {
    Prediction p;
    p.translation = s.pose.translation();
    p.log_rotation = s.log_rotation;
    p.rotation = canonicalize(quat_exp(s.log_rotation));
    perfect.push_back(p);
  }
  export_trajectory(prepared, perfect, dir / "p.csv");
  const auto prow = lines_of(dir / "p.csv");
  for (std::size_t i = 1; i < prow.size(); ++i) {
    const auto c = split_commas(prow[i]);
    for (std::size_t k = 1; k < 4; ++k) CHECK(c[k] == c[k + 7]);
    for (std::size_t k = 4; k < 8; ++k) CHECK(std::stod(c[k]) == doctest::Approx(std::stod(c[k + 7])).epsilon(1e-12));
  }
}

TEST_CASE("epochs to threshold") {
  std::vector<EpochLog> log(5);
  const double t[] = {3, 1.2, 0.6, 0.4, 0.7};
  for (std::size_t e = 0; e < 5; ++e) {
    log[e].epoch = e;
    log[e].median_t_err = t[e];
  }
  CHECK(epochs_to_threshold(log, 0.5) == 4);
  CHECK(epochs_to_threshold(log, 0.6) == 4);
  CHECK(epochs_to_threshold(log, 5.0) == 1);
  CHECK_FALSE(epochs_to_threshold(log, 0.1).has_value());
}

TEST_CASE("ablation csv round trip") {
  TempDir dir("abl_csv");
  std::vector<AblationRow> rows(3);
  rows[0] = {"baseline", 1, false, 0.37, 7.4, std::nullopt, std::nullopt, 6};
  rows[1] = {"aux", 1, false, 1.0 / 3.0, 2.5, 0.75, 0.875, std::nullopt};
  rows[2] = {"aux_attention", 1, true, 0, 0, std::nullopt, std::nullopt, std::nullopt};
  CHECK(ablation_csv_row(rows[2]) == "aux_attention,1,failed,,,,");
  {
    std::ofstream out(dir / "a.csv");
    out << kAblationHeader << '\n';
    for (const auto& r : rows) out << ablation_csv_row(r) << '\n';
  }
  const auto back = read_ablation_csv(dir / "a.csv");
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) check_same_row(back[i], rows[i]);
  {
    std::ofstream out(dir / "bad.csv");
    out << "nope\n";
  }
  CHECK_THROWS(read_ablation_csv(dir / "bad.csv"));
}

TEST_CASE("ablation runs every level per seed and appends rows") {
  TempDir dir("abl");
  const Dataset ds = tiny_dataset();
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 4;
  tc.probe_size = 4;
  tc.checkpoint_every = 0;
  const std::uint64_t seeds[] = {1, 2};
  AblationOptions opts;
  opts.csv_path = dir / "abl.csv";
  opts.threshold = 100.0;
  const auto rows = ablate(ds, small_model(), tc, seeds, opts);
  REQUIRE(rows.size() == 6);
  const char* names[] = {"baseline", "aux", "aux_attention"};
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(rows[i].config == names[i % 3]);
    CHECK(rows[i].seed == seeds[i / 3]);
    CHECK_FALSE(rows[i].failed);
    CHECK(rows[i].acc_at_10.has_value() == (i % 3 != 0));
    CHECK(rows[i].epochs_to_threshold == 1);
  }
  const auto back = read_ablation_csv(dir / "abl.csv");
  REQUIRE(back.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) check_same_row(back[i], rows[i]);

  // levels share initial weights for common layers
  const auto levels = ablation_levels(small_model());
  REQUIRE(levels.size() == 3);
  const Model a(levels[0].second, model_seed(1)), b(levels[2].second, model_seed(1));
  CHECK(a.parameter("backbone.stage0.down.weight").value == b.parameter("backbone.stage0.down.weight").value);

  // a second call appends below the existing rows without a second header
  const std::uint64_t one[] = {3};
  ablate(ds, small_model(), tc, one, opts);
  CHECK(read_ablation_csv(dir / "abl.csv").size() == 9);
}

TEST_CASE("a failing run is marked and the rest proceed") {
  // 40 pixels wide: fine for the backbone, not a multiple of 16 for the U-Net
  TempDir dir("abl_fail");
  const Scene sc = generate_scene(2);
  Dataset ds;
  ds.train = render_samples(sc, default_train_trajectory(), 6, 40, 32);
  ds.test = render_samples(sc, default_test_trajectory(), 3, 40, 32);
  TrainConfig tc;
  tc.epochs = 1;
  tc.checkpoint_every = 0;
  ModelConfig cfg = small_model();
  cfg.input_width = 40;
  const std::uint64_t seeds[] = {1};
  AblationOptions opts;
  opts.csv_path = dir / "abl.csv";
  const auto rows = ablate(ds, cfg, tc, seeds, opts);
  REQUIRE(rows.size() == 3);
  CHECK_FALSE(rows[0].failed);
  CHECK(rows[1].failed);
  CHECK(rows[2].failed);
  const auto back = read_ablation_csv(dir / "abl.csv");
  REQUIRE(back.size() == 3);
  check_same_row(back[0], rows[0]);
  CHECK(back[1].failed);
  CHECK(back[2].failed);
}

}  // TEST_SUITE
