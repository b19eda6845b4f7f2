#include <doctest.h>

#include <fstream>

#include "axloc/colorspace.hpp"
#include "axloc/eval.hpp"
#include "cli.hpp"
#include "support.hpp"

using namespace axloc;
using namespace axloc::testing;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "axloc");
  return cli::run(args);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

// Small dataset and model so each command finishes in seconds.
fs::path write_small_config(const TempDir& dir) {
  const fs::path cfg = dir / "small.cfg";
  std::ofstream(cfg) << "data.n_train=6\ndata.n_test=3\n"
                        "model.backbone_widths=4,6,8,8,8\nmodel.colorizer_base_width=4\nmodel.embed_width=12\n"
                        "train.batch_size=3\ntrain.probe_size=3\ntrain.checkpoint_every=1\n";
  return cfg;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with 1") {
  CHECK(run({}) == cli::kExitUsage);
  CHECK(run({"gen-data"}) == cli::kExitUsage);
  CHECK(run({"frobnicate"}) == cli::kExitUsage);
  CHECK(run({"--seed", "x", "gen-data"}) == cli::kExitUsage);
  CHECK(run({"--set", "nope=1", "gen-data", "--out", "/tmp/unused"}) == cli::kExitUsage);
  CHECK(run({"eval", "--data", "/tmp"}) == cli::kExitUsage);
  CHECK(run({"--help"}) == cli::kExitOk);
}

TEST_CASE("gen-data is reproducible and refuses to overwrite") {
  TempDir dir("cli_gen");
  const fs::path cfg = write_small_config(dir);
  const std::string a = (dir / "a").string(), b = (dir / "b").string();
  REQUIRE(run({"--config", cfg.string(), "--seed", "7", "--out", a, "gen-data"}) == cli::kExitOk);
  REQUIRE(run({"--config", cfg.string(), "--seed", "7", "--out", b, "--threads", "2", "gen-data"}) == cli::kExitOk);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++files;
    CHECK(slurp(e.path()) == slurp(fs::path(b) / fs::relative(e.path(), a)));
  }
  CHECK(files == 6 + 3 + 3);
  CHECK(line_count(fs::path(a) / "poses_train.csv") == 7);

  CHECK(run({"--config", cfg.string(), "--seed", "7", "--out", a, "gen-data"}) == cli::kExitUsage);
  std::ofstream(fs::path(a) / "keep.txt") << "mine";
  CHECK(run({"--config", cfg.string(), "--seed", "8", "--out", a, "--force", "gen-data"}) == cli::kExitOk);
  CHECK(fs::exists(fs::path(a) / "keep.txt"));
  CHECK(slurp(fs::path(a) / "scene.txt") != slurp(fs::path(b) / "scene.txt"));
}

TEST_CASE("default gen-data writes 100 train and 40 test samples") {
  TempDir dir("cli_default");
  REQUIRE(run({"--out", (dir / "d").string(), "gen-data"}) == cli::kExitOk);
  CHECK(line_count(dir / "d" / "poses_train.csv") == 101);
  CHECK(line_count(dir / "d" / "poses_test.csv") == 41);
}

TEST_CASE("train, resume, eval, colorize") {
  TempDir dir("cli_train");
  const std::string cfg = write_small_config(dir).string();
  const std::string data = (dir / "data").string();
  REQUIRE(run({"--config", cfg, "--out", data, "gen-data"}) == cli::kExitOk);

  CHECK(run({"--config", cfg, "--out", (dir / "x").string(), "train", "--data", (dir / "missing").string()}) ==
        cli::kExitRuntime);

  const fs::path full = dir / "full";
  REQUIRE(run({"--config", cfg, "--out", full.string(), "train", "--data", data, "--epochs", "3"}) == cli::kExitOk);
  CHECK(line_count(full / "train_log.csv") == 4);
  CHECK(fs::exists(full / "ckpt_0003.axps"));

  const fs::path part = dir / "part";
  REQUIRE(run({"--config", cfg, "--out", part.string(), "train", "--data", data, "--epochs", "1"}) == cli::kExitOk);
  REQUIRE(run({"--config", cfg, "--out", part.string(), "train", "--data", data, "--epochs", "3", "--resume",
               (part / "ckpt_0001.axps").string()}) == cli::kExitOk);
  CHECK(slurp(part / "train_log.csv") == slurp(full / "train_log.csv"));
  CHECK(slurp(part / "ckpt_0003.axps") == slurp(full / "ckpt_0003.axps"));

  const fs::path ev1 = dir / "ev1", ev2 = dir / "ev2";
  const std::string ck = (full / "ckpt_0003.axps").string();
  REQUIRE(run({"--config", cfg, "--out", ev1.string(), "eval", "--data", data, "--checkpoint", ck,
               "--export-masks"}) == cli::kExitOk);
  REQUIRE(run({"--config", cfg, "--out", ev2.string(), "eval", "--data", data, "--checkpoint", ck}) == cli::kExitOk);
  CHECK(slurp(ev1 / "metrics.json") == slurp(ev2 / "metrics.json"));
  CHECK(slurp(ev1 / "trajectory.csv") == slurp(ev2 / "trajectory.csv"));
  CHECK(line_count(ev1 / "trajectory.csv") == 4);
  CHECK(fs::exists(ev1 / "masks" / "mask_000000.ppm"));
  const MetricsReport report = metrics_from_json(slurp(ev1 / "metrics.json"));
  CHECK(report.t_errors.size() == 3);
  CHECK(report.colorization_acc.count(10.0) == 1);

  // --export-masks needs attention; an attention-free reading of the checkpoint is a shape mismatch
  CHECK(run({"--config", cfg, "--out", ev1.string(), "eval", "--data", data, "--checkpoint", ck, "--no-attention",
             "--export-masks"}) == cli::kExitUsage);
  CHECK(run({"--config", cfg, "--out", ev1.string(), "eval", "--data", data, "--checkpoint", ck, "--no-aux"}) ==
        cli::kExitRuntime);
  CHECK(run({"--config", cfg, "--set", "model.embed_width=16", "--out", ev1.string(), "eval", "--data", data,
             "--checkpoint", ck}) == cli::kExitRuntime);

  // colorize a color image and a grayscale one
  const fs::path img = fs::path(data) / "images" / "test" / "000001.ppm";
  REQUIRE(run({"--config", cfg, "--out", (dir / "col").string(), "colorize", "--checkpoint", ck, "--image",
               img.string()}) == cli::kExitOk);
  const LoadedImage in = read_pnm(img);
  const LoadedImage out = read_pnm(dir / "col" / "000001_colorized.ppm");
  CHECK(out.image.width == in.image.width);
  CHECK(out.image.height == in.image.height);
  {
    std::ofstream g(dir / "gray.pgm", std::ios::binary);
    g << "P5\n32 32\n255\n";
    for (int i = 0; i < 32 * 32; ++i) g.put(static_cast<char>(i % 256));
  }
  CHECK(run({"--config", cfg, "--out", (dir / "col").string(), "colorize", "--checkpoint", ck, "--image",
             (dir / "gray.pgm").string()}) == cli::kExitOk);
  CHECK(fs::exists(dir / "col" / "gray_colorized.ppm"));

  // baseline checkpoint cannot colorize
  const fs::path base = dir / "base";
  REQUIRE(run({"--config", cfg, "--out", base.string(), "train", "--data", data, "--epochs", "1", "--no-aux",
               "--no-attention"}) == cli::kExitOk);
  CHECK(run({"--config", cfg, "--set", "model.use_auxiliary=false", "--out", (dir / "col").string(), "colorize",
             "--checkpoint", (base / "ckpt_0001.axps").string(), "--image", img.string()}) == cli::kExitUsage);
}

TEST_CASE("colorized output keeps the input lightness") {
  Model m(small_model(), 3);
  SplitMix64 rng(4);
  const Scene sc = generate_scene(5);
  LoadedImage in{render(sc, trajectory_pose(default_test_trajectory(), 2, 40), 32, 32), false};
  const RgbImage out = colorize_image(m, in);
  const LabImage a = rgb_to_lab(in.image), b = rgb_to_lab(out);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.L.size(); ++i) worst = std::max(worst, std::abs(a.L[i] - b.L[i]));
  CHECK(worst < 1e-6);

  LoadedImage gray{RgbImage(32, 32), true};
  for (double& v : gray.image.pixels) v = rng.uniform();
  for (std::size_t p = 0; p < 32 * 32; ++p) gray.image.pixels[p * 3 + 1] = gray.image.pixels[p * 3 + 2] = gray.image.pixels[p * 3];
  const LabImage g = rgb_to_lab(colorize_image(m, gray));
  worst = 0.0;
  for (std::size_t p = 0; p < g.L.size(); ++p) worst = std::max(worst, std::abs(g.L[p] - 100.0 * gray.image.pixels[p * 3]));
  CHECK(worst < 1e-6);

  Model base(small_model(false, false), 3);
  CHECK_THROWS_AS(colorize_image(base, in), std::logic_error);
}

TEST_CASE("ablate writes 3 rows per seed") {
  TempDir dir("cli_abl");
  const std::string cfg = write_small_config(dir).string();
  const std::string data = (dir / "data").string();
  REQUIRE(run({"--config", cfg, "--out", data, "gen-data"}) == cli::kExitOk);
  const fs::path out = dir / "abl";
  REQUIRE(run({"--config", cfg, "--out", out.string(), "ablate", "--data", data, "--seeds", "1,2,3", "--epochs",
               "1"}) == cli::kExitOk);
  CHECK(read_ablation_csv(out / "ablation.csv").size() == 9);
  CHECK(run({"--config", cfg, "--out", out.string(), "ablate", "--data", data, "--seeds", "1", "--epochs", "1"}) ==
        cli::kExitUsage);
  CHECK(run({"--config", cfg, "--out", out.string(), "--force", "ablate", "--data", data, "--seeds", "1",
             "--epochs", "1"}) == cli::kExitOk);
  CHECK(read_ablation_csv(out / "ablation.csv").size() == 3);
}

}  // TEST_SUITE
