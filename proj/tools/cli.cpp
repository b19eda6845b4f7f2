#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <stdexcept>

#include "axloc/checkpoint.hpp"
#include "axloc/config.hpp"
#include "axloc/eval.hpp"
#include "axloc/image.hpp"
#include "axloc/synthscene.hpp"
#include "axloc/trainer.hpp"

namespace axloc::cli {

namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
  std::optional<std::size_t> threads;
  std::vector<std::string> sets;

  std::string data;
  std::string checkpoint;
  std::string resume;
  std::string image;
  std::string seeds;
  bool no_aux = false;
  bool no_attention = false;
  bool export_masks = false;
  std::optional<std::size_t> epochs;
};

RunConfig resolve(const Flags& f) {
  RunConfig rc;
  if (!f.config.empty()) apply_config_file(rc, f.config);
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(rc, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (f.seed) rc.seed = *f.seed;
  if (f.threads) rc.threads = *f.threads;
  if (!f.out.empty()) rc.out_dir = f.out;
  if (!f.data.empty()) rc.data_dir = f.data;
  if (f.no_aux) rc.model.use_auxiliary = false;
  if (f.no_attention) rc.model.use_attention = false;
  if (f.epochs) rc.train.epochs = *f.epochs;
  if (!f.seeds.empty()) rc.ablate_seeds = parse_seed_list(f.seeds);
  if (rc.threads == 0) throw ConfigError("threads must be at least 1");
  if (rc.ablate_seeds.empty()) throw ConfigError("ablate.seeds must not be empty");
  try {
    rc.model.validate();
    rc.train_config().validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return rc;
}

fs::path require_out(const RunConfig& rc) {
  if (!rc.out_dir) throw UsageError("an output directory is required (--out or out.dir)");
  return *rc.out_dir;
}

fs::path require_data(const RunConfig& rc) {
  if (!rc.data_dir) throw UsageError("a dataset directory is required (--data or data.dir)");
  return *rc.data_dir;
}

Dataset load_checked_dataset(const RunConfig& rc) {
  const fs::path dir = require_data(rc);
  if (!fs::exists(dir / "scene.txt")) throw std::runtime_error("no dataset at " + dir.string() + " (scene.txt missing)");
  Dataset ds = load_dataset(dir);
  if (ds.manifest.width != rc.model.input_width || ds.manifest.height != rc.model.input_height) {
    throw std::runtime_error("dataset " + dir.string() + " has " + std::to_string(ds.manifest.width) + "x" +
                             std::to_string(ds.manifest.height) + " images but the model expects " +
                             std::to_string(rc.model.input_width) + "x" + std::to_string(rc.model.input_height));
  }
  return ds;
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

int cmd_gen_data(const RunConfig& rc, bool force) {
  const fs::path out = require_out(rc);
  if (fs::exists(out) && !fs::is_empty(out)) {
    if (!force) throw UsageError(out.string() + " is not empty; pass --force to overwrite");
    for (const char* entry : {"scene.txt", "images", "poses_train.csv", "poses_test.csv"}) fs::remove_all(out / entry);
  }
  const Scene scene = generate_scene(rc.seed, rc.data.objects, rc.data.extent);
  const DatasetManifest m = generate_dataset(scene, rc.data.train_path, rc.data.test_path, rc.data.n_train,
                                             rc.data.n_test, rc.data.width, rc.data.height, out, rc.threads);
  std::cout << "dataset " << out.string() << "\n"
            << "  scene seed " << m.seed << ", " << m.object_count << " objects, extent " << m.extent << "\n"
            << "  train " << m.n_train << " samples on radius " << m.train_path.radius << " at height "
            << m.train_path.height << "\n"
            << "  test " << m.n_test << " samples on radius " << m.test_path.radius << " at height "
            << m.test_path.height << "\n"
            << "  images " << m.width << "x" << m.height << "\n";
  return kExitOk;
}

int cmd_train(const RunConfig& rc, const Flags& f) {
  const Dataset ds = load_checked_dataset(rc);
  const fs::path out = require_out(rc);
  fs::create_directories(out);
  Model model(rc.model, model_seed(rc.seed));
  const TrainConfig tc = rc.train_config();
  const fs::path log_path = out / "train_log.csv";

  std::vector<EpochLog> rows;
  std::optional<TrainingState> resume;
  if (!f.resume.empty()) {
    resume = restore_training_checkpoint(model, read_checkpoint(f.resume));
    if (fs::exists(log_path)) {
      for (const auto& row : read_training_log(log_path)) {
        if (row.epoch < resume->epochs_done) rows.push_back(row);
      }
    }
    if (rows.size() != resume->epochs_done) {
      std::cerr << "warning: " << log_path.string() << " holds " << rows.size() << " rows before epoch "
                << resume->epochs_done << "\n";
    }
    std::cout << "resuming from " << f.resume << " after " << resume->epochs_done << " epochs\n";
  }

  TrainOptions options;
  options.checkpoint_dir = out;
  options.on_epoch = [&](const EpochLog& e) {
    rows.push_back(e);
    write_training_log(log_path, rows);
    std::cout << "epoch " << e.epoch << "  loss " << fixed(e.loss_joint) << "  pose " << fixed(e.loss_pose)
              << "  t " << fixed(e.median_t_err, 3) << "  r " << fixed(e.median_r_err_deg, 2) << " deg\n"
              << std::flush;
  };
  const TrainResult result = train(model, ds.train, tc, options, resume);
  std::cout << "trained " << result.state.epochs_done << " epochs; checkpoints in " << out.string() << "\n";
  return kExitOk;
}

int cmd_eval(const RunConfig& rc, const Flags& f) {
  if (f.export_masks && !rc.model.use_attention) {
    throw UsageError("--export-masks needs an attention-enabled model");
  }
  const Dataset ds = load_checked_dataset(rc);
  const fs::path out = require_out(rc);
  Model model(rc.model, model_seed(rc.seed));
  const TrainingState state = restore_training_checkpoint(model, read_checkpoint(f.checkpoint));
  const auto test = prepare_samples(ds.test, state.stats);
  const auto preds = predict(model, test);

  std::vector<Pose> truth, guess;
  for (std::size_t i = 0; i < test.size(); ++i) {
    truth.push_back(test[i].pose);
    guess.emplace_back(preds[i].translation, preds[i].rotation);
  }
  const PoseErrors errors = pose_errors(truth, guess);
  MetricsReport report;
  report.median_t_err = errors.median_t_err;
  report.median_r_err_deg = errors.median_r_err_deg;
  report.t_errors = errors.t_errors;
  report.r_errors_deg = errors.r_errors_deg;
  if (rc.model.use_auxiliary) {
    std::vector<Tensor> predicted, target;
    for (std::size_t i = 0; i < test.size(); ++i) {
      predicted.push_back(*preds[i].chroma);
      target.push_back(test[i].chroma);
    }
    report.colorization_acc = colorization_accuracy(predicted, target, kDefaultColorThresholds);
  }
  const fs::path log_path = fs::path(f.checkpoint).parent_path() / "train_log.csv";
  if (fs::exists(log_path)) {
    report.epochs_to_threshold =
        epochs_to_threshold(read_training_log(log_path), rc.ablate_threshold_fraction * ds.manifest.extent);
  }

  fs::create_directories(out);
  {
    std::ofstream json(out / "metrics.json");
    json << metrics_to_json(report);
    if (!json) throw std::runtime_error("cannot write " + (out / "metrics.json").string());
  }
  export_trajectory(test, preds, out / "trajectory.csv");
  if (f.export_masks) export_attention_masks(model, test, ds.test, out / "masks");

  std::cout << "median translation error " << fixed(report.median_t_err) << "\n"
            << "median rotation error " << fixed(report.median_r_err_deg) << " deg\n";
  for (const auto& [tau, acc] : report.colorization_acc) {
    std::cout << "colorization accuracy @" << tau << " " << fixed(acc) << "\n";
  }
  return kExitOk;
}

int cmd_colorize(const RunConfig& rc, const Flags& f) {
  if (!rc.model.use_auxiliary) throw UsageError("colorize needs a model with the auxiliary branch");
  const fs::path out = require_out(rc);
  Model model(rc.model, model_seed(rc.seed));
  load_parameters(model, read_checkpoint(f.checkpoint), {"adam.", "train.", "norm."});
  const LoadedImage input = read_pnm(f.image);
  const RgbImage result = colorize_image(model, input);
  fs::create_directories(out);
  const fs::path target = out / (fs::path(f.image).stem().string() + "_colorized.ppm");
  write_ppm(target, result);
  std::cout << "wrote " << target.string() << "\n";
  return kExitOk;
}

int cmd_ablate(const RunConfig& rc, bool force) {
  const Dataset ds = load_checked_dataset(rc);
  const fs::path out = require_out(rc);
  fs::create_directories(out);
  const fs::path csv = out / "ablation.csv";
  if (fs::exists(csv)) {
    if (!force) throw UsageError(csv.string() + " exists; pass --force to replace it");
    fs::remove(csv);
  }
  AblationOptions options;
  options.csv_path = csv;
  options.threshold = rc.ablate_threshold_fraction * ds.manifest.extent;
  const auto rows = ablate(ds, rc.model, rc.train_config(), rc.ablate_seeds, options);

  std::cout << "config          runs  failed  median_t  median_r_deg\n";
  for (const auto& [name, level] : ablation_levels(rc.model)) {
    std::vector<double> t, r;
    std::size_t failed = 0, runs = 0;
    for (const auto& row : rows) {
      if (row.config != name) continue;
      ++runs;
      if (row.failed) {
        ++failed;
        continue;
      }
      t.push_back(row.median_t);
      r.push_back(row.median_r_deg);
    }
    char line[160];
    if (t.empty()) {
      std::snprintf(line, sizeof line, "%-14s  %4zu  %6zu  %8s  %12s\n", name.c_str(), runs, failed, "-", "-");
    } else {
      std::snprintf(line, sizeof line, "%-14s  %4zu  %6zu  %8.4f  %12.4f\n", name.c_str(), runs, failed,
                    lower_median(t), lower_median(r));
    }
    std::cout << line;
  }
  std::cout << "rows in " << csv.string() << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Pose regression with a colorization auxiliary task and feature attention."};
  app.name(args.empty() ? "axloc" : fs::path(args[0]).filename().string());
  app.require_subcommand(1, 1);
  app.fallthrough();

  Flags f;
  app.add_option("--config", f.config, "key=value configuration file");
  app.add_option("--seed", f.seed, "run seed (overrides the seed key; default 1)");
  app.add_option("--out", f.out, "output directory");
  app.add_flag("--force", f.force, "overwrite existing outputs");
  app.add_option("--threads", f.threads, "worker thread cap (default 1)");
  app.add_option("--set", f.sets, "override one configuration key, key=value (repeatable)");

  auto* gen = app.add_subcommand("gen-data", "render a synthetic dataset into --out");

  auto* tr = app.add_subcommand("train", "train on a dataset, writing train_log.csv and checkpoints into --out");
  tr->add_option("--data", f.data, "dataset directory");
  tr->add_option("--resume", f.resume, "checkpoint to continue from");
  tr->add_flag("--no-aux", f.no_aux, "disable the colorization branch");
  tr->add_flag("--no-attention", f.no_attention, "disable the attention module");
  tr->add_option("--epochs", f.epochs, "total epochs (default 150)");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  ev->add_option("--data", f.data, "dataset directory");
  ev->add_option("--checkpoint", f.checkpoint, "checkpoint file")->required();
  ev->add_flag("--no-aux", f.no_aux, "model has no colorization branch");
  ev->add_flag("--no-attention", f.no_attention, "model has no attention module");
  ev->add_flag("--export-masks", f.export_masks, "write attention masks into --out/masks");

  auto* co = app.add_subcommand("colorize", "colorize the lightness of an image");
  co->add_option("--checkpoint", f.checkpoint, "checkpoint file")->required();
  co->add_option("--image", f.image, "PPM (P6) or PGM (P5) input")->required();
  co->add_flag("--no-attention", f.no_attention, "model has no attention module");

  auto* ab = app.add_subcommand("ablate", "train and evaluate baseline, +aux and +aux+attention per seed");
  ab->add_option("--data", f.data, "dataset directory");
  ab->add_option("--seeds", f.seeds, "comma-separated seeds (default 1,2,3,4,5)");
  ab->add_option("--epochs", f.epochs, "epochs per run (default 150)");
  app.footer(config_reference());  // after the subcommands, so only the top-level help lists keys

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const RunConfig rc = resolve(f);
    if (gen->parsed()) return cmd_gen_data(rc, f.force);
    if (tr->parsed()) return cmd_train(rc, f);
    if (ev->parsed()) return cmd_eval(rc, f);
    if (co->parsed()) return cmd_colorize(rc, f);
    if (ab->parsed()) return cmd_ablate(rc, f.force);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace axloc::cli
