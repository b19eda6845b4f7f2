#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "axloc/image.hpp"
#include "axloc/model.hpp"
#include "axloc/posemath.hpp"
#include "axloc/trainer.hpp"

namespace axloc {

/// Network outputs for one sample, decoded.
struct Prediction {
  Vec3 translation{};
  Vec3 log_rotation{};
  Quat rotation;                      // canonical quat_exp(log_rotation)
  std::optional<Tensor> chroma;       // [2,H,W], normalized units
  std::optional<Tensor> attention;    // [1,h,w]
};

/// Inference without gradient bookkeeping, in chunks of `batch_size`.
std::vector<Prediction> predict(const Model& model, std::span<const PreparedSample> samples,
                                std::size_t batch_size = 10);

/// Lower-middle order statistic; throws on an empty list.
double lower_median(std::vector<double> values);

struct PoseErrors {
  std::vector<double> t_errors;
  std::vector<double> r_errors_deg;
  double median_t_err = 0.0;
  double median_r_err_deg = 0.0;
};

PoseErrors pose_errors(std::span<const Pose> truth, std::span<const Pose> predicted);
PoseErrors evaluate_pose(const Model& model, std::span<const PreparedSample> samples);

inline const std::vector<double> kDefaultColorThresholds{5.0, 10.0};

/// Fraction of pixels whose predicted (a,b) lies strictly within `threshold`
/// Lab units (Euclidean in the a-b plane) of the truth, per threshold.
std::map<double, double> colorization_accuracy(std::span<const Tensor> predicted_chroma,
                                               std::span<const Tensor> true_chroma,
                                               std::span<const double> thresholds);
std::map<double, double> evaluate_colorization(const Model& model, std::span<const PreparedSample> samples,
                                               std::span<const double> thresholds = kDefaultColorThresholds);

struct MetricsReport {
  double median_t_err = 0.0;
  double median_r_err_deg = 0.0;
  std::vector<double> t_errors;
  std::vector<double> r_errors_deg;
  std::map<double, double> colorization_acc;
  std::optional<std::size_t> epochs_to_threshold;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// JSON text; doubles keep 17 significant digits.
std::string metrics_to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const std::string& text);

/// Min-max normalization to [0,1]; a constant map becomes 0.5 everywhere.
std::vector<double> normalize_mask(std::span<const double> mask);

/// Writes mask_NNNNNN.ppm (grayscale, feature-map resolution) and image_NNNNNN.ppm per sample.
void export_attention_masks(const Model& model, std::span<const PreparedSample> prepared,
                            std::span<const Sample> originals, const std::filesystem::path& out_dir);

/// CSV `index,gt_tx,gt_ty,gt_tz,gt_qw,gt_qx,gt_qy,gt_qz,pred_tx,...,pred_qz`.
void export_trajectory(std::span<const PreparedSample> samples, std::span<const Prediction> predictions,
                       const std::filesystem::path& out_file);

/// Colorizes the lightness of `input` with the auxiliary branch. Color inputs contribute
/// their L plane; grayscale inputs are read as L = 100 * value. Predicted chroma is pulled
/// into the sRGB gamut at fixed L, so the output keeps the input lightness.
RgbImage colorize_image(const Model& model, const LoadedImage& input);

/// First epoch count (epoch index + 1) whose probe median translation error is below `threshold`.
std::optional<std::size_t> epochs_to_threshold(std::span<const EpochLog> log, double threshold);

// --- ablation ----------------------------------------------------------------

struct AblationRow {
  std::string config;
  std::uint64_t seed = 0;
  bool failed = false;
  double median_t = 0.0;
  double median_r_deg = 0.0;
  std::optional<double> acc_at_5;
  std::optional<double> acc_at_10;
  std::optional<std::size_t> epochs_to_threshold;
};

inline constexpr const char* kAblationHeader =
    "config,seed,median_t,median_r_deg,acc_at_5,acc_at_10,epochs_to_threshold";

struct AblationOptions {
  /// Rows are appended (and flushed) as each run finishes.
  std::optional<std::filesystem::path> csv_path;
  /// Translation threshold for the epochs-to-threshold probe, in scene units.
  double threshold = 0.5;
};

/// The three ablative levels: baseline, +auxiliary, +auxiliary+attention.
std::vector<std::pair<std::string, ModelConfig>> ablation_levels(const ModelConfig& base);

/// Trains and evaluates every level for every seed. Level models share the
/// seed derivation so common layers start from identical weights and see the
/// same batch order.
std::vector<AblationRow> ablate(const Dataset& dataset, const ModelConfig& base_model, const TrainConfig& base_train,
                                std::span<const std::uint64_t> seeds, const AblationOptions& options = {});

std::string ablation_csv_row(const AblationRow& row);
std::vector<AblationRow> read_ablation_csv(const std::filesystem::path& path);

/// Model initialization seed used for a run seeded with `seed`.
std::uint64_t model_seed(std::uint64_t seed);

}  // namespace axloc
