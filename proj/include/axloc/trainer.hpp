#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "axloc/checkpoint.hpp"
#include "axloc/model.hpp"
#include "axloc/posemath.hpp"
#include "axloc/synthscene.hpp"
#include "axloc/tensor.hpp"

namespace axloc {

struct TrainConfig {
  std::size_t batch_size = 10;
  double lr_backbone = 3e-4;  // backbone of the localization net and the whole colorizer
  double lr_other = 1e-3;
  double decay_factor = 0.9;
  std::size_t decay_every = 10;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  double adam_eps = 1e-10;
  std::size_t epochs = 150;
  std::uint64_t seed = 1;
  std::size_t checkpoint_every = 10;
  /// Training samples (lowest indices) used for the per-epoch median errors.
  std::size_t probe_size = 20;

  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// --- input normalization -----------------------------------------------------

struct NormalizationStats {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> std{1.0, 1.0, 1.0};

  friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

inline constexpr double kStdFloor = 1e-6;

/// Per-channel mean and population standard deviation over every training pixel.
NormalizationStats compute_normalization(std::span<const Sample> samples);

/// Network-ready tensors for one sample.
struct PreparedSample {
  std::size_t index = 0;
  Tensor rgb;         // [3,H,W], mean/std normalized
  Tensor lightness;   // [1,H,W], L/100
  Tensor chroma;      // [2,H,W], (a,b)/110
  Pose pose;
  Vec3 log_rotation{};  // quat_log of the canonical ground-truth rotation
};

std::vector<PreparedSample> prepare_samples(std::span<const Sample> samples, const NormalizationStats& stats);

struct Batch {
  Tensor rgb;           // [B,3,H,W]
  Tensor lightness;     // [B,1,H,W]
  Tensor chroma;        // [B,2,H,W]
  Tensor translation;   // [B,3]
  Tensor log_rotation;  // [B,3]
};

Batch make_batch(std::span<const PreparedSample> samples, std::span<const std::size_t> indices);

// --- optimization ------------------------------------------------------------

struct LearningRates {
  double backbone = 0.0;
  double other = 0.0;
};

/// base * decay_factor^floor(epoch / decay_every) for each group.
LearningRates lr_at_epoch(const TrainConfig& config, std::size_t epoch);

struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;
};

AdamState make_adam_state(const Model& model);

/// One bias-corrected Adam update. grads[i] pairs with params[i]; each
/// parameter uses the rate of its group.
void adam_step(std::vector<Parameter>& params, std::span<const Tensor> grads, AdamState& state,
               const TrainConfig& config, const LearningRates& rates);

// --- training loop -----------------------------------------------------------

struct EpochLog {
  std::size_t epoch = 0;
  double loss_joint = 0.0;
  double loss_pose = 0.0;
  double loss_color = 0.0;
  double lr_backbone = 0.0;
  double lr_other = 0.0;
  double median_t_err = 0.0;
  double median_r_err_deg = 0.0;

  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t epoch, std::size_t batch);
  [[nodiscard]] std::size_t epoch() const noexcept { return epoch_; }
  [[nodiscard]] std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

/// Everything needed to continue training bit-identically.
struct TrainingState {
  AdamState adam;
  NormalizationStats stats;
  std::size_t epochs_done = 0;
};

struct TrainOptions {
  /// When set, checkpoints ckpt_NNNN.axps are written every `checkpoint_every` epochs and at the end.
  std::optional<std::filesystem::path> checkpoint_dir;
  /// Called after each epoch's log row is computed.
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochLog> log;
  TrainingState state;
};

/// Joint training on `train_split`. Pass `resume` to continue from a restored state;
/// the epoch counter then starts at resume->epochs_done.
TrainResult train(Model& model, std::span<const Sample> train_split, const TrainConfig& config,
                  const TrainOptions& options = {}, std::optional<TrainingState> resume = std::nullopt);

/// Parameters plus optimizer state, normalization and epoch counter.
std::vector<CheckpointRecord> training_checkpoint(const Model& model, const TrainingState& state);
std::filesystem::path checkpoint_name(std::size_t epochs_done);

/// Loads parameters into `model` and returns the stored training state.
TrainingState restore_training_checkpoint(Model& model, const std::vector<CheckpointRecord>& records);

/// Normalization statistics stored in a checkpoint.
NormalizationStats checkpoint_stats(const std::vector<CheckpointRecord>& records);

inline constexpr const char* kTrainingLogHeader =
    "epoch,loss_joint,loss_pose,loss_color,lr_backbone,lr_other,median_t_err,median_r_err_deg";

void write_training_log(const std::filesystem::path& path, std::span<const EpochLog> rows);
std::vector<EpochLog> read_training_log(const std::filesystem::path& path);

}  // namespace axloc
