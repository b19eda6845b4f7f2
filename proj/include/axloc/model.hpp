#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "axloc/autograd.hpp"
#include "axloc/tensor.hpp"

namespace axloc {

struct ModelConfig {
  std::size_t input_height = 32;
  std::size_t input_width = 32;
  /// One entry per backbone stage. The first four stages halve the resolution,
  /// the rest keep it, so the backbone output is 16x downsampled.
  std::vector<std::size_t> backbone_widths{8, 16, 32, 32, 32};
  /// Number of downsampling steps in the colorization U-Net.
  std::size_t colorizer_depth = 4;
  /// Width of the full-resolution colorizer level; doubles per level, capped at the bottleneck width.
  std::size_t colorizer_base_width = 16;
  std::size_t embed_width = 64;
  bool use_auxiliary = true;
  bool use_attention = true;
  double beta_intra = 3.0;
  double beta_inter = 0.2;

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;

  [[nodiscard]] std::size_t feature_channels() const { return backbone_widths.back(); }
  [[nodiscard]] std::size_t feature_height() const;
  [[nodiscard]] std::size_t feature_width() const;
  [[nodiscard]] std::vector<std::size_t> colorizer_widths() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline constexpr std::size_t kStridedStages = 4;

enum class ParamGroup {
  BackboneAndColorizer,  // backbone layers of the localization net and every colorizer layer
  Other,
};

struct Parameter {
  std::string name;
  Tensor value;
  ParamGroup group = ParamGroup::Other;
};

class Model {
 public:
  /// Gaussian initialization; each parameter draws from its own stream seeded
  /// by (seed, name), so layers shared between ablation variants start equal.
  Model(ModelConfig config, std::uint64_t seed);

  [[nodiscard]] const ModelConfig& config() const noexcept { return config_; }
  [[nodiscard]] const std::vector<Parameter>& parameters() const noexcept { return params_; }
  [[nodiscard]] std::vector<Parameter>& parameters() noexcept { return params_; }

  [[nodiscard]] bool has_parameter(std::string_view name) const;
  [[nodiscard]] std::size_t index_of(std::string_view name) const;
  [[nodiscard]] const Parameter& parameter(std::string_view name) const { return params_[index_of(name)]; }
  [[nodiscard]] Parameter& parameter(std::string_view name) { return params_[index_of(name)]; }

  /// Registers a parameter; names must be unique.
  void add_parameter(std::string name, Tensor value, ParamGroup group);

  [[nodiscard]] std::size_t parameter_count() const;

 private:
  void add_conv(const std::string& prefix, std::size_t in, std::size_t out, std::size_t k, ParamGroup group,
                double gain, std::uint64_t seed);
  void add_linear(const std::string& prefix, std::size_t in, std::size_t out, ParamGroup group, double gain,
                  std::uint64_t seed);

  ModelConfig config_;
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// A Model's parameters recorded on one tape for a single forward/backward pass.
class BoundModel {
 public:
  /// With `trainable` false the parameters are constants and no gradients are kept.
  BoundModel(const Model& model, Tape& tape, bool trainable = true);

  [[nodiscard]] Variable param(std::string_view name) const;
  [[nodiscard]] const std::vector<Variable>& variables() const noexcept { return vars_; }
  [[nodiscard]] const Model& model() const noexcept { return *model_; }
  [[nodiscard]] Tape& tape() const noexcept { return *tape_; }

 private:
  const Model* model_;
  Tape* tape_;
  std::vector<Variable> vars_;
};

struct ColorizerOutput {
  Variable pred_ab;     // [B,2,H,W]
  Variable bottleneck;  // [B,C,H/16,W/16]
};

struct AttentionOutput {
  Variable output;    // 1x1 conv + ReLU over [fused, attended]; unset from attention_weights
  Variable mask;      // [B,1,h,w]
  Variable excited;   // fused * per-channel spatial max
  Variable attended;  // fused * mask
};

struct RegressorOutput {
  Variable translation;   // [B,3]
  Variable log_rotation;  // [B,3]
};

struct ForwardOutput {
  Variable translation;
  Variable log_rotation;
  std::optional<Variable> pred_ab;
  std::optional<Variable> attention_mask;
  Variable fused;
  std::optional<Variable> attended;
};

/// Localization backbone: [B,3,H,W] -> [B,C,ceil(H/16),ceil(W/16)].
Variable backbone_forward(const BoundModel& net, Variable image);

/// U-Net colorizer on the lightness plane [B,1,H,W]. Requires the auxiliary branch.
ColorizerOutput colorizer_forward(const BoundModel& net, Variable lightness);

/// Channel concat, 1x1 convolution, ReLU.
Variable fuse(const BoundModel& net, Variable localization, Variable colorization);

/// Same 1x1 conv + ReLU applied to the localization features alone (baseline without colorization).
Variable fuse(const BoundModel& net, Variable localization);

/// Parameter-free part of attention: excitation, channel-mean mask, attended map.
AttentionOutput attention_weights(Variable fused);

AttentionOutput attention(const BoundModel& net, Variable fused);

RegressorOutput regressor_forward(const BoundModel& net, Variable features);

/// `lightness` is required when the auxiliary branch is enabled and ignored otherwise.
ForwardOutput model_forward(const BoundModel& net, Variable rgb, std::optional<Variable> lightness);

/// Sum of absolute (a,b) differences over positions and channels, averaged over the batch.
Variable loss_colorization(Variable pred_ab, Variable gt_ab);

/// Mean over the batch of |x_hat - x|_2 + beta_intra * |w_hat - w|_2.
Variable loss_pose(Variable x_hat, Variable w_hat, Variable x_gt, Variable w_gt, double beta_intra);

/// beta_inter * colorization + pose. Without a colorization term the pose loss is returned unchanged.
Variable loss_joint(std::optional<Variable> colorization, Variable pose, double beta_inter);

}  // namespace axloc
