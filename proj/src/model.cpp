#include "axloc/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "axloc/rng.hpp"

namespace axloc {

namespace {

std::size_t halve_ceil(std::size_t n, std::size_t times) {
  for (std::size_t i = 0; i < times; ++i) n = (n + 1) / 2;
  return n;
}

std::size_t stage_stride(std::size_t stage) { return stage < kStridedStages ? 2 : 1; }

}  // namespace

void ModelConfig::validate() const {
  if (input_height < 16 || input_width < 16) {
    throw std::invalid_argument("model input " + std::to_string(input_height) + "x" + std::to_string(input_width) +
                                " is smaller than 16x16");
  }
  if (backbone_widths.size() < kStridedStages) {
    throw std::invalid_argument("backbone needs at least " + std::to_string(kStridedStages) + " stages");
  }
  if (std::any_of(backbone_widths.begin(), backbone_widths.end(), [](std::size_t w) { return w == 0; })) {
    throw std::invalid_argument("backbone widths must be positive");
  }
  if (embed_width == 0) throw std::invalid_argument("embed width must be positive");
  if (!(beta_intra > 0.0)) throw std::invalid_argument("beta_intra must be > 0");
  if (!(beta_inter >= 0.0)) throw std::invalid_argument("beta_inter must be >= 0");
  if (use_auxiliary) {
    if (colorizer_depth != kStridedStages) {
      throw std::invalid_argument("colorizer depth must be " + std::to_string(kStridedStages) +
                                  " so its bottleneck matches the 16x backbone output");
    }
    if (colorizer_base_width == 0) throw std::invalid_argument("colorizer base width must be positive");
    if (input_height % 16 != 0 || input_width % 16 != 0) {
      throw std::invalid_argument("colorizer input extents must be multiples of 16");
    }
  }
}

std::size_t ModelConfig::feature_height() const { return halve_ceil(input_height, kStridedStages); }
std::size_t ModelConfig::feature_width() const { return halve_ceil(input_width, kStridedStages); }

std::vector<std::size_t> ModelConfig::colorizer_widths() const {
  std::vector<std::size_t> widths;
  const std::size_t cap = feature_channels();
  for (std::size_t k = 0; k < colorizer_depth; ++k) {
    widths.push_back(std::min(colorizer_base_width << k, cap));
  }
  widths.push_back(cap);
  return widths;
}

// --- Model -----------------------------------------------------------------

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  const auto& bw = config_.backbone_widths;
  std::size_t in = 3;
  for (std::size_t s = 0; s < bw.size(); ++s) {
    const std::string prefix = "backbone.stage" + std::to_string(s);
    add_conv(prefix + ".down", in, bw[s], 3, ParamGroup::BackboneAndColorizer, 2.0, seed);
    add_conv(prefix + ".res", bw[s], bw[s], 3, ParamGroup::BackboneAndColorizer, 1.0, seed);
    in = bw[s];
  }
  const std::size_t feat = config_.feature_channels();
  if (config_.use_auxiliary) {
    const auto cw = config_.colorizer_widths();
    add_conv("colorizer.enc0", 1, cw[0], 3, ParamGroup::BackboneAndColorizer, 2.0, seed);
    for (std::size_t k = 1; k < cw.size(); ++k) {
      add_conv("colorizer.enc" + std::to_string(k), cw[k - 1], cw[k], 3, ParamGroup::BackboneAndColorizer, 2.0, seed);
    }
    for (std::size_t k = cw.size() - 1; k-- > 0;) {
      add_conv("colorizer.dec" + std::to_string(k), cw[k + 1] + cw[k], cw[k], 3, ParamGroup::BackboneAndColorizer,
               2.0, seed);
    }
    add_conv("colorizer.head", cw[0], 2, 1, ParamGroup::BackboneAndColorizer, 0.1, seed);
    add_conv("fuse", 2 * feat, feat, 1, ParamGroup::Other, 2.0, seed);
  } else {
    add_conv("fuse", feat, feat, 1, ParamGroup::Other, 2.0, seed);
  }
  if (config_.use_attention) add_conv("attention.fuse", 2 * feat, feat, 1, ParamGroup::Other, 2.0, seed);
  const std::size_t flat = feat * config_.feature_height() * config_.feature_width();
  add_linear("regressor.hidden", flat, config_.embed_width, ParamGroup::Other, 2.0, seed);
  add_linear("regressor.translation", config_.embed_width, 3, ParamGroup::Other, 1.0, seed);
  add_linear("regressor.rotation", config_.embed_width, 3, ParamGroup::Other, 0.1, seed);
}

void Model::add_parameter(std::string name, Tensor value, ParamGroup group) {
  if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name " + name);
  index_.emplace(name, params_.size());
  params_.push_back(Parameter{std::move(name), std::move(value), group});
}

bool Model::has_parameter(std::string_view name) const { return index_.contains(std::string(name)); }

std::size_t Model::index_of(std::string_view name) const {
  const auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("model has no parameter named " + std::string(name));
  return it->second;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void Model::add_conv(const std::string& prefix, std::size_t in, std::size_t out, std::size_t k, ParamGroup group,
                     double gain, std::uint64_t seed) {
  Tensor w(Shape{out, in, k, k});
  const double stddev = std::sqrt(gain / static_cast<double>(in * k * k));
  SplitMix64 rng(derive_seed(seed, prefix + ".weight"));
  for (double& v : w.data()) v = stddev * rng.normal();
  add_parameter(prefix + ".weight", std::move(w), group);
  add_parameter(prefix + ".bias", Tensor(Shape{out}, 0.0), group);
}

void Model::add_linear(const std::string& prefix, std::size_t in, std::size_t out, ParamGroup group, double gain,
                       std::uint64_t seed) {
  Tensor w(Shape{out, in});
  const double stddev = std::sqrt(gain / static_cast<double>(in));
  SplitMix64 rng(derive_seed(seed, prefix + ".weight"));
  for (double& v : w.data()) v = stddev * rng.normal();
  add_parameter(prefix + ".weight", std::move(w), group);
  add_parameter(prefix + ".bias", Tensor(Shape{out}, 0.0), group);
}

// --- BoundModel ------------------------------------------------------------

BoundModel::BoundModel(const Model& model, Tape& tape, bool trainable) : model_(&model), tape_(&tape) {
  vars_.reserve(model.parameters().size());
  for (const auto& p : model.parameters()) vars_.push_back(tape.leaf(p.value, trainable));
}

Variable BoundModel::param(std::string_view name) const { return vars_[model_->index_of(name)]; }

// --- forward pieces --------------------------------------------------------

namespace {

Variable conv(const BoundModel& net, const std::string& prefix, Variable x, std::size_t stride) {
  const Variable w = net.param(prefix + ".weight");
  const std::size_t k = w.dim(2);
  return ops::conv2d(x, w, net.param(prefix + ".bias"), stride, k / 2);
}

Variable conv_relu(const BoundModel& net, const std::string& prefix, Variable x, std::size_t stride) {
  return ops::relu(conv(net, prefix, x, stride));
}

void require_spatial_match(Variable a, Variable b, const char* op) {
  if (a.value().rank() != 4 || b.value().rank() != 4 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) ||
      a.dim(3) != b.dim(3)) {
    throw ShapeError(std::string(op) + ": batch/spatial extents differ: " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

}  // namespace

Variable backbone_forward(const BoundModel& net, Variable image) {
  const auto& cfg = net.model().config();
  if (image.value().rank() != 4 || image.dim(1) != 3) {
    throw ShapeError("backbone_forward: expected [B,3,H,W], got " + shape_string(image.shape()));
  }
  if (image.dim(2) < 16 || image.dim(3) < 16) {
    throw ShapeError("backbone_forward: input " + shape_string(image.shape()) + " is smaller than 16x16");
  }
  Variable x = image;
  for (std::size_t s = 0; s < cfg.backbone_widths.size(); ++s) {
    const std::string prefix = "backbone.stage" + std::to_string(s);
    const Variable down = conv_relu(net, prefix + ".down", x, stage_stride(s));
    x = ops::relu(ops::add(down, conv(net, prefix + ".res", down, 1)));
  }
  return x;
}

ColorizerOutput colorizer_forward(const BoundModel& net, Variable lightness) {
  const auto& cfg = net.model().config();
  if (!cfg.use_auxiliary) throw std::logic_error("colorizer_forward: auxiliary branch is disabled");
  if (lightness.value().rank() != 4 || lightness.dim(1) != 1) {
    throw ShapeError("colorizer_forward: expected [B,1,H,W], got " + shape_string(lightness.shape()));
  }
  const std::size_t levels = cfg.colorizer_depth + 1;
  const std::size_t factor = std::size_t{1} << cfg.colorizer_depth;
  if (lightness.dim(2) % factor != 0 || lightness.dim(3) % factor != 0) {
    throw ShapeError("colorizer_forward: spatial extents of " + shape_string(lightness.shape()) +
                     " must be multiples of " + std::to_string(factor));
  }
  std::vector<Variable> skips;
  skips.push_back(conv_relu(net, "colorizer.enc0", lightness, 1));
  for (std::size_t k = 1; k < levels; ++k) {
    skips.push_back(conv_relu(net, "colorizer.enc" + std::to_string(k), skips.back(), 2));
  }
  Variable d = skips.back();
  for (std::size_t k = levels - 1; k-- > 0;) {
    const Variable up = ops::upsample_nearest(d, 2);
    d = conv_relu(net, "colorizer.dec" + std::to_string(k), ops::concat_channels(up, skips[k]), 1);
  }
  return {conv(net, "colorizer.head", d, 1), skips.back()};
}

Variable fuse(const BoundModel& net, Variable localization, Variable colorization) {
  require_spatial_match(localization, colorization, "fuse");
  return conv_relu(net, "fuse", ops::concat_channels(localization, colorization), 1);
}

Variable fuse(const BoundModel& net, Variable localization) { return conv_relu(net, "fuse", localization, 1); }

AttentionOutput attention_weights(Variable fused) {
  if (fused.value().rank() != 4) {
    throw ShapeError("attention: expected [B,C,h,w], got " + shape_string(fused.shape()));
  }
  AttentionOutput out;
  const Variable channel_weights = ops::global_max_pool_spatial(fused);
  out.excited = ops::broadcast_mul(fused, channel_weights);
  out.mask = ops::global_avg_pool_channels(out.excited);
  out.attended = ops::broadcast_mul(fused, out.mask);
  return out;
}

AttentionOutput attention(const BoundModel& net, Variable fused) {
  AttentionOutput out = attention_weights(fused);
  out.output = conv_relu(net, "attention.fuse", ops::concat_channels(fused, out.attended), 1);
  return out;
}

RegressorOutput regressor_forward(const BoundModel& net, Variable features) {
  const Shape& s = features.shape();
  const std::size_t batch = s.at(0);
  const Variable flat = ops::reshape(features, Shape{batch, shape_numel(s) / batch});
  const Variable hidden = ops::relu(
      ops::linear(flat, net.param("regressor.hidden.weight"), net.param("regressor.hidden.bias")));
  return {ops::linear(hidden, net.param("regressor.translation.weight"), net.param("regressor.translation.bias")),
          ops::linear(hidden, net.param("regressor.rotation.weight"), net.param("regressor.rotation.bias"))};
}

ForwardOutput model_forward(const BoundModel& net, Variable rgb, std::optional<Variable> lightness) {
  const auto& cfg = net.model().config();
  ForwardOutput out;
  const Variable features = backbone_forward(net, rgb);
  if (cfg.use_auxiliary) {
    if (!lightness) throw std::invalid_argument("model_forward: auxiliary branch needs the lightness plane");
    if (lightness->dim(0) != rgb.dim(0) || lightness->dim(2) != rgb.dim(2) || lightness->dim(3) != rgb.dim(3)) {
      throw ShapeError("model_forward: lightness " + shape_string(lightness->shape()) + " does not match image " +
                       shape_string(rgb.shape()));
    }
    const ColorizerOutput c = colorizer_forward(net, *lightness);
    out.pred_ab = c.pred_ab;
    out.fused = fuse(net, features, c.bottleneck);
  } else {
    out.fused = fuse(net, features);
  }
  Variable head_input = out.fused;
  if (cfg.use_attention) {
    const AttentionOutput a = attention(net, out.fused);
    out.attention_mask = a.mask;
    out.attended = a.attended;
    head_input = a.output;
  }
  const RegressorOutput r = regressor_forward(net, head_input);
  out.translation = r.translation;
  out.log_rotation = r.log_rotation;
  return out;
}

// --- losses ----------------------------------------------------------------

Variable loss_colorization(Variable pred_ab, Variable gt_ab) {
  if (pred_ab.shape() != gt_ab.shape()) {
    throw ShapeError("loss_colorization: shape mismatch " + shape_string(pred_ab.shape()) + " vs " +
                     shape_string(gt_ab.shape()));
  }
  const double batch = static_cast<double>(pred_ab.dim(0));
  return ops::scale(ops::sum(ops::abs(ops::sub(pred_ab, gt_ab))), 1.0 / batch);
}

Variable loss_pose(Variable x_hat, Variable w_hat, Variable x_gt, Variable w_gt, double beta_intra) {
  const Variable t = ops::row_norm(ops::sub(x_hat, x_gt));
  const Variable r = ops::row_norm(ops::sub(w_hat, w_gt));
  return ops::mean(ops::add(t, ops::scale(r, beta_intra)));
}

Variable loss_joint(std::optional<Variable> colorization, Variable pose, double beta_inter) {
  if (!colorization) return pose;
  return ops::add(ops::scale(*colorization, beta_inter), pose);
}

}  // namespace axloc
