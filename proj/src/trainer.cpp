#include "axloc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "axloc/colorspace.hpp"
#include "axloc/eval.hpp"
#include "axloc/rng.hpp"

namespace axloc {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (!(lr_backbone > 0.0) || !(lr_other > 0.0)) throw std::invalid_argument("learning rates must be > 0");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw std::invalid_argument("decay factor must be in (0,1]");
  if (decay_every == 0) throw std::invalid_argument("decay interval must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must be in [0,1)");
  }
  if (!(adam_eps > 0.0)) throw std::invalid_argument("Adam epsilon must be > 0");
}

NormalizationStats compute_normalization(std::span<const Sample> samples) {
  if (samples.empty()) throw std::invalid_argument("compute_normalization: empty training split");
  NormalizationStats stats;
  std::array<double, 3> sum{}, count{};
  for (const auto& s : samples) {
    for (std::size_t i = 0; i < s.image.width * s.image.height; ++i) {
      for (std::size_t c = 0; c < 3; ++c) {
        sum[c] += s.image.pixels[i * 3 + c];
        count[c] += 1.0;
      }
    }
  }
  for (std::size_t c = 0; c < 3; ++c) stats.mean[c] = sum[c] / count[c];
  std::array<double, 3> sq{};
  for (const auto& s : samples) {
    for (std::size_t i = 0; i < s.image.width * s.image.height; ++i) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double d = s.image.pixels[i * 3 + c] - stats.mean[c];
        sq[c] += d * d;
      }
    }
  }
  for (std::size_t c = 0; c < 3; ++c) stats.std[c] = std::max(std::sqrt(sq[c] / count[c]), kStdFloor);
  return stats;
}

std::vector<PreparedSample> prepare_samples(std::span<const Sample> samples, const NormalizationStats& stats) {
  std::vector<PreparedSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    PreparedSample p;
    p.index = s.index;
    p.rgb = image_to_planar(s.image);
    const std::size_t plane = s.image.width * s.image.height;
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < plane; ++i) {
        p.rgb[c * plane + i] = (p.rgb[c * plane + i] - stats.mean[c]) / stats.std[c];
      }
    }
    NetLab lab = normalize_lab_for_net(rgb_to_lab(s.image));
    p.lightness = std::move(lab.lightness);
    p.chroma = std::move(lab.chroma);
    p.pose = s.pose;
    p.log_rotation = quat_log(s.pose.rotation());
    out.push_back(std::move(p));
  }
  return out;
}

Batch make_batch(std::span<const PreparedSample> samples, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("make_batch: empty batch");
  const PreparedSample& first = samples[indices[0]];
  const std::size_t b = indices.size();
  const std::size_t h = first.rgb.dim(1), w = first.rgb.dim(2);
  Batch batch{Tensor(Shape{b, 3, h, w}), Tensor(Shape{b, 1, h, w}), Tensor(Shape{b, 2, h, w}), Tensor(Shape{b, 3}),
              Tensor(Shape{b, 3})};
  for (std::size_t n = 0; n < b; ++n) {
    const PreparedSample& s = samples[indices[n]];
    if (s.rgb.shape() != first.rgb.shape()) throw ShapeError("make_batch: samples have different image sizes");
    std::copy(s.rgb.data().begin(), s.rgb.data().end(), batch.rgb.data().begin() + n * s.rgb.size());
    std::copy(s.lightness.data().begin(), s.lightness.data().end(),
              batch.lightness.data().begin() + n * s.lightness.size());
    std::copy(s.chroma.data().begin(), s.chroma.data().end(), batch.chroma.data().begin() + n * s.chroma.size());
    for (std::size_t k = 0; k < 3; ++k) {
      batch.translation[n * 3 + k] = s.pose.translation()[k];
      batch.log_rotation[n * 3 + k] = s.log_rotation[k];
    }
  }
  return batch;
}

LearningRates lr_at_epoch(const TrainConfig& config, std::size_t epoch) {
  const double factor = std::pow(config.decay_factor, static_cast<double>(epoch / config.decay_every));
  return {config.lr_backbone * factor, config.lr_other * factor};
}

AdamState make_adam_state(const Model& model) {
  AdamState state;
  for (const auto& p : model.parameters()) {
    state.first_moment.emplace_back(p.value.shape(), 0.0);
    state.second_moment.emplace_back(p.value.shape(), 0.0);
  }
  return state;
}

void adam_step(std::vector<Parameter>& params, std::span<const Tensor> grads, AdamState& state,
               const TrainConfig& config, const LearningRates& rates) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients and " + std::to_string(state.first_moment.size()) +
                     " moment slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].value.shape() || state.first_moment[i].shape() != params[i].value.shape() ||
        state.second_moment[i].shape() != params[i].value.shape()) {
      throw ShapeError("adam_step: shape mismatch for " + params[i].name + ": parameter " +
                       shape_string(params[i].value.shape()) + ", gradient " + shape_string(grads[i].shape()));
    }
  }
  ++state.step;
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double lr = params[i].group == ParamGroup::BackboneAndColorizer ? rates.backbone : rates.other;
    auto p = params[i].value.data();
    const auto g = grads[i].data();
    auto m = state.first_moment[i].data();
    auto v = state.second_moment[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      p[k] -= lr * m_hat / (std::sqrt(v_hat) + config.adam_eps);
    }
  }
}

TrainingDiverged::TrainingDiverged(std::size_t epoch, std::size_t batch)
    : std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch)),
      epoch_(epoch),
      batch_(batch) {}

fs::path checkpoint_name(std::size_t epochs_done) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%04zu.axps", epochs_done);
  return buf;
}

std::vector<CheckpointRecord> training_checkpoint(const Model& model, const TrainingState& state) {
  auto records = parameter_records(model);
  const auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    records.push_back({"adam.m." + params[i].name, state.adam.first_moment.at(i)});
    records.push_back({"adam.v." + params[i].name, state.adam.second_moment.at(i)});
  }
  records.push_back({"adam.step", Tensor::scalar(static_cast<double>(state.adam.step))});
  records.push_back({"train.epochs_done", Tensor::scalar(static_cast<double>(state.epochs_done))});
  records.push_back({"norm.mean", Tensor(Shape{3}, {state.stats.mean.begin(), state.stats.mean.end()})});
  records.push_back({"norm.std", Tensor(Shape{3}, {state.stats.std.begin(), state.stats.std.end()})});
  return records;
}

namespace {

const Tensor& find_record(const std::vector<CheckpointRecord>& records, const std::string& name) {
  for (const auto& r : records) {
    if (r.name == name) return r.value;
  }
  throw CheckpointError("checkpoint has no record " + name);
}

}  // namespace

NormalizationStats checkpoint_stats(const std::vector<CheckpointRecord>& records) {
  const Tensor& mean = find_record(records, "norm.mean");
  const Tensor& std = find_record(records, "norm.std");
  if (mean.size() != 3 || std.size() != 3) throw CheckpointError("normalization records must hold 3 values");
  NormalizationStats s;
  for (std::size_t c = 0; c < 3; ++c) {
    s.mean[c] = mean[c];
    s.std[c] = std[c];
  }
  return s;
}

TrainingState restore_training_checkpoint(Model& model, const std::vector<CheckpointRecord>& records) {
  load_parameters(model, records, {"adam.", "train.", "norm."});
  TrainingState state;
  state.adam = make_adam_state(model);
  const auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& m = find_record(records, "adam.m." + params[i].name);
    const Tensor& v = find_record(records, "adam.v." + params[i].name);
    if (m.shape() != params[i].value.shape() || v.shape() != params[i].value.shape()) {
      throw CheckpointError("optimizer state shape mismatch for " + params[i].name);
    }
    state.adam.first_moment[i] = m;
    state.adam.second_moment[i] = v;
  }
  state.adam.step = static_cast<std::uint64_t>(find_record(records, "adam.step").item());
  state.epochs_done = static_cast<std::size_t>(find_record(records, "train.epochs_done").item());
  state.stats = checkpoint_stats(records);
  return state;
}

TrainResult train(Model& model, std::span<const Sample> train_split, const TrainConfig& config,
                  const TrainOptions& options, std::optional<TrainingState> resume) {
  config.validate();
  if (train_split.empty()) throw std::invalid_argument("train: empty training split");
  const ModelConfig& mc = model.config();

  TrainResult result;
  TrainingState& state = result.state;
  if (resume) {
    state = std::move(*resume);
  } else {
    state.stats = compute_normalization(train_split);
    state.adam = make_adam_state(model);
  }
  const auto samples = prepare_samples(train_split, state.stats);
  const std::span<const PreparedSample> probe(samples.data(), std::min(config.probe_size, samples.size()));

  if (options.checkpoint_dir) fs::create_directories(*options.checkpoint_dir);
  auto save = [&] {
    if (options.checkpoint_dir) {
      write_checkpoint(*options.checkpoint_dir / checkpoint_name(state.epochs_done), training_checkpoint(model, state));
    }
  };

  std::vector<Tensor> grads(model.parameters().size());
  for (std::size_t epoch = state.epochs_done; epoch < config.epochs; ++epoch) {
    const LearningRates rates = lr_at_epoch(config, epoch);
    const auto order = shuffled_indices(samples.size(), derive_seed(config.seed, "shuffle", epoch));
    double sum_joint = 0.0, sum_pose = 0.0, sum_color = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_no) {
      const std::size_t count = std::min(config.batch_size, order.size() - start);
      const Batch batch = make_batch(samples, std::span(order).subspan(start, count));

      Tape tape;
      const BoundModel net(model, tape, true);
      const Variable rgb = tape.constant(batch.rgb);
      const std::optional<Variable> lightness =
          mc.use_auxiliary ? std::optional(tape.constant(batch.lightness)) : std::nullopt;
      const ForwardOutput out = model_forward(net, rgb, lightness);
      const Variable pose_loss = loss_pose(out.translation, out.log_rotation, tape.constant(batch.translation),
                                           tape.constant(batch.log_rotation), mc.beta_intra);
      std::optional<Variable> color_loss;
      if (mc.use_auxiliary) color_loss = loss_colorization(*out.pred_ab, tape.constant(batch.chroma));
      const Variable joint = loss_joint(color_loss, pose_loss, mc.beta_inter);
      const double joint_value = joint.value().item();
      if (!std::isfinite(joint_value)) throw TrainingDiverged(epoch, batch_no);

      tape.backward(joint);
      for (std::size_t i = 0; i < grads.size(); ++i) grads[i] = tape.grad(net.variables()[i]);
      adam_step(model.parameters(), grads, state.adam, config, rates);

      const auto weight = static_cast<double>(count);
      sum_joint += joint_value * weight;
      sum_pose += pose_loss.value().item() * weight;
      if (color_loss) sum_color += color_loss->value().item() * weight;
    }
    ++state.epochs_done;

    const auto n = static_cast<double>(samples.size());
    EpochLog row{epoch, sum_joint / n, sum_pose / n, sum_color / n, rates.backbone, rates.other, 0.0, 0.0};
    const PoseErrors probe_errors = evaluate_pose(model, probe);
    row.median_t_err = probe_errors.median_t_err;
    row.median_r_err_deg = probe_errors.median_r_err_deg;
    result.log.push_back(row);
    if (options.on_epoch) options.on_epoch(row);

    if (config.checkpoint_every != 0 && state.epochs_done % config.checkpoint_every == 0) save();
  }
  if (config.checkpoint_every == 0 || state.epochs_done % config.checkpoint_every != 0) save();
  return result;
}

void write_training_log(const fs::path& path, std::span<const EpochLog> rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write training log " + path.string());
  out << kTrainingLogHeader << '\n';
  for (const auto& r : rows) {
    out << r.epoch << ',' << format_double(r.loss_joint) << ',' << format_double(r.loss_pose) << ','
        << format_double(r.loss_color) << ',' << format_double(r.lr_backbone) << ',' << format_double(r.lr_other)
        << ',' << format_double(r.median_t_err) << ',' << format_double(r.median_r_err_deg) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<EpochLog> read_training_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read training log " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kTrainingLogHeader) throw std::runtime_error(path.string() + ": unexpected training log header");
  std::vector<EpochLog> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8) throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
    rows.push_back(EpochLog{std::stoul(cells[0]), std::stod(cells[1]), std::stod(cells[2]), std::stod(cells[3]),
                            std::stod(cells[4]), std::stod(cells[5]), std::stod(cells[6]), std::stod(cells[7])});
  }
  return rows;
}

}  // namespace axloc
