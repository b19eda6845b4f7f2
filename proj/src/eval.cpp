#include "axloc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

#include "axloc/colorspace.hpp"
#include "axloc/image.hpp"
#include "axloc/rng.hpp"

namespace axloc {

namespace fs = std::filesystem;

namespace {

std::string zero_pad(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", index);
  return buf;
}

Tensor slice_sample(const Tensor& batch, std::size_t n) {
  Shape shape(batch.shape().begin() + 1, batch.shape().end());
  const std::size_t block = shape_numel(shape);
  std::vector<double> data(batch.data().begin() + static_cast<std::ptrdiff_t>(n * block),
                           batch.data().begin() + static_cast<std::ptrdiff_t>((n + 1) * block));
  return Tensor(std::move(shape), std::move(data));
}

std::string threshold_key(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", t);
  return buf;
}

}  // namespace

std::vector<Prediction> predict(const Model& model, std::span<const PreparedSample> samples, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("predict: batch size must be positive");
  std::vector<Prediction> out;
  out.reserve(samples.size());
  const bool aux = model.config().use_auxiliary;
  std::vector<std::size_t> indices;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, samples.size() - start);
    indices.resize(count);
    for (std::size_t i = 0; i < count; ++i) indices[i] = start + i;
    const Batch batch = make_batch(samples, indices);
    Tape tape;
    const BoundModel net(model, tape, false);
    const std::optional<Variable> lightness = aux ? std::optional(tape.constant(batch.lightness)) : std::nullopt;
    const ForwardOutput fwd = model_forward(net, tape.constant(batch.rgb), lightness);
    for (std::size_t n = 0; n < count; ++n) {
      Prediction p;
      for (std::size_t k = 0; k < 3; ++k) {
        p.translation[k] = fwd.translation.value()[n * 3 + k];
        p.log_rotation[k] = fwd.log_rotation.value()[n * 3 + k];
      }
      p.rotation = canonicalize(quat_exp(p.log_rotation));
      if (fwd.pred_ab) p.chroma = slice_sample(fwd.pred_ab->value(), n);
      if (fwd.attention_mask) p.attention = slice_sample(fwd.attention_mask->value(), n);
      out.push_back(std::move(p));
    }
  }
  return out;
}

double lower_median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty list");
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>((values.size() - 1) / 2);
  std::nth_element(values.begin(), mid, values.end());
  return *mid;
}

PoseErrors pose_errors(std::span<const Pose> truth, std::span<const Pose> predicted) {
  if (truth.empty()) throw std::invalid_argument("pose evaluation on an empty split");
  if (truth.size() != predicted.size()) throw std::invalid_argument("pose evaluation: length mismatch");
  PoseErrors e;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    e.t_errors.push_back(translation_error(truth[i].translation(), predicted[i].translation()));
    e.r_errors_deg.push_back(rotation_error_deg(truth[i].rotation(), predicted[i].rotation()));
  }
  e.median_t_err = lower_median(e.t_errors);
  e.median_r_err_deg = lower_median(e.r_errors_deg);
  return e;
}

PoseErrors evaluate_pose(const Model& model, std::span<const PreparedSample> samples) {
  if (samples.empty()) throw std::invalid_argument("evaluate_pose: empty split");
  const auto preds = predict(model, samples);
  std::vector<Pose> truth, guess;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    truth.push_back(samples[i].pose);
    guess.emplace_back(preds[i].translation, preds[i].rotation);
  }
  return pose_errors(truth, guess);
}

std::map<double, double> colorization_accuracy(std::span<const Tensor> predicted_chroma,
                                               std::span<const Tensor> true_chroma,
                                               std::span<const double> thresholds) {
  if (predicted_chroma.size() != true_chroma.size() || predicted_chroma.empty()) {
    throw std::invalid_argument("colorization_accuracy: need equally many non-zero predictions and targets");
  }
  std::vector<double> distances;
  for (std::size_t s = 0; s < true_chroma.size(); ++s) {
    const Tensor& p = predicted_chroma[s];
    const Tensor& t = true_chroma[s];
    if (p.shape() != t.shape() || t.rank() != 3 || t.dim(0) != 2) {
      throw ShapeError("colorization_accuracy: chroma shapes " + shape_string(p.shape()) + " vs " +
                       shape_string(t.shape()));
    }
    const std::size_t plane = t.dim(1) * t.dim(2);
    for (std::size_t i = 0; i < plane; ++i) {
      const double da = (p[i] - t[i]) * kChromaScale;
      const double db = (p[plane + i] - t[plane + i]) * kChromaScale;
      distances.push_back(std::sqrt(da * da + db * db));
    }
  }
  std::map<double, double> acc;
  for (double tau : thresholds) {
    const auto hits = std::count_if(distances.begin(), distances.end(), [tau](double d) { return d < tau; });
    acc[tau] = static_cast<double>(hits) / static_cast<double>(distances.size());
  }
  return acc;
}

std::map<double, double> evaluate_colorization(const Model& model, std::span<const PreparedSample> samples,
                                               std::span<const double> thresholds) {
  if (!model.config().use_auxiliary) {
    throw std::logic_error("evaluate_colorization: model has no colorization branch");
  }
  if (samples.empty()) throw std::invalid_argument("evaluate_colorization: empty split");
  const auto preds = predict(model, samples);
  std::vector<Tensor> predicted, truth;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    predicted.push_back(*preds[i].chroma);
    truth.push_back(samples[i].chroma);
  }
  return colorization_accuracy(predicted, truth, thresholds);
}

std::string metrics_to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["median_t_err"] = report.median_t_err;
  j["median_r_err_deg"] = report.median_r_err_deg;
  j["t_errors"] = report.t_errors;
  j["r_errors_deg"] = report.r_errors_deg;
  nlohmann::ordered_json acc = nlohmann::ordered_json::object();
  for (const auto& [tau, frac] : report.colorization_acc) acc[threshold_key(tau)] = frac;
  j["colorization_acc"] = acc;
  if (report.epochs_to_threshold) {
    j["epochs_to_threshold"] = *report.epochs_to_threshold;
  } else {
    j["epochs_to_threshold"] = nullptr;
  }
  return j.dump(2) + "\n";
}

MetricsReport metrics_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  MetricsReport r;
  r.median_t_err = j.at("median_t_err").get<double>();
  r.median_r_err_deg = j.at("median_r_err_deg").get<double>();
  r.t_errors = j.at("t_errors").get<std::vector<double>>();
  r.r_errors_deg = j.at("r_errors_deg").get<std::vector<double>>();
  for (const auto& [key, value] : j.at("colorization_acc").items()) r.colorization_acc[std::stod(key)] = value;
  if (!j.at("epochs_to_threshold").is_null()) r.epochs_to_threshold = j.at("epochs_to_threshold").get<std::size_t>();
  return r;
}

std::vector<double> normalize_mask(std::span<const double> mask) {
  std::vector<double> out(mask.begin(), mask.end());
  if (out.empty()) return out;
  const auto [lo, hi] = std::minmax_element(out.begin(), out.end());
  const double min = *lo, range = *hi - *lo;
  for (double& v : out) v = range > 0.0 ? (v - min) / range : 0.5;
  return out;
}

void export_attention_masks(const Model& model, std::span<const PreparedSample> prepared,
                            std::span<const Sample> originals, const fs::path& out_dir) {
  if (!model.config().use_attention) throw std::logic_error("export_attention_masks: model has no attention module");
  if (prepared.size() != originals.size()) throw std::invalid_argument("export_attention_masks: length mismatch");
  fs::create_directories(out_dir);
  const auto preds = predict(model, prepared);
  for (std::size_t i = 0; i < prepared.size(); ++i) {
    const Tensor& mask = *preds[i].attention;
    const std::size_t h = mask.dim(1), w = mask.dim(2);
    const auto norm = normalize_mask(mask.data());
    RgbImage img(w, h);
    for (std::size_t p = 0; p < h * w; ++p) {
      for (std::size_t c = 0; c < 3; ++c) img.pixels[p * 3 + c] = norm[p];
    }
    write_ppm(out_dir / ("mask_" + zero_pad(prepared[i].index) + ".ppm"), img);
    write_ppm(out_dir / ("image_" + zero_pad(prepared[i].index) + ".ppm"), originals[i].image);
  }
}

void export_trajectory(std::span<const PreparedSample> samples, std::span<const Prediction> predictions,
                       const fs::path& out_file) {
  if (samples.size() != predictions.size()) throw std::invalid_argument("export_trajectory: length mismatch");
  std::ofstream out(out_file);
  if (!out) throw std::runtime_error("cannot write " + out_file.string());
  out << "index,gt_tx,gt_ty,gt_tz,gt_qw,gt_qx,gt_qy,gt_qz,pred_tx,pred_ty,pred_tz,pred_qw,pred_qx,pred_qy,pred_qz\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& gt_t = samples[i].pose.translation();
    const auto& gt_q = samples[i].pose.rotation();
    const auto& p_t = predictions[i].translation;
    const auto& p_q = predictions[i].rotation;
    out << samples[i].index;
    for (double v : {gt_t[0], gt_t[1], gt_t[2], gt_q.w, gt_q.x, gt_q.y, gt_q.z, p_t[0], p_t[1], p_t[2], p_q.w, p_q.x,
                     p_q.y, p_q.z}) {
      out << ',' << format_double(v);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + out_file.string());
}

RgbImage colorize_image(const Model& model, const LoadedImage& input) {
  if (!model.config().use_auxiliary) throw std::logic_error("colorize: model has no colorization branch");
  const RgbImage& img = input.image;
  const std::size_t h = img.height, w = img.width, plane = h * w;
  std::vector<double> lightness(plane);
  if (input.grayscale) {
    for (std::size_t p = 0; p < plane; ++p) lightness[p] = kLightnessScale * img.pixels[p * 3];
  } else {
    lightness = rgb_to_lab(img).L;
  }
  std::vector<double> x(plane);
  for (std::size_t p = 0; p < plane; ++p) x[p] = lightness[p] / kLightnessScale;
  Tape tape;
  const BoundModel net(model, tape, false);
  const ColorizerOutput out = colorizer_forward(net, tape.constant(Tensor({1, 1, h, w}, std::move(x))));
  const auto ab = out.pred_ab.value().data();
  RgbImage result(w, h);
  for (std::size_t p = 0; p < plane; ++p) {
    const LabColor lab = fit_chroma_to_gamut({lightness[p], ab[p] * kChromaScale, ab[plane + p] * kChromaScale});
    const RgbColor rgb = lab_to_rgb(lab);
    result.pixels[p * 3] = rgb.r;
    result.pixels[p * 3 + 1] = rgb.g;
    result.pixels[p * 3 + 2] = rgb.b;
  }
  return result;
}

std::optional<std::size_t> epochs_to_threshold(std::span<const EpochLog> log, double threshold) {
  for (const auto& row : log) {
    if (row.median_t_err < threshold) return row.epoch + 1;
  }
  return std::nullopt;
}

std::uint64_t model_seed(std::uint64_t seed) { return derive_seed(seed, "model"); }

std::vector<std::pair<std::string, ModelConfig>> ablation_levels(const ModelConfig& base) {
  ModelConfig baseline = base, aux = base, full = base;
  baseline.use_auxiliary = false;
  baseline.use_attention = false;
  aux.use_auxiliary = true;
  aux.use_attention = false;
  full.use_auxiliary = true;
  full.use_attention = true;
  return {{"baseline", baseline}, {"aux", aux}, {"aux_attention", full}};
}

std::string ablation_csv_row(const AblationRow& row) {
  std::ostringstream os;
  os << row.config << ',' << row.seed << ',';
  if (row.failed) {
    os << "failed,,,,";
    return os.str();
  }
  os << format_double(row.median_t) << ',' << format_double(row.median_r_deg) << ',';
  if (row.acc_at_5) os << format_double(*row.acc_at_5);
  os << ',';
  if (row.acc_at_10) os << format_double(*row.acc_at_10);
  os << ',';
  if (row.epochs_to_threshold) os << *row.epochs_to_threshold;
  return os.str();
}

std::vector<AblationRow> read_ablation_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read ablation table " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kAblationHeader) throw std::runtime_error(path.string() + ": unexpected ablation header");
  std::vector<AblationRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t pos = 0;
    while (true) {
      const auto comma = line.find(',', pos);
      cells.push_back(line.substr(pos, comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (cells.size() != 7) throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
    AblationRow r;
    r.config = cells[0];
    r.seed = std::stoull(cells[1]);
    if (cells[2] == "failed") {
      r.failed = true;
    } else {
      r.median_t = std::stod(cells[2]);
      r.median_r_deg = std::stod(cells[3]);
      if (!cells[4].empty()) r.acc_at_5 = std::stod(cells[4]);
      if (!cells[5].empty()) r.acc_at_10 = std::stod(cells[5]);
      if (!cells[6].empty()) r.epochs_to_threshold = std::stoul(cells[6]);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<AblationRow> ablate(const Dataset& dataset, const ModelConfig& base_model, const TrainConfig& base_train,
                                std::span<const std::uint64_t> seeds, const AblationOptions& options) {
  std::ofstream csv;
  if (options.csv_path) {
    const bool fresh = !fs::exists(*options.csv_path) || fs::file_size(*options.csv_path) == 0;
    csv.open(*options.csv_path, std::ios::app);
    if (!csv) throw std::runtime_error("cannot write " + options.csv_path->string());
    if (fresh) csv << kAblationHeader << '\n' << std::flush;
  }
  const NormalizationStats stats = compute_normalization(dataset.train);
  const auto test = prepare_samples(dataset.test, stats);

  std::vector<AblationRow> rows;
  for (const std::uint64_t seed : seeds) {
    for (const auto& [name, level] : ablation_levels(base_model)) {
      AblationRow row;
      row.config = name;
      row.seed = seed;
      try {
        Model model(level, model_seed(seed));
        TrainConfig tc = base_train;
        tc.seed = seed;
        const TrainResult result = train(model, dataset.train, tc);
        const PoseErrors errors = evaluate_pose(model, test);
        row.median_t = errors.median_t_err;
        row.median_r_deg = errors.median_r_err_deg;
        if (level.use_auxiliary) {
          const auto acc = evaluate_colorization(model, test);
          row.acc_at_5 = acc.at(5.0);
          row.acc_at_10 = acc.at(10.0);
        }
        row.epochs_to_threshold = epochs_to_threshold(result.log, options.threshold);
      } catch (const std::exception&) {
        row.failed = true;
      }
      if (csv.is_open()) csv << ablation_csv_row(row) << '\n' << std::flush;
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace axloc
