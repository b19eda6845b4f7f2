#pragma once

// Oracles and fixtures shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "axloc/autograd.hpp"
#include "axloc/model.hpp"
#include "axloc/rng.hpp"
#include "axloc/synthscene.hpp"
#include "axloc/tensor.hpp"
#include "axloc/trainer.hpp"

namespace axloc::testing {

inline Tensor random_tensor(const Shape& shape, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline double l2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// Norm-wise relative error |a - b| / max(|a|, |b|). Two zero vectors compare as 0.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double scale = std::max(l2(a), l2(b));
  if (scale == 0.0) return 0.0;
  return l2(d) / scale;
}

using ScalarFn = std::function<Variable(Tape&, const std::vector<Variable>&)>;

/// Worst norm-wise relative error, over inputs, between the tape gradient and
/// central differences on every element.
inline double gradcheck(const ScalarFn& fn, const std::vector<Tensor>& inputs, double step = 1e-5) {
  Tape tape;
  std::vector<Variable> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
  tape.backward(fn(tape, leaves));

  auto eval = [&](const std::vector<Tensor>& xs) {
    Tape t;
    std::vector<Variable> v;
    for (const auto& x : xs) v.push_back(t.constant(x));
    return fn(t, v).value().item();
  };

  double worst = 0.0;
  std::vector<Tensor> work = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor g = tape.grad(leaves[k]);
    std::vector<double> fd(inputs[k].size());
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double x0 = work[k][i];
      work[k][i] = x0 + step;
      const double up = eval(work);
      work[k][i] = x0 - step;
      const double down = eval(work);
      work[k][i] = x0;
      fd[i] = (up - down) / (2.0 * step);
    }
    worst = std::max(worst, relative_error(g.values(), fd));
  }
  return worst;
}

// --- full model ----------------------------------------------------------------

/// Joint loss for one batch, built the same way the trainer builds it.
inline Variable model_loss(const BoundModel& net, const Batch& batch) {
  Tape& tape = net.tape();
  const auto& mc = net.model().config();
  const std::optional<Variable> lightness =
      mc.use_auxiliary ? std::optional(tape.constant(batch.lightness)) : std::nullopt;
  const ForwardOutput out = model_forward(net, tape.constant(batch.rgb), lightness);
  const Variable pose = loss_pose(out.translation, out.log_rotation, tape.constant(batch.translation),
                                  tape.constant(batch.log_rotation), mc.beta_intra);
  std::optional<Variable> color;
  if (mc.use_auxiliary) color = loss_colorization(*out.pred_ab, tape.constant(batch.chroma));
  return loss_joint(color, pose, mc.beta_inter);
}

inline double model_loss_value(const Model& model, const Batch& batch) {
  Tape tape;
  const BoundModel net(model, tape, false);
  return model_loss(net, batch).value().item();
}

struct ParamCheck {
  std::string name;
  std::size_t checked = 0;
  double rel_error = 0.0;
};

/// Central differences on up to `per_tensor` elements of every parameter tensor:
/// the largest-gradient half plus a seeded random half. All elements are used
/// when the tensor is small enough.
inline std::vector<ParamCheck> model_gradcheck(Model& model, const Batch& batch, std::size_t per_tensor,
                                               std::uint64_t seed, double step = 1e-5) {
  std::vector<Tensor> grads;
  {
    Tape tape;
    const BoundModel net(model, tape, true);
    tape.backward(model_loss(net, batch));
    for (const auto& v : net.variables()) grads.push_back(tape.grad(v));
  }
  SplitMix64 rng(seed);
  std::vector<ParamCheck> out;
  for (std::size_t p = 0; p < model.parameters().size(); ++p) {
    Tensor& value = model.parameters()[p].value;
    const Tensor& g = grads[p];
    std::vector<std::size_t> picks;
    if (value.size() <= per_tensor) {
      for (std::size_t i = 0; i < value.size(); ++i) picks.push_back(i);
    } else {
      std::vector<std::size_t> order(value.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      const std::size_t top = per_tensor / 2;
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                        [&](std::size_t a, std::size_t b) { return std::abs(g[a]) > std::abs(g[b]); });
      picks.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top));
      while (picks.size() < per_tensor) {
        const std::size_t i = rng.below(value.size());
        if (std::find(picks.begin(), picks.end(), i) == picks.end()) picks.push_back(i);
      }
    }
    std::vector<double> analytic, numeric;
    for (std::size_t i : picks) {
      const double x0 = value[i];
      value[i] = x0 + step;
      const double up = model_loss_value(model, batch);
      value[i] = x0 - step;
      const double down = model_loss_value(model, batch);
      value[i] = x0;
      analytic.push_back(g[i]);
      numeric.push_back((up - down) / (2.0 * step));
    }
    out.push_back({model.parameters()[p].name, picks.size(), relative_error(analytic, numeric)});
  }
  return out;
}

// --- data fixtures -------------------------------------------------------------

/// Renders samples along a loop in memory; no files involved.
inline std::vector<Sample> render_samples(const Scene& scene, const Trajectory& path, std::size_t count,
                                          std::size_t width = 32, std::size_t height = 32) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < count; ++i) {
    const Pose pose = trajectory_pose(path, i, count);
    out.push_back({i, render(scene, pose, width, height), pose});
  }
  return out;
}

/// Small but complete model config for fast tests.
inline ModelConfig small_model(bool aux = true, bool att = true) {
  ModelConfig c;
  c.backbone_widths = {4, 6, 8, 8, 8};
  c.colorizer_base_width = 4;
  c.embed_width = 12;
  c.use_auxiliary = aux;
  c.use_attention = att;
  return c;
}

/// Fresh temporary directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("axloc_" + tag + "_" + std::to_string(rd()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace axloc::testing
