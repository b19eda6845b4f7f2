#pragma once

#include <cstddef>
#include <vector>

#include "axloc/image.hpp"
#include "axloc/tensor.hpp"

namespace axloc {

/// CIE Lab under D65 / 2-degree observer.
struct LabColor {
  double L = 0.0;
  double a = 0.0;
  double b = 0.0;
};

struct RgbColor {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;

  friend bool operator==(const RgbColor&, const RgbColor&) = default;
};

/// Planar Lab image. L in [0,100]; a, b nominally in [-110,110].
struct LabImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> L;
  std::vector<double> a;
  std::vector<double> b;

  LabImage() = default;
  LabImage(std::size_t w, std::size_t h) : width(w), height(h), L(w * h), a(w * h), b(w * h) {}
};

inline constexpr double kLightnessScale = 100.0;
inline constexpr double kChromaScale = 110.0;

/// Throws std::domain_error when a channel lies outside [0,1].
LabColor rgb_to_lab(RgbColor rgb);
/// Out-of-gamut results are clamped to [0,1].
RgbColor lab_to_rgb(LabColor lab);

LabImage rgb_to_lab(const RgbImage& image);
RgbImage lab_to_rgb(const LabImage& lab);

/// True when the Lab color maps to linear RGB inside [0,1]^3 (with tolerance `eps`).
bool in_srgb_gamut(LabColor lab, double eps = 1e-12);

/// Largest chroma scale s in [0,1] such that (L, s*a, s*b) is in gamut; L is untouched.
LabColor fit_chroma_to_gamut(LabColor lab);

/// Network-facing planes: X_L = L/100 as [1,H,W], Y_ab = (a,b)/110 as [2,H,W].
struct NetLab {
  Tensor lightness;
  Tensor chroma;
};

NetLab normalize_lab_for_net(const LabImage& lab);
LabImage denormalize_lab(const Tensor& lightness, const Tensor& chroma);

}  // namespace axloc
