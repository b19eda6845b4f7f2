#include "axloc/colorspace.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace axloc {

namespace {

// Linear sRGB -> XYZ (D65), with each row divided by its sum so that white maps
// to (1,1,1) relative to the reference white.
constexpr std::array<std::array<double, 3>, 3> kRgbToXyz{{
    {0.4124564, 0.3575761, 0.1804375},
    {0.2126729, 0.7151522, 0.0721750},
    {0.0193339, 0.1191920, 0.9503041},
}};

constexpr double kEpsilon = 216.0 / 24389.0;
constexpr double kKappa = 24389.0 / 27.0;

struct Matrices {
  std::array<std::array<double, 3>, 3> forward{};  // linear RGB -> white-relative XYZ
  std::array<std::array<double, 3>, 3> inverse{};
};

Matrices build_matrices() {
  Matrices m;
  for (std::size_t r = 0; r < 3; ++r) {
    const double s = kRgbToXyz[r][0] + kRgbToXyz[r][1] + kRgbToXyz[r][2];
    for (std::size_t c = 0; c < 3; ++c) m.forward[r][c] = kRgbToXyz[r][c] / s;
  }
  const auto& f = m.forward;
  const double det = f[0][0] * (f[1][1] * f[2][2] - f[1][2] * f[2][1]) -
                     f[0][1] * (f[1][0] * f[2][2] - f[1][2] * f[2][0]) +
                     f[0][2] * (f[1][0] * f[2][1] - f[1][1] * f[2][0]);
  m.inverse[0][0] = (f[1][1] * f[2][2] - f[1][2] * f[2][1]) / det;
  m.inverse[0][1] = (f[0][2] * f[2][1] - f[0][1] * f[2][2]) / det;
  m.inverse[0][2] = (f[0][1] * f[1][2] - f[0][2] * f[1][1]) / det;
  m.inverse[1][0] = (f[1][2] * f[2][0] - f[1][0] * f[2][2]) / det;
  m.inverse[1][1] = (f[0][0] * f[2][2] - f[0][2] * f[2][0]) / det;
  m.inverse[1][2] = (f[0][2] * f[1][0] - f[0][0] * f[1][2]) / det;
  m.inverse[2][0] = (f[1][0] * f[2][1] - f[1][1] * f[2][0]) / det;
  m.inverse[2][1] = (f[0][1] * f[2][0] - f[0][0] * f[2][1]) / det;
  m.inverse[2][2] = (f[0][0] * f[1][1] - f[0][1] * f[1][0]) / det;
  return m;
}

const Matrices& matrices() {
  static const Matrices m = build_matrices();
  return m;
}

double srgb_to_linear(double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); }

double linear_to_srgb(double c) { return c <= 0.0031308 ? c * 12.92 : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055; }

double lab_f(double t) { return t > kEpsilon ? std::cbrt(t) : (kKappa * t + 16.0) / 116.0; }

double lab_f_inv(double f) {
  const double cube = f * f * f;
  return cube > kEpsilon ? cube : (116.0 * f - 16.0) / kKappa;
}

std::array<double, 3> lab_to_linear(LabColor lab) {
  const double fy = (lab.L + 16.0) / 116.0;
  const double fx = fy + lab.a / 500.0;
  const double fz = fy - lab.b / 200.0;
  const double yr = lab.L > kKappa * kEpsilon ? fy * fy * fy : lab.L / kKappa;
  const std::array<double, 3> xyz{lab_f_inv(fx), yr, lab_f_inv(fz)};
  const auto& inv = matrices().inverse;
  std::array<double, 3> rgb{};
  for (std::size_t r = 0; r < 3; ++r) rgb[r] = inv[r][0] * xyz[0] + inv[r][1] * xyz[1] + inv[r][2] * xyz[2];
  return rgb;
}

}  // namespace

LabColor rgb_to_lab(RgbColor rgb) {
  for (double v : {rgb.r, rgb.g, rgb.b}) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::domain_error("rgb_to_lab: channel value " + std::to_string(v) + " outside [0,1]");
    }
  }
  const std::array<double, 3> lin{srgb_to_linear(rgb.r), srgb_to_linear(rgb.g), srgb_to_linear(rgb.b)};
  const auto& m = matrices().forward;
  std::array<double, 3> f{};
  for (std::size_t r = 0; r < 3; ++r) f[r] = lab_f(m[r][0] * lin[0] + m[r][1] * lin[1] + m[r][2] * lin[2]);
  return {116.0 * f[1] - 16.0, 500.0 * (f[0] - f[1]), 200.0 * (f[1] - f[2])};
}

RgbColor lab_to_rgb(LabColor lab) {
  const auto lin = lab_to_linear(lab);
  auto encode = [](double c) { return std::clamp(linear_to_srgb(std::clamp(c, 0.0, 1.0)), 0.0, 1.0); };
  return {encode(lin[0]), encode(lin[1]), encode(lin[2])};
}

bool in_srgb_gamut(LabColor lab, double eps) {
  const auto lin = lab_to_linear(lab);
  return std::all_of(lin.begin(), lin.end(), [eps](double c) { return c >= -eps && c <= 1.0 + eps; });
}

LabColor fit_chroma_to_gamut(LabColor lab) {
  if (in_srgb_gamut(lab)) return lab;
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (in_srgb_gamut({lab.L, lab.a * mid, lab.b * mid})) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return {lab.L, lab.a * lo, lab.b * lo};
}

LabImage rgb_to_lab(const RgbImage& image) {
  LabImage lab(image.width, image.height);
  for (std::size_t i = 0; i < image.width * image.height; ++i) {
    const LabColor c = rgb_to_lab(RgbColor{image.pixels[i * 3], image.pixels[i * 3 + 1], image.pixels[i * 3 + 2]});
    lab.L[i] = c.L;
    lab.a[i] = c.a;
    lab.b[i] = c.b;
  }
  return lab;
}

RgbImage lab_to_rgb(const LabImage& lab) {
  RgbImage image(lab.width, lab.height);
  for (std::size_t i = 0; i < lab.width * lab.height; ++i) {
    const RgbColor c = lab_to_rgb(LabColor{lab.L[i], lab.a[i], lab.b[i]});
    image.pixels[i * 3] = c.r;
    image.pixels[i * 3 + 1] = c.g;
    image.pixels[i * 3 + 2] = c.b;
  }
  return image;
}

NetLab normalize_lab_for_net(const LabImage& lab) {
  const std::size_t n = lab.width * lab.height;
  NetLab out{Tensor(Shape{1, lab.height, lab.width}), Tensor(Shape{2, lab.height, lab.width})};
  for (std::size_t i = 0; i < n; ++i) {
    out.lightness[i] = lab.L[i] / kLightnessScale;
    out.chroma[i] = lab.a[i] / kChromaScale;
    out.chroma[n + i] = lab.b[i] / kChromaScale;
  }
  return out;
}

LabImage denormalize_lab(const Tensor& lightness, const Tensor& chroma) {
  if (lightness.rank() != 3 || lightness.dim(0) != 1 || chroma.rank() != 3 || chroma.dim(0) != 2 ||
      lightness.dim(1) != chroma.dim(1) || lightness.dim(2) != chroma.dim(2)) {
    throw ShapeError("denormalize_lab: expected [1,H,W] and [2,H,W], got " + shape_string(lightness.shape()) +
                     " and " + shape_string(chroma.shape()));
  }
  LabImage lab(lightness.dim(2), lightness.dim(1));
  const std::size_t n = lab.width * lab.height;
  for (std::size_t i = 0; i < n; ++i) {
    lab.L[i] = lightness[i] * kLightnessScale;
    lab.a[i] = chroma[i] * kChromaScale;
    lab.b[i] = chroma[n + i] * kChromaScale;
  }
  return lab;
}

}  // namespace axloc
