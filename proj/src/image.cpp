#include "axloc/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace axloc {

namespace {

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c) != 0) {
      c = in.get();
    } else {
      break;
    }
  }
  while (c != EOF && std::isspace(c) == 0) {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  return tok;
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<unsigned char> bytes(image.pixels.size());
  std::transform(image.pixels.begin(), image.pixels.end(), bytes.begin(), to_byte);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

LoadedImage read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image " + path.string());
  const std::string magic = next_token(in);
  if (magic != "P6" && magic != "P5") throw std::runtime_error(path.string() + ": not a binary PPM/PGM file");
  const auto width = std::stoul(next_token(in));
  const auto height = std::stoul(next_token(in));
  const auto maxval = std::stoul(next_token(in));
  if (maxval == 0 || maxval > 255) throw std::runtime_error(path.string() + ": unsupported maxval");
  const bool gray = magic == "P5";
  std::vector<unsigned char> bytes(width * height * (gray ? 1 : 3));
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw std::runtime_error(path.string() + ": truncated pixel data");
  }
  LoadedImage result{RgbImage(width, height), gray};
  const double scale = static_cast<double>(maxval);
  for (std::size_t i = 0; i < width * height; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      result.image.pixels[i * 3 + c] = static_cast<double>(bytes[gray ? i : i * 3 + c]) / scale;
    }
  }
  return result;
}

RgbImage quantize8(const RgbImage& image) {
  RgbImage out = image;
  for (double& v : out.pixels) v = static_cast<double>(to_byte(v)) / 255.0;
  return out;
}

Tensor image_to_planar(const RgbImage& image) {
  Tensor t(Shape{3, image.height, image.width});
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) t[(c * image.height + y) * image.width + x] = image.at(y, x, c);
    }
  }
  return t;
}

}  // namespace axloc
