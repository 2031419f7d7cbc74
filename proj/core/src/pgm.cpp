#include "anchorprop/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "anchorprop/error.hpp"

namespace anchorprop {
namespace {

int read_header_int(std::istream& in, const std::filesystem::path& path) {
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
    } else if (c != EOF && std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int v = 0;
  if (!(in >> v)) throw IoError("pgm: malformed header in " + path.string());
  return v;
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "P5\n" << image.w << ' ' << image.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  if (magic != "P5") throw IoError("pgm: not a binary PGM: " + path.string());
  GrayImage img;
  img.w = read_header_int(in, path);
  img.h = read_header_int(in, path);
  const int maxval = read_header_int(in, path);
  if (img.w <= 0 || img.h <= 0 || maxval != 255) {
    throw IoError("pgm: unsupported dimensions or maxval in " + path.string());
  }
  in.get();  // single whitespace before the raster
  img.pixels.resize(static_cast<std::size_t>(img.w) * img.h);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw IoError("pgm: truncated raster in " + path.string());
  return img;
}

GrayImage heatmap_to_gray(const HeatMap& heat) {
  GrayImage img{heat.grid.h, heat.grid.w, {}};
  img.pixels.resize(heat.values.size());
  std::transform(heat.values.begin(), heat.values.end(), img.pixels.begin(), [](double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  });
  return img;
}

GrayImage mask_to_gray(const BinaryMask& mask) {
  GrayImage img{mask.grid.h, mask.grid.w, {}};
  img.pixels.resize(mask.bits.size());
  std::transform(mask.bits.begin(), mask.bits.end(), img.pixels.begin(),
                 [](std::uint8_t b) { return static_cast<std::uint8_t>(b != 0 ? 255 : 0); });
  return img;
}

GrayImage mask_to_gray(const PixelMask& mask) {
  GrayImage img{mask.h, mask.w, {}};
  img.pixels.resize(mask.bits.size());
  std::transform(mask.bits.begin(), mask.bits.end(), img.pixels.begin(),
                 [](std::uint8_t b) { return static_cast<std::uint8_t>(b != 0 ? 255 : 0); });
  return img;
}

PixelMask gray_to_mask(const GrayImage& image) {
  PixelMask m(image.h, image.w);
  std::transform(image.pixels.begin(), image.pixels.end(), m.bits.begin(),
                 [](std::uint8_t p) { return static_cast<std::uint8_t>(p != 0 ? 1 : 0); });
  return m;
}

}  // namespace anchorprop
