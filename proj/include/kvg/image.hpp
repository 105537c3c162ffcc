#pragma once

// Minimal RGB raster with binary PPM (P6, maxval 255) I/O.

#include <array>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "kvg/errors.hpp"
#include "kvg/geometry.hpp"

namespace kvg {

using Rgb = std::array<std::uint8_t, 3>;

class Image {
 public:
  Image() = default;
  Image(std::int64_t width, std::int64_t height, Rgb fill = {128, 128, 128}) : width_(width), height_(height) {
    if (width <= 0 || height <= 0) throw DataError("image extent must be positive");
    pixels_.resize(static_cast<std::size_t>(width * height) * 3);
    for (std::size_t i = 0; i < pixels_.size(); i += 3) {
      pixels_[i] = fill[0];
      pixels_[i + 1] = fill[1];
      pixels_[i + 2] = fill[2];
    }
  }

  std::int64_t width() const { return width_; }
  std::int64_t height() const { return height_; }

  Rgb at(std::int64_t x, std::int64_t y) const {
    const auto i = index(x, y);
    return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
  }
  void set(std::int64_t x, std::int64_t y, Rgb c) {
    const auto i = index(x, y);
    pixels_[i] = c[0];
    pixels_[i + 1] = c[1];
    pixels_[i + 2] = c[2];
  }

  const std::vector<std::uint8_t>& bytes() const { return pixels_; }

  // Nearest-neighbour resample of `src` into the half-open rectangle `region`.
  void paste_scaled(const Image& src, const BBox& region) {
    const auto rw = region.width(), rh = region.height();
    for (std::int64_t y = 0; y < rh; ++y) {
      const auto sy = std::min(src.height() - 1, (y * src.height()) / rh);
      for (std::int64_t x = 0; x < rw; ++x) {
        const auto sx = std::min(src.width() - 1, (x * src.width()) / rw);
        set(region.x1 + x, region.y1 + y, src.at(sx, sy));
      }
    }
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(std::int64_t x, std::int64_t y) const {
    if (x < 0 || y < 0 || x >= width_ || y >= height_) throw InvariantError("pixel access out of bounds");
    return static_cast<std::size_t>(y * width_ + x) * 3;
  }

  std::int64_t width_ = 0;
  std::int64_t height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

inline void write_ppm(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image '" + path.string() + "'");
  out << "P6\n" << img.width() << ' ' << img.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.bytes().data()), static_cast<std::streamsize>(img.bytes().size()));
  if (!out) throw DataError("failed writing image '" + path.string() + "'");
}

inline Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("unreadable source image '" + path.string() + "'");
  auto fail = [&](const char* why) { return DataError("bad PPM '" + path.string() + "': " + why); };
  auto next_token = [&]() {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
      if (c == '#') {
        while ((c = in.get()) != EOF && c != '\n') {
        }
        continue;
      }
      if (std::isspace(c)) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(static_cast<char>(c));
    }
    return tok;
  };
  if (next_token() != "P6") throw fail("not a binary P6 file");
  std::int64_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoll(next_token());
    h = std::stoll(next_token());
    maxval = std::stoll(next_token());
  } catch (const std::exception&) {
    throw fail("malformed header");
  }
  if (w <= 0 || h <= 0 || maxval != 255) throw fail("unsupported dimensions or maxval");
  Image img(w, h);
  std::vector<char> buf(static_cast<std::size_t>(w * h) * 3);
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) throw fail("truncated pixel data");
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      const auto i = static_cast<std::size_t>(y * w + x) * 3;
      img.set(x, y, {static_cast<std::uint8_t>(buf[i]), static_cast<std::uint8_t>(buf[i + 1]),
                     static_cast<std::uint8_t>(buf[i + 2])});
    }
  }
  return img;
}

}  // namespace kvg
