#pragma once

// Grayscale rasters with 8-bit PGM/PNG I/O.

#include "midfeat/core.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#if MIDFEAT_WITH_PNG
#include <png.h>
#endif

namespace midfeat {

/// Row-major grayscale raster with values in [0, 1].
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int width, int height, double fill = 0.0)
      : width_(width), height_(height), pixels_(static_cast<size_t>(width) * height, fill) {
    if (width <= 0 || height <= 0) throw InvalidInput("image dimensions must be positive");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }

  double& operator()(int x, int y) { return pixels_[static_cast<size_t>(y) * width_ + x]; }
  double operator()(int x, int y) const { return pixels_[static_cast<size_t>(y) * width_ + x]; }

  /// Clamped access for border handling.
  double at_clamped(int x, int y) const {
    x = std::clamp(x, 0, width_ - 1);
    y = std::clamp(y, 0, height_ - 1);
    return (*this)(x, y);
  }

  std::span<const double> pixels() const { return pixels_; }
  std::span<double> pixels() { return pixels_; }

  /// Snap every pixel to the nearest k/255 level so that 8-bit storage is lossless.
  void quantize_8bit() {
    for (double& p : pixels_) p = to_byte(p) / 255.0;
  }

  static std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> pixels_;
};

inline void write_pgm(const GrayImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "P5\n" << img.width() << " " << img.height() << "\n255\n";
  std::vector<char> row(img.width());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) row[x] = static_cast<char>(GrayImage::to_byte(img(x, y)));
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw FormatError("short write to " + path.string());
}

namespace detail {

inline void skip_pgm_space(std::istream& in) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

}  // namespace detail

inline GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P2") throw FormatError(path.string() + ": not a PGM file");
  int w = 0, h = 0, maxval = 0;
  detail::skip_pgm_space(in);
  in >> w;
  detail::skip_pgm_space(in);
  in >> h;
  detail::skip_pgm_space(in);
  in >> maxval;
  if (!in || w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) {
    throw FormatError(path.string() + ": bad PGM header");
  }
  GrayImage img(w, h);
  if (magic == "P2") {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        int v = 0;
        if (!(in >> v)) throw FormatError(path.string() + ": truncated PGM data");
        img(x, y) = static_cast<double>(v) / maxval;
      }
    return img;
  }
  in.get();  // single whitespace after maxval
  const int bytes = maxval < 256 ? 1 : 2;
  std::vector<unsigned char> row(static_cast<size_t>(w) * bytes);
  for (int y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (in.gcount() != static_cast<std::streamsize>(row.size())) {
      throw FormatError(path.string() + ": truncated PGM data");
    }
    for (int x = 0; x < w; ++x) {
      const int v = bytes == 1 ? row[x] : (row[2 * x] << 8) | row[2 * x + 1];
      img(x, y) = static_cast<double>(v) / maxval;
    }
  }
  return img;
}

#if MIDFEAT_WITH_PNG

inline GrayImage read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw FormatError(path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw FormatError(path.string() + ": " + image.message);
  }
  GrayImage img(static_cast<int>(image.width), static_cast<int>(image.height));
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      img(x, y) = buffer[static_cast<size_t>(y) * img.width() + x] / 255.0;
  return img;
}

inline void write_png(const GrayImage& img, const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(static_cast<size_t>(img.width()) * img.height());
  for (size_t i = 0; i < buffer.size(); ++i) buffer[i] = GrayImage::to_byte(img.pixels()[i]);
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, buffer.data(), 0, nullptr)) {
    throw FormatError(path.string() + ": " + image.message);
  }
}

#endif

/// Load by extension: .pgm always, .png when built with libpng.
inline GrayImage read_image(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") {
#if MIDFEAT_WITH_PNG
    return read_png(path);
#else
    throw FormatError(path.string() + ": PNG support not compiled in");
#endif
  }
  return read_pgm(path);
}

/// Separable Gaussian, clamped borders; sigma <= 0 returns the input.
inline GrayImage gaussian_blur(const GrayImage& img, double sigma) {
  if (sigma <= 0) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;
  GrayImage tmp(img.width(), img.height()), out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * img.at_clamped(x + i, y);
      tmp(x, y) = acc;
    }
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp.at_clamped(x, y + i);
      out(x, y) = acc;
    }
  return out;
}

/// Bilinear resampling with pixel-center alignment.
inline GrayImage resize_bilinear(const GrayImage& src, int new_width, int new_height) {
  GrayImage dst(new_width, new_height);
  const double sx = static_cast<double>(src.width()) / new_width;
  const double sy = static_cast<double>(src.height()) / new_height;
  for (int y = 0; y < new_height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height() - 1);
    const double ay = fy - y0;
    for (int x = 0; x < new_width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width() - 1);
      const double ax = fx - x0;
      const double top = (1 - ax) * src(x0, y0) + ax * src(x1, y0);
      const double bot = (1 - ax) * src(x0, y1) + ax * src(x1, y1);
      dst(x, y) = (1 - ay) * top + ay * bot;
    }
  }
  return dst;
}

}  // namespace midfeat
