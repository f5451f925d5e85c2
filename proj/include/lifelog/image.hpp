#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace lifelog {

// 8-bit RGB raster, row-major, interleaved channels.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  std::uint8_t* at(int x, int y) { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* at(int x, int y) const {
    return &pixels[(static_cast<std::size_t>(y) * width + x) * 3];
  }
  bool operator==(const RgbImage&) const = default;
};

// Real-valued image stored as three channel planes (R, G, B).
struct PlanarImage {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // 3 * width * height

  double& at(int channel, int x, int y) {
    return values[(static_cast<std::size_t>(channel) * height + y) * width + x];
  }
  double at(int channel, int x, int y) const {
    return values[(static_cast<std::size_t>(channel) * height + y) * width + x];
  }
};

// Binary PPM (P6) and PGM (P5), maxval 255. Grayscale is replicated into RGB.
RgbImage decode_pnm(std::string_view bytes);
RgbImage read_image(const std::filesystem::path& path);
std::string encode_ppm(const RgbImage& image);
void write_ppm(const RgbImage& image, const std::filesystem::path& path);

// Uncompressed 24-bit BMP, for serving to browsers.
std::string encode_bmp(const RgbImage& image);

PlanarImage to_planar(const RgbImage& image);
RgbImage to_rgb(const PlanarImage& image);

// Box-filter resampling: each output pixel is the area-weighted mean of the
// source pixels it covers. Works for both up- and downsampling.
PlanarImage resample_area(const PlanarImage& image, int width, int height);

}  // namespace lifelog
