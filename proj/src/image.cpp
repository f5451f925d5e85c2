#include "lifelog/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "lifelog/error.hpp"
#include "lifelog/text_io.hpp"

namespace lifelog {
namespace {

struct PnmReader {
  std::string_view bytes;
  std::size_t pos = 0;

  void skip_space_and_comments() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  }

  long number() {
    skip_space_and_comments();
    long v = 0;
    std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1'000'000) throw ValidationError("image header value too large");
      ++pos;
    }
    if (pos == start) throw ValidationError("malformed image header");
    return v;
  }
};

void put_u16(std::string& s, std::uint16_t v) {
  s += static_cast<char>(v & 0xff);
  s += static_cast<char>(v >> 8);
}

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s += static_cast<char>((v >> (8 * i)) & 0xff);
}

struct AxisWeights {
  std::vector<int> first;                 // first source index per output
  std::vector<std::vector<double>> taps;  // weights over consecutive sources
};

AxisWeights axis_weights(int src, int dst) {
  AxisWeights w;
  const double scale = static_cast<double>(src) / dst;
  for (int o = 0; o < dst; ++o) {
    double lo = o * scale, hi = (o + 1) * scale;
    int a = static_cast<int>(std::floor(lo));
    int b = std::min(src, static_cast<int>(std::ceil(hi)));
    std::vector<double> taps;
    for (int s = a; s < b; ++s) {
      double overlap = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
      taps.push_back(std::max(0.0, overlap) / scale);
    }
    w.first.push_back(a);
    w.taps.push_back(std::move(taps));
  }
  return w;
}

}  // namespace

RgbImage decode_pnm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5')) {
    throw ValidationError("not a binary PPM/PGM image");
  }
  const bool gray = bytes[1] == '5';
  PnmReader r{bytes, 2};
  long w = r.number(), h = r.number(), maxval = r.number();
  if (w <= 0 || h <= 0) throw ValidationError("zero-size image");
  if (maxval != 255) throw ValidationError("only 8-bit images are supported");
  ++r.pos;  // single whitespace after maxval
  const std::size_t channels = gray ? 1 : 3;
  const std::size_t need = static_cast<std::size_t>(w) * h * channels;
  if (r.pos + need > bytes.size()) throw ValidationError("truncated image data");
  RgbImage img(static_cast<int>(w), static_cast<int>(h));
  const auto* src = reinterpret_cast<const std::uint8_t*>(bytes.data() + r.pos);
  if (gray) {
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
      img.pixels[3 * i] = img.pixels[3 * i + 1] = img.pixels[3 * i + 2] = src[i];
    }
  } else {
    std::copy(src, src + need, img.pixels.begin());
  }
  return img;
}

RgbImage read_image(const std::filesystem::path& path) {
  try {
    return decode_pnm(read_file(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string encode_ppm(const RgbImage& image) {
  std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
                    "\n255\n";
  out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
  return out;
}

void write_ppm(const RgbImage& image, const std::filesystem::path& path) {
  write_file_atomic(path, encode_ppm(image));
}

std::string encode_bmp(const RgbImage& image) {
  const std::uint32_t row = (static_cast<std::uint32_t>(image.width) * 3 + 3) & ~3u;
  const std::uint32_t data = row * static_cast<std::uint32_t>(image.height);
  std::string s;
  s.reserve(54 + data);
  s += "BM";
  put_u32(s, 54 + data);
  put_u32(s, 0);
  put_u32(s, 54);
  put_u32(s, 40);
  put_u32(s, static_cast<std::uint32_t>(image.width));
  put_u32(s, static_cast<std::uint32_t>(image.height));
  put_u16(s, 1);
  put_u16(s, 24);
  put_u32(s, 0);
  put_u32(s, data);
  put_u32(s, 2835);
  put_u32(s, 2835);
  put_u32(s, 0);
  put_u32(s, 0);
  for (int y = image.height - 1; y >= 0; --y) {
    for (int x = 0; x < image.width; ++x) {
      const auto* p = image.at(x, y);
      s += static_cast<char>(p[2]);
      s += static_cast<char>(p[1]);
      s += static_cast<char>(p[0]);
    }
    for (std::uint32_t pad = static_cast<std::uint32_t>(image.width) * 3; pad < row; ++pad) s += '\0';
  }
  return s;
}

PlanarImage to_planar(const RgbImage& image) {
  PlanarImage out{image.width, image.height,
                  std::vector<double>(3 * image.pixel_count())};
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const auto* p = image.at(x, y);
      for (int c = 0; c < 3; ++c) out.at(c, x, y) = p[c];
    }
  }
  return out;
}

RgbImage to_rgb(const PlanarImage& image) {
  RgbImage out(image.width, image.height);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      auto* p = out.at(x, y);
      for (int c = 0; c < 3; ++c) {
        p[c] = static_cast<std::uint8_t>(std::clamp(std::lround(image.at(c, x, y)), 0l, 255l));
      }
    }
  }
  return out;
}

PlanarImage resample_area(const PlanarImage& image, int width, int height) {
  if (image.width <= 0 || image.height <= 0 || width <= 0 || height <= 0) {
    throw ValidationError("cannot resample an empty image");
  }
  const auto wx = axis_weights(image.width, width);
  const auto wy = axis_weights(image.height, height);

  // Horizontal pass into (width x image.height), then vertical.
  PlanarImage tmp{width, image.height,
                  std::vector<double>(3 * static_cast<std::size_t>(width) * image.height)};
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < width; ++x) {
        double acc = 0.0;
        const auto& taps = wx.taps[x];
        for (std::size_t t = 0; t < taps.size(); ++t) {
          acc += taps[t] * image.at(c, wx.first[x] + static_cast<int>(t), y);
        }
        tmp.at(c, x, y) = acc;
      }
    }
  }
  PlanarImage out{width, height, std::vector<double>(3 * static_cast<std::size_t>(width) * height)};
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < height; ++y) {
      const auto& taps = wy.taps[y];
      for (int x = 0; x < width; ++x) {
        double acc = 0.0;
        for (std::size_t t = 0; t < taps.size(); ++t) {
          acc += taps[t] * tmp.at(c, x, wy.first[y] + static_cast<int>(t));
        }
        out.at(c, x, y) = acc;
      }
    }
  }
  return out;
}

}  // namespace lifelog
