#pragma once

#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hazeforge {

/**
 * @brief Float raster with values in [0,1].
 *
 * Layout is planar channel-major: sample (c, y, x) lives at
 * data[(c * height + y) * width + x]. Every constructor and public
 * operation clamps into [0,1]; NaN is rejected.
 */
class Image {
public:
  Image() = default;

  Image(std::size_t height, std::size_t width, std::size_t channels, float fill = 0.0f)
      : height_(height), width_(width), channels_(channels),
        data_(height * width * channels, std::clamp(fill, 0.0f, 1.0f)) {
    check_channels(channels);
  }

  /// Takes ownership of planar data; out-of-range values are clamped.
  Image(std::size_t height, std::size_t width, std::size_t channels, std::vector<float> data)
      : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    check_channels(channels);
    if (data_.size() != height * width * channels) {
      throw std::invalid_argument("Image: data length does not match height*width*channels");
    }
    for (float& v : data_) {
      if (std::isnan(v)) {
        throw std::invalid_argument("Image: NaN sample");
      }
      v = std::clamp(v, 0.0f, 1.0f);
    }
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t pixels() const noexcept { return height_ * width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  const std::vector<float>& data() const noexcept { return data_; }

  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * height_ + y) * width_ + x];
  }

  /// Writes a sample, clamped into [0,1].
  void set(std::size_t c, std::size_t y, std::size_t x, float v) {
    data_[(c * height_ + y) * width_ + x] = std::clamp(v, 0.0f, 1.0f);
  }

  const float* plane(std::size_t c) const { return data_.data() + c * pixels(); }

  bool same_shape(const Image& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  bool operator==(const Image& other) const = default;

private:
  static void check_channels(std::size_t channels) {
    if (channels != 1 && channels != 3) {
      throw std::invalid_argument("Image: channel count must be 1 or 3");
    }
  }

  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<float> data_;
};

inline std::uint8_t quantize(float v) {
  // std::round rounds half away from zero.
  return static_cast<std::uint8_t>(std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

inline Image from_bytes(std::size_t height, std::size_t width, std::size_t channels,
                        const std::vector<std::uint8_t>& interleaved) {
  std::vector<float> data(height * width * channels);
  for (std::size_t p = 0; p < height * width; ++p) {
    for (std::size_t c = 0; c < channels; ++c) {
      data[c * height * width + p] = static_cast<float>(interleaved[p * channels + c]) / 255.0f;
    }
  }
  return Image(height, width, channels, std::move(data));
}

inline std::vector<std::uint8_t> to_bytes(const Image& img) {
  const std::size_t n = img.pixels();
  const std::size_t ch = img.channels();
  std::vector<std::uint8_t> out(n * ch);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t c = 0; c < ch; ++c) {
      out[p * ch + c] = quantize(img.data()[c * n + p]);
    }
  }
  return out;
}

namespace detail {

inline void skip_pnm_space(std::istream& in) {
  while (true) {
    int ch = in.peek();
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      return;
    }
  }
}

inline std::size_t read_pnm_int(std::istream& in, const std::string& path) {
  skip_pnm_space(in);
  long long v = -1;
  if (!(in >> v) || v < 0) {
    throw std::runtime_error("malformed PNM header: " + path);
  }
  return static_cast<std::size_t>(v);
}

inline Image load_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open image: " + path);
  }
  char magic[2] = {0, 0};
  in.read(magic, 2);
  const bool color = magic[0] == 'P' && magic[1] == '6';
  const bool gray = magic[0] == 'P' && magic[1] == '5';
  if (!color && !gray) {
    throw std::runtime_error("unsupported image format: " + path);
  }
  const std::size_t width = read_pnm_int(in, path);
  const std::size_t height = read_pnm_int(in, path);
  const std::size_t maxval = read_pnm_int(in, path);
  if (width == 0 || height == 0) {
    throw std::runtime_error("zero image dimensions: " + path);
  }
  if (maxval != 255) {
    throw std::runtime_error("only 8-bit PNM (maxval 255) is supported: " + path);
  }
  in.get();  // single whitespace before raster
  const std::size_t channels = color ? 3 : 1;
  std::vector<std::uint8_t> bytes(width * height * channels);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw std::runtime_error("truncated PNM raster: " + path);
  }
  return from_bytes(height, width, channels, bytes);
}

inline Image load_png(const std::string& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw std::runtime_error("cannot read PNG " + path + ": " + png.message);
  }
  const bool gray = (png.format & PNG_FORMAT_FLAG_COLOR) == 0;
  png.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (png.width == 0 || png.height == 0) {
    png_image_free(&png);
    throw std::runtime_error("zero image dimensions: " + path);
  }
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, bytes.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw std::runtime_error("cannot decode PNG " + path + ": " + msg);
  }
  return from_bytes(png.height, png.width, gray ? 1 : 3, bytes);
}

inline std::string lower_extension(const std::string& path) {
  std::string ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

}  // namespace detail

/// Loads PNG (8-bit gray/RGB, alpha dropped) or binary PNM (P6 color, P5 gray).
inline Image load_image(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) {
    throw std::runtime_error("cannot open image: " + path);
  }
  std::array<unsigned char, 8> sig{};
  probe.read(reinterpret_cast<char*>(sig.data()), sig.size());
  const auto got = static_cast<std::size_t>(probe.gcount());
  probe.close();
  if (got == 8 && png_sig_cmp(sig.data(), 0, 8) == 0) {
    return detail::load_png(path);
  }
  if (got >= 2 && sig[0] == 'P' && (sig[1] == '6' || sig[1] == '5')) {
    return detail::load_pnm(path);
  }
  throw std::runtime_error("unsupported image format: " + path);
}

/**
 * @brief Writes an 8-bit file chosen by extension: .png, .ppm (P6, color) or .pgm (P5, gray).
 *
 * Samples are quantized as round(v*255) with ties away from zero.
 */
inline void save_image(const Image& img, const std::string& path) {
  if (img.empty()) {
    throw std::invalid_argument("save_image: empty image");
  }
  const std::string ext = detail::lower_extension(path);
  const std::vector<std::uint8_t> bytes = to_bytes(img);
  if (ext == ".png") {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(img.width());
    png.height = static_cast<png_uint_32>(img.height());
    png.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&png, path.c_str(), 0, bytes.data(), 0, nullptr)) {
      std::string msg = png.message;
      png_image_free(&png);
      throw std::runtime_error("cannot write PNG " + path + ": " + msg);
    }
    return;
  }
  if (ext != ".ppm" && ext != ".pgm") {
    throw std::invalid_argument("save_image: unsupported extension '" + ext + "'");
  }
  const bool color = img.channels() == 3;
  if (color != (ext == ".ppm")) {
    throw std::invalid_argument("save_image: .ppm needs 3 channels and .pgm needs 1");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write image: " + path);
  }
  out << (color ? "P6" : "P5") << '\n' << img.width() << ' ' << img.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw std::runtime_error("failed writing image: " + path);
  }
}

/// Per-pixel minimum over channels; single-channel output.
inline Image channel_min(const Image& img) {
  const std::size_t n = img.pixels();
  std::vector<float> out(img.plane(0), img.plane(0) + n);
  for (std::size_t c = 1; c < img.channels(); ++c) {
    const float* p = img.plane(c);
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = std::min(out[i], p[i]);
    }
  }
  return Image(img.height(), img.width(), 1, std::move(out));
}

namespace detail {

// Sliding minimum along one axis with replicate-edge borders.
inline void min_1d(const float* in, float* out, std::size_t n, std::size_t stride, std::size_t radius) {
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= radius ? i - radius : 0;
    const std::size_t hi = std::min(n - 1, i + radius);
    float m = in[lo * stride];
    for (std::size_t j = lo + 1; j <= hi; ++j) {
      m = std::min(m, in[j * stride]);
    }
    out[i * stride] = m;
  }
}

}  // namespace detail

namespace detail {

inline void check_patch(int patch) {
  if (patch < 1 || patch % 2 == 0) {
    throw std::invalid_argument("min_filter: patch must be odd and >= 1");
  }
}

// Separable window minimum over an unconstrained h x w plane.
inline std::vector<float> min_filter_plane(const float* src, std::size_t h, std::size_t w, int patch) {
  check_patch(patch);
  const auto radius = static_cast<std::size_t>(patch / 2);
  std::vector<float> out(src, src + h * w);
  if (radius == 0) {
    return out;
  }
  std::vector<float> rows(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    min_1d(src + y * w, rows.data() + y * w, w, 1, radius);
  }
  for (std::size_t x = 0; x < w; ++x) {
    min_1d(rows.data() + x, out.data() + x, h, w, radius);
  }
  return out;
}

}  // namespace detail

/**
 * @brief Square-window minimum of a single-channel image.
 *
 * Borders replicate the edge pixel, which for a minimum is the same as
 * clamping the window to the image. Computed separably (rows, then columns).
 */
inline Image min_filter(const Image& img, int patch) {
  detail::check_patch(patch);
  if (img.channels() != 1) {
    throw std::invalid_argument("min_filter: single-channel input required");
  }
  return Image(img.height(), img.width(), 1, detail::min_filter_plane(img.plane(0), img.height(), img.width(), patch));
}

enum class GeomOp { identity, rot90, rot180, rot270, hflip };

inline const char* to_string(GeomOp op) {
  switch (op) {
    case GeomOp::identity: return "identity";
    case GeomOp::rot90: return "rot90";
    case GeomOp::rot180: return "rot180";
    case GeomOp::rot270: return "rot270";
    case GeomOp::hflip: return "hflip";
  }
  return "?";
}

struct CropWindow {
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t size = 0;
};

inline Image crop(const Image& img, const CropWindow& win) {
  if (win.size == 0 || win.x + win.size > img.width() || win.y + win.size > img.height()) {
    throw std::out_of_range("crop window outside image");
  }
  std::vector<float> out(win.size * win.size * img.channels());
  for (std::size_t c = 0; c < img.channels(); ++c) {
    for (std::size_t y = 0; y < win.size; ++y) {
      const float* row = img.plane(c) + (win.y + y) * img.width() + win.x;
      std::copy(row, row + win.size, out.begin() + static_cast<std::ptrdiff_t>((c * win.size + y) * win.size));
    }
  }
  return Image(win.size, win.size, img.channels(), std::move(out));
}

/// Rotations are counter-clockwise; no resampling, samples are only permuted.
inline Image apply_geom(const Image& img, GeomOp op) {
  if (op == GeomOp::identity) {
    return img;
  }
  const std::size_t h = img.height();
  const std::size_t w = img.width();
  const bool swap = op == GeomOp::rot90 || op == GeomOp::rot270;
  const std::size_t oh = swap ? w : h;
  const std::size_t ow = swap ? h : w;
  std::vector<float> out(img.size());
  for (std::size_t c = 0; c < img.channels(); ++c) {
    const float* src = img.plane(c);
    float* dst = out.data() + c * oh * ow;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        std::size_t sy = y;
        std::size_t sx = x;
        switch (op) {
          case GeomOp::rot90: sy = x; sx = w - 1 - y; break;
          case GeomOp::rot180: sy = h - 1 - y; sx = w - 1 - x; break;
          case GeomOp::rot270: sy = h - 1 - x; sx = y; break;
          case GeomOp::hflip: sx = w - 1 - x; break;
          case GeomOp::identity: break;
        }
        dst[y * ow + x] = src[sy * w + sx];
      }
    }
  }
  return Image(oh, ow, img.channels(), std::move(out));
}

/// Crops both images with the same window, then applies the same geometric op.
inline std::pair<Image, Image> augment(const std::pair<Image, Image>& pair, GeomOp op, const CropWindow& win) {
  if (pair.first.height() != pair.second.height() || pair.first.width() != pair.second.width()) {
    throw std::invalid_argument("augment: images of a pair differ in size");
  }
  return {apply_geom(crop(pair.first, win), op), apply_geom(crop(pair.second, win), op)};
}

/// Reflect-pads the bottom/right edge so both dimensions are multiples of `multiple`.
inline Image pad_reflect_to_multiple(const Image& img, std::size_t multiple) {
  const std::size_t h = img.height();
  const std::size_t w = img.width();
  const std::size_t ph = (h + multiple - 1) / multiple * multiple;
  const std::size_t pw = (w + multiple - 1) / multiple * multiple;
  if (ph == h && pw == w) {
    return img;
  }
  if (ph - h >= h || pw - w >= w) {
    throw std::invalid_argument("pad_reflect_to_multiple: image too small to reflect");
  }
  auto reflect = [](std::size_t i, std::size_t n) { return i < n ? i : 2 * n - 2 - i; };
  std::vector<float> out(ph * pw * img.channels());
  for (std::size_t c = 0; c < img.channels(); ++c) {
    for (std::size_t y = 0; y < ph; ++y) {
      for (std::size_t x = 0; x < pw; ++x) {
        out[(c * ph + y) * pw + x] = img.at(c, reflect(y, h), reflect(x, w));
      }
    }
  }
  return Image(ph, pw, img.channels(), std::move(out));
}

inline Image crop_top_left(const Image& img, std::size_t height, std::size_t width) {
  if (height > img.height() || width > img.width()) {
    throw std::out_of_range("crop_top_left: target larger than image");
  }
  std::vector<float> out(height * width * img.channels());
  for (std::size_t c = 0; c < img.channels(); ++c) {
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        out[(c * height + y) * width + x] = img.at(c, y, x);
      }
    }
  }
  return Image(height, width, img.channels(), std::move(out));
}

}  // namespace hazeforge
