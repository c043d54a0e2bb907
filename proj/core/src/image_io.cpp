#include "unwarp/image_io.hpp"

#include <png.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>

#include "json.hpp"
#include "unwarp/error.hpp"

namespace unwarp {
namespace {

using File = std::unique_ptr<std::FILE, int (*)(std::FILE*)>;

File open_file(const std::filesystem::path& path, const char* mode) {
  File f(std::fopen(path.c_str(), mode), &std::fclose);
  if (!f) fail(ErrorCode::kIo, "cannot open " + path.string());
  return f;
}

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
  auto* what = static_cast<std::string*>(png_get_error_ptr(png));
  if (what) *what = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

struct DecodedPng {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  int color_type = 0;
  std::vector<std::uint8_t> bytes;  // tightly packed rows
};

// `keep_palette` leaves palette indices untouched instead of expanding to RGB.
DecodedPng decode_png(const std::filesystem::path& path, bool keep_palette) {
  File f = open_file(path, "rb");
  std::uint8_t sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    fail(ErrorCode::kIo, "not a PNG file: " + path.string());
  }
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err,
                                           png_error_fn, png_warning_fn);
  png_infop info = png_create_info_struct(png);
  DecodedPng out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::kIo, "corrupt PNG " + path.string() + ": " + err);
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE && !keep_palette) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_PALETTE && keep_palette && depth < 8) png_set_packing(png);
  if (depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  out.color_type = png_get_color_type(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  out.bytes.resize(rowbytes * out.height);
  rows.resize(out.height);
  for (int y = 0; y < out.height; ++y) rows[y] = out.bytes.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void encode_png(const std::filesystem::path& path, int width, int height,
                int bit_depth, int color_type, const std::uint8_t* data,
                std::size_t rowbytes, const std::vector<png_color>* palette) {
  File f = open_file(path, "wb");
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err,
                                            png_error_fn, png_warning_fn);
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows(height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::kIo, "PNG write failed for " + path.string() + ": " + err);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, width, height, bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  if (palette) {
    png_set_PLTE(png, info, palette->data(), static_cast<int>(palette->size()));
  }
  png_write_info(png, info);
  if (bit_depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
  for (int y = 0; y < height; ++y) {
    rows[y] = const_cast<std::uint8_t*>(data + y * rowbytes);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Image read_png_gray(const std::filesystem::path& path) {
  DecodedPng png = decode_png(path, false);
  if (png.bit_depth != 8) {
    fail(ErrorCode::kIo, "expected an 8-bit PNG: " + path.string());
  }
  Image img(png.width, png.height, 0.0f);
  const int c = png.channels;
  for (int y = 0; y < png.height; ++y) {
    const std::uint8_t* row = png.bytes.data() + static_cast<std::size_t>(y) * png.width * c;
    for (int x = 0; x < png.width; ++x) {
      const std::uint8_t* px = row + x * c;
      double v;
      if (c >= 3) {
        v = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
      } else {
        v = px[0];
      }
      img(x, y) = static_cast<float>(v / 255.0);
    }
  }
  return img;
}

void write_png_gray(const std::filesystem::path& path, const Image& img) {
  std::vector<std::uint8_t> bytes(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = std::clamp(static_cast<double>(img[i]), 0.0, 1.0);
    bytes[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  encode_png(path, img.width(), img.height(), 8, PNG_COLOR_TYPE_GRAY,
             bytes.data(), img.width(), nullptr);
}

Raster<std::uint16_t> read_png16(const std::filesystem::path& path) {
  DecodedPng png = decode_png(path, false);
  if (png.bit_depth != 16 || png.channels != 1) {
    fail(ErrorCode::kIo, "expected a 16-bit grayscale PNG: " + path.string());
  }
  Raster<std::uint16_t> out(png.width, png.height, 0);
  std::memcpy(out.data().data(), png.bytes.data(), png.bytes.size());
  return out;
}

void write_png16(const std::filesystem::path& path,
                 const Raster<std::uint16_t>& img) {
  encode_png(path, img.width(), img.height(), 16, PNG_COLOR_TYPE_GRAY,
             reinterpret_cast<const std::uint8_t*>(img.data().data()),
             static_cast<std::size_t>(img.width()) * 2, nullptr);
}

void write_png_indexed(const std::filesystem::path& path,
                       const Raster<std::uint8_t>& labels) {
  // Label 0 is black; the rest cycle through a fixed, distinguishable set.
  static constexpr std::array<std::array<std::uint8_t, 3>, 8> kColors{{
      {230, 25, 75}, {60, 180, 75}, {0, 130, 200}, {255, 225, 25},
      {245, 130, 48}, {145, 30, 180}, {70, 240, 240}, {240, 50, 230}}};
  std::vector<png_color> palette(256);
  palette[0] = {0, 0, 0};
  for (int i = 1; i < 256; ++i) {
    const auto& c = kColors[(i - 1) % kColors.size()];
    palette[i] = {c[0], c[1], c[2]};
  }
  encode_png(path, labels.width(), labels.height(), 8, PNG_COLOR_TYPE_PALETTE,
             labels.data().data(), labels.width(), &palette);
}

Raster<std::uint8_t> read_png_indexed(const std::filesystem::path& path) {
  DecodedPng png = decode_png(path, true);
  if (png.color_type != PNG_COLOR_TYPE_PALETTE || png.channels != 1) {
    fail(ErrorCode::kIo, "expected a palette PNG: " + path.string());
  }
  Raster<std::uint8_t> out(png.width, png.height, 0);
  std::memcpy(out.data().data(), png.bytes.data(), out.size());
  return out;
}

DepthMap read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::string magic;
  int width = 0, height = 0;
  double scale = 0;
  in >> magic >> width >> height >> scale;
  if (!in || magic != "Pf" || width <= 0 || height <= 0 || scale == 0) {
    fail(ErrorCode::kIo, "bad PFM header: " + path.string());
  }
  in.get();  // single whitespace before the raster
  const bool little = scale < 0;
  std::vector<std::uint32_t> raw(static_cast<std::size_t>(width) * height);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size() * 4));
  if (in.gcount() != static_cast<std::streamsize>(raw.size() * 4)) {
    fail(ErrorCode::kIo, "truncated PFM: " + path.string());
  }
  const bool swap = little != (std::endian::native == std::endian::little);
  DepthMap depth(width, height);
  for (int row = 0; row < height; ++row) {
    const int y = height - 1 - row;
    for (int x = 0; x < width; ++x) {
      std::uint32_t bits = raw[static_cast<std::size_t>(row) * width + x];
      if (swap) bits = __builtin_bswap32(bits);
      depth(x, y) = static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  return depth;
}

void write_pfm(const std::filesystem::path& path, const DepthMap& depth) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out << "Pf\n" << depth.width() << ' ' << depth.height() << "\n-1.0\n";
  std::vector<std::uint32_t> raw(static_cast<std::size_t>(depth.width()) * depth.height());
  for (int row = 0; row < depth.height(); ++row) {
    const int y = depth.height() - 1 - row;
    for (int x = 0; x < depth.width(); ++x) {
      const double d = depth(x, y);
      const float v = std::isfinite(d) && d > 0 ? static_cast<float>(d) : 0.0f;
      std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
      if constexpr (std::endian::native != std::endian::little) bits = __builtin_bswap32(bits);
      raw[static_cast<std::size_t>(row) * depth.width() + x] = bits;
    }
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size() * 4));
  if (!out) fail(ErrorCode::kIo, "write failed: " + path.string());
}

DepthMap read_depth(const std::filesystem::path& path, double png_scale) {
  const auto ext = path.extension().string();
  if (ext == ".pfm" || ext == ".PFM") return read_pfm(path);
  if (ext == ".png" || ext == ".PNG") {
    if (!(png_scale > 0)) {
      fail(ErrorCode::kInvalidArgument, "16-bit depth PNG needs a positive scale");
    }
    const auto raw = read_png16(path);
    DepthMap depth(raw.width(), raw.height());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      depth.values[i] = raw[i] == 0 ? 0.0 : raw[i] / png_scale;
    }
    return depth;
  }
  fail(ErrorCode::kIo, "unsupported depth format: " + path.string());
}

Intrinsics read_intrinsics_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    Intrinsics K{j.at("fx").get<double>(), j.at("fy").get<double>(),
                 j.at("cx").get<double>(), j.at("cy").get<double>(),
                 j.at("width").get<int>(), j.at("height").get<int>()};
    K.validate();
    return K;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, path.string() + ": " + e.what());
  }
}

void write_intrinsics_json(const std::filesystem::path& path,
                           const Intrinsics& K) {
  nlohmann::json j{{"fx", K.fx}, {"fy", K.fy}, {"cx", K.cx},
                   {"cy", K.cy}, {"width", K.width}, {"height", K.height}};
  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace unwarp
