#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "unwarp/geometry.hpp"
#include "unwarp/raster.hpp"

namespace unwarp {

/// 8-bit PNG (gray, gray+alpha, RGB or RGBA) converted to gray in [0, 1].
Image read_png_gray(const std::filesystem::path& path);
void write_png_gray(const std::filesystem::path& path, const Image& img);

/// 16-bit grayscale PNG, raw values.
Raster<std::uint16_t> read_png16(const std::filesystem::path& path);
void write_png16(const std::filesystem::path& path,
                 const Raster<std::uint16_t>& img);

/// Palette PNG; each label is a palette index.
void write_png_indexed(const std::filesystem::path& path,
                       const Raster<std::uint8_t>& labels);
Raster<std::uint8_t> read_png_indexed(const std::filesystem::path& path);

/// Portable float map, single channel. Rows are stored bottom-to-top; a
/// negative scale marks little-endian data.
DepthMap read_pfm(const std::filesystem::path& path);
void write_pfm(const std::filesystem::path& path, const DepthMap& depth);

/// Depth file by extension: .pfm, or .png with meters = raw / scale.
/// Zero raw PNG values are invalid.
DepthMap read_depth(const std::filesystem::path& path, double png_scale);

Intrinsics read_intrinsics_json(const std::filesystem::path& path);
void write_intrinsics_json(const std::filesystem::path& path,
                           const Intrinsics& K);

}  // namespace unwarp
