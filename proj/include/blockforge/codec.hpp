#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "blockforge/raster.hpp"

namespace blockforge {

using Bytes = std::vector<std::uint8_t>;

/// Label maps are stored as 8-bit single-channel PNG: value = class id,
/// 255 = void.
Bytes encode_label_map(const LabelMap& map);

/// Throws kDecodeFailed on anything other than 8-bit grayscale input.
LabelMap decode_label_map(std::span<const std::uint8_t> bytes);

Bytes encode_rgb(const ImageRaster& image);

/// Accepts 8-bit gray, gray+alpha, RGB, RGBA and palette PNGs; alpha is dropped.
ImageRaster decode_rgb(std::span<const std::uint8_t> bytes);

/// 16-bit single-channel PNG.
Bytes encode_gray16(int width, int height, std::span<const std::uint16_t> values);
std::vector<std::uint16_t> decode_gray16(std::span<const std::uint8_t> bytes, int& width,
                                         int& height);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

inline LabelMap load_label_map(const std::filesystem::path& path) {
  return decode_label_map(read_file(path));
}
inline void save_label_map(const std::filesystem::path& path, const LabelMap& map) {
  write_file(path, encode_label_map(map));
}
inline ImageRaster load_image(const std::filesystem::path& path) {
  return decode_rgb(read_file(path));
}

}  // namespace blockforge
