#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "genmatte/image.hpp"

namespace genmatte {

using Bytes = std::vector<std::uint8_t>;

/// Sniffs PNG (8/16-bit, gray or RGB; palette and low bit depths are expanded,
/// alpha channels dropped) or binary PGM/PPM (P5/P6, maxval up to 65535).
ImageBuffer decode_image(std::span<const std::uint8_t> bytes);
ImageBuffer load_image(const std::string& path);

/// bit_depth 8 or 16; gray for 1 channel, RGB for 3.
Bytes encode_png(const ImageBuffer& img, int bit_depth = 16);
/// P5 / P6 with maxval 255 (8) or 65535 (16).
Bytes encode_pnm(const ImageBuffer& img, int bit_depth = 16);

/// Format chosen by extension: .png, .pgm, .ppm (.pnm picks by channel count).
void save_image(const ImageBuffer& img, const std::string& path, int bit_depth = 16);

Bytes read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Strict: standard alphabet, padded, no whitespace.
Bytes base64_decode(std::string_view text);

}  // namespace genmatte
