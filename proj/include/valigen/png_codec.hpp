#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "valigen/image.hpp"

namespace valigen {

/// Decodes a PNG stream to 8-bit RGB. Grayscale is replicated across channels,
/// palettes are expanded, alpha is discarded. 16-bit streams, corrupt and
/// truncated streams raise DataError.
ImageBuffer decode_image(std::span<const std::uint8_t> bytes);

/// 8-bit RGB, non-interlaced PNG.
std::vector<std::uint8_t> encode_image(const ImageBuffer& img);

}  // namespace valigen
