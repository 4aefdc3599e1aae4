#pragma once

#include <filesystem>

#include "unroll/image.hpp"

namespace unroll {

/// Reads an 8-bit binary PGM (P5) or a PNG (converted to gray by luminance).
/// The result has peak 255 and values in [0, 255].
Image load_image(const std::filesystem::path& path);

/// Writes a binary P5 PGM, or PNG when the extension is ".png". Values are
/// mapped to [0, 255] by 255/peak, clamped, and rounded half away from zero.
void save_image(const Image& img, const std::filesystem::path& path);

/// The 8-bit codes save_image would write.
std::vector<unsigned char> quantize8(const Image& img);

}  // namespace unroll
