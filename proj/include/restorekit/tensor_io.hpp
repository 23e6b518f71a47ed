#pragma once

#include <filesystem>
#include <string>

#include "restorekit/image.hpp"

namespace restorekit {

enum class ImageFormat { pgm8, ppm8, raw_f32 };

/// Reads binary PGM (P5), binary PPM (P6) with maxval 255, or the raw float
/// format: ASCII header "IRTF1\n<H> <W> <C>\n" followed by H*W*C little-endian
/// IEEE-754 float32 values, row-major, channel-fastest. 8-bit samples v map
/// to v/255. Throws FormatError (with byte offset) or IoError.
ImageTensor read_image(const std::filesystem::path& path);

/// 8-bit formats store round(clamp(v,0,1)*255) with half-away-from-zero
/// rounding. raw_f32 stores values as float32.
void write_image(const ImageTensor& img, const std::filesystem::path& path, ImageFormat format);

/// Parses "pgm8" | "ppm8" | "raw_f32".
ImageFormat parse_image_format(const std::string& name);

/// pgm8 for one channel, ppm8 for three.
ImageFormat default_8bit_format(const ImageTensor& img);

/// round(clamp(v,0,1)*255).
unsigned char quantize_8bit(double v);

}  // namespace restorekit
