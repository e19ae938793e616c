#pragma once

#include <filesystem>

#include "sinddm/image.hpp"

namespace sinddm {

/// Reads an 8-bit RGB PNG into [-1, 1]. Grayscale and palette images are
/// expanded to RGB; images with an alpha channel are rejected.
ImageGrid read_png(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG; values are clamped to [-1, 1] and rounded.
void write_png(const std::filesystem::path& path, const ImageGrid& img);

inline double from_u8(int v) { return v / 127.5 - 1.0; }
int to_u8(double v);

}  // namespace sinddm
