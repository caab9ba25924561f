#pragma once

#include <filesystem>
#include <ostream>
#include <string>

#include "faceaudit/image.hpp"

namespace faceaudit {

struct ImageIoError : std::runtime_error {
  explicit ImageIoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Reads an 8-bit image by extension: .ppm/.pgm (P6/P5 binary, P3/P2 ascii)
/// or .png. Grayscale inputs are replicated into all three channels.
RasterImage load_image(const std::filesystem::path& path);

/// Writes an image by extension: .ppm (binary P6) or .png (8-bit RGB).
void save_image(const RasterImage& img, const std::filesystem::path& path);

/// Writes a single-channel 8-bit grid as .pgm (binary P5) or grayscale .png.
void save_gray(int width, int height, const std::vector<std::uint8_t>& values,
               const std::filesystem::path& path);

/// Mask image with skin pixels white (255) and background black.
void save_mask(const SkinMask& mask, const std::filesystem::path& path);

/// Two-column text: value count, one row per bin.
void write_histogram(const LuminanceHistogram& hist, const std::filesystem::path& path);
void write_histogram(const std::array<std::uint64_t, 256>& counts, std::ostream& out);

}  // namespace faceaudit
