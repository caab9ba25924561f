#pragma once

#include <array>
#include <cassert>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace faceaudit {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

struct Ycc {
  std::uint8_t y = 0, cr = 0, cb = 0;
  bool operator==(const Ycc&) const = default;
};

/// Row-major 8-bit RGB pixel grid.
class RasterImage {
 public:
  RasterImage() = default;
  RasterImage(int width, int height, Rgb fill = {});
  RasterImage(int width, int height, std::vector<Rgb> pixels);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t pixel_count() const { return pixels_.size(); }

  Rgb& at(int x, int y) {
    assert(x >= 0 && x < width_ && y >= 0 && y < height_);
    return pixels_[static_cast<std::size_t>(y) * width_ + x];
  }
  const Rgb& at(int x, int y) const {
    assert(x >= 0 && x < width_ && y >= 0 && y < height_);
    return pixels_[static_cast<std::size_t>(y) * width_ + x];
  }

  std::vector<Rgb>& pixels() { return pixels_; }
  const std::vector<Rgb>& pixels() const { return pixels_; }

  bool operator==(const RasterImage&) const = default;

 private:
  int width_ = 0, height_ = 0;
  std::vector<Rgb> pixels_;
};

/// Row-major 8-bit YCrCb pixel grid (Y luminance, Cr/Cb chrominance).
class YCrCbImage {
 public:
  YCrCbImage() = default;
  YCrCbImage(int width, int height, Ycc fill = {});
  YCrCbImage(int width, int height, std::vector<Ycc> pixels);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t pixel_count() const { return pixels_.size(); }

  Ycc& at(int x, int y) {
    assert(x >= 0 && x < width_ && y >= 0 && y < height_);
    return pixels_[static_cast<std::size_t>(y) * width_ + x];
  }
  const Ycc& at(int x, int y) const {
    assert(x >= 0 && x < width_ && y >= 0 && y < height_);
    return pixels_[static_cast<std::size_t>(y) * width_ + x];
  }

  std::vector<Ycc>& pixels() { return pixels_; }
  const std::vector<Ycc>& pixels() const { return pixels_; }

  bool operator==(const YCrCbImage&) const = default;

 private:
  int width_ = 0, height_ = 0;
  std::vector<Ycc> pixels_;
};

/// Chrominance-box skin detector. Both bounds of each range are inclusive.
/// Defaults are Cr in [90,115], Cb in [140,195].
struct SkinRule {
  int cr_min = 90;
  int cr_max = 115;
  int cb_min = 140;
  int cb_max = 195;

  void validate() const;
  bool matches(const Ycc& p) const {
    return p.cr >= cr_min && p.cr <= cr_max && p.cb >= cb_min && p.cb <= cb_max;
  }
  bool operator==(const SkinRule&) const = default;
};

/// Boolean skin-pixel indicator, same dimensions as its source image.
class SkinMask {
 public:
  SkinMask() = default;
  SkinMask(int width, int height, std::uint8_t fill = 0);

  int width() const { return width_; }
  int height() const { return height_; }

  std::uint8_t& at(int x, int y) {
    assert(x >= 0 && x < width_ && y >= 0 && y < height_);
    return bits_[static_cast<std::size_t>(y) * width_ + x];
  }
  std::uint8_t at(int x, int y) const {
    assert(x >= 0 && x < width_ && y >= 0 && y < height_);
    return bits_[static_cast<std::size_t>(y) * width_ + x];
  }

  std::vector<std::uint8_t>& bits() { return bits_; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  std::size_t popcount() const;
  bool empty() const { return popcount() == 0; }

  bool operator==(const SkinMask&) const = default;

 private:
  int width_ = 0, height_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// 256-bin count histogram over the Y channel.
class LuminanceHistogram {
 public:
  LuminanceHistogram() { counts_.fill(0); }

  void add(int y, std::uint64_t n = 1);
  std::uint64_t at(int y) const { return counts_[check_bin(y)]; }
  const std::array<std::uint64_t, 256>& counts() const { return counts_; }
  std::uint64_t total() const { return total_; }

  /// Probability mass of bin y; zero histogram yields zero everywhere.
  double normalized(int y) const;
  /// Count-weighted mean Y.
  double mean() const;

  bool operator==(const LuminanceHistogram&) const = default;

 private:
  static int check_bin(int y);
  std::array<std::uint64_t, 256> counts_{};
  std::uint64_t total_ = 0;
};

/// Aggregated Cr and Cb counts over skin pixels.
class ChromaHistogram {
 public:
  ChromaHistogram() {
    cr_counts_.fill(0);
    cb_counts_.fill(0);
  }

  void add(const YCrCbImage& img, const SkinMask& mask);

  const std::array<std::uint64_t, 256>& cr_counts() const { return cr_counts_; }
  const std::array<std::uint64_t, 256>& cb_counts() const { return cb_counts_; }
  std::uint64_t total() const { return total_; }

 private:
  std::array<std::uint64_t, 256> cr_counts_{};
  std::array<std::uint64_t, 256> cb_counts_{};
  std::uint64_t total_ = 0;
};

struct CropBox {
  int x = 0, y = 0;
  int width = 0, height = 0;
  bool operator==(const CropBox&) const = default;
};

struct EmptyMaskError : std::runtime_error {
  EmptyMaskError() : std::runtime_error("skin mask has no set pixels") {}
};
struct NoSkinPixelsError : std::runtime_error {
  NoSkinPixelsError() : std::runtime_error("no skin pixels in any input mask") {}
};
struct EmptyHistogramError : std::runtime_error {
  EmptyHistogramError() : std::runtime_error("histogram has zero total mass") {}
};
struct EmptyCropError : std::runtime_error {
  EmptyCropError() : std::runtime_error("crop box does not intersect the image") {}
};

/// Full-range BT.601 forward transform, rounded half-up, clipped to [0,255].
YCrCbImage rgb_to_ycrcb(const RasterImage& img);

/// Inverse of rgb_to_ycrcb (same rounding and clipping).
RasterImage ycrcb_to_rgb(const YCrCbImage& img);

/// Single-pixel forms of the BT.601 transforms.
Ycc rgb_to_ycrcb(const Rgb& p);
Rgb ycrcb_to_rgb(const Ycc& p);

/// Marks every pixel whose chrominance falls inside the rule box.
SkinMask detect_skin(const YCrCbImage& img, const SkinRule& rule = {});

/// Histogram of Y over masked pixels. Throws EmptyMaskError when the mask
/// has no set pixels.
LuminanceHistogram skin_luminance_histogram(const YCrCbImage& img, const SkinMask& mask);

/// Aggregates Cr/Cb counts over the skin pixels of every image in the list.
/// Throws NoSkinPixelsError when every mask is empty.
ChromaHistogram chroma_histograms(const std::vector<std::pair<YCrCbImage, SkinMask>>& images);

/// Subimage of `box` padded by pad_fraction of the box dimensions on each
/// side, clipped to the image bounds. Throws EmptyCropError when the padded
/// box misses the image entirely.
RasterImage crop_face(const RasterImage& img, const CropBox& box, double pad_fraction = 0.0);

}  // namespace faceaudit
