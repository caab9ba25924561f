#include "faceaudit/image.hpp"

#include <algorithm>
#include <cmath>

namespace faceaudit {

namespace {

void check_dims(int width, int height) {
  if (width < 0 || height < 0)
    throw std::invalid_argument("image dimensions must be nonnegative");
}

std::uint8_t clip_round(double v) {
  // Round half up, then clip to [0,255].
  double r = std::floor(v + 0.5);
  return static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
}

}  // namespace

RasterImage::RasterImage(int width, int height, Rgb fill)
    : width_(width), height_(height) {
  check_dims(width, height);
  pixels_.assign(static_cast<std::size_t>(width) * height, fill);
}

RasterImage::RasterImage(int width, int height, std::vector<Rgb> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  check_dims(width, height);
  if (pixels_.size() != static_cast<std::size_t>(width) * height)
    throw std::invalid_argument("pixel buffer size does not match dimensions");
}

YCrCbImage::YCrCbImage(int width, int height, Ycc fill)
    : width_(width), height_(height) {
  check_dims(width, height);
  pixels_.assign(static_cast<std::size_t>(width) * height, fill);
}

YCrCbImage::YCrCbImage(int width, int height, std::vector<Ycc> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  check_dims(width, height);
  if (pixels_.size() != static_cast<std::size_t>(width) * height)
    throw std::invalid_argument("pixel buffer size does not match dimensions");
}

void SkinRule::validate() const {
  auto in_range = [](int v) { return v >= 0 && v <= 255; };
  if (!in_range(cr_min) || !in_range(cr_max) || !in_range(cb_min) || !in_range(cb_max))
    throw std::invalid_argument("skin rule bounds must lie in [0,255]");
  if (cr_min > cr_max || cb_min > cb_max)
    throw std::invalid_argument("skin rule bounds must satisfy min <= max");
}

SkinMask::SkinMask(int width, int height, std::uint8_t fill)
    : width_(width), height_(height) {
  check_dims(width, height);
  bits_.assign(static_cast<std::size_t>(width) * height, fill);
}

std::size_t SkinMask::popcount() const {
  return static_cast<std::size_t>(
      std::count_if(bits_.begin(), bits_.end(), [](std::uint8_t b) { return b != 0; }));
}

int LuminanceHistogram::check_bin(int y) {
  if (y < 0 || y > 255) throw std::out_of_range("luminance bin outside [0,255]");
  return y;
}

void LuminanceHistogram::add(int y, std::uint64_t n) {
  counts_[check_bin(y)] += n;
  total_ += n;
}

double LuminanceHistogram::normalized(int y) const {
  if (total_ == 0) return 0.0;
  return static_cast<double>(counts_[check_bin(y)]) / static_cast<double>(total_);
}

double LuminanceHistogram::mean() const {
  if (total_ == 0) throw EmptyHistogramError();
  double acc = 0.0;
  for (int y = 0; y < 256; ++y) acc += static_cast<double>(counts_[y]) * y;
  return acc / static_cast<double>(total_);
}

void ChromaHistogram::add(const YCrCbImage& img, const SkinMask& mask) {
  if (img.width() != mask.width() || img.height() != mask.height())
    throw std::invalid_argument("mask dimensions do not match image");
  const auto& px = img.pixels();
  const auto& bits = mask.bits();
  for (std::size_t i = 0; i < px.size(); ++i) {
    if (!bits[i]) continue;
    ++cr_counts_[px[i].cr];
    ++cb_counts_[px[i].cb];
    ++total_;
  }
}

Ycc rgb_to_ycrcb(const Rgb& p) {
  const double r = p.r, g = p.g, b = p.b;
  Ycc out;
  out.y = clip_round(0.299 * r + 0.587 * g + 0.114 * b);
  out.cb = clip_round(128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b);
  out.cr = clip_round(128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b);
  return out;
}

Rgb ycrcb_to_rgb(const Ycc& p) {
  const double y = p.y, cr = p.cr - 128.0, cb = p.cb - 128.0;
  Rgb out;
  out.r = clip_round(y + 1.402 * cr);
  out.g = clip_round(y - 0.344136 * cb - 0.714136 * cr);
  out.b = clip_round(y + 1.772 * cb);
  return out;
}

YCrCbImage rgb_to_ycrcb(const RasterImage& img) {
  YCrCbImage out(img.width(), img.height());
  const auto& src = img.pixels();
  auto& dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = rgb_to_ycrcb(src[i]);
  return out;
}

RasterImage ycrcb_to_rgb(const YCrCbImage& img) {
  RasterImage out(img.width(), img.height());
  const auto& src = img.pixels();
  auto& dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = ycrcb_to_rgb(src[i]);
  return out;
}

SkinMask detect_skin(const YCrCbImage& img, const SkinRule& rule) {
  rule.validate();
  SkinMask mask(img.width(), img.height());
  const auto& px = img.pixels();
  auto& bits = mask.bits();
  for (std::size_t i = 0; i < px.size(); ++i) bits[i] = rule.matches(px[i]) ? 1 : 0;
  return mask;
}

LuminanceHistogram skin_luminance_histogram(const YCrCbImage& img, const SkinMask& mask) {
  if (img.width() != mask.width() || img.height() != mask.height())
    throw std::invalid_argument("mask dimensions do not match image");
  LuminanceHistogram hist;
  const auto& px = img.pixels();
  const auto& bits = mask.bits();
  for (std::size_t i = 0; i < px.size(); ++i)
    if (bits[i]) hist.add(px[i].y);
  if (hist.total() == 0) throw EmptyMaskError();
  return hist;
}

ChromaHistogram chroma_histograms(const std::vector<std::pair<YCrCbImage, SkinMask>>& images) {
  if (images.empty()) throw std::invalid_argument("chroma_histograms needs at least one image");
  ChromaHistogram hist;
  for (const auto& [img, mask] : images) hist.add(img, mask);
  if (hist.total() == 0) throw NoSkinPixelsError();
  return hist;
}

RasterImage crop_face(const RasterImage& img, const CropBox& box, double pad_fraction) {
  if (pad_fraction < 0.0) throw std::invalid_argument("pad_fraction must be nonnegative");
  if (box.width <= 0 || box.height <= 0)
    throw std::invalid_argument("crop box must have positive dimensions");

  const int pad_w = static_cast<int>(std::llround(pad_fraction * box.width));
  const int pad_h = static_cast<int>(std::llround(pad_fraction * box.height));
  const int x0 = std::max(box.x - pad_w, 0);
  const int y0 = std::max(box.y - pad_h, 0);
  const int x1 = std::min(box.x + box.width + pad_w, img.width());
  const int y1 = std::min(box.y + box.height + pad_h, img.height());
  if (x0 >= x1 || y0 >= y1) throw EmptyCropError();

  RasterImage out(x1 - x0, y1 - y0);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) out.at(x - x0, y - y0) = img.at(x, y);
  return out;
}

}  // namespace faceaudit
