#pragma once

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>

#include "faceaudit/image.hpp"

namespace test_helpers {

// Unique scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag = "scratch") {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("faceaudit_" + tag + "_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline faceaudit::RasterImage random_rgb_image(int w, int h, std::mt19937& rng) {
  std::uniform_int_distribution<int> byte(0, 255);
  faceaudit::RasterImage img(w, h);
  for (auto& p : img.pixels())
    p = {static_cast<std::uint8_t>(byte(rng)), static_cast<std::uint8_t>(byte(rng)),
         static_cast<std::uint8_t>(byte(rng))};
  return img;
}

// Image whose every pixel passes the default skin rule, luminance random
// within [y_lo, y_hi].
inline faceaudit::YCrCbImage random_skin_image(int w, int h, std::mt19937& rng, int y_lo = 0,
                                               int y_hi = 255) {
  std::uniform_int_distribution<int> y(y_lo, y_hi);
  std::uniform_int_distribution<int> cr(90, 115);
  std::uniform_int_distribution<int> cb(140, 195);
  faceaudit::YCrCbImage img(w, h);
  for (auto& p : img.pixels())
    p = {static_cast<std::uint8_t>(y(rng)), static_cast<std::uint8_t>(cr(rng)),
         static_cast<std::uint8_t>(cb(rng))};
  return img;
}

}  // namespace test_helpers
