#include "faceaudit/image_io.hpp"

#include <png.h>

#include <cctype>
#include <cstdio>
#include <fstream>
#include <memory>

namespace faceaudit {

namespace {

std::string lower_ext(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext;
}

// Skips whitespace and '#' comment lines between PNM header tokens.
int next_pnm_int(std::istream& in, const std::filesystem::path& path) {
  while (true) {
    int c = in.peek();
    if (c == EOF) throw ImageIoError("truncated PNM header: " + path.string());
    if (std::isspace(c)) {
      in.get();
    } else if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else {
      break;
    }
  }
  int value = 0;
  if (!(in >> value)) throw ImageIoError("malformed PNM header: " + path.string());
  return value;
}

RasterImage load_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open image: " + path.string());
  char p = 0, kind = 0;
  in.get(p).get(kind);
  if (p != 'P' || (kind != '2' && kind != '3' && kind != '5' && kind != '6'))
    throw ImageIoError("unsupported PNM type in " + path.string());

  const int width = next_pnm_int(in, path);
  const int height = next_pnm_int(in, path);
  const int maxval = next_pnm_int(in, path);
  if (width <= 0 || height <= 0) throw ImageIoError("bad PNM dimensions: " + path.string());
  if (maxval != 255) throw ImageIoError("only 8-bit PNM supported: " + path.string());

  const bool gray = (kind == '2' || kind == '5');
  const bool binary = (kind == '5' || kind == '6');
  const std::size_t n = static_cast<std::size_t>(width) * height;
  RasterImage img(width, height);

  if (binary) {
    in.get();  // single whitespace byte after maxval
    std::vector<std::uint8_t> raw(n * (gray ? 1 : 3));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size())
      throw ImageIoError("truncated PNM data: " + path.string());
    for (std::size_t i = 0; i < n; ++i) {
      if (gray) {
        img.pixels()[i] = {raw[i], raw[i], raw[i]};
      } else {
        img.pixels()[i] = {raw[3 * i], raw[3 * i + 1], raw[3 * i + 2]};
      }
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      int r = next_pnm_int(in, path);
      int g = gray ? r : next_pnm_int(in, path);
      int b = gray ? r : next_pnm_int(in, path);
      if (r < 0 || r > 255 || g < 0 || g > 255 || b < 0 || b > 255)
        throw ImageIoError("PNM sample out of range: " + path.string());
      img.pixels()[i] = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
                         static_cast<std::uint8_t>(b)};
    }
  }
  return img;
}

void save_ppm(const RasterImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageIoError("cannot write image: " + path.string());
  out << "P6\n" << img.width() << " " << img.height() << "\n255\n";
  std::vector<std::uint8_t> raw;
  raw.reserve(img.pixel_count() * 3);
  for (const Rgb& p : img.pixels()) {
    raw.push_back(p.r);
    raw.push_back(p.g);
    raw.push_back(p.b);
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw ImageIoError("short write: " + path.string());
}

void save_pgm(int width, int height, const std::vector<std::uint8_t>& values,
              const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageIoError("cannot write image: " + path.string());
  out << "P5\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size()));
  if (!out) throw ImageIoError("short write: " + path.string());
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

RasterImage load_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw ImageIoError("cannot open image: " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError("failed to decode PNG: " + path.string());
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  // Normalize everything to 8-bit RGB.
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  RasterImage img(width, height);
  std::vector<std::uint8_t> row(static_cast<std::size_t>(width) * 3);
  for (int y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < width; ++x)
      img.at(x, y) = {row[3 * x], row[3 * x + 1], row[3 * x + 2]};
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void save_png_impl(int width, int height, int channels, const std::vector<std::uint8_t>& raw,
                   const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw ImageIoError("cannot write image: " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError("failed to encode PNG: " + path.string());
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(raw.data() + static_cast<std::size_t>(y) * width * channels));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

RasterImage load_image(const std::filesystem::path& path) {
  const std::string ext = lower_ext(path);
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return load_pnm(path);
  if (ext == ".png") return load_png(path);
  throw ImageIoError("unsupported image extension: " + path.string());
}

void save_image(const RasterImage& img, const std::filesystem::path& path) {
  const std::string ext = lower_ext(path);
  if (ext == ".ppm") {
    save_ppm(img, path);
  } else if (ext == ".png") {
    std::vector<std::uint8_t> raw;
    raw.reserve(img.pixel_count() * 3);
    for (const Rgb& p : img.pixels()) {
      raw.push_back(p.r);
      raw.push_back(p.g);
      raw.push_back(p.b);
    }
    save_png_impl(img.width(), img.height(), 3, raw, path);
  } else {
    throw ImageIoError("unsupported image extension: " + path.string());
  }
}

void save_gray(int width, int height, const std::vector<std::uint8_t>& values,
               const std::filesystem::path& path) {
  if (values.size() != static_cast<std::size_t>(width) * height)
    throw std::invalid_argument("gray buffer size does not match dimensions");
  const std::string ext = lower_ext(path);
  if (ext == ".pgm") {
    save_pgm(width, height, values, path);
  } else if (ext == ".png") {
    save_png_impl(width, height, 1, values, path);
  } else {
    throw ImageIoError("unsupported image extension: " + path.string());
  }
}

void save_mask(const SkinMask& mask, const std::filesystem::path& path) {
  std::vector<std::uint8_t> values(mask.bits().size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = mask.bits()[i] ? 255 : 0;
  save_gray(mask.width(), mask.height(), values, path);
}

void write_histogram(const std::array<std::uint64_t, 256>& counts, std::ostream& out) {
  for (int v = 0; v < 256; ++v) out << v << " " << counts[v] << "\n";
}

void write_histogram(const LuminanceHistogram& hist, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ImageIoError("cannot write histogram: " + path.string());
  write_histogram(hist.counts(), out);
}

}  // namespace faceaudit
