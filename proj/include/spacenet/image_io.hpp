#pragma once

// Reading grayscale label images (PNG through libpng, uncompressed BMP by
// hand) and writing gray, RGB and palette PNGs.

#include <png.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "spacenet/grid.hpp"

namespace spacenet {

class IoError : public Error {
 public:
  using Error::Error;
};

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

using RgbImage = Grid<Rgb>;

namespace detail {

inline std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return static_cast<std::uint8_t>((299 * r + 587 * g + 114 * b + 500) / 1000);
}

// Uncompressed BI_RGB bitmaps with 1, 4, 8, 24 or 32 bits per pixel.
inline Grid<std::uint8_t> decode_bmp(const std::vector<unsigned char>& buf, const std::string& name) {
  if (buf.size() < 54 || buf[0] != 'B' || buf[1] != 'M') throw IoError(name + ": not a BMP file");
  const std::uint32_t pixel_offset = le32(&buf[10]);
  const std::uint32_t header_size = le32(&buf[14]);
  const auto width = static_cast<std::int32_t>(le32(&buf[18]));
  auto height = static_cast<std::int32_t>(le32(&buf[22]));
  const std::uint16_t bpp = le16(&buf[28]);
  const std::uint32_t compression = le32(&buf[30]);
  if (compression != 0 && compression != 3)
    throw IoError(name + ": compressed BMP is not supported");
  const bool top_down = height < 0;
  if (top_down) height = -height;
  if (width <= 0 || height <= 0) throw IoError(name + ": invalid BMP dimensions");

  std::vector<std::array<std::uint8_t, 3>> palette;
  if (bpp <= 8) {
    std::uint32_t colors = le32(&buf[46]);
    if (colors == 0) colors = 1u << bpp;
    const std::size_t pal_at = 14 + header_size;
    for (std::uint32_t i = 0; i < colors && pal_at + 4 * i + 3 < buf.size(); ++i) {
      const unsigned char* p = &buf[pal_at + 4 * i];
      palette.push_back({p[2], p[1], p[0]});
    }
  }
  const std::size_t stride = ((static_cast<std::size_t>(width) * bpp + 31) / 32) * 4;
  if (pixel_offset + stride * static_cast<std::size_t>(height) > buf.size())
    throw IoError(name + ": truncated BMP pixel data");

  Grid<std::uint8_t> out(Size{height, width});
  for (int y = 0; y < height; ++y) {
    const int row = top_down ? y : height - 1 - y;
    const unsigned char* line = &buf[pixel_offset + stride * static_cast<std::size_t>(y)];
    for (int x = 0; x < width; ++x) {
      std::uint8_t v = 0;
      switch (bpp) {
        case 1:
        case 4:
        case 8: {
          const int per_byte = 8 / bpp;
          const unsigned byte = line[x / per_byte];
          const int shift = 8 - bpp * (x % per_byte + 1);
          const unsigned idx = (byte >> shift) & ((1u << bpp) - 1);
          v = idx < palette.size() ? luma(palette[idx][0], palette[idx][1], palette[idx][2])
                                   : static_cast<std::uint8_t>(idx);
          break;
        }
        case 24:
        case 32: {
          const unsigned char* p = line + static_cast<std::size_t>(x) * (bpp / 8);
          v = luma(p[2], p[1], p[0]);
          break;
        }
        default:
          throw IoError(name + ": unsupported BMP bit depth " + std::to_string(bpp));
      }
      out(row, x) = v;
    }
  }
  return out;
}

inline Grid<std::uint8_t> decode_png_gray(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str()))
    throw IoError(path.string() + ": " + image.message);
  image.format = PNG_FORMAT_GRAY;
  Grid<std::uint8_t> out(Size{static_cast<int>(image.height), static_cast<int>(image.width)});
  if (!png_image_finish_read(&image, nullptr, out.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw IoError(path.string() + ": " + msg);
  }
  return out;
}

}  // namespace detail

/// Load a PNG or BMP file as 8-bit grayscale.
inline Grid<std::uint8_t> read_gray_image(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (ext == ".bmp") return detail::decode_bmp(detail::slurp(path), path.string());
  if (ext == ".png") return detail::decode_png_gray(path);
  throw IoError(path.string() + ": unsupported image format (expected .png or .bmp)");
}

inline bool is_supported_image(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return ext == ".png" || ext == ".bmp";
}

inline void write_gray_png(const std::filesystem::path& path, const Grid<std::uint8_t>& img) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, img.data(), 0, nullptr))
    throw IoError(path.string() + ": " + image.message);
}

inline void write_rgb_png(const std::filesystem::path& path, const RgbImage& img) {
  static_assert(sizeof(Rgb) == 3);
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, img.data(), 0, nullptr))
    throw IoError(path.string() + ": " + image.message);
}

/// Write an indexed-colour PNG; each pixel value is a palette index.
inline void write_indexed_png(const std::filesystem::path& path, const Grid<std::uint8_t>& indices,
                              const std::vector<Rgb>& palette) {
  if (palette.empty() || palette.size() > 256) throw IoError("palette must hold 1..256 entries");
  for (auto v : indices)
    if (v >= palette.size()) throw IoError("pixel index " + std::to_string(v) + " outside palette");
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(indices.width());
  image.height = static_cast<png_uint_32>(indices.height());
  image.format = PNG_FORMAT_RGB_COLORMAP;
  image.colormap_entries = static_cast<png_uint_32>(palette.size());
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, indices.data(), 0,
                               palette.data()))
    throw IoError(path.string() + ": " + image.message);
}

/// Read the palette indices of an 8-bit colormapped PNG (no colour expansion).
inline Grid<std::uint8_t> read_png_indices(const std::filesystem::path& path) {
  FILE* fp = std::fopen(path.string().c_str(), "rb");
  if (!fp) throw IoError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError(path.string() + ": libpng read failure");
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  const auto w = png_get_image_width(png, info);
  const auto h = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth < 8) png_set_packing(png);
  png_read_update_info(png, info);
  if (png_get_rowbytes(png, info) != w) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError(path.string() + ": not a single-channel 8-bit image");
  }
  Grid<std::uint8_t> out(Size{static_cast<int>(h), static_cast<int>(w)});
  std::vector<png_bytep> rows(h);
  for (png_uint_32 r = 0; r < h; ++r) rows[r] = out.data() + static_cast<std::size_t>(r) * w;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return out;
}

}  // namespace spacenet
