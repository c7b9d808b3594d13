#include "capri/dataset/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <random>

#include "capri/error.hpp"

namespace capri::data {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  return FilePtr(std::fopen(path.c_str(), mode));
}

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

void write_png_impl(const std::filesystem::path& path, int width, int height, int bit_depth,
                    int color_type, const std::vector<png_bytep>& rows) {
  FilePtr fp = open_file(path, "wb");
  if (!fp) throw Error(ErrorCode::Io, "cannot write " + path.string());
  std::string message;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_error_fn,
                                            png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::Io, "png allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::Io, "png write failed for " + path.string() + ": " + message);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);  // rows are host-order (little-endian)
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

static RawImage read_png_stream(FilePtr fp, const std::string& name) {

  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw Error(ErrorCode::UndecodableImage, "not a PNG: " + name);
  }

  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_error_fn,
                                           png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::UndecodableImage, "png allocation failed");
  }

  RawImage out;
  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::UndecodableImage, name + ": " + message);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
      color == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  if (depth == 16) png_set_swap(png);
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  depth = png_get_bit_depth(png, info);
  out.bit_depth = depth == 16 ? 16 : 8;
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  buffer.resize(row_bytes * out.height);
  rows.resize(out.height);
  for (int y = 0; y < out.height; ++y) rows[y] = buffer.data() + row_bytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  out.pixels.resize(static_cast<std::size_t>(out.width) * out.height);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      std::uint16_t value;
      if (out.bit_depth == 16) {
        std::memcpy(&value, rows[y] + 2 * x, 2);
      } else {
        value = rows[y][x];
      }
      out.pixels[static_cast<std::size_t>(y) * out.width + x] = value;
    }
  }
  return out;
}

RawImage read_png(const std::filesystem::path& path) {
  FilePtr fp = open_file(path, "rb");
  if (!fp) throw Error(ErrorCode::UndecodableImage, "cannot open " + path.string());
  return read_png_stream(std::move(fp), path.string());
}

RawImage decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw Error(ErrorCode::UndecodableImage, "empty PNG buffer");
  FilePtr fp(fmemopen(const_cast<std::uint8_t*>(bytes.data()), bytes.size(), "rb"));
  if (!fp) throw Error(ErrorCode::UndecodableImage, "cannot open PNG buffer");
  return read_png_stream(std::move(fp), "<buffer>");
}

void write_png(const std::filesystem::path& path, const RawImage& image) {
  if (image.bit_depth != 8 && image.bit_depth != 16) {
    throw Error(ErrorCode::InvalidArgument, "bit depth must be 8 or 16");
  }
  const std::size_t bpp = image.bit_depth / 8;
  std::vector<png_byte> buffer(image.pixels.size() * bpp);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    if (bpp == 2) {
      std::memcpy(&buffer[2 * i], &image.pixels[i], 2);
    } else {
      buffer[i] = static_cast<png_byte>(image.pixels[i]);
    }
  }
  std::vector<png_bytep> rows(image.height);
  for (int y = 0; y < image.height; ++y) rows[y] = buffer.data() + bpp * image.width * y;
  write_png_impl(path, image.width, image.height, image.bit_depth, PNG_COLOR_TYPE_GRAY, rows);
}

void write_png_rgb(const std::filesystem::path& path, int width, int height,
                   const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3) {
    throw Error(ErrorCode::InvalidArgument, "rgb buffer size mismatch");
  }
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) {
    rows[y] = const_cast<png_bytep>(rgb.data()) + static_cast<std::size_t>(3) * width * y;
  }
  write_png_impl(path, width, height, 8, PNG_COLOR_TYPE_RGB, rows);
}

ImageTensor to_tensor(const RawImage& image) {
  ImageTensor t(image.height, image.width);
  const float scale = 1.0f / static_cast<float>(image.max_value());
  for (std::size_t i = 0; i < image.pixels.size(); ++i) t.values[i] = image.pixels[i] * scale;
  return t;
}

ImageTensor resize_bilinear(const ImageTensor& image, int out_height, int out_width) {
  if (image.height == out_height && image.width == out_width) return image;
  ImageTensor out(out_height, out_width);
  const double sy = static_cast<double>(image.height) / out_height;
  const double sx = static_cast<double>(image.width) / out_width;
  for (int y = 0; y < out_height; ++y) {
    double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_width; ++x) {
      double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      const double top = image.at(y0, x0) * (1 - wx) + image.at(y0, x1) * wx;
      const double bottom = image.at(y1, x0) * (1 - wx) + image.at(y1, x1) * wx;
      out.at(y, x) = static_cast<float>(std::clamp(top * (1 - wy) + bottom * wy, 0.0, 1.0));
    }
  }
  return out;
}

ImageTensor preprocess(const std::filesystem::path& image_file, int target_size) {
  if (target_size <= 0) throw Error(ErrorCode::InvalidArgument, "target size must be positive");
  return resize_bilinear(to_tensor(read_png(image_file)), target_size, target_size);
}

ImageTensor rotate90(const ImageTensor& image, int k) {
  k = ((k % 4) + 4) % 4;
  if (k == 0) return image;
  ImageTensor cur = image;
  for (int step = 0; step < k; ++step) {
    ImageTensor next(cur.width, cur.height);
    // Counter-clockwise: new(y, x) = old(x, W-1-y).
    for (int y = 0; y < next.height; ++y) {
      for (int x = 0; x < next.width; ++x) next.at(y, x) = cur.at(x, cur.width - 1 - y);
    }
    cur = std::move(next);
  }
  return cur;
}

ImageTensor flip_horizontal(const ImageTensor& image) {
  ImageTensor out(image.height, image.width);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) out.at(y, x) = image.at(y, image.width - 1 - x);
  }
  return out;
}

ImageTensor flip_vertical(const ImageTensor& image) {
  ImageTensor out(image.height, image.width);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) out.at(y, x) = image.at(image.height - 1 - y, x);
  }
  return out;
}

Augmentation sample_augmentation(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Augmentation aug;
  aug.quarter_turns = static_cast<int>(rng() % 4);
  aug.flip_h = (rng() & 1u) != 0;
  aug.flip_v = (rng() & 1u) != 0;
  return aug;
}

ImageTensor apply(const ImageTensor& image, const Augmentation& aug) {
  if (aug.is_identity()) return image;
  ImageTensor out = rotate90(image, aug.quarter_turns);
  if (aug.flip_h) out = flip_horizontal(out);
  if (aug.flip_v) out = flip_vertical(out);
  return out;
}

ImageTensor augment(const ImageTensor& image, std::uint64_t seed) {
  return apply(image, sample_augmentation(seed));
}

}  // namespace capri::data
