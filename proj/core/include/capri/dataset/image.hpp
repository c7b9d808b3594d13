#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace capri::data {

/// Single-channel image with intensities in [0,1], row-major.
struct ImageTensor {
  int height = 0;
  int width = 0;
  std::vector<float> values;

  ImageTensor() = default;
  ImageTensor(int h, int w, float fill = 0.0f)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

  float& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }

  bool operator==(const ImageTensor&) const = default;
};

/// Decoded grayscale PNG. `max_value` is 255 or 65535 depending on bit depth.
struct RawImage {
  int height = 0;
  int width = 0;
  int bit_depth = 8;
  std::vector<std::uint16_t> pixels;

  std::uint32_t max_value() const noexcept { return (1u << bit_depth) - 1u; }
};

/// Reads an 8- or 16-bit PNG; colour input is converted to luminance.
/// Throws Error(UndecodableImage).
RawImage read_png(const std::filesystem::path& path);
RawImage decode_png(std::span<const std::uint8_t> bytes);

/// Writes an 8- or 16-bit grayscale PNG.
void write_png(const std::filesystem::path& path, const RawImage& image);

/// Writes an 8-bit RGB PNG from interleaved rgb bytes.
void write_png_rgb(const std::filesystem::path& path, int width, int height,
                   const std::vector<std::uint8_t>& rgb);

ImageTensor to_tensor(const RawImage& image);

/// Bilinear resampling with half-pixel centres and edge clamping.
ImageTensor resize_bilinear(const ImageTensor& image, int out_height, int out_width);

/// read_png → to_tensor → resize_bilinear(target_size × target_size).
ImageTensor preprocess(const std::filesystem::path& image_file, int target_size = 128);

/// Counter-clockwise rotation by k·90°.
ImageTensor rotate90(const ImageTensor& image, int k);
ImageTensor flip_horizontal(const ImageTensor& image);
ImageTensor flip_vertical(const ImageTensor& image);

struct Augmentation {
  int quarter_turns = 0;
  bool flip_h = false;
  bool flip_v = false;

  bool is_identity() const noexcept { return quarter_turns == 0 && !flip_h && !flip_v; }
};

/// Each component is sampled independently: rotation uniform over {0,1,2,3}
/// quarter turns, each flip with probability 1/2.
Augmentation sample_augmentation(std::uint64_t seed);
ImageTensor apply(const ImageTensor& image, const Augmentation& aug);
ImageTensor augment(const ImageTensor& image, std::uint64_t seed);

}  // namespace capri::data
