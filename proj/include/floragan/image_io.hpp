#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "floragan/tensor.hpp"

namespace floragan {

using Bytes = std::vector<std::uint8_t>;

/// Decodes PNG or JPEG bytes into a 3-channel raw [0,1] image. Gray inputs are
/// expanded to RGB, alpha is dropped. Throws DecodeError on anything else.
ImageTensor decode_image(std::span<const std::uint8_t> bytes);

/// Width and height from the header only.
struct ImageSize {
  int width = 0;
  int height = 0;
};
ImageSize probe_image_size(std::span<const std::uint8_t> bytes);

/// 8-bit RGB PNG; values are clamped to [0,1] and rounded to the nearest level.
Bytes encode_png(const ImageTensor& image);

Bytes read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

ImageTensor read_image(const std::string& path);
void write_png(const std::string& path, const ImageTensor& image);

}  // namespace floragan
