#include "floragan/image_io.hpp"

#include <png.h>
// jpeglib.h needs FILE and size_t declared first.
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>

namespace floragan {

namespace {

bool is_png(std::span<const std::uint8_t> b) {
  static constexpr std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  return b.size() >= 8 && std::memcmp(b.data(), sig, 8) == 0;
}

bool is_jpeg(std::span<const std::uint8_t> b) { return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF; }

ImageTensor from_interleaved(const std::uint8_t* rgb, int width, int height) {
  ImageTensor img{Tensor<float>(3, height, width), ValueRange::raw01};
  constexpr float scale = 1.0f / 255.0f;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const std::uint8_t* p = rgb + (static_cast<std::size_t>(y) * width + x) * 3;
      for (int c = 0; c < 3; ++c) img.pixels(c, y, x) = static_cast<float>(p[c]) * scale;
    }
  return img;
}

ImageTensor decode_png(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw DecodeError(std::string("PNG decode failed: ") + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw DecodeError("PNG decode failed: " + msg);
  }
  return from_interleaved(buffer.data(), static_cast<int>(image.width), static_cast<int>(image.height));
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

void jpeg_silence(j_common_ptr, int) {}

// Runs `body` with a decompressor reading `bytes`; libjpeg errors become DecodeError.
template <typename Body>
void with_jpeg(std::span<const std::uint8_t> bytes, Body&& body) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  err.base.emit_message = jpeg_silence;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw DecodeError(std::string("JPEG decode failed: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  body(cinfo);
  jpeg_destroy_decompress(&cinfo);
}

ImageTensor decode_jpeg(std::span<const std::uint8_t> bytes) {
  std::vector<std::uint8_t> buffer;
  int width = 0, height = 0;
  with_jpeg(bytes, [&](jpeg_decompress_struct& cinfo) {
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    width = static_cast<int>(cinfo.output_width);
    height = static_cast<int>(cinfo.output_height);
    const std::size_t stride = static_cast<std::size_t>(width) * 3;
    buffer.resize(stride * height);
    while (cinfo.output_scanline < cinfo.output_height) {
      JSAMPROW row = buffer.data() + stride * cinfo.output_scanline;
      jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
  });
  return from_interleaved(buffer.data(), width, height);
}

}  // namespace

ImageTensor decode_image(std::span<const std::uint8_t> bytes) {
  if (is_png(bytes)) return decode_png(bytes);
  if (is_jpeg(bytes)) return decode_jpeg(bytes);
  throw DecodeError("unsupported image format (expected PNG or JPEG)");
}

ImageSize probe_image_size(std::span<const std::uint8_t> bytes) {
  if (is_png(bytes)) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
      throw DecodeError(std::string("PNG header unreadable: ") + image.message);
    ImageSize s{static_cast<int>(image.width), static_cast<int>(image.height)};
    png_image_free(&image);
    return s;
  }
  if (is_jpeg(bytes)) {
    ImageSize s;
    with_jpeg(bytes, [&](jpeg_decompress_struct& cinfo) {
      s = {static_cast<int>(cinfo.image_width), static_cast<int>(cinfo.image_height)};
    });
    return s;
  }
  throw DecodeError("unsupported image format (expected PNG or JPEG)");
}

Bytes encode_png(const ImageTensor& image) {
  const Shape s = image.shape();
  if (s.channels != 3 || !s.valid()) throw ShapeError("encode_png expects a 3-channel image, got " + to_string(s));
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(s.plane()) * 3);
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(image.pixels(c, y, x), 0.0f, 1.0f);
        rgb[(static_cast<std::size_t>(y) * s.width + x) * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(s.width);
  png.height = static_cast<png_uint_32>(s.height);
  png.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, rgb.data(), 0, nullptr))
    throw Error(std::string("PNG encode failed: ") + png.message);
  Bytes out(size);
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, rgb.data(), 0, nullptr))
    throw Error(std::string("PNG encode failed: ") + png.message);
  out.resize(size);
  return out;
}

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path);
}

ImageTensor read_image(const std::string& path) {
  const Bytes bytes = read_file(path);
  try {
    return decode_image(bytes);
  } catch (const DecodeError& e) {
    throw DecodeError(path + ": " + e.what());
  }
}

void write_png(const std::string& path, const ImageTensor& image) { write_file(path, encode_png(image)); }

}  // namespace floragan
