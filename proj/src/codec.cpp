#include "blockforge/codec.hpp"

#include <png.h>

#include <cstring>
#include <fstream>
#include <iterator>

namespace blockforge {
namespace {

struct ReadCursor {
  std::span<const std::uint8_t> data;
  std::size_t offset = 0;
};

void read_from_memory(png_structp png, png_bytep out, png_size_t length) {
  auto* cursor = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cursor->offset + length > cursor->data.size()) png_error(png, "truncated PNG stream");
  std::memcpy(out, cursor->data.data() + cursor->offset, length);
  cursor->offset += length;
}

void write_to_vector(png_structp png, png_bytep in, png_size_t length) {
  auto* out = static_cast<Bytes*>(png_get_io_ptr(png));
  out->insert(out->end(), in, in + length);
}

void flush_noop(png_structp) {}

[[noreturn]] void on_png_error(png_structp png, png_const_charp msg) {
  auto* message = static_cast<std::string*>(png_get_error_ptr(png));
  if (message) *message = msg;
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

// RAII holder for the libpng read/write structs.
class PngReader {
 public:
  PngReader() {
    png_ = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message_, on_png_error, on_png_warning);
    if (png_) info_ = png_create_info_struct(png_);
    if (!png_ || !info_) throw Error(ErrorCode::kDecodeFailed, "libpng allocation failed");
  }
  ~PngReader() { png_destroy_read_struct(&png_, &info_, nullptr); }
  PngReader(const PngReader&) = delete;
  PngReader& operator=(const PngReader&) = delete;

  png_structp png() { return png_; }
  png_infop info() { return info_; }
  const std::string& message() const { return message_; }

 private:
  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
  std::string message_;
};

class PngWriter {
 public:
  PngWriter() {
    png_ = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message_, on_png_error, on_png_warning);
    if (png_) info_ = png_create_info_struct(png_);
    if (!png_ || !info_) throw Error(ErrorCode::kIoError, "libpng allocation failed");
  }
  ~PngWriter() { png_destroy_write_struct(&png_, &info_); }
  PngWriter(const PngWriter&) = delete;
  PngWriter& operator=(const PngWriter&) = delete;

  png_structp png() { return png_; }
  png_infop info() { return info_; }
  const std::string& message() const { return message_; }

 private:
  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
  std::string message_;
};

struct DecodedRows {
  int width = 0;
  int height = 0;
  int color_type = 0;
  int bit_depth = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;  // tightly packed rows
};

enum class Expand { kNone, kToRgb8 };

DecodedRows decode_png(std::span<const std::uint8_t> bytes, Expand expand) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw Error(ErrorCode::kDecodeFailed, "not a PNG stream");
  }
  PngReader reader;
  ReadCursor cursor{bytes, 0};
  DecodedRows out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(reader.png()))) {
    throw Error(ErrorCode::kDecodeFailed, "PNG decode failed: " + reader.message());
  }
  png_set_read_fn(reader.png(), &cursor, read_from_memory);
  png_read_info(reader.png(), reader.info());
  out.width = static_cast<int>(png_get_image_width(reader.png(), reader.info()));
  out.height = static_cast<int>(png_get_image_height(reader.png(), reader.info()));
  out.color_type = png_get_color_type(reader.png(), reader.info());
  out.bit_depth = png_get_bit_depth(reader.png(), reader.info());

  if (expand == Expand::kToRgb8) {
    if (out.bit_depth == 16) png_set_strip_16(reader.png());
    if (out.color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(reader.png());
    if (out.color_type == PNG_COLOR_TYPE_GRAY && out.bit_depth < 8) {
      png_set_expand_gray_1_2_4_to_8(reader.png());
    }
    if (out.color_type == PNG_COLOR_TYPE_GRAY || out.color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
      png_set_gray_to_rgb(reader.png());
    }
    if (out.color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(reader.png());
    png_set_tRNS_to_alpha(reader.png());
    png_set_strip_alpha(reader.png());
  } else if (out.bit_depth == 16) {
    png_set_swap(reader.png());  // host order for 16-bit samples
  }
  png_read_update_info(reader.png(), reader.info());
  out.channels = png_get_channels(reader.png(), reader.info());
  const std::size_t stride = png_get_rowbytes(reader.png(), reader.info());
  out.data.resize(stride * out.height);
  rows.resize(out.height);
  for (int y = 0; y < out.height; ++y) rows[y] = out.data.data() + stride * y;
  png_read_image(reader.png(), rows.data());
  png_read_end(reader.png(), nullptr);
  return out;
}

Bytes encode_png(int width, int height, int color_type, int bit_depth,
                 std::span<const std::uint8_t> packed, std::size_t stride) {
  if (width < 1 || height < 1) throw Error(ErrorCode::kInvalidArgument, "empty raster");
  PngWriter writer;
  Bytes out;
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) {
    rows[y] = const_cast<png_bytep>(packed.data() + stride * y);
  }
  if (setjmp(png_jmpbuf(writer.png()))) {
    throw Error(ErrorCode::kIoError, "PNG encode failed: " + writer.message());
  }
  png_set_write_fn(writer.png(), &out, write_to_vector, flush_noop);
  png_set_IHDR(writer.png(), writer.info(), width, height, bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(writer.png(), writer.info());
  if (bit_depth == 16) png_set_swap(writer.png());
  png_write_image(writer.png(), rows.data());
  png_write_end(writer.png(), nullptr);
  return out;
}

}  // namespace

Bytes encode_label_map(const LabelMap& map) {
  return encode_png(map.width, map.height, PNG_COLOR_TYPE_GRAY, 8, map.labels,
                    static_cast<std::size_t>(map.width));
}

LabelMap decode_label_map(std::span<const std::uint8_t> bytes) {
  DecodedRows rows = decode_png(bytes, Expand::kNone);
  // Palette-indexed PNGs are accepted as raw indices, the usual encoding
  // for segmentation ground truth.
  const bool single_channel =
      rows.color_type == PNG_COLOR_TYPE_GRAY || rows.color_type == PNG_COLOR_TYPE_PALETTE;
  if (!single_channel || rows.bit_depth != 8 || rows.channels != 1) {
    throw Error(ErrorCode::kDecodeFailed,
                "label map must be 8-bit single-channel (got color type " +
                    std::to_string(rows.color_type) + ", depth " +
                    std::to_string(rows.bit_depth) + ")");
  }
  LabelMap map(rows.width, rows.height);
  map.labels = std::move(rows.data);
  return map;
}

Bytes encode_rgb(const ImageRaster& image) {
  return encode_png(image.width, image.height, PNG_COLOR_TYPE_RGB, 8, image.rgb,
                    static_cast<std::size_t>(image.width) * 3);
}

ImageRaster decode_rgb(std::span<const std::uint8_t> bytes) {
  DecodedRows rows = decode_png(bytes, Expand::kToRgb8);
  if (rows.channels != 3) throw Error(ErrorCode::kDecodeFailed, "could not expand PNG to RGB");
  ImageRaster image;
  image.width = rows.width;
  image.height = rows.height;
  image.rgb = std::move(rows.data);
  return image;
}

Bytes encode_gray16(int width, int height, std::span<const std::uint16_t> values) {
  if (values.size() != static_cast<std::size_t>(width) * height) {
    throw Error(ErrorCode::kDimensionMismatch, "gray16 buffer size mismatch");
  }
  std::span<const std::uint8_t> raw(reinterpret_cast<const std::uint8_t*>(values.data()),
                                    values.size() * 2);
  return encode_png(width, height, PNG_COLOR_TYPE_GRAY, 16, raw,
                    static_cast<std::size_t>(width) * 2);
}

std::vector<std::uint16_t> decode_gray16(std::span<const std::uint8_t> bytes, int& width,
                                         int& height) {
  DecodedRows rows = decode_png(bytes, Expand::kNone);
  if (rows.color_type != PNG_COLOR_TYPE_GRAY || rows.bit_depth != 16) {
    throw Error(ErrorCode::kDecodeFailed, "expected 16-bit grayscale PNG");
  }
  width = rows.width;
  height = rows.height;
  std::vector<std::uint16_t> values(static_cast<std::size_t>(width) * height);
  std::memcpy(values.data(), rows.data.data(), values.size() * 2);
  return values;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoError, "short write to " + path.string());
}

}  // namespace blockforge
