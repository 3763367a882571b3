#include "dint/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

namespace dint {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
  auto* where = static_cast<std::string*>(png_get_error_ptr(png));
  throw ImageIoError(*where + ": " + msg);
}

void png_warn(png_structp, png_const_charp) {}

}  // namespace

Tensor read_png(const std::filesystem::path& path) {
  std::string where = path.string();
  FilePtr fp(std::fopen(where.c_str(), "rb"));
  if (!fp) throw ImageIoError(where + ": cannot open for reading");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw ImageIoError(where + ": not a PNG file");
  }

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &where, png_fail, png_warn);
  if (!png) throw ImageIoError(where + ": png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_read_struct(png, info, nullptr); }
  } guard{&png, &info};
  if (!info) throw ImageIoError(where + ": png_create_info_struct failed");

  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);

  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16) png_set_swap(png);  // host (little-endian) order for uint16 reads
  png_read_update_info(png, info);

  depth = png_get_bit_depth(png, info);
  const int channels = png_get_channels(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<unsigned char> buf(rowbytes * height);
  std::vector<png_bytep> rows(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = buf.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);

  const bool colour = channels >= 3;
  const std::size_t out_c = colour ? 3 : 1;
  const double maxval = depth == 16 ? 65535.0 : 255.0;
  Tensor t(1, out_c, height, width);
  for (png_uint_32 y = 0; y < height; ++y) {
    for (png_uint_32 x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < out_c; ++c) {
        const std::size_t k = static_cast<std::size_t>(x) * channels + c;
        double v;
        if (depth == 16) {
          std::uint16_t s;
          std::memcpy(&s, rows[y] + 2 * k, 2);
          v = s;
        } else {
          v = rows[y][k];
        }
        t(0, c, y, x) = v / maxval;
      }
    }
  }
  return t;
}

Tensor read_png_rgb(const std::filesystem::path& path) {
  Tensor t = read_png(path);
  if (t.c() == 3) return t;
  Tensor rgb(1, 3, t.h(), t.w());
  for (std::size_t c = 0; c < 3; ++c) std::copy_n(t.plane(0, 0), t.h() * t.w(), rgb.plane(0, c));
  return rgb;
}

void write_png(const std::filesystem::path& path, const Tensor& image, int bit_depth) {
  std::string where = path.string();
  if (image.empty() || image.n() != 1 || (image.c() != 1 && image.c() != 3)) {
    throw ImageIoError(where + ": can only write 1 x {1,3} x H x W tensors, got " +
                       image.shape().str());
  }
  if (bit_depth != 8 && bit_depth != 16) throw ImageIoError(where + ": bit depth must be 8 or 16");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());

  FilePtr fp(std::fopen(where.c_str(), "wb"));
  if (!fp) throw ImageIoError(where + ": cannot open for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &where, png_fail, png_warn);
  if (!png) throw ImageIoError(where + ": png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_write_struct(png, info); }
  } guard{&png, &info};
  if (!info) throw ImageIoError(where + ": png_create_info_struct failed");

  png_init_io(png, fp.get());
  const std::size_t h = image.h(), w = image.w(), c = image.c();
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth,
               c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  const double maxval = bit_depth == 16 ? 65535.0 : 255.0;
  const std::size_t bytes = bit_depth / 8;
  std::vector<unsigned char> row(w * c * bytes);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t k = 0; k < c; ++k) {
        double v = image(0, k, y, x);
        if (!std::isfinite(v)) v = 0.0;
        const auto code =
            static_cast<unsigned>(std::lround(std::clamp(v, 0.0, 1.0) * maxval));
        const std::size_t off = (x * c + k) * bytes;
        if (bit_depth == 16) {
          row[off] = static_cast<unsigned char>(code >> 8);  // PNG is big-endian
          row[off + 1] = static_cast<unsigned char>(code & 0xff);
        } else {
          row[off] = static_cast<unsigned char>(code);
        }
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
}

}  // namespace dint
