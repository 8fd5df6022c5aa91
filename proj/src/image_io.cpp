#include "fourllie/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <jpeglib.h>
#include <memory>
#include <string>
#include <vector>

#include "fourllie/errors.hpp"
#include "fourllie/fs_util.hpp"

namespace fourllie {
namespace {

std::string lower_ext(const std::filesystem::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw DatasetError("cannot open image " + path.string());
  return f;
}

Tensor read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  const std::string bytes = read_file(path);
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw DatasetError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  const bool wide = (image.format & PNG_FORMAT_FLAG_LINEAR) != 0;
  image.format = wide ? PNG_FORMAT_LINEAR_RGB : PNG_FORMAT_RGB;
  const int h = static_cast<int>(image.height), w = static_cast<int>(image.width);
  Tensor out = Tensor::image(3, h, w);
  const std::size_t n = static_cast<std::size_t>(h) * w;
  if (wide) {
    // The simplified API's linear mode undoes the sRGB curve, so 16-bit
    // samples are read through libpng's low-level interface instead.
    png_image_free(&image);
    FilePtr f = open_file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
      png_destroy_read_struct(&png, &info, nullptr);
      throw DatasetError("cannot decode PNG " + path.string());
    }
    png_init_io(png, f.get());
    png_read_info(png, info);
    png_set_strip_alpha(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (!(png_get_color_type(png, info) & PNG_COLOR_MASK_COLOR)) png_set_gray_to_rgb(png);
    png_set_swap(png);  // little-endian samples in memory
    png_read_update_info(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<unsigned char> buf(rowbytes * h);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) rows[y] = buf.data() + rowbytes * y;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    for (int y = 0; y < h; ++y) {
      const auto* row = reinterpret_cast<const std::uint16_t*>(rows[y]);
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) out[c * n + static_cast<std::size_t>(y) * w + x] = row[3 * x + c] / 65535.0;
    }
    return out;
  }
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    throw DatasetError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) out[c * n + i] = buf[3 * i + c] / 255.0;
  return out;
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_fail(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

Tensor read_jpeg(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  jpeg_decompress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_fail;
  std::vector<unsigned char> buf;
  int h = 0, w = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw DatasetError("cannot decode JPEG " + path.string() + ": " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  h = static_cast<int>(cinfo.output_height);
  w = static_cast<int>(cinfo.output_width);
  buf.resize(static_cast<std::size_t>(h) * w * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    unsigned char* row = buf.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  Tensor out = Tensor::image(3, h, w);
  const std::size_t n = static_cast<std::size_t>(h) * w;
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) out[c * n + i] = buf[3 * i + c] / 255.0;
  return out;
}

void png_write_to_string(png_structp png, png_bytep data, png_size_t len) {
  static_cast<std::string*>(png_get_io_ptr(png))->append(reinterpret_cast<const char*>(data), len);
}

void png_flush_noop(png_structp) {}

}  // namespace

bool is_image_file(const std::filesystem::path& path) {
  const std::string e = lower_ext(path);
  return e == ".png" || e == ".jpg" || e == ".jpeg";
}

Tensor read_image(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw DatasetError("image not found: " + path.string());
  const std::string e = lower_ext(path);
  if (e == ".png") return read_png(path);
  if (e == ".jpg" || e == ".jpeg") return read_jpeg(path);
  throw DatasetError("unsupported image format: " + path.string());
}

void write_png(const std::filesystem::path& path, const Tensor& img, int bit_depth) {
  require_image(img, "write_png");
  if (img.channels() != 1 && img.channels() != 3) throw InvalidInput("write_png: need 1 or 3 channels");
  if (bit_depth != 8 && bit_depth != 16) throw InvalidInput("write_png: bit depth must be 8 or 16");
  const int c = img.channels(), h = img.height(), w = img.width();
  const std::size_t n = static_cast<std::size_t>(h) * w;
  const double maxv = bit_depth == 8 ? 255.0 : 65535.0;
  const int bytes_per = bit_depth / 8;
  std::vector<unsigned char> buf(n * c * bytes_per);
  for (std::size_t i = 0; i < n; ++i)
    for (int k = 0; k < c; ++k) {
      const double v = std::clamp(img[k * n + i], 0.0, 1.0);
      const auto q = static_cast<unsigned>(std::lround(v * maxv));
      const std::size_t o = (i * c + k) * bytes_per;
      if (bytes_per == 1) {
        buf[o] = static_cast<unsigned char>(q);
      } else {
        buf[o] = static_cast<unsigned char>(q >> 8);  // PNG stores big-endian
        buf[o + 1] = static_cast<unsigned char>(q & 0xff);
      }
    }

  std::string out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("cannot encode PNG " + path.string());
  }
  png_set_write_fn(png, &out, png_write_to_string, png_flush_noop);
  png_set_IHDR(png, info, w, h, bit_depth, c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t rowbytes = static_cast<std::size_t>(w) * c * bytes_per;
  for (int y = 0; y < h; ++y) png_write_row(png, buf.data() + rowbytes * y);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  atomic_write(path, out);
}

}  // namespace fourllie
