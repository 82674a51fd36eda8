#include "genmatte/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <boost/beast/core/detail/base64.hpp>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "genmatte/error.hpp"

namespace genmatte {

namespace {

constexpr const char* kSupported = "supported formats: PNG (8/16-bit gray or RGB), binary PGM (P5), binary PPM (P6)";

std::uint32_t quantize(double v, std::uint32_t maxval) {
  return static_cast<std::uint32_t>(std::lround(std::clamp(v, 0.0, 1.0) * maxval));
}

// --- PNG -------------------------------------------------------------------

[[noreturn]] void png_throw(png_structp, png_const_charp msg) {
  throw Error(ErrorKind::kFormat, std::string("PNG: ") + msg);
}

void png_ignore_warning(png_structp, png_const_charp) {}

struct ReadCursor {
  std::span<const std::uint8_t> data;
  std::size_t pos = 0;
};

void png_read_mem(png_structp png, png_bytep out, png_size_t n) {
  auto* c = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (c->pos + n > c->data.size()) png_error(png, "truncated stream");
  std::memcpy(out, c->data.data() + c->pos, n);
  c->pos += n;
}

void png_write_mem(png_structp png, png_bytep in, png_size_t n) {
  auto* out = static_cast<Bytes*>(png_get_io_ptr(png));
  out->insert(out->end(), in, in + n);
}

void png_flush_mem(png_structp) {}

ImageBuffer decode_png(std::span<const std::uint8_t> bytes) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw, png_ignore_warning);
  require(png != nullptr, ErrorKind::kInternal, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};
  require(info != nullptr, ErrorKind::kInternal, "png_create_info_struct failed");

  ReadCursor cursor{bytes, 0};
  png_set_read_fn(png, &cursor, png_read_mem);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  const int out_depth = png_get_bit_depth(png, info);
  require(channels == 1 || channels == 3, ErrorKind::kFormat, "PNG channel layout not supported; " + std::string(kSupported));
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<std::uint8_t> raw(rowbytes * h);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = raw.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);

  Tensor3 t(Dims{channels, h, w});
  const double scale = out_depth == 16 ? 1.0 / 65535.0 : 1.0 / 255.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c) {
        const std::size_t k = static_cast<std::size_t>(x) * channels + c;
        const std::uint32_t v = out_depth == 16 ? (rows[y][2 * k] << 8) | rows[y][2 * k + 1] : rows[y][k];
        t.at(c, y, x) = v * scale;
      }
  return ImageBuffer(std::move(t));
}

// --- PNM -------------------------------------------------------------------

ImageBuffer decode_pnm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 2;
  auto next_int = [&]() {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    require(pos < bytes.size() && std::isdigit(bytes[pos]), ErrorKind::kFormat, "malformed PNM header");
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      require(v <= 1 << 24, ErrorKind::kFormat, "PNM header value too large");
    }
    return static_cast<int>(v);
  };
  const int channels = bytes[1] == '5' ? 1 : 3;
  const int w = next_int();
  const int h = next_int();
  const int maxval = next_int();
  require(w >= 1 && h >= 1 && maxval >= 1 && maxval <= 65535, ErrorKind::kFormat, "bad PNM dimensions or maxval");
  require(pos < bytes.size() && std::isspace(bytes[pos]), ErrorKind::kFormat, "malformed PNM header");
  ++pos;
  const int bps = maxval > 255 ? 2 : 1;
  const std::size_t need = static_cast<std::size_t>(w) * h * channels * bps;
  require(bytes.size() - pos >= need, ErrorKind::kFormat, "truncated PNM data");
  Tensor3 t(Dims{channels, h, w});
  const std::uint8_t* p = bytes.data() + pos;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c) {
        const std::uint32_t v = bps == 2 ? (p[0] << 8) | p[1] : p[0];
        p += bps;
        t.at(c, y, x) = static_cast<double>(v) / maxval;
      }
  return ImageBuffer(std::move(t));
}

}  // namespace

ImageBuffer decode_image(std::span<const std::uint8_t> bytes) {
  static constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(kPngSig, kPngSig + 8, bytes.begin())) return decode_png(bytes);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) return decode_pnm(bytes);
  fail(ErrorKind::kFormat, std::string("unrecognised image data; ") + kSupported);
}

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path);
  Bytes out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  require(!in.bad(), ErrorKind::kIo, "read failed: " + path);
  return out;
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::kIo, "write failed: " + path);
}

ImageBuffer load_image(const std::string& path) { return decode_image(read_file(path)); }

Bytes encode_png(const ImageBuffer& img, int bit_depth) {
  require(bit_depth == 8 || bit_depth == 16, ErrorKind::kConfig, "PNG bit depth must be 8 or 16");
  require(img.channels() == 1 || img.channels() == 3, ErrorKind::kShape, "PNG output needs 1 or 3 channels");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw, png_ignore_warning);
  require(png != nullptr, ErrorKind::kInternal, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};
  require(info != nullptr, ErrorKind::kInternal, "png_create_info_struct failed");

  Bytes out;
  png_set_write_fn(png, &out, png_write_mem, png_flush_mem);
  const int c = img.channels();
  png_set_IHDR(png, info, img.width(), img.height(), bit_depth, c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::uint32_t maxval = bit_depth == 16 ? 65535 : 255;
  const std::size_t bps = bit_depth / 8;
  std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width()) * c * bps);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x)
      for (int k = 0; k < c; ++k) {
        const std::uint32_t v = quantize(img.at(k, y, x), maxval);
        const std::size_t i = (static_cast<std::size_t>(x) * c + k) * bps;
        if (bps == 2) {
          row[i] = static_cast<std::uint8_t>(v >> 8);
          row[i + 1] = static_cast<std::uint8_t>(v & 0xff);
        } else {
          row[i] = static_cast<std::uint8_t>(v);
        }
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  return out;
}

Bytes encode_pnm(const ImageBuffer& img, int bit_depth) {
  require(bit_depth == 8 || bit_depth == 16, ErrorKind::kConfig, "PNM bit depth must be 8 or 16");
  require(img.channels() == 1 || img.channels() == 3, ErrorKind::kShape, "PNM output needs 1 or 3 channels");
  const std::uint32_t maxval = bit_depth == 16 ? 65535 : 255;
  const std::string header = std::string(img.channels() == 1 ? "P5" : "P6") + "\n" + std::to_string(img.width()) +
                             " " + std::to_string(img.height()) + "\n" + std::to_string(maxval) + "\n";
  Bytes out(header.begin(), header.end());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) {
        const std::uint32_t v = quantize(img.at(c, y, x), maxval);
        if (bit_depth == 16) out.push_back(static_cast<std::uint8_t>(v >> 8));
        out.push_back(static_cast<std::uint8_t>(v & 0xff));
      }
  return out;
}

void save_image(const ImageBuffer& img, const std::string& path, int bit_depth) {
  std::string ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (ext == ".png") return write_file(path, encode_png(img, bit_depth));
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") {
    require(ext == ".pnm" || (ext == ".pgm") == (img.channels() == 1), ErrorKind::kFormat,
            "extension " + ext + " does not match a " + std::to_string(img.channels()) + "-channel image");
    return write_file(path, encode_pnm(img, bit_depth));
  }
  fail(ErrorKind::kFormat, "cannot infer output format from \"" + path + "\"; " + kSupported);
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::encoded_size(bytes.size()), '\0');
  out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

Bytes base64_decode(std::string_view text) {
  namespace b64 = boost::beast::detail::base64;
  require(text.size() % 4 == 0, ErrorKind::kFormat, "base64 length is not a multiple of 4");
  std::size_t pad = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (ch == '=') {
      ++pad;
      continue;
    }
    require(pad == 0 && (std::isalnum(static_cast<unsigned char>(ch)) || ch == '+' || ch == '/'),
            ErrorKind::kFormat, "invalid base64 character at offset " + std::to_string(i));
  }
  require(pad <= 2, ErrorKind::kFormat, "invalid base64 padding");
  Bytes out(b64::decoded_size(text.size()));
  const auto [written, read] = b64::decode(out.data(), text.data(), text.size());
  require(read + pad == text.size(), ErrorKind::kFormat, "invalid base64 data");
  out.resize(written);
  return out;
}

}  // namespace genmatte
