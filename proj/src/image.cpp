#include "genmatte/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "genmatte/error.hpp"

namespace genmatte {

ImageBuffer::ImageBuffer(Tensor3 pixels) : pixels_(std::move(pixels)) {
  require(pixels_.channels() == 1 || pixels_.channels() == 3, ErrorKind::kShape,
          "image must have 1 or 3 channels, got " + std::to_string(pixels_.channels()));
  for (double& v : pixels_.data()) v = std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0);
}

AlphaMatte::AlphaMatte(Tensor3 alpha) : ImageBuffer(std::move(alpha)) {
  require(channels() == 1, ErrorKind::kShape, "alpha matte must be single-channel");
}

Tensor3 luminance(const ImageBuffer& img) {
  Tensor3 out(Dims{1, img.height(), img.width()});
  if (img.channels() == 1) return img.pixels();
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      out.at(0, y, x) = 0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) + 0.114 * img.at(2, y, x);
  return out;
}

AlphaMatte luminance_threshold(const ImageBuffer& img, double threshold) {
  Tensor3 lum = luminance(img);
  for (double& v : lum.data()) v = v >= threshold ? 1.0 : 0.0;
  return AlphaMatte(std::move(lum));
}

namespace {

void check_target(int height, int width) {
  require(height >= 1 && width >= 1, ErrorKind::kInvalidShape,
          "resize target " + std::to_string(height) + "x" + std::to_string(width));
}

}  // namespace

Tensor3 resize_bilinear(const Tensor3& t, int height, int width) {
  check_target(height, width);
  if (t.height() == height && t.width() == width) return t;
  Tensor3 out(Dims{t.channels(), height, width});
  const double sy = static_cast<double>(t.height()) / height;
  const double sx = static_cast<double>(t.width()) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, t.height() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, t.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, t.width() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, t.width() - 1);
      const double wx = fx - x0;
      for (int c = 0; c < t.channels(); ++c) {
        const double top = (1.0 - wx) * t.at(c, y0, x0) + wx * t.at(c, y0, x1);
        const double bot = (1.0 - wx) * t.at(c, y1, x0) + wx * t.at(c, y1, x1);
        out.at(c, y, x) = (1.0 - wy) * top + wy * bot;
      }
    }
  }
  return out;
}

Tensor3 resize_area(const Tensor3& t, int height, int width) {
  check_target(height, width);
  if (height > t.height() || width > t.width()) return resize_bilinear(t, height, width);
  if (t.height() == height && t.width() == width) return t;
  Tensor3 out(Dims{t.channels(), height, width});
  const double sy = static_cast<double>(t.height()) / height;
  const double sx = static_cast<double>(t.width()) / width;
  for (int y = 0; y < height; ++y) {
    const double y_lo = y * sy;
    const double y_hi = (y + 1) * sy;
    for (int x = 0; x < width; ++x) {
      const double x_lo = x * sx;
      const double x_hi = (x + 1) * sx;
      for (int c = 0; c < t.channels(); ++c) {
        double acc = 0.0;
        double wsum = 0.0;
        for (int iy = static_cast<int>(y_lo); iy < std::min<int>(std::ceil(y_hi), t.height()); ++iy) {
          const double wy = std::min<double>(iy + 1, y_hi) - std::max<double>(iy, y_lo);
          if (wy <= 0.0) continue;
          for (int ix = static_cast<int>(x_lo); ix < std::min<int>(std::ceil(x_hi), t.width()); ++ix) {
            const double wx = std::min<double>(ix + 1, x_hi) - std::max<double>(ix, x_lo);
            if (wx <= 0.0) continue;
            acc += wy * wx * t.at(c, iy, ix);
            wsum += wy * wx;
          }
        }
        out.at(c, y, x) = acc / wsum;
      }
    }
  }
  return out;
}

Tensor3 resize_nearest(const Tensor3& t, int height, int width) {
  check_target(height, width);
  Tensor3 out(Dims{t.channels(), height, width});
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(t.height() - 1, static_cast<int>(static_cast<long long>(y) * t.height() / height));
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(t.width() - 1, static_cast<int>(static_cast<long long>(x) * t.width() / width));
      for (int c = 0; c < t.channels(); ++c) out.at(c, y, x) = t.at(c, sy, sx);
    }
  }
  return out;
}

Tensor3 pad_to_multiple(const Tensor3& t, int multiple) {
  require(multiple >= 1, ErrorKind::kConfig, "pad multiple must be >= 1");
  const int h = (t.height() + multiple - 1) / multiple * multiple;
  const int w = (t.width() + multiple - 1) / multiple * multiple;
  if (h == t.height() && w == t.width()) return t;
  Tensor3 out(Dims{t.channels(), h, w});
  for (int c = 0; c < t.channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.at(c, y, x) = t.at(c, std::min(y, t.height() - 1), std::min(x, t.width() - 1));
  return out;
}

Tensor3 crop_top_left(const Tensor3& t, int height, int width) {
  return crop(t, PatchBox{0, 0, width, height});
}

}  // namespace genmatte
