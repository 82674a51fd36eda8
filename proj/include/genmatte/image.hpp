#pragma once

#include "genmatte/tensor.hpp"

namespace genmatte {

/// 1- or 3-channel image with values clamped to [0,1] on construction.
class ImageBuffer {
 public:
  ImageBuffer() = default;
  explicit ImageBuffer(Tensor3 pixels);

  const Tensor3& pixels() const { return pixels_; }
  const Dims& dims() const { return pixels_.dims(); }
  int channels() const { return pixels_.channels(); }
  int height() const { return pixels_.height(); }
  int width() const { return pixels_.width(); }
  double at(int c, int y, int x) const { return pixels_.at(c, y, x); }

 private:
  Tensor3 pixels_;
};

/// Single-channel opacity grid in [0,1].
class AlphaMatte : public ImageBuffer {
 public:
  AlphaMatte() = default;
  explicit AlphaMatte(Tensor3 alpha);
  explicit AlphaMatte(ImageBuffer img) : AlphaMatte(img.pixels()) {}
};

/// Rec.601 luma for RGB; identity for single-channel images.
Tensor3 luminance(const ImageBuffer& img);

/// Binary matte: 1 where luminance >= threshold.
AlphaMatte luminance_threshold(const ImageBuffer& img, double threshold = 0.5);

// Resampling. Pixel centres are aligned (half-pixel convention).
Tensor3 resize_bilinear(const Tensor3& t, int height, int width);
/// Box-filter downsample; falls back to bilinear when enlarging.
Tensor3 resize_area(const Tensor3& t, int height, int width);
Tensor3 resize_nearest(const Tensor3& t, int height, int width);

/// Edge-replicating pad on the bottom/right up to multiples of `multiple`.
Tensor3 pad_to_multiple(const Tensor3& t, int multiple);
Tensor3 crop_top_left(const Tensor3& t, int height, int width);

}  // namespace genmatte
