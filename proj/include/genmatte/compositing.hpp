#pragma once

#include "genmatte/image.hpp"

namespace genmatte {

/// C = alpha F + (1 - alpha) B, alpha broadcast over colour channels.
ImageBuffer composite(const AlphaMatte& alpha, const ImageBuffer& fg, const ImageBuffer& bg);

/// Mean |C - composite(alpha, fg, bg)| over all elements.
double residual(const ImageBuffer& c, const AlphaMatte& alpha, const ImageBuffer& fg,
                const ImageBuffer& bg);

}  // namespace genmatte
