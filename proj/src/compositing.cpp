#include "genmatte/compositing.hpp"

#include <cmath>

#include "genmatte/error.hpp"

namespace genmatte {

ImageBuffer composite(const AlphaMatte& alpha, const ImageBuffer& fg, const ImageBuffer& bg) {
  require(fg.dims() == bg.dims(), ErrorKind::kShape,
          "fg " + to_string(fg.dims()) + " vs bg " + to_string(bg.dims()));
  require(alpha.height() == fg.height() && alpha.width() == fg.width(), ErrorKind::kShape,
          "alpha " + to_string(alpha.dims()) + " vs fg " + to_string(fg.dims()));
  Tensor3 out(fg.dims());
  for (int c = 0; c < fg.channels(); ++c)
    for (int y = 0; y < fg.height(); ++y)
      for (int x = 0; x < fg.width(); ++x) {
        const double a = alpha.at(0, y, x);
        out.at(c, y, x) = a * fg.at(c, y, x) + (1.0 - a) * bg.at(c, y, x);
      }
  return ImageBuffer(std::move(out));
}

double residual(const ImageBuffer& c, const AlphaMatte& alpha, const ImageBuffer& fg,
                const ImageBuffer& bg) {
  require(c.dims() == fg.dims(), ErrorKind::kShape,
          "C " + to_string(c.dims()) + " vs fg " + to_string(fg.dims()));
  const ImageBuffer model = composite(alpha, fg, bg);
  double acc = 0.0;
  const auto lhs = c.pixels().data();
  const auto rhs = model.pixels().data();
  for (std::size_t i = 0; i < lhs.size(); ++i) acc += std::abs(lhs[i] - rhs[i]);
  return acc / static_cast<double>(lhs.size());
}

}  // namespace genmatte
