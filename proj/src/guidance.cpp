#include "genmatte/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "genmatte/error.hpp"
#include "genmatte/image.hpp"

namespace genmatte {

namespace {

void require_single_channel(const Tensor3& t, const char* what) {
  require(t.channels() == 1 && t.height() >= 1 && t.width() >= 1, ErrorKind::kShape,
          std::string(what) + " must be a non-empty single-channel grid");
}

}  // namespace

SpatialGuide trimap_guide(const Tensor3& trimap) {
  require_single_channel(trimap, "trimap");
  Tensor3 image(trimap.dims());
  Tensor3 unknown(trimap.dims());
  for (std::size_t i = 0; i < trimap.size(); ++i) {
    const double v = trimap[i];
    if (std::abs(v) <= kTrimapTolerance) {
      image[i] = 0.0;
    } else if (std::abs(v - 1.0) <= kTrimapTolerance) {
      image[i] = 1.0;
    } else if (std::abs(v - 0.5) <= kTrimapTolerance) {
      image[i] = 0.5;
      unknown[i] = 1.0;
    } else {
      fail(ErrorKind::kValidation, "trimap value " + std::to_string(v) + " is not 0, 0.5 or 1");
    }
  }
  return SpatialGuide{GuideKind::kTrimap, std::move(image), std::move(unknown)};
}

SpatialGuide mask_guide(const Tensor3& mask) {
  require_single_channel(mask, "mask");
  Tensor3 image = mask;
  for (double& v : image.data()) v = std::clamp(v, 0.0, 1.0);
  return SpatialGuide{GuideKind::kMask, std::move(image), Tensor3(mask.dims(), 1.0)};
}

Tensor3 binarize_trimap(const Tensor3& trimap) {
  Tensor3 out = trimap;
  for (double& v : out.data()) v = v >= 0.5 ? 1.0 : 0.0;
  return out;
}

Tensor3 boundary_band(const Tensor3& mask, int band_width) {
  require_single_channel(mask, "mask");
  require(band_width >= 0, ErrorKind::kConfig, "band width must be >= 0");
  for (double v : mask.data())
    require(v == 0.0 || v == 1.0, ErrorKind::kValidation, "coarse mask must be binary");
  const int h = mask.height();
  const int w = mask.width();
  const double radius = band_width / 2.0;
  const int r = static_cast<int>(std::floor(radius));
  Tensor3 band(mask.dims());
  if (r < 1) return band;
  // The nearest pixel of the other label is always a boundary pixel (one with a
  // 4-neighbour of the opposite label), so stamping discs from boundary pixels
  // onto opposite-label pixels is exact.
  constexpr int kDx[] = {1, -1, 0, 0};
  constexpr int kDy[] = {0, 0, 1, -1};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double label = mask.at(0, y, x);
      bool boundary = false;
      for (int k = 0; k < 4 && !boundary; ++k) {
        const int ny = y + kDy[k];
        const int nx = x + kDx[k];
        boundary = ny >= 0 && ny < h && nx >= 0 && nx < w && mask.at(0, ny, nx) != label;
      }
      if (!boundary) continue;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const int py = y + dy;
          const int px = x + dx;
          if (py < 0 || py >= h || px < 0 || px >= w) continue;
          if (mask.at(0, py, px) == label) continue;
          if (dx * dx + dy * dy <= radius * radius) band.at(0, py, px) = 1.0;
        }
    }
  return band;
}

SpatialGuide mask_band_guide(const Tensor3& mask, int band_width) {
  Tensor3 band = boundary_band(mask, band_width);
  return SpatialGuide{GuideKind::kMaskBand, mask, std::move(band)};
}

ScribbleDoc ScribbleDoc::parse(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("scribble JSON: ") + e.what());
  }
  require(doc.is_object() && doc.contains("strokes") && doc["strokes"].is_array(), ErrorKind::kValidation,
          "scribble document needs a \"strokes\" array");
  ScribbleDoc out;
  for (const auto& s : doc["strokes"]) {
    require(s.is_object(), ErrorKind::kValidation, "stroke must be an object");
    for (const auto& [key, _] : s.items())
      require(key == "label" || key == "radius" || key == "points", ErrorKind::kValidation,
              "unknown stroke key \"" + key + "\"");
    Stroke st;
    require(s.contains("label") && s["label"].is_number_integer(), ErrorKind::kValidation,
            "stroke label must be 0 or 1");
    st.label = s["label"].get<int>();
    require(st.label == 0 || st.label == 1, ErrorKind::kValidation, "stroke label must be 0 or 1");
    require(s.contains("radius") && s["radius"].is_number(), ErrorKind::kValidation,
            "stroke radius must be a number");
    st.radius = s["radius"].get<double>();
    require(st.radius >= 0.0, ErrorKind::kValidation, "stroke radius must be >= 0");
    require(s.contains("points") && s["points"].is_array() && !s["points"].empty(), ErrorKind::kValidation,
            "stroke needs a non-empty points array");
    for (const auto& p : s["points"]) {
      require(p.is_array() && p.size() == 2 && p[0].is_number() && p[1].is_number(),
              ErrorKind::kValidation, "stroke point must be [x, y]");
      st.points.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    out.strokes.push_back(std::move(st));
  }
  return out;
}

namespace {

double segment_distance(double px, double py, const std::array<double, 2>& a, const std::array<double, 2>& b) {
  const double vx = b[0] - a[0];
  const double vy = b[1] - a[1];
  const double len2 = vx * vx + vy * vy;
  double u = 0.0;
  if (len2 > 0.0) u = std::clamp(((px - a[0]) * vx + (py - a[1]) * vy) / len2, 0.0, 1.0);
  const double dx = px - (a[0] + u * vx);
  const double dy = py - (a[1] + u * vy);
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

SpatialGuide scribble_guide(const ScribbleDoc& doc, int height, int width) {
  require(height >= 1 && width >= 1, ErrorKind::kShape, "scribble canvas must be non-empty");
  Tensor3 image(Dims{1, height, width});
  Tensor3 unknown(Dims{1, height, width}, 1.0);
  for (const Stroke& s : doc.strokes) {
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      const auto& a = s.points[i];
      const auto& b = s.points[std::min(i + 1, s.points.size() - 1)];
      const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a[0], b[0]) - s.radius)));
      const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max(a[0], b[0]) + s.radius)));
      const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a[1], b[1]) - s.radius)));
      const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max(a[1], b[1]) + s.radius)));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x)
          if (segment_distance(x, y, a, b) <= s.radius) {
            image.at(0, y, x) = s.label;
            unknown.at(0, y, x) = 0.0;
          }
    }
  }
  return SpatialGuide{GuideKind::kScribble, std::move(image), std::move(unknown)};
}

SpatialGuide resize_guide(const SpatialGuide& guide, int height, int width) {
  Tensor3 unknown = resize_area(guide.m_unknown, height, width);
  if (height > guide.m_unknown.height() || width > guide.m_unknown.width())
    unknown = resize_nearest(guide.m_unknown, height, width);
  for (double& v : unknown.data()) v = v > 0.0 ? 1.0 : 0.0;
  return SpatialGuide{guide.kind, resize_nearest(guide.image, height, width), std::move(unknown)};
}

SpatialGuide pad_guide(const SpatialGuide& guide, int height, int width) {
  Tensor3 image(Dims{1, height, width});
  Tensor3 unknown(Dims{1, height, width}, 1.0);
  for (int y = 0; y < std::min(height, guide.image.height()); ++y)
    for (int x = 0; x < std::min(width, guide.image.width()); ++x) {
      image.at(0, y, x) = guide.image.at(0, y, x);
      unknown.at(0, y, x) = guide.m_unknown.at(0, y, x);
    }
  return SpatialGuide{guide.kind, std::move(image), std::move(unknown)};
}

GuidanceLatent guide_latent(const SpatialGuide& guide, const LatentCodec& matte_codec) {
  require_single_channel(guide.image, "guide image");
  require(guide.image.dims() == guide.m_unknown.dims(), ErrorKind::kShape,
          "guide image and unknown mask differ in shape");
  require(matte_codec.image_channels() == 1, ErrorKind::kConfig, "guides encode with the matte codec");
  const int f = matte_codec.factor();
  require(guide.image.height() % f == 0 && guide.image.width() % f == 0, ErrorKind::kShape,
          "guide dims " + to_string(guide.image.dims()) + " not divisible by " + std::to_string(f));

  Tensor3 known = guide.image;
  for (std::size_t i = 0; i < known.size(); ++i) known[i] *= 1.0 - guide.m_unknown[i];
  Tensor3 g = matte_codec.encode(known);

  const int lh = guide.image.height() / f;
  const int lw = guide.image.width() / f;
  Tensor3 m(Dims{1, lh, lw});
  for (int y = 0; y < lh; ++y)
    for (int x = 0; x < lw; ++x) {
      double v = 0.0;
      for (int dy = 0; dy < f; ++dy)
        for (int dx = 0; dx < f; ++dx) v = std::max(v, guide.m_unknown.at(0, y * f + dy, x * f + dx));
      m.at(0, y, x) = v;
      if (v >= 1.0)
        for (int c = 0; c < g.channels(); ++c) g.at(c, y, x) = 0.0;
    }
  return GuidanceLatent{std::move(g), std::move(m)};
}

GuidanceLatent coarse_mask_guide(const Tensor3& mask, const LatentCodec& matte_codec, int band_width) {
  return guide_latent(mask_band_guide(mask, band_width), matte_codec);
}

}  // namespace genmatte
