#pragma once

#include <array>
#include <string>
#include <vector>

#include "genmatte/codec.hpp"
#include "genmatte/sampler.hpp"
#include "genmatte/tensor.hpp"

namespace genmatte {

enum class GuideKind {
  kTrimap,
  /// Coarse mask with m_unknown = 1 everywhere.
  kMask,
  /// Coarse mask with an unknown band around the mask boundary.
  kMaskBand,
  kScribble,
};

/// Pixel-space guide: `image` in [0,1] and a {0,1} unknown mask, both single-channel.
struct SpatialGuide {
  GuideKind kind;
  Tensor3 image;
  Tensor3 m_unknown;
};

/// Values within this distance of 0, 0.5 or 1 are accepted as trimap labels.
inline constexpr double kTrimapTolerance = 2.5e-3;

SpatialGuide trimap_guide(const Tensor3& trimap);
SpatialGuide mask_guide(const Tensor3& mask);
/// m >= 0.5 -> 1, else 0.
Tensor3 binarize_trimap(const Tensor3& trimap);
/// 1 on pixels whose Euclidean distance to the nearest pixel of the other
/// label is <= band_width / 2.
Tensor3 boundary_band(const Tensor3& mask, int band_width);
SpatialGuide mask_band_guide(const Tensor3& mask, int band_width);

struct Stroke {
  int label = 1;
  double radius = 1.0;
  std::vector<std::array<double, 2>> points;
};

struct ScribbleDoc {
  std::vector<Stroke> strokes;

  /// {"strokes": [{"label": 0|1, "radius": px, "points": [[x, y], ...]}]}
  static ScribbleDoc parse(const std::string& json_text);
};

/// A pixel (x, y) is covered when its distance to a stroke polyline is <= radius.
/// Later strokes overwrite earlier ones.
SpatialGuide scribble_guide(const ScribbleDoc& doc, int height, int width);

/// Nearest-neighbour for the guide image; a resized pixel is unknown if any
/// source pixel it overlaps is unknown.
SpatialGuide resize_guide(const SpatialGuide& guide, int height, int width);
SpatialGuide pad_guide(const SpatialGuide& guide, int height, int width);

/// c_S = encode(image where known, 0 where unknown); m_unknown max-pooled to
/// the latent grid; g zeroed on latent-unknown sites.
GuidanceLatent guide_latent(const SpatialGuide& guide, const LatentCodec& matte_codec);
GuidanceLatent coarse_mask_guide(const Tensor3& mask, const LatentCodec& matte_codec, int band_width);

}  // namespace genmatte
