#include <doctest.h>

#include <cmath>

#include "genmatte/codec.hpp"
#include "genmatte/error.hpp"
#include "genmatte/guidance.hpp"
#include "support.hpp"

using namespace genmatte;

namespace {

template <class Fn>
ErrorKind kind_of(Fn fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::kInternal;
}

Tensor3 disc_mask(int h, int w, double cy, double cx, double r) {
  Tensor3 m({1, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) m.at(0, y, x) = 1.0;
  return m;
}

// Brute-force: distance from each pixel to every pixel of the other label.
Tensor3 ref_band(const Tensor3& mask, int band) {
  const int h = mask.height(), w = mask.width();
  Tensor3 out({1, h, w});
  const double r = band / 2.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double best = 1e300;
      for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u)
          if (mask.at(0, v, u) != mask.at(0, y, x))
            best = std::min(best, std::hypot(double(v - y), double(u - x)));
      out.at(0, y, x) = best <= r ? 1.0 : 0.0;
    }
  return out;
}

}  // namespace

TEST_CASE("all-known trimap encodes directly") {
  const LatentCodec codec(1, 2, 7);
  Tensor3 tri({1, 8, 6});
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 6; ++x) tri.at(0, y, x) = (x + y) % 3 == 0 ? 1.0 : 0.0;
  const GuidanceLatent g = guide_latent(trimap_guide(tri), codec);
  CHECK(testsupport::max_abs(g.m_unknown) == 0.0);
  CHECK(max_abs_diff(g.g, codec.encode(tri)) == 0.0);
}

TEST_CASE("mask kind degenerates to a pure-noise guide") {
  const LatentCodec codec(1, 4, 2);
  const Tensor3 m = disc_mask(16, 16, 8, 8, 5);
  const GuidanceLatent g = guide_latent(mask_guide(m), codec);
  CHECK(testsupport::max_abs(g.g) == 0.0);
  for (double v : g.m_unknown.data()) REQUIRE(v == 1.0);
}

TEST_CASE("trimap unknown region and latent zeroing") {
  const LatentCodec codec(1, 2, 3);
  Tensor3 tri({1, 6, 6}, 1.0);
  tri.at(0, 2, 3) = 0.5;
  tri.at(0, 0, 0) = 0.0;
  const SpatialGuide s = trimap_guide(tri);
  CHECK(s.m_unknown.at(0, 2, 3) == 1.0);
  CHECK(sum(s.m_unknown) == 1.0);
  const GuidanceLatent g = guide_latent(s, codec);
  CHECK(g.m_unknown.at(0, 1, 1) == 1.0);
  CHECK(sum(g.m_unknown) == 1.0);
  for (int c = 0; c < g.g.channels(); ++c) CHECK(g.g.at(c, 1, 1) == 0.0);
}

TEST_CASE("trimap values near the labels are accepted, others rejected") {
  Tensor3 tri({1, 2, 2}, std::vector<double>{0.0, 128.0 / 255.0, 1.0, 0.5});
  CHECK(sum(trimap_guide(tri).m_unknown) == 2.0);
  tri.at(0, 0, 0) = 0.3;
  CHECK(kind_of([&] { trimap_guide(tri); }) == ErrorKind::kValidation);
  CHECK(kind_of([&] { trimap_guide(Tensor3({3, 2, 2})); }) == ErrorKind::kShape);
}

TEST_CASE("single scribble stroke matches a pooling oracle") {
  const auto doc = ScribbleDoc::parse(R"({"strokes":[{"label":1,"radius":1.5,"points":[[3,4],[12,9]]}]})");
  const int h = 16, w = 16, f = 4;
  const SpatialGuide s = scribble_guide(doc, h, w);
  // pixel coverage by direct distance to the segment
  Tensor3 covered({1, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double best = 1e300;
      for (int k = 0; k <= 100000; ++k) {
        const double t = k / 100000.0;
        best = std::min(best, std::hypot(x - (3 + 9 * t), y - (4 + 5 * t)));
      }
      // the sampled distance is within 6e-5 of the true one; no pixel sits that close to the radius
      REQUIRE(std::abs(best - 1.5) > 1e-3);
      covered.at(0, y, x) = best < 1.5 ? 1.0 : 0.0;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      REQUIRE(s.m_unknown.at(0, y, x) == 1.0 - covered.at(0, y, x));
      REQUIRE(s.image.at(0, y, x) == covered.at(0, y, x));
    }
  const GuidanceLatent g = guide_latent(s, LatentCodec(1, f, 0));
  for (int y = 0; y < h / f; ++y)
    for (int x = 0; x < w / f; ++x) {
      bool all_covered = true;
      for (int dy = 0; dy < f; ++dy)
        for (int dx = 0; dx < f; ++dx) all_covered = all_covered && covered.at(0, y * f + dy, x * f + dx) == 1.0;
      CHECK(g.m_unknown.at(0, y, x) == (all_covered ? 0.0 : 1.0));
    }
}

TEST_CASE("later strokes overwrite earlier ones") {
  const auto doc = ScribbleDoc::parse(
      R"({"strokes":[{"label":1,"radius":2,"points":[[4,4]]},{"label":0,"radius":0,"points":[[4,4]]}]})");
  const SpatialGuide s = scribble_guide(doc, 8, 8);
  CHECK(s.image.at(0, 4, 4) == 0.0);
  CHECK(s.m_unknown.at(0, 4, 4) == 0.0);
  CHECK(s.image.at(0, 4, 5) == 1.0);
}

TEST_CASE("scribble parse errors") {
  const char* bad[] = {
      R"({})",
      R"({"strokes":[{"label":2,"radius":1,"points":[[0,0]]}]})",
      R"({"strokes":[{"label":1,"radius":-1,"points":[[0,0]]}]})",
      R"({"strokes":[{"label":1,"radius":1,"points":[]}]})",
      R"({"strokes":[{"label":1,"radius":1,"points":[[0]]}]})",
      R"({"strokes":[{"label":1,"radius":1,"points":[[0,0]],"colour":3}]})",
  };
  for (const char* text : bad) CHECK(kind_of([&] { ScribbleDoc::parse(text); }) == ErrorKind::kValidation);
  CHECK(kind_of([] { ScribbleDoc::parse("{not json"); }) == ErrorKind::kFormat);
}

TEST_CASE("mask of ones has an empty band and encodes the constant") {
  const LatentCodec codec(1, 2, 5);
  const Tensor3 ones({1, 8, 8}, 1.0);
  CHECK(sum(boundary_band(ones, 16)) == 0.0);
  const GuidanceLatent g = coarse_mask_guide(ones, codec, 16);
  CHECK(testsupport::max_abs(g.m_unknown) == 0.0);
  CHECK(max_abs_diff(g.g, codec.encode(ones)) < 1e-12);
}

TEST_CASE("circular mask band is an annulus") {
  const Tensor3 m = disc_mask(40, 40, 19.5, 20.0, 11.0);
  for (int band : {0, 1, 2, 5, 8, 16}) {
    const Tensor3 b = boundary_band(m, band);
    CHECK(max_abs_diff(b, ref_band(m, band)) == 0.0);
  }
  // far from the edge nothing is unknown, near it both sides are
  const Tensor3 b = boundary_band(m, 8);
  CHECK(b.at(0, 20, 20) == 0.0);
  CHECK(b.at(0, 0, 0) == 0.0);
  CHECK(b.at(0, 20, 31) == 1.0);
  CHECK(b.at(0, 20, 30) == 1.0);
}

TEST_CASE("band errors") {
  Tensor3 m({1, 4, 4});
  CHECK(kind_of([&] { boundary_band(m, -1); }) == ErrorKind::kConfig);
  m.at(0, 1, 1) = 0.4;
  CHECK(kind_of([&] { boundary_band(m, 4); }) == ErrorKind::kValidation);
}

TEST_CASE("thresholding a trimap at one half") {
  const Tensor3 tri({1, 1, 5}, std::vector<double>{0.0, 0.49, 0.5, 0.75, 1.0});
  const Tensor3 m = binarize_trimap(tri);
  const std::vector<double> want{0, 0, 1, 1, 1};
  for (int i = 0; i < 5; ++i) CHECK(m[i] == want[i]);
}

TEST_CASE("trimap round trip on fully known blocks") {
  const int f = 4;
  const LatentCodec codec(1, f, 13);
  Tensor3 tri({1, 16, 16});
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) tri.at(0, y, x) = x < 6 ? 0.0 : (x < 9 ? 0.5 : 1.0);
  const GuidanceLatent g = guide_latent(trimap_guide(tri), codec);
  const Tensor3 back = codec.decode(g.g);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      if (g.m_unknown.at(0, y / f, x / f) != 0.0) continue;
      REQUIRE(std::abs(back.at(0, y, x) - tri.at(0, y, x)) < 1e-9);
    }
  CHECK(sum(g.m_unknown) > 0.0);
}

TEST_CASE("resize and pad keep the unknown region conservative") {
  Tensor3 tri({1, 4, 4}, 1.0);
  tri.at(0, 1, 1) = 0.5;
  const SpatialGuide s = trimap_guide(tri);
  const SpatialGuide down = resize_guide(s, 2, 2);
  CHECK(down.m_unknown.at(0, 0, 0) == 1.0);
  CHECK(sum(down.m_unknown) == 1.0);
  const SpatialGuide up = resize_guide(s, 8, 8);
  CHECK(sum(up.m_unknown) == 4.0);
  const SpatialGuide padded = pad_guide(s, 6, 5);
  CHECK(padded.m_unknown.at(0, 5, 4) == 1.0);
  CHECK(padded.m_unknown.at(0, 3, 3) == 0.0);
  CHECK(padded.image.at(0, 3, 3) == 1.0);
}

TEST_CASE("guide latent shape errors") {
  const SpatialGuide s = mask_guide(Tensor3({1, 6, 6}));
  CHECK(kind_of([&] { guide_latent(s, LatentCodec(1, 4, 0)); }) == ErrorKind::kShape);
  CHECK(kind_of([&] { guide_latent(s, LatentCodec(3, 2, 0)); }) == ErrorKind::kConfig);
}
