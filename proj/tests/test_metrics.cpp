#include <doctest.h>

#include <cmath>
#include <memory>

#include <json.hpp>

#include "genmatte/error.hpp"
#include "genmatte/hires.hpp"
#include "genmatte/metrics.hpp"
#include "support.hpp"

using namespace genmatte;

namespace {

AlphaMatte filled(int h, int w, double v) { return AlphaMatte(Tensor3({1, h, w}, v)); }

AlphaMatte random_matte(SeededRng& rng, int h, int w) {
  Tensor3 t({1, h, w});
  // quantised so plenty of values land exactly on thresholds
  for (double& v : t.data()) v = rng.uniform_int(0, 20) / 20.0;
  return AlphaMatte(t);
}

}  // namespace

TEST_CASE("identical mattes score zero") {
  SeededRng rng(1);
  for (int i = 0; i < 5; ++i) {
    const AlphaMatte a = random_matte(rng, 9, 7);
    const MetricReport r = evaluate(a, a);
    CHECK(r.sad_raw == 0.0);
    CHECK(r.sad == 0.0);
    CHECK(r.mse == 0.0);
    CHECK(r.mad == 0.0);
    CHECK(r.conn == 0.0);
  }
  CHECK(connectivity(filled(5, 5, 1.0), filled(5, 5, 1.0)) == 0.0);
}

TEST_CASE("direct arithmetic examples") {
  const MetricReport a = evaluate(filled(2, 2, 0.5), filled(2, 2, 0.0));
  CHECK(a.sad_raw == doctest::Approx(2.0));
  CHECK(a.sad == doctest::Approx(0.002));
  CHECK(a.mse == doctest::Approx(250.0));
  CHECK(a.mad == doctest::Approx(500.0));
  const MetricReport b = evaluate(filled(1, 1, 1.0), filled(1, 1, 0.0));
  CHECK(b.sad_raw == 1.0);
  CHECK(b.mse == 1000.0);
  CHECK(b.mad == 1000.0);
}

TEST_CASE("detached bright pixel raises connectivity") {
  Tensor3 gt({1, 10, 10});
  for (int y = 2; y < 6; ++y)
    for (int x = 2; x < 6; ++x) gt.at(0, y, x) = 1.0;
  Tensor3 pred = gt;
  pred.at(0, 8, 8) = 1.0;
  const double c = connectivity(AlphaMatte(pred), AlphaMatte(gt));
  CHECK(c > 0.0);
  CHECK(c == doctest::Approx(testsupport::ref_connectivity(pred, gt)).epsilon(1e-12));
  // the stray pixel has l = 0, d = 1, phi = 0 against gt's phi = 1
  CHECK(c == doctest::Approx(0.001));
}

TEST_CASE("connectivity matches a label-relaxation oracle") {
  SeededRng rng(2);
  for (int trial = 0; trial < 40; ++trial) {
    const int h = rng.uniform_int(1, 12), w = rng.uniform_int(1, 12);
    const AlphaMatte p = random_matte(rng, h, w);
    const AlphaMatte g = random_matte(rng, h, w);
    REQUIRE(connectivity(p, g) == doctest::Approx(testsupport::ref_connectivity(p.pixels(), g.pixels())).epsilon(1e-12));
    REQUIRE(connectivity(p, g, 0.25, 0.1) ==
            doctest::Approx(testsupport::ref_connectivity(p.pixels(), g.pixels(), 4, 0.1)).epsilon(1e-12));
  }
}

TEST_CASE("equal-size components go to the first in raster order") {
  // two separate 2x2 blocks; pred brighter on the right one only
  Tensor3 gt({1, 4, 7});
  for (int y = 1; y < 3; ++y)
    for (int x : {0, 1, 5, 6}) gt.at(0, y, x) = 1.0;
  Tensor3 pred = gt;
  for (int y = 1; y < 3; ++y)
    for (int x : {0, 1}) pred.at(0, y, x) = 0.6;
  const double c = connectivity(AlphaMatte(pred), AlphaMatte(gt));
  CHECK(c == doctest::Approx(testsupport::ref_connectivity(pred, gt)).epsilon(1e-12));
  // at theta <= 0.6 both blocks tie and the left one wins; above it only the right one exists
  CHECK(c == doctest::Approx(4 * 0.4 / 1000.0));
}

TEST_CASE("sad triangle inequality and metric scaling") {
  SeededRng rng(3);
  for (int i = 0; i < 20; ++i) {
    const AlphaMatte a = random_matte(rng, 6, 8), b = random_matte(rng, 6, 8), c = random_matte(rng, 6, 8);
    CHECK(evaluate(a, c).sad_raw <= evaluate(a, b).sad_raw + evaluate(b, c).sad_raw + 1e-12);
    double abs_sum = 0.0, sq_sum = 0.0;
    for (std::size_t k = 0; k < a.pixels().size(); ++k) {
      const double d = a.pixels()[k] - b.pixels()[k];
      abs_sum += std::abs(d);
      sq_sum += d * d;
    }
    const MetricReport r = evaluate(a, b);
    CHECK(r.mad == doctest::Approx(abs_sum / 48 * 1e3).epsilon(1e-12));
    CHECK(r.mse == doctest::Approx(sq_sum / 48 * 1e3).epsilon(1e-12));
    CHECK(r.sad == doctest::Approx(abs_sum / 1e3).epsilon(1e-12));
  }
}

TEST_CASE("metric errors") {
  CHECK_THROWS_AS(evaluate(filled(2, 2, 0), filled(2, 3, 0)), Error);
  try {
    connectivity(filled(2, 2, 0), filled(2, 2, 0), 1.0);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kConfig);
  }
}

TEST_CASE("report serialisation") {
  const MetricReport r = evaluate(filled(2, 2, 0.5), filled(2, 2, 0.0));
  const auto j = nlohmann::json::parse(report_json(r));
  CHECK(j.at("mse").get<double>() == doctest::Approx(250.0));
  CHECK(report_table(r).find("SAD") != std::string::npos);
}

namespace {

MattingContext procedural_ctx() {
  auto threshold = [](const ImageBuffer& c) { return luminance_threshold(c); };
  return MattingContext{make_schedule(1000, 1e-4, 0.02), make_codec_pair(2, 1, 2), TextEmbedder(16, 7),
                        make_sampler_config(10, 1000, 1.0), HiresConfig{},
                        std::make_shared<ProceduralOracle>(threshold, make_codec_pair(2, 1, 2))};
}

}  // namespace

TEST_CASE("randomness curve") {
  const MattingContext ctx = procedural_ctx();
  const ImageBuffer img = testsupport::test_image(16, 16, 4);
  const AlphaMatte gt = filled(16, 16, 0.5);

  SUBCASE("procedural oracle has no spread") {
    const std::vector<int> steps{2, 5, 10};
    const auto rows = randomness_curve(img, ctx, steps, 5, gt, 11);
    REQUIRE(rows.size() == 3);
    for (const auto& r : rows) {
      CHECK(r.sads.size() == 5);
      CHECK(r.std_sad < 1e-12);
      CHECK(r.mean_sad == doctest::Approx(0.5 * 256 / 1000.0).epsilon(1e-9));
    }
    const auto j = nlohmann::json::parse(randomness_json(rows));
    CHECK(j.size() == 3);
    CHECK(randomness_table(rows).find("std") != std::string::npos);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(randomness_curve(img, ctx, std::vector<int>{}, 5, gt), Error);
    CHECK_THROWS_AS(randomness_curve(img, ctx, std::vector<int>{2}, 1, gt), Error);
  }
}
