#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "genmatte/codec.hpp"
#include "genmatte/denoiser.hpp"
#include "genmatte/error.hpp"
#include "genmatte/image.hpp"
#include "genmatte/sampler.hpp"
#include "support.hpp"

using namespace genmatte;
using testsupport::bit_equal;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::kInternal;
}

// Energy of the 2-D DFT coefficients above half Nyquist on either axis, summed over channels.
double high_band_energy(const Tensor3& t) {
  const int h = t.height(), w = t.width();
  double e = 0.0;
  for (int c = 0; c < t.channels(); ++c)
    for (int ky = 0; ky < h; ++ky)
      for (int kx = 0; kx < w; ++kx) {
        const int fy = std::min(ky, h - ky), fx = std::min(kx, w - kx);
        if (fy <= h / 4 && fx <= w / 4) continue;
        std::complex<double> acc = 0.0;
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            acc += t.at(c, y, x) * std::polar(1.0, -2.0 * std::numbers::pi * (double(ky) * y / h + double(kx) * x / w));
        e += std::norm(acc);
      }
  return e;
}

}  // namespace

TEST_CASE("strided step indices") {
  const auto st = strided_steps(10, 1000);
  REQUIRE(st.size() == 10);
  CHECK(st.front() == 1000);
  CHECK(st.back() == 1);
  for (std::size_t i = 1; i < st.size(); ++i) CHECK(st[i] < st[i - 1]);
  CHECK(st[1] == 889);  // 1 + 999 * 8/9
  CHECK(strided_steps(1, 1) == std::vector<int>{1});
  CHECK(kind_of([] { strided_steps(0, 10); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { strided_steps(11, 10); }) == ErrorKind::kConfig);
}

TEST_CASE("sampler config validation") {
  CHECK_NOTHROW(SamplerConfig{{5, 3, 1}}.validate(5));
  CHECK(kind_of([] { SamplerConfig{{5, 3, 2}}.validate(5); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { SamplerConfig{{3, 5, 1}}.validate(5); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { SamplerConfig{{6, 1}}.validate(5); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { SamplerConfig{{}}.validate(5); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { SamplerConfig{{1}, 1.5}.validate(5); }) == ErrorKind::kConfig);
}

TEST_CASE("init_state") {
  // beta = 0.75 at T = 1 gives alpha_bar_T = 0.25
  const DiffusionSchedule s = make_schedule(1, 0.75, 0.75);
  SeededRng rng(3);
  const Tensor3 eps = randn(rng, {4, 3, 3});
  const Tensor3 g = randn(rng, {4, 3, 3});
  const GuidanceLatent known{g, Tensor3({1, 3, 3}, 0.0)};
  SamplerConfig lit{{1}, 1.0, GuidanceMode::kLiteral};
  SamplerConfig norm{{1}, 1.0, GuidanceMode::kNormalized};

  SUBCASE("no guide is pure noise") { CHECK(bit_equal(init_state(norm, s, nullptr, eps), eps)); }
  SUBCASE("alpha_bar 0.25 example") {
    const Tensor3 a = init_state(lit, s, &known, eps);
    const Tensor3 b = init_state(norm, s, &known, eps);
    for (std::size_t i = 0; i < eps.size(); ++i) {
      CHECK(a[i] == doctest::Approx(std::sqrt(3.0) * eps[i] + g[i]).epsilon(1e-12));
      CHECK(b[i] == doctest::Approx(std::sqrt(0.75) * eps[i] + 0.5 * g[i]).epsilon(1e-12));
      CHECK(std::abs(b[i] - 0.5 * a[i]) < 1e-6);
    }
  }
  SUBCASE("fully unknown guide vanishes") {
    const GuidanceLatent unknown{Tensor3({4, 3, 3}, 0.0), Tensor3({1, 3, 3}, 1.0)};
    const Tensor3 a = init_state(lit, s, &unknown, eps);
    const Tensor3 b = init_state(norm, s, &unknown, eps);
    for (std::size_t i = 0; i < eps.size(); ++i) {
      CHECK(a[i] == doctest::Approx(std::sqrt(3.0) * eps[i]));
      CHECK(b[i] == doctest::Approx(std::sqrt(0.75) * eps[i]));
    }
  }
  SUBCASE("guide must be zero on unknown sites and match the latent") {
    Tensor3 m({1, 3, 3}, 0.0);
    m.at(0, 1, 1) = 1.0;
    const GuidanceLatent bad{g, m};
    CHECK_THROWS_AS(init_state(norm, s, &bad, eps), Error);
    const GuidanceLatent small{Tensor3({4, 2, 2}), Tensor3({1, 2, 2})};
    CHECK(kind_of([&] { init_state(norm, s, &small, eps); }) == ErrorKind::kShape);
  }
}

TEST_CASE("guide high frequencies are flooded at the default T") {
  const DiffusionSchedule s = make_schedule(1000, 1e-4, 0.02);
  const SamplerConfig cfg = make_sampler_config(10, 1000);
  const LatentCodec codec(1, 2, 2);
  // checkerboard-heavy guide: most of its energy sits in the high band
  Tensor3 matte({1, 32, 32});
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) matte.at(0, y, x) = ((x / 3 + y / 2) % 2) ? 1.0 : 0.0;
  const Tensor3 g = codec.encode(matte);
  SeededRng rng(5);
  const Tensor3 eps = randn(rng, g.dims());
  const GuidanceLatent guide{g, Tensor3({1, 16, 16}, 0.0)};
  const Tensor3 zt = init_state(cfg, s, &guide, eps);
  const double ab = s.alpha_bar(cfg.step_indices.front());
  const Tensor3 noise_term = std::sqrt(1.0 - ab) * eps;
  const Tensor3 guide_term = zt - noise_term;
  REQUIRE(high_band_energy(g) > 0.0);
  CHECK(high_band_energy(guide_term) < 0.05 * high_band_energy(zt));
  CHECK(high_band_energy(noise_term) > 0.95 * high_band_energy(zt));
}

TEST_CASE("ancestral_step") {
  const DiffusionSchedule s = make_schedule(1000, 1e-4, 0.02);
  SeededRng rng(7);
  const Tensor3 z0 = randn(rng, {2, 3, 3});
  const Tensor3 eps = randn(rng, z0.dims());

  SUBCASE("true noise, eta 0, straight to 0 recovers z0") {
    for (int t : {1, 250, 1000}) {
      const Tensor3 zt = q_sample(z0, t, eps, s);
      CHECK(max_abs_diff(ancestral_step(zt, t, 0, eps, s, 0.0, rng), z0) < 1e-6);
    }
  }
  SUBCASE("eta 0 is deterministic") {
    const Tensor3 zt = q_sample(z0, 500, eps, s);
    SeededRng r1(1), r2(2);
    CHECK(bit_equal(ancestral_step(zt, 500, 300, eps, s, 0.0, r1), ancestral_step(zt, 500, 300, eps, s, 0.0, r2)));
  }
  SUBCASE("update formula") {
    const Tensor3 zt = q_sample(z0, 500, eps, s);
    const Tensor3 fresh = randn(rng, z0.dims());
    const double eta = 0.6;
    const double ac = s.alpha_bar(500), ap = s.alpha_bar(300);
    const double v = eta * eta * (1 - ap) / (1 - ac) * (1 - ac / ap);
    CHECK(step_variance(500, 300, s, eta) == doctest::Approx(v).epsilon(1e-14));
    const Tensor3 out = ancestral_step(zt, 500, 300, eps, s, eta, fresh);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double z0h = (zt[i] - std::sqrt(1 - ac) * eps[i]) / std::sqrt(ac);
      CHECK(out[i] == doctest::Approx(std::sqrt(ap) * z0h + std::sqrt(1 - ap - v) * eps[i] + std::sqrt(v) * fresh[i])
                          .epsilon(1e-12));
    }
  }
  SUBCASE("step ordering") {
    CHECK(kind_of([&] { ancestral_step(z0, 10, 10, eps, s, 0.0, rng); }) == ErrorKind::kStep);
    CHECK(kind_of([&] { ancestral_step(z0, 10, 20, eps, s, 0.0, rng); }) == ErrorKind::kStep);
    CHECK(kind_of([&] { ancestral_step(z0, 10, -1, eps, s, 0.0, rng); }) == ErrorKind::kStep);
  }
}

TEST_CASE("noise fields") {
  const NoiseField a(5, {2, 4, 4}), b(5, {2, 4, 4});
  CHECK(bit_equal(a.field(0), b.field(0)));
  CHECK(bit_equal(a.field(3), b.field(3)));
  CHECK_FALSE(bit_equal(a.field(0), a.field(1)));
}

TEST_CASE("sample with the procedural oracle recovers the target") {
  const CodecPair codecs = make_codec_pair(2, 1, 2);
  const DiffusionSchedule s = make_schedule(1000, 1e-4, 0.02);
  const auto target = [](const ImageBuffer& img) { return luminance_threshold(img, 0.5); };
  const ProceduralOracle d = procedural_oracle(target, codecs);
  for (std::uint64_t k = 0; k < 3; ++k) {
    const ImageBuffer img = testsupport::test_image(16, 24, 40 + k);
    const Tensor3 cond = codecs.image.encode(img.pixels());
    const Tensor3 z_star = codecs.matte.encode(target(img).pixels());
    for (double eta : {0.0, 1.0})
      for (GuidanceMode mode : {GuidanceMode::kLiteral, GuidanceMode::kNormalized}) {
        const SamplerConfig cfg = make_sampler_config(10, 1000, eta, mode);
        const Tensor3 z = sample({d, cond, 4}, cfg, s, 100 + k);
        CHECK(max_abs_diff(z, z_star) < 1e-6);
        CHECK(max_abs_diff(codecs.matte.decode(z), target(img).pixels()) < 1e-3);
      }
  }
}

TEST_CASE("literal and normalized guidance agree for an oracle denoiser") {
  const CodecPair codecs = make_codec_pair(2, 1, 2);
  const DiffusionSchedule s = make_schedule(1000, 1e-4, 0.02);
  const ProceduralOracle d =
      procedural_oracle([](const ImageBuffer& img) { return luminance_threshold(img, 0.4); }, codecs);
  const ImageBuffer img = testsupport::test_image(16, 16, 3);
  const Tensor3 cond = codecs.image.encode(img.pixels());
  SeededRng rng(8);
  const GuidanceLatent guide{randn(rng, {4, 8, 8}), Tensor3({1, 8, 8}, 0.0)};
  const Tensor3 a =
      sample({d, cond, 4, &guide}, make_sampler_config(10, 1000, 0.0, GuidanceMode::kLiteral), s, 1);
  const Tensor3 b =
      sample({d, cond, 4, &guide}, make_sampler_config(10, 1000, 0.0, GuidanceMode::kNormalized), s, 1);
  CHECK(max_abs_diff(a, b) < 1e-5);
}

TEST_CASE("sample determinism and stochasticity") {
  const DiffusionSchedule s = make_schedule(1000, 1e-4, 0.02);
  const GaussianOracle d = gaussian_oracle(Tensor3({1, 1, 1}, 0.7), 0.04);
  const Tensor3 cond({3, 4, 4});
  const SamplerConfig cfg = make_sampler_config(10, 1000, 1.0);
  const Tensor3 a = sample({d, cond, 1}, cfg, s, 5);
  CHECK(bit_equal(a, sample({d, cond, 1}, cfg, s, 5)));
  CHECK_FALSE(bit_equal(a, sample({d, cond, 1}, cfg, s, 6)));
}

TEST_CASE("gaussian oracle moments with the full step ladder") {
  // Companion to the 10-step acceptance check: with every step the
  // eta-family sampler reproduces N(mu, s2).
  const DiffusionSchedule s = make_schedule(1000, 1e-4, 0.02);
  const GaussianOracle d = gaussian_oracle(Tensor3({1, 1, 1}, 0.7), 0.04);
  const Tensor3 cond({3, 1, 10000});
  const Tensor3 z = sample({d, cond, 1}, make_sampler_config(1000, 1000, 1.0), s, 2024);
  const double mean = sum(z) / z.size();
  double var = 0.0;
  for (double v : z.data()) var += (v - mean) * (v - mean);
  var /= z.size();
  CHECK(std::abs(mean - 0.7) < 0.02);
  CHECK(std::abs(var / 0.04 - 1.0) < 0.2);
}
