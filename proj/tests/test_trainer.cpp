#include <doctest.h>

#include <cmath>
#include <cstring>

#include "genmatte/compositing.hpp"
#include "genmatte/error.hpp"
#include "genmatte/trainer.hpp"
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

struct Fixture {
  DiffusionSchedule schedule = make_schedule(100, 1e-3, 0.05);
  CodecPair codecs = make_codec_pair(2, 21, 22);
  TextEmbedder embedder{6, 3};
  TrainEnv env() const { return TrainEnv{schedule, codecs, &embedder}; }
};

TrainBatch thresholded_batch(int n, int size, std::uint64_t seed) {
  SyntheticOptions opts;
  opts.height = opts.width = size;
  return TrainBatch{synthetic_dataset(n, opts, seed)};
}

ToyMlp zero_mlp(const MlpLayout& layout) {
  ToyMlp m(layout, 1);
  m.set_parameters(std::vector<double>(m.parameter_count(), 0.0));
  return m;
}

}  // namespace

TEST_CASE("cheating oracle has zero loss") {
  Fixture fx;
  const TrainBatch batch = thresholded_batch(4, 8, 1);
  // the thresholded matte is exactly what the procedural oracle predicts
  const ProceduralOracle oracle = procedural_oracle([](const ImageBuffer& c) { return luminance_threshold(c); },
                                                    fx.codecs);
  SeededRng rng(2);
  const LossParts lp = evaluate_losses(oracle, batch, fx.env(), rng, 1.0);
  CHECK(lp.conditional < 1e-20);
  CHECK(lp.pixel < 1e-20);
}

TEST_CASE("zero denoiser loss is the mean squared noise") {
  Fixture fx;
  const TrainBatch batch = thresholded_batch(2, 8, 3);
  const ToyMlp zero = zero_mlp({4, 12, 0, 1, {8}});
  SeededRng rng(4);
  double acc = 0.0;
  for (int i = 0; i < 1000; ++i) acc += loss_conditional(zero, batch, fx.env(), rng);
  CHECK(std::abs(acc / 1000 - 1.0) < 0.05);
}

TEST_CASE("losses are reproducible under a fixed rng") {
  Fixture fx;
  const TrainBatch batch = thresholded_batch(3, 8, 5);
  const ToyMlp m = toy_mlp_denoiser({4, 12, 0, 3, {8, 8}}, 6);
  SeededRng a(7), b(7);
  const LossParts la = evaluate_losses(m, batch, fx.env(), a, 0.3);
  const LossParts lb = evaluate_losses(m, batch, fx.env(), b, 0.3);
  CHECK(std::abs(la.combined - lb.combined) < 1e-10);
  SeededRng c(7), d(7);
  CHECK(grad_loss(m, batch, fx.env(), c, 0.3) == grad_loss(m, batch, fx.env(), d, 0.3));
}

TEST_CASE("gradient matches central differences") {
  Fixture fx;
  TrainBatch batch = thresholded_batch(2, 8, 8);
  batch.pairs[1].prompt = TextEmbedder::tokenize(kDetailPrompt);
  const ToyMlp m = toy_mlp_denoiser({4, 12, 6, 3, {7, 5}}, 9);
  const double w = 0.5;
  SeededRng rng(10);
  const std::vector<double> g = grad_loss(m, batch, fx.env(), rng, w);
  auto loss_at = [&](std::vector<double> p) {
    ToyMlp probe = m;
    probe.set_parameters(p);
    SeededRng r(10);
    return evaluate_losses(probe, batch, fx.env(), r, w).combined;
  };
  SeededRng pick(11);
  const double h = 1e-4;
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const auto i = static_cast<std::size_t>(pick.uniform_int(0, static_cast<int>(m.parameter_count()) - 1));
    std::vector<double> p = m.parameters();
    p[i] += h;
    const double up = loss_at(p);
    p[i] -= 2 * h;
    const double down = loss_at(p);
    const double fd = (up - down) / (2 * h);
    const double rel = std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-12});
    worst = std::max(worst, rel);
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("zero model on zero inputs moves only the output bias") {
  Fixture fx;
  TrainBatch batch;
  batch.pairs.push_back(TrainPair{ImageBuffer(Tensor3({3, 4, 4})), AlphaMatte(Tensor3({1, 4, 4})), ScaleTag::kFull, {}});
  const ToyMlp zero = zero_mlp({4, 12, 0, 1, {6}});
  SeededRng rng(12);
  const std::vector<double> g = grad_loss(zero, batch, fx.env(), rng);
  // hidden activations are tanh(0) and every downstream weight is 0
  for (std::size_t i = 0; i + 4 < g.size(); ++i) REQUIRE(g[i] == 0.0);
  double bias = 0.0;
  for (std::size_t i = g.size() - 4; i < g.size(); ++i) bias += std::abs(g[i]);
  CHECK(bias > 0.0);
}

TEST_CASE("grad_loss needs a trainable model") {
  Fixture fx;
  const TrainBatch batch = thresholded_batch(1, 8, 13);
  const GaussianOracle oracle = gaussian_oracle(Tensor3({1, 1, 1}), 1.0);
  SeededRng rng(1);
  CHECK(kind_of([&] { grad_loss(oracle, batch, fx.env(), rng); }) == ErrorKind::kCapability);
  CHECK(kind_of([&] { loss_conditional(oracle, TrainBatch{}, fx.env(), rng); }) == ErrorKind::kConfig);
}

TEST_CASE("pixel loss") {
  Fixture fx;
  const TrainBatch batch = thresholded_batch(2, 8, 14);
  const ToyMlp m = toy_mlp_denoiser({4, 12, 0, 1, {8}}, 15);

  SUBCASE("weight 0 gives the conditional loss exactly") {
    SeededRng a(16), b(16);
    const LossParts lp = evaluate_losses(m, batch, fx.env(), a, 0.0);
    CHECK(lp.combined == lp.conditional);
    CHECK(lp.conditional == loss_conditional(m, batch, fx.env(), b));
  }

  SUBCASE("zero denoiser at weight 1 matches direct evaluation") {
    TrainBatch one;
    one.pairs.push_back(batch.pairs[0]);
    const ToyMlp zero = zero_mlp({4, 12, 0, 1, {8}});
    SeededRng rng(17);
    const LossParts lp = evaluate_losses(zero, one, fx.env(), rng, 1.0);
    // replay the draws: t first, then eps over the 4x4x4 latent
    SeededRng replay(17);
    const int t = replay.uniform_int(1, 100);
    double e2 = 0.0;
    for (int i = 0; i < 64; ++i) {
      const double e = replay.normal();
      e2 += e * e;
    }
    const double ab = fx.schedule.alpha_bar(t);
    // eps_hat = 0 puts z0_hat at z0 + sqrt((1 - ab) / ab) eps; decode preserves the norm
    const double cond = e2 / 64.0;
    const double pix = (1.0 - ab) / ab * e2 / 64.0;
    CHECK(lp.conditional == doctest::Approx(cond).epsilon(1e-12));
    CHECK(lp.pixel == doctest::Approx(pix).epsilon(1e-10));
    CHECK(lp.combined == doctest::Approx(cond + pix).epsilon(1e-10));
  }
}

TEST_CASE("training with lr 0 leaves parameters unchanged") {
  Fixture fx;
  const auto data = thresholded_batch(4, 8, 18).pairs;
  const ToyMlp m = toy_mlp_denoiser({4, 12, 0, 1, {8}}, 19);
  TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.iters = 5;
  cfg.batch = 2;
  const TrainResult r = train(m, data, cfg, fx.env());
  CHECK(r.model.parameters() == m.parameters());
  CHECK(r.losses.size() == 5);
}

TEST_CASE("seeded training reproduces the curve bitwise and lowers the loss") {
  Fixture fx;
  const auto data = thresholded_batch(16, 8, 20).pairs;
  const ToyMlp m = toy_mlp_denoiser({4, 12, 6, 1, {16}}, 21);
  TrainConfig cfg;
  cfg.lr = 0.05;
  cfg.iters = 300;
  cfg.batch = 4;
  cfg.seed = 22;
  cfg.use_text = true;
  const TrainResult a = train(m, data, cfg, fx.env());
  const TrainResult b = train(m, data, cfg, fx.env());
  REQUIRE(a.losses.size() == b.losses.size());
  CHECK(std::memcmp(a.losses.data(), b.losses.data(), a.losses.size() * sizeof(double)) == 0);
  CHECK(a.model.parameters() == b.model.parameters());
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 50; ++i) {
    head += a.losses[i];
    tail += a.losses[a.losses.size() - 1 - i];
  }
  CHECK(tail < head);
}

TEST_CASE("divergence raises a training error") {
  Fixture fx;
  const auto data = thresholded_batch(2, 8, 23).pairs;
  const ToyMlp m = toy_mlp_denoiser({4, 12, 0, 1, {8}}, 24);
  TrainConfig cfg;
  cfg.lr = 1e300;
  cfg.iters = 20;
  cfg.batch = 2;
  try {
    train(m, data, cfg, fx.env());
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kTraining);
    CHECK(std::string(e.what()).find("iteration") != std::string::npos);
  }
}

TEST_CASE("training config validation") {
  TrainConfig cfg;
  cfg.iters = 0;
  CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::kConfig);
  cfg = TrainConfig{};
  cfg.lr = -1.0;
  CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::kConfig);
}

TEST_CASE("batches mix scales and prompt the crops") {
  const auto data = thresholded_batch(4, 16, 25).pairs;
  TrainConfig cfg;
  cfg.batch = 64;
  cfg.use_text = true;
  SeededRng rng(26);
  const TrainBatch b = draw_batch(data, cfg, 2, rng);
  int half = 0;
  for (const TrainPair& p : b.pairs) {
    if (p.scale == ScaleTag::kHalf) {
      ++half;
      CHECK(p.image.height() == 8);
      CHECK(p.prompt == TextEmbedder::tokenize(kDetailPrompt));
    } else {
      CHECK(p.image.height() == 16);
      CHECK(p.prompt.empty());
    }
  }
  CHECK(half > 0);
  CHECK(half < 64);
  cfg.multi_scale = false;
  for (const TrainPair& p : draw_batch(data, cfg, 2, rng).pairs) CHECK(p.scale == ScaleTag::kFull);
}

TEST_CASE("conditional extension drifts from the base after a step") {
  Fixture fx;
  const auto data = thresholded_batch(8, 8, 27).pairs;
  const ToyMlp base = toy_mlp_denoiser({4, 0, 0, 1, {8}}, 28);
  const ToyMlp ext = extend_conditional(base, 12, 0);
  SeededRng rng(29);
  const Tensor3 z = randn(rng, {4, 4, 4});
  const Tensor3 c1 = randn(rng, {12, 4, 4});
  const Tensor3 c2 = randn(rng, {12, 4, 4});
  CHECK(testsupport::bit_equal(ext.predict_eps({z, c1, 40}, fx.schedule), ext.predict_eps({z, c2, 40}, fx.schedule)));
  TrainConfig cfg;
  cfg.lr = 0.1;
  cfg.iters = 1;
  cfg.batch = 4;
  const ToyMlp stepped = train(ext, data, cfg, fx.env()).model;
  CHECK(max_abs_diff(stepped.predict_eps({z, c1, 40}, fx.schedule), stepped.predict_eps({z, c2, 40}, fx.schedule)) >
        0.0);
}

TEST_CASE("synthetic data satisfies the composition equation") {
  SyntheticOptions opts;
  opts.height = 24;
  opts.width = 20;
  SeededRng rng(30);
  for (int i = 0; i < 10; ++i) {
    const SyntheticSample s = synthetic_sample(opts, rng);
    CHECK(residual(s.composite, s.alpha, s.fg, s.bg) == 0.0);
    const AlphaMatte thr = luminance_threshold(s.composite);
    CHECK(max_abs_diff(thr.pixels(), s.matte.pixels()) == 0.0);
  }
}
