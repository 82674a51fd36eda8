#include "genmatte/trainer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "genmatte/compositing.hpp"
#include "genmatte/error.hpp"

namespace genmatte {

void TrainConfig::validate() const {
  require(lr >= 0.0 && std::isfinite(lr), ErrorKind::kConfig, "learning rate must be finite and >= 0");
  require(iters >= 1, ErrorKind::kConfig, "iters must be >= 1");
  require(batch >= 1, ErrorKind::kConfig, "batch size must be >= 1");
  require(pixel_loss_weight >= 0.0, ErrorKind::kConfig, "pixel loss weight must be >= 0");
}

namespace {

LossParts run_losses(const Denoiser& d, const TrainBatch& batch, const TrainEnv& env, SeededRng& rng, double w,
                     const ToyMlp* mlp, std::vector<double>* grad) {
  require(!batch.pairs.empty(), ErrorKind::kConfig, "empty training batch");
  const DiffusionSchedule& s = env.schedule;
  const int f = env.codecs.matte.factor();
  const double n_pairs = static_cast<double>(batch.pairs.size());
  LossParts out;
  for (const TrainPair& pair : batch.pairs) {
    require(pair.image.dims().spatially_equal(pair.matte.dims()), ErrorKind::kShape,
            "image " + to_string(pair.image.dims()) + " vs matte " + to_string(pair.matte.dims()));
    require(pair.image.height() % f == 0 && pair.image.width() % f == 0, ErrorKind::kShape,
            "training pair dims not divisible by " + std::to_string(f));
    const Tensor3 z0 = env.codecs.matte.encode(pair.matte.pixels());
    const Tensor3 cond = env.codecs.image.encode(pair.image.pixels());
    const int t = rng.uniform_int(1, s.steps());
    const Tensor3 eps = randn(rng, z0.dims());
    const Tensor3 zt = q_sample(z0, t, eps, s);
    std::vector<double> text;
    if (!pair.prompt.empty()) {
      require(env.embedder != nullptr, ErrorKind::kConfig, "prompted pair but no text embedder");
      text = env.embedder->embed(pair.prompt);
    }
    const DenoiserInput in{zt, cond, t, text};
    const double ab = s.alpha_bar(t);
    const double n = static_cast<double>(eps.size());
    const double n_pix = static_cast<double>(pair.matte.pixels().size());

    double cond_loss = 0.0;
    double pix_loss = 0.0;
    auto losses_and_grad = [&](const Tensor3& eh) {
      Tensor3 g(eh.dims());
      for (std::size_t i = 0; i < eh.size(); ++i) {
        const double r = eh[i] - eps[i];
        cond_loss += r * r;
        g[i] = 2.0 * r / (n * n_pairs);
      }
      cond_loss /= n;
      Tensor3 resid = env.codecs.matte.decode(predicted_z0(zt, eh, t, s));
      resid -= pair.matte.pixels();
      for (double r : resid.data()) pix_loss += r * r;
      pix_loss /= n_pix;
      if (w != 0.0) {
        // decode is orthonormal, so its adjoint is encode
        resid *= 2.0 / (n_pix * n_pairs);
        const Tensor3 back = env.codecs.matte.encode(resid);
        const double dz0 = -std::sqrt(1.0 - ab) / std::sqrt(ab);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += w * dz0 * back[i];
      }
      return g;
    };
    if (mlp != nullptr)
      mlp->forward_backward(in, s, losses_and_grad, *grad);
    else
      losses_and_grad(d.predict_eps(in, s));
    out.conditional += cond_loss / n_pairs;
    out.pixel += pix_loss / n_pairs;
  }
  out.combined = out.conditional + w * out.pixel;
  return out;
}

}  // namespace

LossParts evaluate_losses(const Denoiser& d, const TrainBatch& batch, const TrainEnv& env, SeededRng& rng,
                          double pixel_loss_weight) {
  return run_losses(d, batch, env, rng, pixel_loss_weight, nullptr, nullptr);
}

double loss_conditional(const Denoiser& d, const TrainBatch& batch, const TrainEnv& env, SeededRng& rng) {
  return evaluate_losses(d, batch, env, rng).conditional;
}

double loss_pixel(const Denoiser& d, const TrainBatch& batch, const TrainEnv& env, SeededRng& rng) {
  return evaluate_losses(d, batch, env, rng).pixel;
}

std::vector<double> grad_loss(const Denoiser& d, const TrainBatch& batch, const TrainEnv& env, SeededRng& rng,
                              double pixel_loss_weight, LossParts* losses) {
  const auto* mlp = dynamic_cast<const ToyMlp*>(&d);
  require(mlp != nullptr, ErrorKind::kCapability, "denoiser has no analytic gradient");
  std::vector<double> grad(mlp->parameter_count(), 0.0);
  const LossParts lp = run_losses(d, batch, env, rng, pixel_loss_weight, mlp, &grad);
  if (losses != nullptr) *losses = lp;
  return grad;
}

TrainBatch draw_batch(const std::vector<TrainPair>& dataset, const TrainConfig& cfg, int f, SeededRng& rng) {
  require(!dataset.empty(), ErrorKind::kConfig, "empty dataset");
  TrainBatch batch;
  for (int b = 0; b < cfg.batch; ++b) {
    const TrainPair& src = dataset[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(dataset.size()) - 1))];
    const bool half = cfg.multi_scale && rng.uniform() < 0.5;
    if (!half) {
      TrainPair p = src;
      if (!cfg.use_text) p.prompt.clear();
      batch.pairs.push_back(std::move(p));
      continue;
    }
    const int hh = src.image.height() / 2 / f * f;
    const int hw = src.image.width() / 2 / f * f;
    require(hh >= f && hw >= f, ErrorKind::kConfig, "pair too small for half-scale crops");
    const int oy = f * rng.uniform_int(0, (src.image.height() - hh) / f);
    const int ox = f * rng.uniform_int(0, (src.image.width() - hw) / f);
    const PatchBox box{ox, oy, hw, hh};
    TrainPair p{ImageBuffer(crop(src.image.pixels(), box)), AlphaMatte(crop(src.matte.pixels(), box)),
                ScaleTag::kHalf, {}};
    if (cfg.use_text) p.prompt = TextEmbedder::tokenize(kDetailPrompt);
    batch.pairs.push_back(std::move(p));
  }
  return batch;
}

TrainResult train(const ToyMlp& model, const std::vector<TrainPair>& dataset, const TrainConfig& cfg,
                  const TrainEnv& env) {
  cfg.validate();
  require(!dataset.empty(), ErrorKind::kConfig, "empty dataset");
  TrainResult out{model, {}};
  out.losses.reserve(static_cast<std::size_t>(cfg.iters));
  SeededRng rng(cfg.seed);
  std::vector<double> params = model.parameters();
  for (int it = 0; it < cfg.iters; ++it) {
    const TrainBatch batch = draw_batch(dataset, cfg, env.codecs.matte.factor(), rng);
    LossParts lp;
    const std::vector<double> grad = grad_loss(out.model, batch, env, rng, cfg.pixel_loss_weight, &lp);
    bool finite = std::isfinite(lp.combined);
    for (double g : grad) finite = finite && std::isfinite(g);
    if (!finite) fail(ErrorKind::kTraining, "training diverged at iteration " + std::to_string(it));
    out.losses.push_back(lp.combined);
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= cfg.lr * grad[i];
    out.model.set_parameters(params);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

double point_segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax;
  const double vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  const double u = len2 > 0.0 ? std::clamp(((px - ax) * vx + (py - ay) * vy) / len2, 0.0, 1.0) : 0.0;
  return std::hypot(px - (ax + u * vx), py - (ay + u * vy));
}

Tensor3 gradient_layer(int h, int w, double lo, double hi, SeededRng& rng) {
  Tensor3 out(Dims{3, h, w});
  for (int c = 0; c < 3; ++c) {
    const double base = lo + (hi - lo) * rng.uniform();
    const double gx = 0.1 * (rng.uniform() - 0.5);
    const double gy = 0.1 * (rng.uniform() - 0.5);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.at(c, y, x) = std::clamp(base + gx * x / w + gy * y / h, 0.0, 1.0);
  }
  return out;
}

}  // namespace

SyntheticSample synthetic_sample(const SyntheticOptions& opts, SeededRng& rng) {
  require(opts.height >= 1 && opts.width >= 1, ErrorKind::kConfig, "synthetic canvas must be non-empty");
  require(opts.max_discs >= 0 && opts.max_hairs >= 0, ErrorKind::kConfig, "negative layer counts");
  const int h = opts.height;
  const int w = opts.width;
  const ImageBuffer bg(gradient_layer(h, w, 0.0, 0.35, rng));
  const ImageBuffer fg(gradient_layer(h, w, 0.65, 1.0, rng));
  Tensor3 alpha(Dims{1, h, w});
  const double short_side = std::min(h, w);

  const int discs = opts.max_discs > 0 ? rng.uniform_int(1, opts.max_discs) : 0;
  for (int k = 0; k < discs; ++k) {
    const double cx = w * (0.2 + 0.6 * rng.uniform());
    const double cy = h * (0.2 + 0.6 * rng.uniform());
    const double r = short_side * (0.15 + 0.2 * rng.uniform());
    const double soft = 0.5 + 2.0 * rng.uniform();
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double d = std::hypot(x - cx, y - cy);
        alpha.at(0, y, x) = std::max(alpha.at(0, y, x), std::clamp((r - d) / soft + 0.5, 0.0, 1.0));
      }
  }

  const int hairs = opts.max_hairs > 0 ? rng.uniform_int(0, opts.max_hairs) : 0;
  for (int k = 0; k < hairs; ++k) {
    const int npts = rng.uniform_int(2, 4);
    std::vector<std::array<double, 2>> pts;
    for (int i = 0; i < npts; ++i) pts.push_back({w * rng.uniform(), h * rng.uniform()});
    const double sigma = 0.4 + 0.6 * rng.uniform();
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double d = std::numeric_limits<double>::infinity();
        for (int i = 0; i + 1 < npts; ++i)
          d = std::min(d, point_segment_distance(x, y, pts[i][0], pts[i][1], pts[i + 1][0], pts[i + 1][1]));
        if (d > 3.0 * sigma) continue;
        alpha.at(0, y, x) = std::max(alpha.at(0, y, x), std::exp(-d * d / (2.0 * sigma * sigma)));
      }
  }

  AlphaMatte a(std::move(alpha));
  ImageBuffer c = composite(a, fg, bg);
  AlphaMatte matte = opts.threshold_matte ? luminance_threshold(c, 0.5) : a;
  return SyntheticSample{std::move(c), fg, bg, std::move(a), std::move(matte)};
}

std::vector<TrainPair> synthetic_dataset(int count, const SyntheticOptions& opts, std::uint64_t seed) {
  require(count >= 1, ErrorKind::kConfig, "dataset size must be >= 1");
  std::vector<TrainPair> out;
  for (int i = 0; i < count; ++i) {
    SeededRng rng(child_seed(seed, static_cast<std::uint64_t>(i)));
    SyntheticSample s = synthetic_sample(opts, rng);
    out.push_back(TrainPair{std::move(s.composite), std::move(s.matte), ScaleTag::kFull, {}});
  }
  return out;
}

}  // namespace genmatte
