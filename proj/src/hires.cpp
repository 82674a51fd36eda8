#include "genmatte/hires.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "genmatte/error.hpp"
#include "genmatte/parallel.hpp"

namespace genmatte {

void HiresConfig::validate() const {
  require(ensemble_size >= 1, ErrorKind::kConfig, "ensemble size must be >= 1");
  require(patch_size >= 1 && overlap >= 0 && patch_size > overlap, ErrorKind::kConfig,
          "patch size must exceed overlap (P=" + std::to_string(patch_size) +
              ", O=" + std::to_string(overlap) + ")");
  require(feather >= 0 && dilation >= 0, ErrorKind::kConfig, "feather and dilation must be >= 0");
  require(hr_eta >= 0.0 && hr_eta <= 1.0, ErrorKind::kConfig, "hr eta must lie in [0,1]");
  require(lr_long_side >= 1 && pad_multiple >= 0, ErrorKind::kConfig, "bad LR size / pad multiple");
  if (tau.kind == TauPolicy::Kind::kFixed)
    require(tau.value > 0.0, ErrorKind::kConfig, "fixed tau must be > 0");
  if (tau.kind == TauPolicy::Kind::kAuto)
    require(tau.value > 0.0, ErrorKind::kConfig, "tau floor must be > 0");
}

std::size_t PatchPlan::box_sites() const {
  std::size_t n = 0;
  for (const auto& b : boxes) n += static_cast<std::size_t>(b.area());
  return n;
}

EnsembleResult lr_ensemble(const ImageBuffer& image_lr, const MattingContext& ctx, int L,
                           std::uint64_t base_seed, const LrConditioning& cond) {
  require(L >= 1, ErrorKind::kConfig, "ensemble size must be >= 1");
  const Tensor3 cond_latent = ctx.codecs.image.encode(image_lr.pixels());
  const int channels = ctx.codecs.matte.latent_channels();
  auto latents = parallel_map(static_cast<std::size_t>(L), [&](std::size_t l) {
    const SampleRequest req{*ctx.denoiser, cond_latent, channels, cond.guide, cond.text};
    return sample(req, ctx.sampler, ctx.schedule, child_seed(base_seed, l));
  });
  EnsembleResult out;
  for (int l = 0; l < L; ++l) {
    out.mattes.emplace_back(ctx.codecs.matte.decode(latents[l]));
    out.seeds.push_back(child_seed(base_seed, static_cast<std::uint64_t>(l)));
  }
  out.latents = std::move(latents);
  return out;
}

UncertaintyMap uncertainty(const EnsembleResult& e) {
  const std::size_t L = e.mattes.size();
  require(L >= 2, ErrorKind::kEnsemble, "uncertainty needs at least 2 ensemble members, got " + std::to_string(L));
  const Dims d = e.mattes.front().dims();
  for (const auto& m : e.mattes)
    require(m.dims() == d, ErrorKind::kShape, "ensemble mattes differ in shape");
  Tensor3 grid(d);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double mean = 0.0;
    for (const auto& m : e.mattes) mean += m.pixels()[i];
    mean /= static_cast<double>(L);
    double var = 0.0;
    for (const auto& m : e.mattes) {
      const double r = m.pixels()[i] - mean;
      var += r * r;
    }
    grid[i] = std::sqrt(var / static_cast<double>(L));
  }
  return UncertaintyMap{std::move(grid)};
}

double resolve_tau(const TauPolicy& policy, const UncertaintyMap& u) {
  switch (policy.kind) {
    case TauPolicy::Kind::kFixed:
      return policy.value;
    case TauPolicy::Kind::kAll:
      return 0.0;
    case TauPolicy::Kind::kAuto: {
      std::vector<double> nz;
      for (double v : u.grid.data())
        if (v > 0.0) nz.push_back(v);
      if (nz.empty()) return policy.value;
      // nearest-rank percentile
      const std::size_t rank = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(nz.size())));
      std::nth_element(nz.begin(), nz.begin() + (rank - 1), nz.end());
      return std::max(policy.value, nz[rank - 1]);
    }
  }
  fail(ErrorKind::kInternal, "unknown tau policy");
}

Tensor3 flagged_sites(const UncertaintyMap& u, double tau, int dilation, int f, int target_height,
                      int target_width, bool flag_all) {
  const Tensor3& g = u.grid;
  require(g.channels() == 1 && g.height() >= 1 && g.width() >= 1, ErrorKind::kShape,
          "uncertainty map must be a non-empty single-channel grid");
  require(f >= 1 && target_height % f == 0 && target_width % f == 0, ErrorKind::kShape,
          "target " + std::to_string(target_height) + "x" + std::to_string(target_width) +
              " not divisible by " + std::to_string(f));
  require(dilation >= 0, ErrorKind::kConfig, "dilation must be >= 0");
  const int lh = target_height / f;
  const int lw = target_width / f;
  if (flag_all) return Tensor3(Dims{1, lh, lw}, 1.0);
  require(tau > 0.0, ErrorKind::kConfig, "tau must be > 0");

  const int uh = g.height();
  const int uw = g.width();
  Tensor3 hot(Dims{1, uh, uw});
  const int r = dilation;
  for (int y = 0; y < uh; ++y)
    for (int x = 0; x < uw; ++x) {
      if (g.at(0, y, x) < tau) continue;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const int py = y + dy;
          const int px = x + dx;
          if (py >= 0 && py < uh && px >= 0 && px < uw && dx * dx + dy * dy <= r * r) hot.at(0, py, px) = 1.0;
        }
    }

  // nearest-neighbour footprint: target pixel X reads map pixel floor(X * uw / W)
  std::vector<int> rows(target_height), cols(target_width);
  for (int y = 0; y < target_height; ++y)
    rows[y] = static_cast<int>(static_cast<long long>(y) * uh / target_height);
  for (int x = 0; x < target_width; ++x)
    cols[x] = static_cast<int>(static_cast<long long>(x) * uw / target_width);

  Tensor3 flags(Dims{1, lh, lw});
  for (int ly = 0; ly < lh; ++ly)
    for (int lx = 0; lx < lw; ++lx) {
      bool any = false;
      for (int dy = 0; dy < f && !any; ++dy)
        for (int dx = 0; dx < f && !any; ++dx) any = hot.at(0, rows[ly * f + dy], cols[lx * f + dx]) > 0.0;
      flags.at(0, ly, lx) = any ? 1.0 : 0.0;
    }
  return flags;
}

namespace {

std::vector<int> grid_origins(int n, int P, int O) {
  const int stride = P - O;
  std::vector<int> out;
  for (int o = 0;; o += stride) {
    if (o + P >= n) {
      const int last = std::max(0, n - P);
      if (out.empty() || out.back() != last) out.push_back(last);
      break;
    }
    out.push_back(o);
  }
  return out;
}

}  // namespace

PatchPlan plan_from_flags(const Tensor3& flags, int patch_size, int overlap, int f, double tau) {
  require(patch_size >= 1 && overlap >= 0 && patch_size > overlap, ErrorKind::kConfig,
          "patch size must exceed overlap (P=" + std::to_string(patch_size) +
              ", O=" + std::to_string(overlap) + ")");
  require(flags.channels() == 1, ErrorKind::kShape, "flag grid must be single-channel");
  const int h = flags.height();
  const int w = flags.width();

  // summed-area table for box occupancy queries
  std::vector<int> sat(static_cast<std::size_t>(h + 1) * (w + 1), 0);
  auto S = [&](int y, int x) -> int& { return sat[static_cast<std::size_t>(y) * (w + 1) + x]; };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      S(y + 1, x + 1) = S(y, x + 1) + S(y + 1, x) - S(y, x) + (flags.at(0, y, x) > 0.0 ? 1 : 0);

  PatchPlan plan;
  plan.patch_size = patch_size;
  plan.overlap = overlap;
  plan.f = f;
  plan.tau = tau;
  plan.coverage = Tensor3(Dims{1, h, w});
  const int bh = std::min(patch_size, h);
  const int bw = std::min(patch_size, w);
  for (int oy : grid_origins(h, patch_size, overlap))
    for (int ox : grid_origins(w, patch_size, overlap)) {
      const int count = S(oy + bh, ox + bw) - S(oy, ox + bw) - S(oy + bh, ox) + S(oy, ox);
      if (count == 0) continue;
      const PatchBox b{ox, oy, bw, bh};
      plan.boxes.push_back(b);
      for (int y = b.y; y < b.y + b.h; ++y)
        for (int x = b.x; x < b.x + b.w; ++x) plan.coverage.at(0, y, x) += 1.0;
    }
  return plan;
}

PatchPlan select_patches(const UncertaintyMap& u, double tau, int patch_size, int overlap, int f, int dilation,
                         std::optional<std::pair<int, int>> target_hw, bool flag_all) {
  require(patch_size > overlap && overlap >= 0, ErrorKind::kConfig,
          "patch size must exceed overlap (P=" + std::to_string(patch_size) +
              ", O=" + std::to_string(overlap) + ")");
  const auto [th, tw] = target_hw.value_or(std::pair{u.grid.height(), u.grid.width()});
  const Tensor3 flags = flagged_sites(u, tau, dilation, f, th, tw, flag_all);
  return plan_from_flags(flags, patch_size, overlap, f, tau);
}

NoiseField shared_noise(const Dims& latent_dims, std::uint64_t seed) { return NoiseField(seed, latent_dims); }

double feather_weight(const PatchBox& b, int y, int x, int canvas_h, int canvas_w, int ramp) {
  if (ramp <= 0) return 1.0;
  // distance (in sites) to each box edge that is not on the canvas border
  int d = std::numeric_limits<int>::max();
  if (b.x > 0) d = std::min(d, x - b.x);
  if (b.y > 0) d = std::min(d, y - b.y);
  if (b.x + b.w < canvas_w) d = std::min(d, b.x + b.w - 1 - x);
  if (b.y + b.h < canvas_h) d = std::min(d, b.y + b.h - 1 - y);
  if (d >= ramp) return 1.0;
  return (d + 1.0) / (ramp + 1.0);
}

Tensor3 merge_collage(std::span<const std::pair<Tensor3, PatchBox>> patches, Dims canvas, MergeWeights weights,
                      int overlap, const Tensor3* background) {
  if (background != nullptr)
    require(background->dims() == canvas, ErrorKind::kShape,
            "background " + to_string(background->dims()) + " vs canvas " + to_string(canvas));
  const int ramp = weights == MergeWeights::kFeathered ? overlap / 2 : 0;
  Tensor3 num(canvas);
  Tensor3 den(Dims{1, canvas.height, canvas.width});
  for (const auto& [p, b] : patches) {
    require(fits(b, canvas.height, canvas.width), ErrorKind::kBounds, "patch box outside canvas");
    require(p.dims() == Dims{canvas.channels, b.h, b.w}, ErrorKind::kShape,
            "patch " + to_string(p.dims()) + " does not match its box");
    for (int y = 0; y < b.h; ++y)
      for (int x = 0; x < b.w; ++x) {
        const double wgt = feather_weight(b, b.y + y, b.x + x, canvas.height, canvas.width, ramp);
        den.at(0, b.y + y, b.x + x) += wgt;
        for (int c = 0; c < canvas.channels; ++c) num.at(c, b.y + y, b.x + x) += wgt * p.at(c, y, x);
      }
  }
  Tensor3 out(canvas);
  for (int y = 0; y < canvas.height; ++y)
    for (int x = 0; x < canvas.width; ++x) {
      const double w = den.at(0, y, x);
      for (int c = 0; c < canvas.channels; ++c) {
        if (w > 0.0)
          out.at(c, y, x) = num.at(c, y, x) / w;
        else if (background != nullptr)
          out.at(c, y, x) = background->at(c, y, x);
      }
    }
  return out;
}

HrRefineResult hr_refine(const HrRefineRequest& req, const SamplerConfig& cfg, const DiffusionSchedule& s,
                         std::uint64_t seed, MergeWeights weights) {
  cfg.validate(s.steps());
  const PatchPlan& plan = req.plan;
  require(!plan.empty(), ErrorKind::kConfig, "hr_refine needs a non-empty patch plan");
  const Dims dims = req.guide_up.dims();
  require(req.cond_latent.dims().spatially_equal(dims), ErrorKind::kShape,
          "HR cond latent " + to_string(req.cond_latent.dims()) + " vs guide " + to_string(dims));
  require(plan.coverage.dims().spatially_equal(dims), ErrorKind::kShape, "plan does not match the HR latent grid");
  for (const auto& b : plan.boxes)
    require(fits(b, dims.height, dims.width), ErrorKind::kBounds, "plan box outside HR latent grid");

  const NoiseField noise = shared_noise(dims, seed);
  const GuidanceLatent guide{req.guide_up, Tensor3(Dims{1, dims.height, dims.width})};
  Tensor3 z = init_state(cfg, s, &guide, noise.field(0));

  std::vector<Tensor3> cond_patches;
  for (const auto& b : plan.boxes) cond_patches.push_back(crop(req.cond_latent, b));

  const auto& steps = cfg.step_indices;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const int t = steps[i];
    const int t_prev = i + 1 < steps.size() ? steps[i + 1] : 0;
    const bool noisy = step_variance(t, t_prev, s, cfg.eta) > 0.0;
    const Tensor3 fresh = noisy ? noise.field(static_cast<int>(i) + 1) : Tensor3();
    auto patches = parallel_map(plan.boxes.size(), [&](std::size_t k) {
      const PatchBox& b = plan.boxes[k];
      const Tensor3 zk = crop(z, b);
      const Tensor3 eps = req.denoiser.predict_eps({zk, cond_patches[k], t, req.text}, s);
      return std::pair{ancestral_step(zk, t, t_prev, eps, s, cfg.eta, noisy ? crop(fresh, b) : Tensor3()), b};
    });
    z = merge_collage(patches, dims, weights, plan.overlap, &z);
  }

  for (int y = 0; y < dims.height; ++y)
    for (int x = 0; x < dims.width; ++x)
      if (plan.coverage.at(0, y, x) <= 0.0)
        for (int c = 0; c < dims.channels; ++c) z.at(c, y, x) = req.guide_up.at(c, y, x);
  return HrRefineResult{std::move(z), steps.size() * plan.box_sites()};
}

Tensor3 fusion_mask(const PatchPlan& plan, int feather) {
  require(feather >= 0, ErrorKind::kConfig, "feather width must be >= 0");
  const Tensor3& cov = plan.coverage;
  const int h = cov.height();
  const int w = cov.width();
  // Chebyshev distance to the nearest uncovered site via 8-connected BFS
  constexpr int kInf = std::numeric_limits<int>::max();
  std::vector<int> dist(static_cast<std::size_t>(h) * w, kInf);
  std::deque<std::pair<int, int>> queue;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (cov.at(0, y, x) <= 0.0) {
        dist[static_cast<std::size_t>(y) * w + x] = 0;
        queue.emplace_back(y, x);
      }
  while (!queue.empty()) {
    const auto [y, x] = queue.front();
    queue.pop_front();
    const int d = dist[static_cast<std::size_t>(y) * w + x];
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int ny = y + dy;
        const int nx = x + dx;
        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
        int& nd = dist[static_cast<std::size_t>(ny) * w + nx];
        if (nd == kInf) {
          nd = d + 1;
          queue.emplace_back(ny, nx);
        }
      }
  }
  Tensor3 m(Dims{1, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int d = dist[static_cast<std::size_t>(y) * w + x];
      if (d == 0) continue;
      m.at(0, y, x) = d == kInf ? 1.0 : std::min(1.0, d / (feather + 1.0));
    }
  return m;
}

Tensor3 fuse_final(const Tensor3& refined, const Tensor3& lr_up, const PatchPlan& plan, int feather) {
  require(refined.dims() == lr_up.dims(), ErrorKind::kShape,
          "refined " + to_string(refined.dims()) + " vs LR " + to_string(lr_up.dims()));
  if (plan.empty()) return lr_up;
  require(plan.coverage.dims().spatially_equal(refined.dims()), ErrorKind::kShape,
          "plan coverage does not match the latent grid");
  const Tensor3 m = fusion_mask(plan, feather);
  Tensor3 out(refined.dims());
  for (int c = 0; c < out.channels(); ++c)
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x) {
        const double k = m.at(0, y, x);
        out.at(c, y, x) = k * refined.at(c, y, x) + (1.0 - k) * lr_up.at(c, y, x);
      }
  return out;
}

Tensor3 upsample_latent(const Tensor3& z, int height, int width, LatentUpsample mode) {
  switch (mode) {
    case LatentUpsample::kBilinear:
      return resize_bilinear(z, height, width);
    case LatentUpsample::kNearest:
      return resize_nearest(z, height, width);
  }
  fail(ErrorKind::kInternal, "unknown upsample mode");
}

std::size_t choose_guide_member(const EnsembleResult& e) {
  require(!e.mattes.empty(), ErrorKind::kEnsemble, "empty ensemble");
  const std::size_t n = e.mattes.front().pixels().size();
  std::vector<double> mean(n, 0.0);
  for (const auto& m : e.mattes)
    for (std::size_t i = 0; i < n; ++i) mean[i] += m.pixels()[i];
  for (double& v : mean) v /= static_cast<double>(e.mattes.size());
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < e.mattes.size(); ++l) {
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) d += std::abs(e.mattes[l].pixels()[i] - mean[i]);
    if (d < best_d) {
      best_d = d;
      best = l;
    }
  }
  return best;
}

std::pair<int, int> lr_dims(int height, int width, int lr_long_side, int f) {
  require(height >= 1 && width >= 1 && f >= 1 && lr_long_side >= 1, ErrorKind::kConfig, "bad LR sizing input");
  const double scale = std::min(1.0, static_cast<double>(lr_long_side) / std::max(height, width));
  auto side = [&](int n) {
    const long q = std::lround(n * scale / f);
    return static_cast<int>(std::max<long>(1, q)) * f;
  };
  return {side(height), side(width)};
}

MatteResult matte_hr(const ImageBuffer& image, const MattingContext& ctx, const MatteOptions& opts) {
  ctx.hires.validate();
  require(ctx.denoiser != nullptr, ErrorKind::kConfig, "no denoiser configured");
  require(image.height() >= 1 && image.width() >= 1, ErrorKind::kShape, "empty input image");
  const int f = ctx.factor();
  const int pad = ctx.hires.pad_multiple > 0 ? ctx.hires.pad_multiple : 8 * f;
  require(pad % f == 0, ErrorKind::kConfig, "pad multiple must be a multiple of f");

  const int h0 = image.height();
  const int w0 = image.width();
  const Tensor3 padded = pad_to_multiple(image.pixels(), pad);
  const int H = padded.height();
  const int W = padded.width();

  std::optional<SpatialGuide> guide;
  if (opts.guide) {
    require(opts.guide->image.dims().spatially_equal(image.dims()), ErrorKind::kShape,
            "guide " + to_string(opts.guide->image.dims()) + " vs image " + to_string(image.dims()));
    guide = pad_guide(*opts.guide, H, W);
  }

  std::vector<double> text_lr, text_hr;
  if (!opts.prompt.empty()) {
    text_lr = ctx.embedder.embed_prompt(opts.prompt);
    text_hr = ctx.embedder.embed_prompt(kDetailPrompt);
  }

  const auto [lh, lw] = lr_dims(H, W, ctx.hires.lr_long_side, f);
  const ImageBuffer image_lr(lh == H && lw == W ? padded : resize_area(padded, lh, lw));
  std::optional<GuidanceLatent> guide_lr;
  if (guide) guide_lr = guide_latent(resize_guide(*guide, lh, lw), ctx.codecs.matte);
  const LrConditioning cond{guide_lr ? &*guide_lr : nullptr, text_lr};

  MatteResult out;
  if (!opts.hr) {
    const EnsembleResult e = lr_ensemble(image_lr, ctx, 1, opts.seed, cond);
    const Tensor3 up = resize_bilinear(e.mattes.front().pixels(), H, W);
    out.alpha = AlphaMatte(crop_top_left(up, h0, w0));
    return out;
  }

  const int L = ctx.hires.ensemble_size;
  const EnsembleResult e = lr_ensemble(image_lr, ctx, L, opts.seed, cond);
  UncertaintyMap u = uncertainty(e);
  const bool all = ctx.hires.tau.kind == TauPolicy::Kind::kAll;
  const double tau = resolve_tau(ctx.hires.tau, u);
  PatchPlan plan = select_patches(u, tau, ctx.hires.patch_size, ctx.hires.overlap, f, ctx.hires.dilation,
                                  std::pair{H, W}, all);

  const std::size_t k = choose_guide_member(e);
  const Tensor3 guide_up = upsample_latent(e.latents[k], H / f, W / f, ctx.hires.upsample);
  Tensor3 z = guide_up;
  if (!plan.empty()) {
    const Tensor3 cond_hr = ctx.codecs.image.encode(padded);
    SamplerConfig hr_cfg = ctx.sampler;
    hr_cfg.eta = ctx.hires.hr_eta;
    const HrRefineRequest req{cond_hr, guide_up, plan, *ctx.denoiser, text_hr};
    HrRefineResult r = hr_refine(req, hr_cfg, ctx.schedule, child_seed(opts.seed, static_cast<std::uint64_t>(L)),
                                 ctx.hires.merge_weights);
    out.hr_site_evaluations = r.site_evaluations;
    z = fuse_final(r.latent, guide_up, plan, ctx.hires.feather);
  }
  out.alpha = AlphaMatte(crop_top_left(ctx.codecs.matte.decode(z), h0, w0));
  out.uncertainty = std::move(u);
  out.plan = std::move(plan);
  return out;
}

}  // namespace genmatte
