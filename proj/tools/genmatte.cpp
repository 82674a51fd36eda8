// genmatte command line: matte, serve, train, eval, randomness, synth.

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "genmatte/config.hpp"
#include "genmatte/error.hpp"
#include "genmatte/image_io.hpp"
#include "genmatte/metrics.hpp"
#include "genmatte/service.hpp"
#include "genmatte/trainer.hpp"

namespace fs = std::filesystem;
using namespace genmatte;

namespace {

enum Exit { kOk = 0, kBadArgs = 2, kBadInput = 3, kBadConfig = 4, kInternalError = 5 };

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIo:
    case ErrorKind::kFormat:
      return kBadInput;
    case ErrorKind::kConfig:
      return kBadConfig;
    case ErrorKind::kValidation:
      return kBadArgs;
    default:
      return kInternalError;
  }
}

EngineConfig base_config(const std::string& path) {
  if (!path.empty()) return load_config(path);
  if (const char* env = std::getenv("GENMATTE_CONFIG"); env != nullptr && *env) return load_config(env);
  return EngineConfig{};
}

ImageBuffer read_input(const std::string& path) {
  try {
    return load_image(path);
  } catch (const Error& e) {
    throw InputError(e.what());
  }
}

Tensor3 read_guide(const std::string& path) {
  const ImageBuffer img = read_input(path);
  return img.channels() == 1 ? img.pixels() : luminance(img);
}

std::vector<int> parse_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      fail(ErrorKind::kValidation, "bad integer list \"" + text + "\"");
    }
  }
  return out;
}

std::string sibling(const std::string& path, const std::string& suffix) {
  const fs::path p(path);
  return (p.parent_path() / (p.stem().string() + suffix)).string();
}

// --- matte -----------------------------------------------------------------

struct MatteArgs {
  std::string input, out, config, trimap, mask, scribbles, prompt, oracle;
  int steps = 0, seeds = 0, patch_size = 0, overlap = -1;
  double eta = -1.0;
  std::uint64_t seed = 0;
  bool hr = false, diagnostics = false;
};

int run_matte(const MatteArgs& a) {
  EngineConfig cfg = base_config(a.config);
  if (a.steps > 0) cfg.sampler.steps = a.steps;
  if (a.seeds > 0) cfg.hires.ensemble_size = a.seeds;
  if (a.eta >= 0.0) cfg.sampler.eta = a.eta;
  if (a.patch_size > 0) cfg.hires.patch_size = a.patch_size;
  if (a.overlap >= 0) cfg.hires.overlap = a.overlap;
  if (a.oracle == "procedural") cfg.denoiser.kind = DenoiserKind::kProcedural;
  if (a.oracle == "gaussian") cfg.denoiser.kind = DenoiserKind::kGaussian;
  cfg.validate();

  const ImageBuffer image = read_input(a.input);
  GuidanceInputs gin;
  if (!a.trimap.empty()) gin.trimap = read_guide(a.trimap);
  if (!a.mask.empty()) gin.mask = read_guide(a.mask);
  if (!a.scribbles.empty()) {
    Bytes raw;
    try {
      raw = read_file(a.scribbles);
    } catch (const Error& e) {
      throw InputError(e.what());
    }
    gin.scribbles = ScribbleDoc::parse(std::string(raw.begin(), raw.end()));
  }
  gin.prompt = a.prompt;

  const MattingContext ctx = build_context(cfg);
  MatteOptions opts;
  opts.guide = build_spatial_guide(gin, cfg, image.height(), image.width());
  opts.prompt = a.prompt;
  opts.seed = a.seed;
  opts.hr = a.hr;
  const MatteResult r = matte_hr(image, ctx, opts);

  const std::string out = a.out.empty() ? sibling(a.input, "_alpha.png") : a.out;
  save_image(r.alpha, out, 16);
  std::printf("wrote %s (%dx%d)\n", out.c_str(), r.alpha.width(), r.alpha.height());
  if (a.diagnostics) {
    if (r.uncertainty) {
      const std::string u = sibling(out, "_uncertainty.png");
      save_image(uncertainty_image(*r.uncertainty), u, 16);
      std::printf("wrote %s\n", u.c_str());
    }
    if (r.plan) {
      const std::string p = sibling(out, "_plan.json");
      const std::string text = plan_json(*r.plan) + "\n";
      write_file(p, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
      std::printf("wrote %s (%zu boxes)\n", p.c_str(), r.plan->boxes.size());
    }
    if (!r.uncertainty) std::printf("diagnostics need --hr; none written\n");
  }
  return kOk;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  std::string config, dataset, out = "denoiser.gmtd", curve, hidden = "32,32", extend;
  int synthetic = 64, size = 32, f = 2, kernel = 1, iters = 2000, batch = 8;
  double lr = 0.1, pixel_weight = 0.0;
  std::uint64_t seed = 0;
  bool use_text = false, single_scale = false;
};

std::vector<TrainPair> load_dataset(const std::string& dir) {
  const Bytes raw = read_file((fs::path(dir) / "index.json").string());
  nlohmann::json idx;
  try {
    idx = nlohmann::json::parse(raw.begin(), raw.end());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("dataset index: ") + e.what());
  }
  require(idx.is_object() && idx.contains("pairs") && idx["pairs"].is_array(), ErrorKind::kFormat,
          "dataset index needs a \"pairs\" array");
  std::vector<TrainPair> out;
  for (const auto& p : idx["pairs"]) {
    require(p.contains("image") && p.contains("matte"), ErrorKind::kFormat, "dataset pair needs image and matte");
    TrainPair tp{load_image((fs::path(dir) / p["image"].get<std::string>()).string()),
                 AlphaMatte(read_guide((fs::path(dir) / p["matte"].get<std::string>()).string())),
                 ScaleTag::kFull,
                 {}};
    if (p.contains("prompt")) tp.prompt = TextEmbedder::tokenize(p["prompt"].get<std::string>());
    out.push_back(std::move(tp));
  }
  return out;
}

int run_train(const TrainArgs& a) {
  EngineConfig cfg = base_config(a.config);
  cfg.codec.f = a.f;
  cfg.validate();
  const MattingContext ctx = build_context(cfg);
  const std::vector<TrainPair> data = a.dataset.empty()
                                          ? synthetic_dataset(a.synthetic, SyntheticOptions{a.size, a.size}, a.seed)
                                          : load_dataset(a.dataset);
  const int text_dim = a.use_text ? cfg.text.dim : 0;
  ToyMlp model = [&] {
    if (!a.extend.empty())
      return extend_conditional(load_weights(a.extend), ctx.codecs.image.latent_channels(), text_dim);
    return toy_mlp_denoiser(MlpLayout{ctx.codecs.matte.latent_channels(), ctx.codecs.image.latent_channels(),
                                      text_dim, a.kernel, parse_list(a.hidden)},
                            child_seed(a.seed, 1));
  }();
  TrainConfig tc;
  tc.lr = a.lr;
  tc.iters = a.iters;
  tc.batch = a.batch;
  tc.seed = a.seed;
  tc.use_text = a.use_text;
  tc.multi_scale = !a.single_scale;
  tc.pixel_loss_weight = a.pixel_weight;
  const TrainEnv env{ctx.schedule, ctx.codecs, &ctx.embedder};
  const TrainResult r = train(model, data, tc, env);
  save_weights(r.model, a.out);
  const std::size_t n = r.losses.size();
  const std::size_t w = std::max<std::size_t>(1, n / 20);
  auto window_mean = [&](std::size_t from) {
    double s = 0.0;
    for (std::size_t i = from; i < from + w; ++i) s += r.losses[i];
    return s / static_cast<double>(w);
  };
  std::printf("trained %zu parameters for %zu iterations\nloss (first %zu): %.5f\nloss (last %zu):  %.5f\nwrote %s\n",
              r.model.parameter_count(), n, w, window_mean(0), w, window_mean(n - w), a.out.c_str());
  if (!a.curve.empty()) {
    std::string csv = "iteration,loss\n";
    for (std::size_t i = 0; i < n; ++i) csv += std::to_string(i) + "," + std::to_string(r.losses[i]) + "\n";
    write_file(a.curve, std::span(reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()));
  }
  return kOk;
}

// --- eval / randomness / synth ------------------------------------------------

int run_eval(const std::string& pred, const std::string& gt, bool as_json) {
  const AlphaMatte p(read_guide(pred));
  const AlphaMatte g(read_guide(gt));
  const MetricReport r = evaluate(p, g);
  std::printf("%s", as_json ? (report_json(r) + "\n").c_str() : report_table(r).c_str());
  return kOk;
}

int run_randomness(const std::string& config, const std::string& image, const std::string& gt,
                   const std::string& steps, int seeds, bool as_json) {
  const EngineConfig cfg = base_config(config);
  const MattingContext ctx = build_context(cfg);
  const ImageBuffer img = read_input(image);
  const AlphaMatte g(read_guide(gt));
  const std::vector<int> list = parse_list(steps);
  const Tensor3 padded = pad_to_multiple(img.pixels(), ctx.factor());
  require(padded.dims() == img.dims(), ErrorKind::kValidation,
          "image dims must be multiples of f=" + std::to_string(ctx.factor()));
  const auto rows = randomness_curve(img, ctx, list, seeds, g);
  std::printf("%s", as_json ? (randomness_json(rows) + "\n").c_str() : randomness_table(rows).c_str());
  return kOk;
}

int run_synth(const std::string& dir, int count, int size, std::uint64_t seed) {
  fs::create_directories(dir);
  nlohmann::json pairs = nlohmann::json::array();
  for (int i = 0; i < count; ++i) {
    SeededRng rng(child_seed(seed, static_cast<std::uint64_t>(i)));
    const SyntheticSample s = synthetic_sample(SyntheticOptions{size, size}, rng);
    char name[64];
    std::snprintf(name, sizeof name, "image_%04d.png", i);
    const std::string img = name;
    std::snprintf(name, sizeof name, "matte_%04d.png", i);
    const std::string matte = name;
    save_image(s.composite, (fs::path(dir) / img).string(), 16);
    save_image(s.matte, (fs::path(dir) / matte).string(), 16);
    pairs.push_back({{"image", img}, {"matte", matte}});
  }
  const std::string idx = nlohmann::json{{"pairs", pairs}}.dump(2) + "\n";
  write_file((fs::path(dir) / "index.json").string(),
             std::span(reinterpret_cast<const std::uint8_t*>(idx.data()), idx.size()));
  std::printf("wrote %d pairs to %s\n", count, dir.c_str());
  return kOk;
}

int run_serve(const std::string& config, const std::string& host, int port) {
  MatteServer server(base_config(config));
  const int bound = server.bind(host, port);
  if (bound < 0) {
    std::fprintf(stderr, "genmatte: cannot bind %s:%d\n", host.c_str(), port);
    return kBadArgs;
  }
  std::printf("genmatte %s listening on %s:%d\n", kVersion, host.c_str(), bound);
  std::fflush(stdout);
  return server.listen_after_bind() ? kOk : kInternalError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"genmatte: diffusion matting engine"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  MatteArgs ma;
  auto* matte = app.add_subcommand("matte", "Predict an alpha matte");
  matte->add_option("input", ma.input, "Input image (PNG, PGM, PPM)")->required();
  matte->add_option("--out,-o", ma.out, "Output matte path (default: <input>_alpha.png)");
  matte->add_option("--config", ma.config, "Engine config JSON");
  matte->add_option("--steps", ma.steps, "Sampling steps")->check(CLI::PositiveNumber);
  matte->add_option("--seeds", ma.seeds, "LR ensemble size")->check(CLI::PositiveNumber);
  matte->add_option("--eta", ma.eta, "Sampler stochasticity")->check(CLI::Range(0.0, 1.0));
  matte->add_flag("--hr", ma.hr, "Run the high-resolution refinement path");
  matte->add_option("--patch-size", ma.patch_size, "Patch size in latent sites")->check(CLI::PositiveNumber);
  matte->add_option("--overlap", ma.overlap, "Patch overlap in latent sites")->check(CLI::NonNegativeNumber);
  auto* g_trimap = matte->add_option("--trimap", ma.trimap, "Trimap image");
  auto* g_mask = matte->add_option("--mask", ma.mask, "Coarse mask image");
  auto* g_scrib = matte->add_option("--scribbles", ma.scribbles, "Scribble JSON");
  g_trimap->excludes(g_mask)->excludes(g_scrib);
  g_mask->excludes(g_scrib);
  matte->add_option("--prompt", ma.prompt, "Text prompt");
  matte->add_option("--seed", ma.seed, "Random seed");
  matte->add_option("--oracle", ma.oracle, "Test denoiser")->check(CLI::IsMember({"gaussian", "procedural"}));
  matte->add_flag("--diagnostics", ma.diagnostics, "Also write uncertainty map and patch plan");

  std::string serve_config, host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--config", serve_config, "Engine config JSON");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));

  TrainArgs ta;
  auto* trainc = app.add_subcommand("train", "Train the toy denoiser");
  trainc->add_option("--config", ta.config, "Engine config JSON (schedule, codec seeds, text)");
  auto* ds = trainc->add_option("--dataset", ta.dataset, "Dataset directory with index.json");
  trainc->add_option("--synthetic", ta.synthetic, "Synthetic pair count")->excludes(ds)->check(CLI::PositiveNumber);
  trainc->add_option("--size", ta.size, "Synthetic image size")->check(CLI::PositiveNumber);
  trainc->add_option("--f", ta.f, "Codec factor")->check(CLI::PositiveNumber);
  trainc->add_option("--hidden", ta.hidden, "Hidden widths, comma separated");
  trainc->add_option("--kernel", ta.kernel, "First-layer kernel (1 or 3)")->check(CLI::IsMember({1, 3}));
  trainc->add_option("--extend", ta.extend, "Start from unconditional weights, adding zero-init condition inputs");
  trainc->add_option("--iters", ta.iters, "Iterations")->check(CLI::PositiveNumber);
  trainc->add_option("--lr", ta.lr, "SGD step size")->check(CLI::NonNegativeNumber);
  trainc->add_option("--batch", ta.batch, "Batch size")->check(CLI::PositiveNumber);
  trainc->add_option("--seed", ta.seed, "Seed");
  trainc->add_flag("--use-text", ta.use_text, "Condition on text; crops get \"enhance details\"");
  trainc->add_flag("--single-scale", ta.single_scale, "Disable half-scale crops");
  trainc->add_option("--pixel-weight", ta.pixel_weight, "Pixel loss weight")->check(CLI::NonNegativeNumber);
  trainc->add_option("--out,-o", ta.out, "Output weights");
  trainc->add_option("--curve", ta.curve, "Write the loss curve as CSV");

  std::string pred, gt;
  bool eval_json = false;
  auto* evalc = app.add_subcommand("eval", "Score a matte against ground truth");
  evalc->add_option("--pred", pred, "Predicted matte")->required();
  evalc->add_option("--gt", gt, "Ground-truth matte")->required();
  evalc->add_flag("--json", eval_json, "JSON output");

  std::string r_config, r_image, r_gt, r_steps = "2,5,10,20";
  int r_seeds = 5;
  bool r_json = false;
  auto* randc = app.add_subcommand("randomness", "SAD mean/std over seeds per step count");
  randc->add_option("--config", r_config, "Engine config JSON");
  randc->add_option("--image", r_image, "Input image")->required();
  randc->add_option("--gt", r_gt, "Ground-truth matte")->required();
  randc->add_option("--steps", r_steps, "Step counts, comma separated");
  randc->add_option("--seeds", r_seeds, "Seeds per step count")->check(CLI::Range(2, 1000));
  randc->add_flag("--json", r_json, "JSON output");

  std::string s_dir;
  int s_count = 16, s_size = 32;
  std::uint64_t s_seed = 0;
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset");
  synth->add_option("--out,-o", s_dir, "Output directory")->required();
  synth->add_option("--count", s_count, "Pairs")->check(CLI::PositiveNumber);
  synth->add_option("--size", s_size, "Image size")->check(CLI::PositiveNumber);
  synth->add_option("--seed", s_seed, "Seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kBadArgs;
  }

  try {
    if (*matte) return run_matte(ma);
    if (*serve) return run_serve(serve_config, host, port);
    if (*trainc) return run_train(ta);
    if (*evalc) return run_eval(pred, gt, eval_json);
    if (*randc) return run_randomness(r_config, r_image, r_gt, r_steps, r_seeds, r_json);
    if (*synth) return run_synth(s_dir, s_count, s_size, s_seed);
  } catch (const InputError& e) {
    std::fprintf(stderr, "genmatte: %s\n", e.what());
    return kBadInput;
  } catch (const Error& e) {
    std::fprintf(stderr, "genmatte: %s\n", e.what());
    return exit_for(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "genmatte: %s\n", e.what());
    return kInternalError;
  }
  return kBadArgs;
}
