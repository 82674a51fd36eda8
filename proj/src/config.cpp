#include "genmatte/config.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <utility>
#include <json.hpp>

#include "genmatte/error.hpp"
#include "genmatte/image_io.hpp"

namespace genmatte {

using nlohmann::json;

namespace {

class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    require(j_.is_object(), ErrorKind::kConfig, where_ + " must be an object");
  }

  void allow(std::initializer_list<std::string_view> keys) const {
    for (const auto& [k, _] : j_.items())
      require(std::find(keys.begin(), keys.end(), k) != keys.end(), ErrorKind::kConfig,
              "unknown key \"" + where_ + "." + k + "\"");
  }

  std::optional<Reader> sub(const char* key) const {
    if (!j_.contains(key)) return std::nullopt;
    return Reader(j_.at(key), where_ + "." + key);
  }

  void get(const char* key, int& out) const {
    if (const json* v = find(key)) {
      require(v->is_number_integer(), ErrorKind::kConfig, name(key) + " must be an integer");
      const auto x = v->get<long long>();
      require(x >= -(1LL << 31) && x < (1LL << 31), ErrorKind::kConfig, name(key) + " out of range");
      out = static_cast<int>(x);
    }
  }
  void get(const char* key, std::uint64_t& out) const {
    if (const json* v = find(key)) {
      require(v->is_number_unsigned() || (v->is_number_integer() && v->get<long long>() >= 0), ErrorKind::kConfig,
              name(key) + " must be a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const char* key, double& out) const {
    if (const json* v = find(key)) {
      require(v->is_number(), ErrorKind::kConfig, name(key) + " must be a number");
      out = v->get<double>();
    }
  }
  void get(const char* key, std::string& out) const {
    if (const json* v = find(key)) {
      require(v->is_string(), ErrorKind::kConfig, name(key) + " must be a string");
      out = v->get<std::string>();
    }
  }
  template <typename E, std::size_t N>
  void get_enum(const char* key, E& out, const std::pair<std::string_view, E> (&names)[N]) const {
    std::string s;
    get(key, s);
    if (s.empty() && !j_.contains(key)) return;
    for (const auto& [n, e] : names)
      if (n == s) {
        out = e;
        return;
      }
    std::string options;
    for (const auto& [n, _] : names) options += (options.empty() ? "" : ", ") + std::string(n);
    fail(ErrorKind::kConfig, name(key) + " must be one of: " + options);
  }

 private:
  const json* find(const char* key) const { return j_.contains(key) ? &j_.at(key) : nullptr; }
  std::string name(const char* key) const { return where_ + "." + key; }

  const json& j_;
  std::string where_;
};

constexpr std::pair<std::string_view, ScheduleKind> kScheduleKinds[] = {{"linear", ScheduleKind::kLinear}};
constexpr std::pair<std::string_view, GuidanceMode> kGuidanceModes[] = {
    {"literal", GuidanceMode::kLiteral}, {"normalized", GuidanceMode::kNormalized}};
constexpr std::pair<std::string_view, TauPolicy::Kind> kTauKinds[] = {
    {"auto", TauPolicy::Kind::kAuto}, {"fixed", TauPolicy::Kind::kFixed}, {"all", TauPolicy::Kind::kAll}};
constexpr std::pair<std::string_view, MergeWeights> kMergeWeights[] = {
    {"feathered", MergeWeights::kFeathered}, {"uniform", MergeWeights::kUniform}};
constexpr std::pair<std::string_view, LatentUpsample> kUpsample[] = {
    {"bilinear", LatentUpsample::kBilinear}, {"nearest", LatentUpsample::kNearest}};
constexpr std::pair<std::string_view, MaskMode> kMaskModes[] = {{"band", MaskMode::kBand},
                                                                                      {"literal", MaskMode::kLiteral}};
constexpr std::pair<std::string_view, DenoiserKind> kDenoiserKinds[] = {
    {"procedural", DenoiserKind::kProcedural}, {"gaussian", DenoiserKind::kGaussian}, {"mlp", DenoiserKind::kMlp}};

template <typename E, std::size_t N>
std::string enum_name(E e, const std::pair<std::string_view, E> (&names)[N]) {
  for (const auto& [n, v] : names)
    if (v == e) return std::string(n);
  return "?";
}

}  // namespace

void EngineConfig::validate() const {
  require(schedule.T >= 1, ErrorKind::kConfig, "schedule.T must be >= 1");
  require(schedule.beta_start > 0.0 && schedule.beta_start <= schedule.beta_end && schedule.beta_end < 1.0,
          ErrorKind::kConfig, "schedule betas must satisfy 0 < beta_start <= beta_end < 1");
  require(codec.f >= 1 && codec.f <= 64, ErrorKind::kConfig, "codec.f must lie in [1,64]");
  make_sampler_config(sampler.steps, schedule.T, sampler.eta, sampler.guidance_mode);
  hires.validate();
  require(hires.pad_multiple % codec.f == 0, ErrorKind::kConfig, "hires.pad_multiple must be a multiple of f");
  require(guidance.band_width >= 0, ErrorKind::kConfig, "guidance.band_width must be >= 0");
  require(denoiser.gaussian_s2 >= 0.0, ErrorKind::kConfig, "denoiser.gaussian.s2 must be >= 0");
  require(denoiser.threshold >= 0.0 && denoiser.threshold <= 1.0, ErrorKind::kConfig,
          "denoiser.threshold must lie in [0,1]");
  require(denoiser.kind != DenoiserKind::kMlp || !denoiser.weights.empty(), ErrorKind::kConfig,
          "denoiser.weights is required for kind \"mlp\"");
  require(text.dim >= 1, ErrorKind::kConfig, "text.dim must be >= 1");
  require(service.max_request_bytes >= 1, ErrorKind::kConfig, "service.max_request_bytes must be >= 1");
}

EngineConfig parse_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  EngineConfig c;
  const Reader root(doc, "config");
  root.allow({"schedule", "codec", "sampler", "hires", "guidance", "denoiser", "text", "service"});
  if (auto r = root.sub("schedule")) {
    r->allow({"T", "beta_start", "beta_end", "kind"});
    r->get("T", c.schedule.T);
    r->get("beta_start", c.schedule.beta_start);
    r->get("beta_end", c.schedule.beta_end);
    ScheduleKind kind = ScheduleKind::kLinear;
    r->get_enum("kind", kind, kScheduleKinds);
  }
  if (auto r = root.sub("codec")) {
    r->allow({"f", "image_mix_seed", "matte_mix_seed"});
    r->get("f", c.codec.f);
    r->get("image_mix_seed", c.codec.image_mix_seed);
    r->get("matte_mix_seed", c.codec.matte_mix_seed);
  }
  if (auto r = root.sub("sampler")) {
    r->allow({"steps", "eta", "guidance_mode"});
    r->get("steps", c.sampler.steps);
    r->get("eta", c.sampler.eta);
    r->get_enum("guidance_mode", c.sampler.guidance_mode, kGuidanceModes);
  }
  if (auto r = root.sub("hires")) {
    r->allow({"ensemble_size", "tau", "dilation", "patch_size", "overlap", "feather", "merge", "upsample", "hr_eta",
              "lr_long_side", "pad_multiple"});
    HiresConfig& h = c.hires;
    r->get("ensemble_size", h.ensemble_size);
    if (auto t = r->sub("tau")) {
      t->allow({"policy", "value"});
      t->get_enum("policy", h.tau.kind, kTauKinds);
      t->get("value", h.tau.value);
    }
    r->get("dilation", h.dilation);
    r->get("patch_size", h.patch_size);
    r->get("overlap", h.overlap);
    r->get("feather", h.feather);
    r->get_enum("merge", h.merge_weights, kMergeWeights);
    r->get_enum("upsample", h.upsample, kUpsample);
    r->get("hr_eta", h.hr_eta);
    r->get("lr_long_side", h.lr_long_side);
    r->get("pad_multiple", h.pad_multiple);
  }
  if (auto r = root.sub("guidance")) {
    r->allow({"mask_mode", "band_width"});
    r->get_enum("mask_mode", c.guidance.mask_mode, kMaskModes);
    r->get("band_width", c.guidance.band_width);
  }
  if (auto r = root.sub("denoiser")) {
    r->allow({"kind", "weights", "gaussian", "threshold"});
    r->get_enum("kind", c.denoiser.kind, kDenoiserKinds);
    r->get("weights", c.denoiser.weights);
    if (auto g = r->sub("gaussian")) {
      g->allow({"mu", "s2"});
      g->get("mu", c.denoiser.gaussian_mu);
      g->get("s2", c.denoiser.gaussian_s2);
    }
    r->get("threshold", c.denoiser.threshold);
  }
  if (auto r = root.sub("text")) {
    r->allow({"dim", "seed"});
    r->get("dim", c.text.dim);
    r->get("seed", c.text.seed);
  }
  if (auto r = root.sub("service")) {
    r->allow({"max_request_bytes"});
    std::uint64_t v = c.service.max_request_bytes;
    r->get("max_request_bytes", v);
    c.service.max_request_bytes = static_cast<std::size_t>(v);
  }
  c.validate();
  return c;
}

EngineConfig load_config(const std::string& path) {
  Bytes raw;
  try {
    raw = read_file(path);
  } catch (const Error& e) {
    fail(ErrorKind::kConfig, std::string("cannot read config: ") + e.what());
  }
  return parse_config(std::string(raw.begin(), raw.end()));
}

std::string config_json(const EngineConfig& c) {
  const HiresConfig& h = c.hires;
  json j{
      {"schedule", {{"T", c.schedule.T}, {"beta_start", c.schedule.beta_start}, {"beta_end", c.schedule.beta_end},
                    {"kind", "linear"}}},
      {"codec", {{"f", c.codec.f}, {"image_mix_seed", c.codec.image_mix_seed},
                 {"matte_mix_seed", c.codec.matte_mix_seed}}},
      {"sampler", {{"steps", c.sampler.steps}, {"eta", c.sampler.eta},
                   {"guidance_mode", enum_name(c.sampler.guidance_mode, kGuidanceModes)}}},
      {"hires", {{"ensemble_size", h.ensemble_size},
                 {"tau", {{"policy", enum_name(h.tau.kind, kTauKinds)}, {"value", h.tau.value}}},
                 {"dilation", h.dilation},
                 {"patch_size", h.patch_size},
                 {"overlap", h.overlap},
                 {"feather", h.feather},
                 {"merge", enum_name(h.merge_weights, kMergeWeights)},
                 {"upsample", enum_name(h.upsample, kUpsample)},
                 {"hr_eta", h.hr_eta},
                 {"lr_long_side", h.lr_long_side},
                 {"pad_multiple", h.pad_multiple}}},
      {"guidance", {{"mask_mode", enum_name(c.guidance.mask_mode, kMaskModes)},
                    {"band_width", c.guidance.band_width}}},
      {"denoiser", {{"kind", enum_name(c.denoiser.kind, kDenoiserKinds)},
                    {"weights", c.denoiser.weights},
                    {"gaussian", {{"mu", c.denoiser.gaussian_mu}, {"s2", c.denoiser.gaussian_s2}}},
                    {"threshold", c.denoiser.threshold}}},
      {"text", {{"dim", c.text.dim}, {"seed", c.text.seed}}},
      {"service", {{"max_request_bytes", c.service.max_request_bytes}}},
  };
  return j.dump(2);
}

TargetFn threshold_target(double threshold) {
  return [threshold](const ImageBuffer& img) { return luminance_threshold(img, threshold); };
}

MattingContext build_context(const EngineConfig& cfg) {
  cfg.validate();
  const int f = cfg.codec.f;
  CodecPair codecs = make_codec_pair(f, cfg.codec.image_mix_seed, cfg.codec.matte_mix_seed);
  std::shared_ptr<const Denoiser> denoiser;
  switch (cfg.denoiser.kind) {
    case DenoiserKind::kProcedural:
      denoiser = std::make_shared<ProceduralOracle>(threshold_target(cfg.denoiser.threshold), codecs);
      break;
    case DenoiserKind::kGaussian:
      denoiser = std::make_shared<GaussianOracle>(Tensor3(Dims{1, 1, 1}, cfg.denoiser.gaussian_mu),
                                                  cfg.denoiser.gaussian_s2);
      break;
    case DenoiserKind::kMlp: {
      ToyMlp model = [&] {
        try {
          return load_weights(cfg.denoiser.weights);
        } catch (const Error& e) {
          fail(ErrorKind::kConfig, std::string("cannot load denoiser weights: ") + e.what());
        }
      }();
      const MlpLayout& L = model.layout();
      require(L.latent_channels == codecs.matte.latent_channels(), ErrorKind::kConfig,
              "weights expect " + std::to_string(L.latent_channels) + " latent channels but f=" + std::to_string(f) +
                  " gives " + std::to_string(codecs.matte.latent_channels()));
      require(L.cond_channels == 0 || L.cond_channels == codecs.image.latent_channels(), ErrorKind::kConfig,
              "weights expect " + std::to_string(L.cond_channels) + " image-latent channels");
      require(L.text_dim == 0 || L.text_dim == cfg.text.dim, ErrorKind::kConfig,
              "weights expect text dim " + std::to_string(L.text_dim));
      denoiser = std::make_shared<ToyMlp>(std::move(model));
      break;
    }
  }
  return MattingContext{make_schedule(cfg.schedule.T, cfg.schedule.beta_start, cfg.schedule.beta_end),
                        std::move(codecs),
                        TextEmbedder(cfg.text.dim, cfg.text.seed),
                        make_sampler_config(cfg.sampler.steps, cfg.schedule.T, cfg.sampler.eta,
                                            cfg.sampler.guidance_mode),
                        cfg.hires,
                        std::move(denoiser)};
}

std::optional<SpatialGuide> build_spatial_guide(const GuidanceInputs& in, const EngineConfig& cfg, int height,
                                                int width) {
  const int kinds = in.trimap.has_value() + in.mask.has_value() + in.scribbles.has_value();
  require(kinds <= 1, ErrorKind::kValidation, "at most one spatial guidance kind may be given");
  auto check = [&](const Tensor3& t, const char* what) {
    require(t.channels() == 1, ErrorKind::kValidation, std::string(what) + " must be single-channel");
    require(t.height() == height && t.width() == width, ErrorKind::kValidation,
            std::string(what) + " is " + std::to_string(t.width()) + "x" + std::to_string(t.height()) +
                " but the image is " + std::to_string(width) + "x" + std::to_string(height));
  };
  if (in.trimap) {
    check(*in.trimap, "trimap");
    return trimap_guide(*in.trimap);
  }
  if (in.mask) {
    check(*in.mask, "mask");
    if (cfg.guidance.mask_mode == MaskMode::kLiteral) return mask_guide(*in.mask);
    return mask_band_guide(binarize_trimap(*in.mask), cfg.guidance.band_width);
  }
  if (in.scribbles) return scribble_guide(*in.scribbles, height, width);
  return std::nullopt;
}

std::string plan_json(const PatchPlan& plan) {
  json boxes = json::array();
  for (const auto& b : plan.boxes) boxes.push_back({{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}});
  json j{{"f", plan.f},
         {"tau", plan.tau},
         {"patch_size", plan.patch_size},
         {"overlap", plan.overlap},
         {"boxes", std::move(boxes)}};
  return j.dump(2);
}

ImageBuffer uncertainty_image(const UncertaintyMap& u) { return ImageBuffer(u.grid); }

}  // namespace genmatte
