#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "genmatte/guidance.hpp"
#include "genmatte/hires.hpp"
#include "genmatte/image.hpp"

namespace genmatte {

inline constexpr const char* kVersion = "0.1.0";

enum class DenoiserKind { kProcedural, kGaussian, kMlp };
enum class MaskMode {
  /// Unknown band around the mask boundary.
  kBand,
  /// m_unknown = 1 everywhere.
  kLiteral,
};

struct EngineConfig {
  struct Schedule {
    int T = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
  } schedule;
  struct Codec {
    int f = 8;
    std::uint64_t image_mix_seed = 1;
    std::uint64_t matte_mix_seed = 2;
  } codec;
  struct Sampler {
    int steps = 10;
    double eta = 1.0;
    GuidanceMode guidance_mode = GuidanceMode::kNormalized;
  } sampler;
  HiresConfig hires;
  struct Guidance {
    MaskMode mask_mode = MaskMode::kBand;
    int band_width = 16;
  } guidance;
  struct Denoiser {
    DenoiserKind kind = DenoiserKind::kProcedural;
    std::string weights;
    double gaussian_mu = 0.5;
    double gaussian_s2 = 0.04;
    /// Procedural target: luminance >= threshold.
    double threshold = 0.5;
  } denoiser;
  struct Text {
    int dim = 16;
    std::uint64_t seed = 7;
  } text;
  struct Service {
    std::size_t max_request_bytes = 32u << 20;
  } service;

  /// Throws a config error on any violated component invariant.
  void validate() const;
};

/// Strict: unknown keys and wrong types are config errors. Missing keys keep
/// their defaults.
EngineConfig parse_config(const std::string& json_text);
EngineConfig load_config(const std::string& path);
std::string config_json(const EngineConfig& cfg);

/// Schedule, codecs, embedder, sampler, hires settings and the denoiser.
MattingContext build_context(const EngineConfig& cfg);

/// The procedural oracle's target: luminance threshold.
TargetFn threshold_target(double threshold);

/// Request-level guidance inputs; at most one spatial kind.
struct GuidanceInputs {
  std::optional<Tensor3> trimap;
  std::optional<Tensor3> mask;
  std::optional<ScribbleDoc> scribbles;
  std::string prompt;
};

/// Builds the spatial guide at the image's resolution per the configured mask mode.
std::optional<SpatialGuide> build_spatial_guide(const GuidanceInputs& in, const EngineConfig& cfg, int height,
                                                int width);

/// Patch plan as {"f", "tau", "patch_size", "overlap", "boxes": [{x,y,w,h}]}.
std::string plan_json(const PatchPlan& plan);

/// Uncertainty as an image: U clamped to [0,1].
ImageBuffer uncertainty_image(const UncertaintyMap& u);

}  // namespace genmatte
