#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "genmatte/codec.hpp"
#include "genmatte/denoiser.hpp"
#include "genmatte/guidance.hpp"
#include "genmatte/image.hpp"
#include "genmatte/sampler.hpp"
#include "genmatte/schedule.hpp"

namespace genmatte {

enum class MergeWeights { kUniform, kFeathered };
enum class LatentUpsample { kBilinear, kNearest };

struct TauPolicy {
  enum class Kind {
    /// max(floor, 90th percentile of the nonzero uncertainty values)
    kAuto,
    kFixed,
    /// Flag every site regardless of uncertainty.
    kAll,
  };
  Kind kind = Kind::kAuto;
  double value = 0.05;  // fixed tau, or the floor for kAuto
};

struct HiresConfig {
  int ensemble_size = 8;
  TauPolicy tau;
  int dilation = 3;  // pixels, at uncertainty-map resolution
  int patch_size = 64;
  int overlap = 16;
  int feather = 8;
  MergeWeights merge_weights = MergeWeights::kFeathered;
  LatentUpsample upsample = LatentUpsample::kBilinear;
  double hr_eta = 0.0;
  int lr_long_side = 512;
  /// Inputs are edge-padded to multiples of this; 0 means 8 * f.
  int pad_multiple = 0;

  void validate() const;
};

/// Everything a matting run needs besides the input.
struct MattingContext {
  DiffusionSchedule schedule;
  CodecPair codecs;
  TextEmbedder embedder;
  SamplerConfig sampler;
  HiresConfig hires;
  std::shared_ptr<const Denoiser> denoiser;

  int factor() const { return codecs.matte.factor(); }
};

struct UncertaintyMap {
  Tensor3 grid;  // single channel, >= 0
};

struct PatchPlan {
  std::vector<PatchBox> boxes;  // latent coordinates
  int patch_size = 0;
  int overlap = 0;
  int f = 1;
  double tau = 0.0;
  Tensor3 coverage;  // single channel, box membership count per latent site

  bool empty() const { return boxes.empty(); }
  std::size_t box_sites() const;
};

struct EnsembleResult {
  std::vector<AlphaMatte> mattes;
  std::vector<Tensor3> latents;
  std::vector<std::uint64_t> seeds;
};

struct LrConditioning {
  const GuidanceLatent* guide = nullptr;
  std::span<const double> text = {};
};

/// L independent LR samples with seeds child_seed(base_seed, l).
EnsembleResult lr_ensemble(const ImageBuffer& image_lr, const MattingContext& ctx, int L,
                           std::uint64_t base_seed, const LrConditioning& cond = {});

/// Per-pixel population standard deviation over the ensemble mattes.
UncertaintyMap uncertainty(const EnsembleResult& e);

double resolve_tau(const TauPolicy& policy, const UncertaintyMap& u);

/// Latent sites of a (target_height x target_width) canvas whose nearest-
/// neighbour-upsampled, dilated uncertainty is >= tau.
Tensor3 flagged_sites(const UncertaintyMap& u, double tau, int dilation, int f, int target_height,
                      int target_width, bool flag_all = false);

/// Covers every flagged latent site with P x P boxes on a stride of (P - O).
/// Target dims default to the uncertainty-map dims.
PatchPlan select_patches(const UncertaintyMap& u, double tau, int patch_size, int overlap, int f,
                         int dilation = 3, std::optional<std::pair<int, int>> target_hw = std::nullopt,
                         bool flag_all = false);
PatchPlan plan_from_flags(const Tensor3& flags, int patch_size, int overlap, int f, double tau);

NoiseField shared_noise(const Dims& latent_dims, std::uint64_t seed);

/// Coverage-normalised weighted average of patches; sites outside every box
/// take `background` (zeros when omitted).
Tensor3 merge_collage(std::span<const std::pair<Tensor3, PatchBox>> patches, Dims canvas,
                      MergeWeights weights, int overlap, const Tensor3* background = nullptr);

/// Feathered weight of site (y, x) inside box b on a canvas of the given size.
double feather_weight(const PatchBox& b, int y, int x, int canvas_h, int canvas_w, int ramp);

struct HrRefineResult {
  Tensor3 latent;
  /// Denoiser site evaluations: steps * sum of box areas.
  std::size_t site_evaluations = 0;
};

struct HrRefineRequest {
  const Tensor3& cond_latent;  // encode(image_hr)
  const Tensor3& guide_up;     // upsampled LR matte latent
  const PatchPlan& plan;
  const Denoiser& denoiser;
  std::span<const double> text = {};
};

/// Split-and-collage sampling over the plan's boxes with shared per-step noise.
/// Sites outside every box are returned equal to guide_up.
HrRefineResult hr_refine(const HrRefineRequest& req, const SamplerConfig& cfg, const DiffusionSchedule& s,
                         std::uint64_t seed, MergeWeights weights = MergeWeights::kFeathered);

/// Coverage indicator of the plan, ramped linearly over `feather` sites inward
/// from borders with uncovered sites (canvas edges are not borders).
Tensor3 fusion_mask(const PatchPlan& plan, int feather);
Tensor3 fuse_final(const Tensor3& refined, const Tensor3& lr_up, const PatchPlan& plan, int feather);

Tensor3 upsample_latent(const Tensor3& z, int height, int width, LatentUpsample mode);

/// Index of the ensemble member closest (mean absolute difference) to the ensemble mean.
std::size_t choose_guide_member(const EnsembleResult& e);

struct MatteOptions {
  std::optional<SpatialGuide> guide;
  std::string prompt;
  std::uint64_t seed = 0;
  bool hr = true;
};

struct MatteResult {
  AlphaMatte alpha;
  std::optional<UncertaintyMap> uncertainty;
  std::optional<PatchPlan> plan;
  std::size_t hr_site_evaluations = 0;
};

/// LR dims for a padded HR canvas: aspect-preserving, multiples of f, long side
/// at most lr_long_side.
std::pair<int, int> lr_dims(int height, int width, int lr_long_side, int f);

/// Full pipeline: pad, downsample, LR ensemble, uncertainty, patch plan,
/// HR refinement, latent fusion, decode, clamp, unpad.
MatteResult matte_hr(const ImageBuffer& image, const MattingContext& ctx, const MatteOptions& opts);

}  // namespace genmatte
