#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "genmatte/codec.hpp"
#include "genmatte/denoiser.hpp"
#include "genmatte/image.hpp"
#include "genmatte/schedule.hpp"

namespace genmatte {

enum class ScaleTag { kFull, kHalf };

struct TrainPair {
  ImageBuffer image;
  AlphaMatte matte;
  ScaleTag scale = ScaleTag::kFull;
  /// Empty means unprompted.
  std::vector<std::string> prompt;
};

struct TrainBatch {
  std::vector<TrainPair> pairs;
};

struct TrainConfig {
  double lr = 0.05;
  int iters = 2000;
  int batch = 8;
  std::uint64_t seed = 0;
  bool use_text = false;
  /// Mix half-scale crops into batches.
  bool multi_scale = true;
  double pixel_loss_weight = 0.0;

  void validate() const;
};

/// What the losses need besides the model and the batch. `embedder` may be
/// null when no pair carries a prompt.
struct TrainEnv {
  const DiffusionSchedule& schedule;
  const CodecPair& codecs;
  const TextEmbedder* embedder = nullptr;
};

struct LossParts {
  double conditional = 0.0;
  double pixel = 0.0;
  double combined = 0.0;
};

/// One (t, eps) draw per pair, in pair order: t = uniform 1..T, then eps over
/// the matte latent. Losses are per-element means averaged over pairs.
LossParts evaluate_losses(const Denoiser& d, const TrainBatch& batch, const TrainEnv& env, SeededRng& rng,
                          double pixel_loss_weight = 0.0);
double loss_conditional(const Denoiser& d, const TrainBatch& batch, const TrainEnv& env, SeededRng& rng);
double loss_pixel(const Denoiser& d, const TrainBatch& batch, const TrainEnv& env, SeededRng& rng);

/// Gradient of the combined objective under the same draws as evaluate_losses.
/// Only ToyMlp models are trainable.
std::vector<double> grad_loss(const Denoiser& d, const TrainBatch& batch, const TrainEnv& env, SeededRng& rng,
                              double pixel_loss_weight = 0.0, LossParts* losses = nullptr);

struct TrainResult {
  ToyMlp model;
  /// Combined training-batch loss per iteration.
  std::vector<double> losses;
};

/// Plain SGD. Each batch slot picks a dataset pair; with multi_scale, half of
/// the slots become random half-size crops, prompted "enhance details" when
/// use_text.
TrainResult train(const ToyMlp& model, const std::vector<TrainPair>& dataset, const TrainConfig& cfg,
                  const TrainEnv& env);

/// Draws one training batch exactly as train() does.
TrainBatch draw_batch(const std::vector<TrainPair>& dataset, const TrainConfig& cfg, int f, SeededRng& rng);

// ---------------------------------------------------------------------------
// Synthetic data

struct SyntheticOptions {
  int height = 32;
  int width = 32;
  int max_discs = 2;
  int max_hairs = 2;
  /// true: matte = luminance threshold of the composite; false: the true alpha.
  bool threshold_matte = true;
};

/// Composite C = alpha F + (1 - alpha) B from procedural layers.
struct SyntheticSample {
  ImageBuffer composite;
  ImageBuffer fg;
  ImageBuffer bg;
  AlphaMatte alpha;
  AlphaMatte matte;
};

SyntheticSample synthetic_sample(const SyntheticOptions& opts, SeededRng& rng);
std::vector<TrainPair> synthetic_dataset(int count, const SyntheticOptions& opts, std::uint64_t seed);

}  // namespace genmatte
