#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "genmatte/denoiser.hpp"
#include "genmatte/schedule.hpp"
#include "genmatte/tensor.hpp"

namespace genmatte {

enum class GuidanceMode {
  /// sqrt((1 - ab_T) / ab_T) eps + g, exactly as the guidance formula is printed.
  kLiteral,
  /// sqrt(ab_T) times the literal state: sqrt(1 - ab_T) eps + sqrt(ab_T) g.
  kNormalized,
};

struct SamplerConfig {
  /// Strictly decreasing, within [1, T], ending at 1.
  std::vector<int> step_indices;
  double eta = 1.0;
  GuidanceMode guidance_mode = GuidanceMode::kNormalized;

  int steps() const { return static_cast<int>(step_indices.size()); }
  void validate(int T) const;
};

/// Evenly strided indices round(1 + (T-1) k / (steps-1)), k = steps-1 .. 0.
std::vector<int> strided_steps(int steps, int T);
SamplerConfig make_sampler_config(int steps, int T, double eta = 1.0,
                                  GuidanceMode mode = GuidanceMode::kNormalized);

/// Latent guide: `g` is zero wherever the single-channel `m_unknown` is 1.
struct GuidanceLatent {
  Tensor3 g;
  Tensor3 m_unknown;

  void validate(const Dims& latent) const;
};

/// One full-canvas standard-normal field per sampling stage, derived from a seed.
/// Field 0 seeds the initial state; field k (k >= 1) is the fresh noise of step k.
class NoiseField {
 public:
  NoiseField(std::uint64_t seed, Dims dims) : seed_(seed), dims_(dims) {}

  Tensor3 field(int k) const;
  std::uint64_t seed() const { return seed_; }
  const Dims& dims() const { return dims_; }

 private:
  std::uint64_t seed_;
  Dims dims_;
};

Tensor3 init_state(const SamplerConfig& cfg, const DiffusionSchedule& s, const GuidanceLatent* guide,
                   const Tensor3& eps);
Tensor3 init_state(const SamplerConfig& cfg, const DiffusionSchedule& s, const GuidanceLatent* guide,
                   SeededRng& rng, Dims dims);

/// One eta-family reverse step from t_cur to t_prev; returns z0_hat when t_prev == 0.
/// `fresh_noise` is read only when the step variance is positive.
Tensor3 ancestral_step(const Tensor3& z_t, int t_cur, int t_prev, const Tensor3& eps_hat,
                       const DiffusionSchedule& s, double eta, const Tensor3& fresh_noise);
Tensor3 ancestral_step(const Tensor3& z_t, int t_cur, int t_prev, const Tensor3& eps_hat,
                       const DiffusionSchedule& s, double eta, SeededRng& rng);

/// Step variance v = eta^2 (1 - ab_prev)/(1 - ab_cur) (1 - ab_cur/ab_prev).
double step_variance(int t_cur, int t_prev, const DiffusionSchedule& s, double eta);

struct SampleRequest {
  const Denoiser& denoiser;
  const Tensor3& cond_latent;
  int latent_channels;
  const GuidanceLatent* guide = nullptr;
  std::span<const double> text = {};
};

/// Runs init_state then ancestral steps over cfg.step_indices using the noise
/// fields of NoiseField(seed, latent dims); returns the final z0_hat.
Tensor3 sample(const SampleRequest& req, const SamplerConfig& cfg, const DiffusionSchedule& s,
               std::uint64_t seed);

}  // namespace genmatte
