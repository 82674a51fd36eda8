#include "genmatte/sampler.hpp"

#include <cmath>
#include <string>

#include "genmatte/error.hpp"

namespace genmatte {

void SamplerConfig::validate(int T) const {
  require(!step_indices.empty(), ErrorKind::kConfig, "sampler needs at least one step");
  require(eta >= 0.0 && eta <= 1.0, ErrorKind::kConfig, "eta must lie in [0,1]");
  for (std::size_t i = 0; i < step_indices.size(); ++i) {
    const int t = step_indices[i];
    require(t >= 1 && t <= T, ErrorKind::kConfig, "step index " + std::to_string(t) + " outside [1,T]");
    if (i > 0)
      require(t < step_indices[i - 1], ErrorKind::kConfig, "step indices must strictly decrease");
  }
  require(step_indices.back() == 1, ErrorKind::kConfig, "last step index must be 1");
}

std::vector<int> strided_steps(int steps, int T) {
  require(T >= 1, ErrorKind::kConfig, "T must be >= 1");
  require(steps >= 1 && steps <= T, ErrorKind::kConfig,
          "step count " + std::to_string(steps) + " outside [1," + std::to_string(T) + "]");
  if (T == 1) return {1};
  require(steps >= 2, ErrorKind::kConfig, "need at least 2 steps to span [1,T]");
  std::vector<int> out;
  out.reserve(steps);
  for (int k = steps - 1; k >= 0; --k)
    out.push_back(static_cast<int>(std::lround(1.0 + (T - 1.0) * k / (steps - 1.0))));
  return out;
}

SamplerConfig make_sampler_config(int steps, int T, double eta, GuidanceMode mode) {
  SamplerConfig cfg{strided_steps(steps, T), eta, mode};
  cfg.validate(T);
  return cfg;
}

void GuidanceLatent::validate(const Dims& latent) const {
  require(g.dims() == latent, ErrorKind::kShape,
          "guide " + to_string(g.dims()) + " vs latent " + to_string(latent));
  require(m_unknown.channels() == 1 && m_unknown.dims().spatially_equal(latent), ErrorKind::kShape,
          "unknown mask " + to_string(m_unknown.dims()) + " vs latent " + to_string(latent));
  for (int c = 0; c < g.channels(); ++c)
    for (int y = 0; y < g.height(); ++y)
      for (int x = 0; x < g.width(); ++x)
        require(m_unknown.at(0, y, x) < 1.0 || g.at(c, y, x) == 0.0, ErrorKind::kValidation,
                "guide is nonzero on an unknown site");
}

Tensor3 NoiseField::field(int k) const {
  SeededRng rng(child_seed(seed_, static_cast<std::uint64_t>(k)));
  return randn(rng, dims_);
}

Tensor3 init_state(const SamplerConfig& cfg, const DiffusionSchedule& s, const GuidanceLatent* guide,
                   const Tensor3& eps) {
  if (guide == nullptr) return eps;
  guide->validate(eps.dims());
  const double ab = s.alpha_bar(cfg.step_indices.front());
  // (1 - m_unknown) c_S; g is already zero on fully unknown sites.
  Tensor3 g = guide->g;
  for (int c = 0; c < g.channels(); ++c)
    for (int y = 0; y < g.height(); ++y)
      for (int x = 0; x < g.width(); ++x) g.at(c, y, x) *= 1.0 - guide->m_unknown.at(0, y, x);
  switch (cfg.guidance_mode) {
    case GuidanceMode::kLiteral:
      return lincomb(std::sqrt((1.0 - ab) / ab), eps, 1.0, g);
    case GuidanceMode::kNormalized:
      return lincomb(std::sqrt(1.0 - ab), eps, std::sqrt(ab), g);
  }
  fail(ErrorKind::kInternal, "unknown guidance mode");
}

Tensor3 init_state(const SamplerConfig& cfg, const DiffusionSchedule& s, const GuidanceLatent* guide,
                   SeededRng& rng, Dims dims) {
  return init_state(cfg, s, guide, randn(rng, dims));
}

double step_variance(int t_cur, int t_prev, const DiffusionSchedule& s, double eta) {
  if (t_prev == 0 || eta == 0.0) return 0.0;
  const double a_cur = s.alpha_bar(t_cur);
  const double a_prev = s.alpha_bar(t_prev);
  return eta * eta * (1.0 - a_prev) / (1.0 - a_cur) * (1.0 - a_cur / a_prev);
}

Tensor3 ancestral_step(const Tensor3& z_t, int t_cur, int t_prev, const Tensor3& eps_hat,
                       const DiffusionSchedule& s, double eta, const Tensor3& fresh_noise) {
  require(t_cur > t_prev && t_prev >= 0, ErrorKind::kStep,
          "reverse step needs t_cur > t_prev >= 0, got " + std::to_string(t_cur) + " -> " +
              std::to_string(t_prev));
  require(z_t.dims() == eps_hat.dims(), ErrorKind::kShape,
          "z_t " + to_string(z_t.dims()) + " vs eps " + to_string(eps_hat.dims()));
  Tensor3 z0 = predicted_z0(z_t, eps_hat, t_cur, s);
  if (t_prev == 0) return z0;
  const double a_prev = s.alpha_bar(t_prev);
  const double v = step_variance(t_cur, t_prev, s, eta);
  Tensor3 out = lincomb(std::sqrt(a_prev), z0, std::sqrt(std::max(0.0, 1.0 - a_prev - v)), eps_hat);
  if (v > 0.0) {
    require(fresh_noise.dims() == z_t.dims(), ErrorKind::kShape, "fresh noise shape mismatch");
    const double sv = std::sqrt(v);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += sv * fresh_noise[i];
  }
  return out;
}

Tensor3 ancestral_step(const Tensor3& z_t, int t_cur, int t_prev, const Tensor3& eps_hat,
                       const DiffusionSchedule& s, double eta, SeededRng& rng) {
  const bool noisy = step_variance(t_cur, t_prev, s, eta) > 0.0;
  return ancestral_step(z_t, t_cur, t_prev, eps_hat, s, eta, noisy ? randn(rng, z_t.dims()) : Tensor3());
}

Tensor3 sample(const SampleRequest& req, const SamplerConfig& cfg, const DiffusionSchedule& s,
               std::uint64_t seed) {
  cfg.validate(s.steps());
  require(req.latent_channels >= 1, ErrorKind::kShape, "latent channel count must be >= 1");
  const Dims dims{req.latent_channels, req.cond_latent.height(), req.cond_latent.width()};
  const NoiseField noise(seed, dims);
  Tensor3 z = init_state(cfg, s, req.guide, noise.field(0));
  const auto& steps = cfg.step_indices;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const int t = steps[i];
    const int t_prev = i + 1 < steps.size() ? steps[i + 1] : 0;
    const Tensor3 eps = req.denoiser.predict_eps({z, req.cond_latent, t, req.text}, s);
    const bool noisy = step_variance(t, t_prev, s, cfg.eta) > 0.0;
    z = ancestral_step(z, t, t_prev, eps, s, cfg.eta,
                       noisy ? noise.field(static_cast<int>(i) + 1) : Tensor3());
  }
  return z;
}

}  // namespace genmatte
