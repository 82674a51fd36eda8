#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "genmatte/codec.hpp"
#include "genmatte/image.hpp"
#include "genmatte/schedule.hpp"
#include "genmatte/tensor.hpp"

namespace genmatte {

/// Arguments of eps_theta(z_t, z^(x), c_T, t). An empty `text_cond` means no prompt.
struct DenoiserInput {
  const Tensor3& z_t;
  const Tensor3& cond_latent;
  int t;
  std::span<const double> text_cond = {};
};

/// Noise-prediction model. Implementations must be safe to call concurrently.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  /// Validates the input, predicts eps and checks the result is finite.
  Tensor3 predict_eps(const DenoiserInput& in, const DiffusionSchedule& s) const;

  /// True when output site (y, x) depends only on input site (y, x).
  virtual bool per_site() const { return true; }

 protected:
  virtual Tensor3 predict(const DenoiserInput& in, const DiffusionSchedule& s) const = 0;
};

/// z0 implied by an eps prediction: (z_t - sqrt(1 - ab) eps) / sqrt(ab).
Tensor3 predicted_z0(const Tensor3& z_t, const Tensor3& eps_hat, int t, const DiffusionSchedule& s);

// ---------------------------------------------------------------------------

/// Toy stand-in for a text encoder: each token maps to a seeded unit vector and
/// a prompt embeds as the mean of its token vectors.
class TextEmbedder {
 public:
  TextEmbedder(int dim, std::uint64_t seed);

  int dim() const { return dim_; }
  std::vector<double> token_vector(std::string_view token) const;
  std::vector<double> embed(std::span<const std::string> tokens) const;
  std::vector<double> embed_prompt(std::string_view prompt) const { return embed(tokenize(prompt)); }

  /// Lower-cased whitespace split.
  static std::vector<std::string> tokenize(std::string_view prompt);

 private:
  int dim_;
  std::uint64_t seed_;
};

inline constexpr std::string_view kDetailPrompt = "enhance details";

// ---------------------------------------------------------------------------

/// Exact E[eps | z_t] for data z0 ~ N(mu, s2 I). `mu` is either 1x1x1 (broadcast)
/// or the full latent shape. Ignores the image and text conditions.
class GaussianOracle : public Denoiser {
 public:
  GaussianOracle(Tensor3 mu, double s2);

  Tensor3 posterior_mean(const Tensor3& z_t, int t, const DiffusionSchedule& s) const;
  const Tensor3& mu() const { return mu_; }
  double s2() const { return s2_; }

 protected:
  Tensor3 predict(const DenoiserInput& in, const DiffusionSchedule& s) const override;

 private:
  double mu_at(std::size_t i) const { return mu_.size() == 1 ? mu_[0] : mu_[i]; }

  Tensor3 mu_;
  double s2_;
};

GaussianOracle gaussian_oracle(Tensor3 mu, double s2);

using TargetFn = std::function<AlphaMatte(const ImageBuffer&)>;

/// Denoiser whose implied z0 is always encode(target_fn(decode(cond_latent))).
/// target_fn must be pointwise for patch inference to reproduce the full frame.
class ProceduralOracle : public Denoiser {
 public:
  ProceduralOracle(TargetFn target_fn, CodecPair codecs);

  Tensor3 target_latent(const Tensor3& cond_latent) const;

 protected:
  Tensor3 predict(const DenoiserInput& in, const DiffusionSchedule& s) const override;

 private:
  TargetFn target_fn_;
  CodecPair codecs_;
};

ProceduralOracle procedural_oracle(TargetFn target_fn, CodecPair codecs);

// ---------------------------------------------------------------------------

struct MlpLayout {
  static constexpr int kTimeDim = 8;

  int latent_channels = 4;
  int cond_channels = 0;
  int text_dim = 0;
  /// 1 = per-site; 3 = first layer sees the 3x3 neighbourhood (zero padded).
  int kernel = 1;
  std::vector<int> hidden = {32, 32};

  int z_width() const { return kernel * kernel * latent_channels; }
  int cond_width() const { return kernel * kernel * cond_channels; }
  int input_width() const { return z_width() + kTimeDim + cond_width() + text_dim; }
  bool operator==(const MlpLayout&) const = default;
};

/// Sinusoidal embedding of t/T: [sin(w_j t/T), cos(w_j t/T)] for w_j = pi/2 * 2^j, j < 4.
std::vector<double> time_embedding(int t, int T);

/// Per-site tanh MLP over [z_t | time | cond | text] features.
///
/// The first layer keeps one weight block per input group and sums the group
/// products in that order, so appending zero-initialised groups leaves the
/// output bit-identical. Parameters are flattened as: first-layer blocks
/// (z, time, cond, text, bias), then (W, b) for each later layer; weights
/// row-major with shape (out, in).
class ToyMlp : public Denoiser {
 public:
  ToyMlp(MlpLayout layout, std::uint64_t init_seed);

  const MlpLayout& layout() const { return layout_; }
  bool per_site() const override { return layout_.kernel == 1; }

  std::size_t parameter_count() const { return params_.size(); }
  const std::vector<double>& parameters() const { return params_; }
  void set_parameters(std::span<const double> params);

  /// Runs the forward pass, asks `dloss_dout` for the output gradient and
  /// accumulates d(loss)/d(params) into `grad`. Returns the forward output.
  Tensor3 forward_backward(const DenoiserInput& in, const DiffusionSchedule& s,
                           const std::function<Tensor3(const Tensor3&)>& dloss_dout,
                           std::span<double> grad) const;

 protected:
  Tensor3 predict(const DenoiserInput& in, const DiffusionSchedule& s) const override;

 private:
  friend ToyMlp extend_conditional(const ToyMlp& base, int cond_channels, int text_dim);
  struct Offsets {
    std::size_t wz, wt, wc, wtxt, b0;
    std::vector<std::size_t> w, b;  // later layers
  };
  static Offsets compute_offsets(const MlpLayout& layout, std::size_t* total);

  MlpLayout layout_;
  Offsets off_;
  std::vector<double> params_;
};

ToyMlp toy_mlp_denoiser(MlpLayout layout, std::uint64_t init_seed);

/// Adds zero-initialised cond and text input blocks to an unconditional model.
ToyMlp extend_conditional(const ToyMlp& base, int cond_channels, int text_dim);

// Weight file: "GMTD", u32 version, u32 latent/cond/text/kernel/time dims,
// u32 hidden count, u32 hidden widths, u64 parameter count, then f32 values.
// All integers and floats little-endian.
void save_weights(const ToyMlp& model, std::ostream& out);
ToyMlp load_weights(std::istream& in);
void save_weights(const ToyMlp& model, const std::string& path);
ToyMlp load_weights(const std::string& path);

}  // namespace genmatte
