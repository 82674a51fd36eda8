#pragma once

#include <cstdint>
#include <vector>

#include "genmatte/tensor.hpp"

namespace genmatte {

/// Exactly invertible latent codec: space-to-depth by `f` followed by a fixed
/// orthonormal channel mix of size (c*f^2)^2.
///
/// Space-to-depth layout: pixel (y*f+dy, x*f+dx) of input channel c lands in
/// latent channel c*f*f + dy*f + dx at site (y, x) before mixing. The mix is the
/// Q factor of a Householder QR of a seeded Gaussian matrix (columns sign-fixed
/// so diag(R) > 0). `mix_seed == 0` selects the identity mix.
class LatentCodec {
 public:
  LatentCodec(int image_channels, int f, std::uint64_t mix_seed);

  int image_channels() const { return image_channels_; }
  int factor() const { return f_; }
  int latent_channels() const { return n_; }
  std::uint64_t mix_seed() const { return mix_seed_; }
  /// Row-major n x n.
  const std::vector<double>& mix() const { return mix_; }

  Tensor3 encode(const Tensor3& img) const;
  Tensor3 decode(const Tensor3& z) const;

  Dims latent_dims(int height, int width) const {
    return Dims{n_, height / f_, width / f_};
  }

 private:
  int image_channels_;
  int f_;
  int n_;
  std::uint64_t mix_seed_;
  std::vector<double> mix_;
};

/// Image (3-channel) and matte (1-channel) codecs sharing one factor.
struct CodecPair {
  LatentCodec image;
  LatentCodec matte;
};

CodecPair make_codec_pair(int f, std::uint64_t image_mix_seed, std::uint64_t matte_mix_seed);

}  // namespace genmatte
