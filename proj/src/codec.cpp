#include "genmatte/codec.hpp"

#include <Eigen/Dense>
#include <string>

#include "genmatte/error.hpp"

namespace genmatte {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<double> orthonormal_mix(int n, std::uint64_t seed) {
  std::vector<double> out(static_cast<std::size_t>(n) * n, 0.0);
  if (seed == 0) {
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i) * n + i] = 1.0;
    return out;
  }
  SeededRng rng(seed);
  RowMatrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.normal();
  Eigen::HouseholderQR<RowMatrix> qr(a);
  RowMatrix q = qr.householderQ();
  const RowMatrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  Eigen::Map<RowMatrix>(out.data(), n, n) = q;
  return out;
}

}  // namespace

LatentCodec::LatentCodec(int image_channels, int f, std::uint64_t mix_seed)
    : image_channels_(image_channels), f_(f), n_(image_channels * f * f), mix_seed_(mix_seed) {
  require(image_channels >= 1, ErrorKind::kConfig, "codec needs >= 1 image channel");
  require(f >= 1, ErrorKind::kConfig, "codec factor must be >= 1");
  mix_ = orthonormal_mix(n_, mix_seed);
}

Tensor3 LatentCodec::encode(const Tensor3& img) const {
  require(img.channels() == image_channels_, ErrorKind::kShape,
          "encode expects " + std::to_string(image_channels_) + " channels, got " +
              std::to_string(img.channels()));
  require(img.height() % f_ == 0 && img.width() % f_ == 0 && img.height() > 0 && img.width() > 0,
          ErrorKind::kShape, "encode dims " + to_string(img.dims()) + " not divisible by " +
                                 std::to_string(f_));
  const int h = img.height() / f_;
  const int w = img.width() / f_;
  Tensor3 packed(Dims{n_, h, w});
  for (int c = 0; c < image_channels_; ++c)
    for (int dy = 0; dy < f_; ++dy)
      for (int dx = 0; dx < f_; ++dx) {
        const int k = (c * f_ + dy) * f_ + dx;
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) packed.at(k, y, x) = img.at(c, y * f_ + dy, x * f_ + dx);
      }
  if (mix_seed_ == 0) return packed;
  const int sites = h * w;
  Tensor3 out(packed.dims());
  Eigen::Map<RowMatrix>(out.data().data(), n_, sites).noalias() =
      Eigen::Map<const RowMatrix>(mix_.data(), n_, n_) *
      Eigen::Map<const RowMatrix>(packed.data().data(), n_, sites);
  return out;
}

Tensor3 LatentCodec::decode(const Tensor3& z) const {
  require(z.channels() == n_, ErrorKind::kShape,
          "decode expects " + std::to_string(n_) + " channels, got " + std::to_string(z.channels()));
  const int h = z.height();
  const int w = z.width();
  Tensor3 packed = z;
  if (mix_seed_ != 0) {
    Eigen::Map<RowMatrix>(packed.data().data(), n_, h * w).noalias() =
        Eigen::Map<const RowMatrix>(mix_.data(), n_, n_).transpose() *
        Eigen::Map<const RowMatrix>(z.data().data(), n_, h * w);
  }
  Tensor3 img(Dims{image_channels_, h * f_, w * f_});
  for (int c = 0; c < image_channels_; ++c)
    for (int dy = 0; dy < f_; ++dy)
      for (int dx = 0; dx < f_; ++dx) {
        const int k = (c * f_ + dy) * f_ + dx;
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) img.at(c, y * f_ + dy, x * f_ + dx) = packed.at(k, y, x);
      }
  return img;
}

CodecPair make_codec_pair(int f, std::uint64_t image_mix_seed, std::uint64_t matte_mix_seed) {
  return CodecPair{LatentCodec(3, f, image_mix_seed), LatentCodec(1, f, matte_mix_seed)};
}

}  // namespace genmatte
