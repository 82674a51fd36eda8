#include "genmatte/denoiser.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "genmatte/error.hpp"

namespace genmatte {

Tensor3 Denoiser::predict_eps(const DenoiserInput& in, const DiffusionSchedule& s) const {
  require(in.z_t.dims().spatially_equal(in.cond_latent.dims()), ErrorKind::kShape,
          "z_t " + to_string(in.z_t.dims()) + " vs cond " + to_string(in.cond_latent.dims()));
  require(in.t >= 1 && in.t <= s.steps(), ErrorKind::kStep,
          "denoiser step " + std::to_string(in.t) + " outside [1," + std::to_string(s.steps()) + "]");
  Tensor3 out = predict(in, s);
  require(out.dims() == in.z_t.dims(), ErrorKind::kInternal, "denoiser output shape mismatch");
  require(out.all_finite(), ErrorKind::kInternal, "denoiser produced non-finite values");
  return out;
}

Tensor3 predicted_z0(const Tensor3& z_t, const Tensor3& eps_hat, int t, const DiffusionSchedule& s) {
  const double ab = s.alpha_bar(t);
  return lincomb(1.0 / std::sqrt(ab), z_t, -std::sqrt(1.0 - ab) / std::sqrt(ab), eps_hat);
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

TextEmbedder::TextEmbedder(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  require(dim >= 1, ErrorKind::kConfig, "text embedding dim must be >= 1");
}

std::vector<double> TextEmbedder::token_vector(std::string_view token) const {
  SeededRng rng(child_seed(seed_, fnv1a64(token)));
  std::vector<double> v(dim_);
  double norm = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

std::vector<double> TextEmbedder::embed(std::span<const std::string> tokens) const {
  std::vector<double> out(dim_, 0.0);
  if (tokens.empty()) return out;
  for (const auto& tok : tokens) {
    const auto v = token_vector(tok);
    for (int i = 0; i < dim_; ++i) out[i] += v[i];
  }
  for (double& x : out) x /= static_cast<double>(tokens.size());
  return out;
}

std::vector<std::string> TextEmbedder::tokenize(std::string_view prompt) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : prompt) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

// ---------------------------------------------------------------------------

GaussianOracle::GaussianOracle(Tensor3 mu, double s2) : mu_(std::move(mu)), s2_(s2) {
  require(s2 >= 0.0, ErrorKind::kConfig, "gaussian oracle variance must be >= 0");
  require(!mu_.empty(), ErrorKind::kConfig, "gaussian oracle needs a mean");
}

Tensor3 GaussianOracle::posterior_mean(const Tensor3& z_t, int t, const DiffusionSchedule& s) const {
  require(mu_.size() == 1 || mu_.dims() == z_t.dims(), ErrorKind::kShape,
          "oracle mean " + to_string(mu_.dims()) + " vs z_t " + to_string(z_t.dims()));
  const double ab = s.alpha_bar(t);
  const double ra = std::sqrt(ab);
  const double gain = ra * s2_ / (ab * s2_ + 1.0 - ab);
  Tensor3 out(z_t.dims());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double m = mu_at(i);
    out[i] = m + gain * (z_t[i] - ra * m);
  }
  return out;
}

Tensor3 GaussianOracle::predict(const DenoiserInput& in, const DiffusionSchedule& s) const {
  const double ab = s.alpha_bar(in.t);
  const Tensor3 z0 = posterior_mean(in.z_t, in.t, s);
  return lincomb(1.0 / std::sqrt(1.0 - ab), in.z_t, -std::sqrt(ab) / std::sqrt(1.0 - ab), z0);
}

GaussianOracle gaussian_oracle(Tensor3 mu, double s2) { return GaussianOracle(std::move(mu), s2); }

ProceduralOracle::ProceduralOracle(TargetFn target_fn, CodecPair codecs)
    : target_fn_(std::move(target_fn)), codecs_(std::move(codecs)) {
  require(static_cast<bool>(target_fn_), ErrorKind::kConfig, "procedural oracle needs a target");
  require(codecs_.image.factor() == codecs_.matte.factor(), ErrorKind::kConfig,
          "image and matte codecs must share a factor");
}

Tensor3 ProceduralOracle::target_latent(const Tensor3& cond_latent) const {
  const ImageBuffer image(codecs_.image.decode(cond_latent));
  const AlphaMatte target = target_fn_(image);
  return codecs_.matte.encode(target.pixels());
}

Tensor3 ProceduralOracle::predict(const DenoiserInput& in, const DiffusionSchedule& s) const {
  const Tensor3 z0 = target_latent(in.cond_latent);
  require(z0.dims() == in.z_t.dims(), ErrorKind::kShape,
          "target latent " + to_string(z0.dims()) + " vs z_t " + to_string(in.z_t.dims()));
  const double ab = s.alpha_bar(in.t);
  return lincomb(1.0 / std::sqrt(1.0 - ab), in.z_t, -std::sqrt(ab) / std::sqrt(1.0 - ab), z0);
}

ProceduralOracle procedural_oracle(TargetFn target_fn, CodecPair codecs) {
  return ProceduralOracle(std::move(target_fn), std::move(codecs));
}

// ---------------------------------------------------------------------------

std::vector<double> time_embedding(int t, int T) {
  std::vector<double> e(MlpLayout::kTimeDim);
  const double tau = static_cast<double>(t) / T;
  for (int j = 0; j < MlpLayout::kTimeDim / 2; ++j) {
    const double w = std::numbers::pi / 2.0 * static_cast<double>(1 << j);
    e[2 * j] = std::sin(w * tau);
    e[2 * j + 1] = std::cos(w * tau);
  }
  return e;
}

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const Mat>;
using Map = Eigen::Map<Mat>;

/// (kernel^2 * C) x S feature matrix; row c*k*k + ky*k + kx holds the
/// (ky - k/2, kx - k/2) neighbour of every site, zero outside the grid.
Mat gather(const Tensor3& t, int kernel) {
  const int sites = t.height() * t.width();
  const int r = kernel / 2;
  Mat out = Mat::Zero(static_cast<Eigen::Index>(kernel) * kernel * t.channels(), sites);
  for (int c = 0; c < t.channels(); ++c)
    for (int ky = 0; ky < kernel; ++ky)
      for (int kx = 0; kx < kernel; ++kx) {
        const int row = (c * kernel + ky) * kernel + kx;
        for (int y = 0; y < t.height(); ++y) {
          const int sy = y + ky - r;
          if (sy < 0 || sy >= t.height()) continue;
          for (int x = 0; x < t.width(); ++x) {
            const int sx = x + kx - r;
            if (sx < 0 || sx >= t.width()) continue;
            out(row, y * t.width() + x) = t.at(c, sy, sx);
          }
        }
      }
  return out;
}

Mat broadcast_columns(std::span<const double> v, int rows, int sites) {
  Mat out = Mat::Zero(rows, sites);
  if (v.empty()) return out;
  for (int i = 0; i < rows; ++i) out.row(i).setConstant(v[i]);
  return out;
}

struct Features {
  Mat z, time, cond, text;
};

}  // namespace

ToyMlp::Offsets ToyMlp::compute_offsets(const MlpLayout& layout, std::size_t* total) {
  Offsets o;
  std::vector<int> widths = layout.hidden;
  widths.push_back(layout.latent_channels);
  const std::size_t out0 = widths[0];
  std::size_t pos = 0;
  o.wz = pos;
  pos += out0 * layout.z_width();
  o.wt = pos;
  pos += out0 * MlpLayout::kTimeDim;
  o.wc = pos;
  pos += out0 * layout.cond_width();
  o.wtxt = pos;
  pos += out0 * layout.text_dim;
  o.b0 = pos;
  pos += out0;
  for (std::size_t l = 1; l < widths.size(); ++l) {
    o.w.push_back(pos);
    pos += static_cast<std::size_t>(widths[l]) * widths[l - 1];
    o.b.push_back(pos);
    pos += widths[l];
  }
  *total = pos;
  return o;
}

ToyMlp::ToyMlp(MlpLayout layout, std::uint64_t init_seed) : layout_(std::move(layout)) {
  require(layout_.latent_channels >= 1, ErrorKind::kConfig, "mlp needs latent channels");
  require(layout_.cond_channels >= 0 && layout_.text_dim >= 0, ErrorKind::kConfig,
          "negative mlp input width");
  require(layout_.kernel == 1 || layout_.kernel == 3, ErrorKind::kConfig, "mlp kernel must be 1 or 3");
  for (int w : layout_.hidden) require(w >= 1, ErrorKind::kConfig, "mlp hidden widths must be >= 1");
  std::size_t total = 0;
  off_ = compute_offsets(layout_, &total);
  params_.assign(total, 0.0);

  SeededRng rng(init_seed);
  std::vector<int> widths = layout_.hidden;
  widths.push_back(layout_.latent_channels);
  const double scale0 = 1.0 / std::sqrt(static_cast<double>(layout_.input_width()));
  for (std::size_t i = off_.wz; i < off_.b0; ++i) params_[i] = scale0 * rng.normal();
  for (std::size_t l = 1; l < widths.size(); ++l) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(widths[l - 1]));
    for (std::size_t i = off_.w[l - 1]; i < off_.b[l - 1]; ++i) params_[i] = scale * rng.normal();
  }
}

void ToyMlp::set_parameters(std::span<const double> params) {
  require(params.size() == params_.size(), ErrorKind::kShape,
          "parameter vector length " + std::to_string(params.size()) + " != " +
              std::to_string(params_.size()));
  std::copy(params.begin(), params.end(), params_.begin());
}

namespace {

struct Forward {
  Features in;
  std::vector<Mat> h;  // post-activation per layer; last entry is the linear output
};

}  // namespace

Tensor3 ToyMlp::predict(const DenoiserInput& in, const DiffusionSchedule& s) const {
  return forward_backward(in, s, nullptr, {});
}

Tensor3 ToyMlp::forward_backward(const DenoiserInput& in, const DiffusionSchedule& s,
                                 const std::function<Tensor3(const Tensor3&)>& dloss_dout,
                                 std::span<double> grad) const {
  const MlpLayout& L = layout_;
  require(in.z_t.channels() == L.latent_channels, ErrorKind::kShape,
          "mlp expects " + std::to_string(L.latent_channels) + " latent channels, got " +
              std::to_string(in.z_t.channels()));
  if (L.cond_channels > 0)
    require(in.cond_latent.channels() == L.cond_channels, ErrorKind::kShape,
            "mlp expects " + std::to_string(L.cond_channels) + " cond channels, got " +
                std::to_string(in.cond_latent.channels()));
  if (L.text_dim > 0 && !in.text_cond.empty())
    require(static_cast<int>(in.text_cond.size()) == L.text_dim, ErrorKind::kShape,
            "text condition length " + std::to_string(in.text_cond.size()) + " != " +
                std::to_string(L.text_dim));

  const int sites = in.z_t.height() * in.z_t.width();
  std::vector<int> widths = L.hidden;
  widths.push_back(L.latent_channels);
  const int layers = static_cast<int>(widths.size());
  const double* p = params_.data();

  Forward f;
  f.in.z = gather(in.z_t, L.kernel);
  f.in.time = broadcast_columns(time_embedding(in.t, s.steps()), MlpLayout::kTimeDim, sites);
  if (L.cond_channels > 0) f.in.cond = gather(in.cond_latent, L.kernel);
  if (L.text_dim > 0) f.in.text = broadcast_columns(in.text_cond, L.text_dim, sites);

  const int out0 = widths[0];
  Mat pre = MapC(p + off_.wz, out0, L.z_width()) * f.in.z;
  pre.noalias() += MapC(p + off_.wt, out0, MlpLayout::kTimeDim) * f.in.time;
  if (L.cond_channels > 0) pre.noalias() += MapC(p + off_.wc, out0, L.cond_width()) * f.in.cond;
  if (L.text_dim > 0) pre.noalias() += MapC(p + off_.wtxt, out0, L.text_dim) * f.in.text;
  pre.colwise() += Eigen::Map<const Eigen::VectorXd>(p + off_.b0, out0);
  f.h.push_back(layers == 1 ? pre : Mat(pre.array().tanh()));
  for (int l = 1; l < layers; ++l) {
    Mat next = MapC(p + off_.w[l - 1], widths[l], widths[l - 1]) * f.h.back();
    next.colwise() += Eigen::Map<const Eigen::VectorXd>(p + off_.b[l - 1], widths[l]);
    f.h.push_back(l == layers - 1 ? next : Mat(next.array().tanh()));
  }

  Tensor3 out(in.z_t.dims());
  Map(out.data().data(), L.latent_channels, sites) = f.h.back();
  if (!dloss_dout) return out;

  require(grad.size() == params_.size(), ErrorKind::kShape, "gradient buffer size mismatch");
  const Tensor3 g_out = dloss_dout(out);
  require(g_out.dims() == out.dims(), ErrorKind::kShape, "output gradient shape mismatch");
  double* g = grad.data();
  Mat delta = MapC(g_out.data().data(), L.latent_channels, sites);
  for (int l = layers - 1; l >= 1; --l) {
    const Mat& prev = f.h[l - 1];
    Map(g + off_.w[l - 1], widths[l], widths[l - 1]).noalias() += delta * prev.transpose();
    Eigen::Map<Eigen::VectorXd>(g + off_.b[l - 1], widths[l]) += delta.rowwise().sum();
    Mat back = MapC(p + off_.w[l - 1], widths[l], widths[l - 1]).transpose() * delta;
    delta = back.array() * (1.0 - prev.array().square());
  }
  Map(g + off_.wz, out0, L.z_width()).noalias() += delta * f.in.z.transpose();
  Map(g + off_.wt, out0, MlpLayout::kTimeDim).noalias() += delta * f.in.time.transpose();
  if (L.cond_channels > 0)
    Map(g + off_.wc, out0, L.cond_width()).noalias() += delta * f.in.cond.transpose();
  if (L.text_dim > 0)
    Map(g + off_.wtxt, out0, L.text_dim).noalias() += delta * f.in.text.transpose();
  Eigen::Map<Eigen::VectorXd>(g + off_.b0, out0) += delta.rowwise().sum();
  return out;
}

ToyMlp toy_mlp_denoiser(MlpLayout layout, std::uint64_t init_seed) {
  return ToyMlp(std::move(layout), init_seed);
}

ToyMlp extend_conditional(const ToyMlp& base, int cond_channels, int text_dim) {
  const MlpLayout& bl = base.layout();
  require(bl.cond_channels == 0 && bl.text_dim == 0, ErrorKind::kConfig,
          "extend_conditional expects an unconditional model");
  require(cond_channels >= 0 && text_dim >= 0, ErrorKind::kConfig, "negative extension width");
  MlpLayout layout = bl;
  layout.cond_channels = cond_channels;
  layout.text_dim = text_dim;
  ToyMlp out(layout, 0);
  std::fill(out.params_.begin(), out.params_.end(), 0.0);

  const auto& src = base.params_;
  auto copy_block = [&](std::size_t from, std::size_t to, std::size_t n) {
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(from),
              src.begin() + static_cast<std::ptrdiff_t>(from + n),
              out.params_.begin() + static_cast<std::ptrdiff_t>(to));
  };
  copy_block(base.off_.wz, out.off_.wz, base.off_.wt - base.off_.wz);
  copy_block(base.off_.wt, out.off_.wt, base.off_.wc - base.off_.wt);
  // cond and text blocks stay zero
  copy_block(base.off_.b0, out.off_.b0, src.size() - base.off_.b0);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::array<char, 4> kMagic = {'G', 'M', 'T', 'D'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v & 0xffffffffu));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  require(static_cast<bool>(in), ErrorKind::kFormat, "truncated weight file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& in) {
  const std::uint64_t lo = get_u32(in);
  const std::uint64_t hi = get_u32(in);
  return lo | (hi << 32);
}

}  // namespace

void save_weights(const ToyMlp& model, std::ostream& out) {
  const MlpLayout& L = model.layout();
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(L.latent_channels));
  put_u32(out, static_cast<std::uint32_t>(L.cond_channels));
  put_u32(out, static_cast<std::uint32_t>(L.text_dim));
  put_u32(out, static_cast<std::uint32_t>(L.kernel));
  put_u32(out, static_cast<std::uint32_t>(MlpLayout::kTimeDim));
  put_u32(out, static_cast<std::uint32_t>(L.hidden.size()));
  for (int w : L.hidden) put_u32(out, static_cast<std::uint32_t>(w));
  put_u64(out, model.parameter_count());
  for (double v : model.parameters()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  require(static_cast<bool>(out), ErrorKind::kIo, "failed writing weights");
}

ToyMlp load_weights(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  require(static_cast<bool>(in) && magic == kMagic, ErrorKind::kFormat, "not a toy denoiser weight file");
  const std::uint32_t version = get_u32(in);
  require(version == kVersion, ErrorKind::kFormat, "unsupported weight version " + std::to_string(version));
  MlpLayout L;
  L.latent_channels = static_cast<int>(get_u32(in));
  L.cond_channels = static_cast<int>(get_u32(in));
  L.text_dim = static_cast<int>(get_u32(in));
  L.kernel = static_cast<int>(get_u32(in));
  const std::uint32_t time_dim = get_u32(in);
  require(time_dim == MlpLayout::kTimeDim, ErrorKind::kFormat, "unsupported time embedding width");
  const std::uint32_t n_hidden = get_u32(in);
  require(n_hidden <= 64, ErrorKind::kFormat, "implausible hidden layer count");
  L.hidden.resize(n_hidden);
  for (int& w : L.hidden) w = static_cast<int>(get_u32(in));
  ToyMlp model(L, 0);
  const std::uint64_t count = get_u64(in);
  require(count == model.parameter_count(), ErrorKind::kFormat, "parameter count does not match layout");
  std::vector<double> params(count);
  for (double& v : params) v = static_cast<double>(std::bit_cast<float>(get_u32(in)));
  model.set_parameters(params);
  return model;
}

void save_weights(const ToyMlp& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot open " + path + " for writing");
  save_weights(model, out);
}

ToyMlp load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path);
  return load_weights(in);
}

}  // namespace genmatte
