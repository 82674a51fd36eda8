#include "genmatte/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "genmatte/error.hpp"

namespace genmatte {

std::string to_string(const Dims& d) {
  return "(" + std::to_string(d.channels) + "," + std::to_string(d.height) + "," +
         std::to_string(d.width) + ")";
}

Tensor3::Tensor3(Dims dims, double fill) : dims_(dims), data_(dims.size(), fill) {
  require(dims.channels >= 0 && dims.height >= 0 && dims.width >= 0, ErrorKind::kInvalidShape,
          "negative tensor dims " + to_string(dims));
}

Tensor3::Tensor3(Dims dims, std::vector<double> data) : dims_(dims), data_(std::move(data)) {
  require(data_.size() == dims_.size(), ErrorKind::kShape,
          "data length " + std::to_string(data_.size()) + " does not match " + to_string(dims));
}

std::span<double> Tensor3::channel(int c) {
  return std::span<double>(data_).subspan(static_cast<std::size_t>(c) * dims_.plane(), dims_.plane());
}

std::span<const double> Tensor3::channel(int c) const {
  return std::span<const double>(data_).subspan(static_cast<std::size_t>(c) * dims_.plane(),
                                                dims_.plane());
}

bool Tensor3::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor3& Tensor3::operator+=(const Tensor3& o) {
  require(dims_ == o.dims_, ErrorKind::kShape, "add: " + to_string(dims_) + " vs " + to_string(o.dims_));
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Tensor3& Tensor3::operator-=(const Tensor3& o) {
  require(dims_ == o.dims_, ErrorKind::kShape, "sub: " + to_string(dims_) + " vs " + to_string(o.dims_));
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

Tensor3& Tensor3::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Tensor3 operator+(Tensor3 a, const Tensor3& b) { return a += b; }
Tensor3 operator-(Tensor3 a, const Tensor3& b) { return a -= b; }
Tensor3 operator*(double s, Tensor3 a) { return a *= s; }

Tensor3 lincomb(double a, const Tensor3& x, double b, const Tensor3& y) {
  require(x.dims() == y.dims(), ErrorKind::kShape,
          "lincomb: " + to_string(x.dims()) + " vs " + to_string(y.dims()));
  Tensor3 out(x.dims());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x[i] + b * y[i];
  return out;
}

double max_abs_diff(const Tensor3& a, const Tensor3& b) {
  require(a.dims() == b.dims(), ErrorKind::kShape,
          "max_abs_diff: " + to_string(a.dims()) + " vs " + to_string(b.dims()));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double l2_norm(const Tensor3& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

double sum(const Tensor3& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return s;
}

// ---------------------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t child_seed(std::uint64_t parent, std::uint64_t index) {
  return splitmix64(parent ^ splitmix64(index + 0x9E3779B97F4A7C15ULL));
}

namespace {
std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t x = seed;
  for (auto& s : s_) {
    x += 0x9E3779B97F4A7C15ULL;
    s = splitmix64(x - 0x9E3779B97F4A7C15ULL);
  }
}

std::uint64_t SeededRng::raw() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

std::uint64_t SeededRng::next_u64() {
  ++position_;
  return raw();
}

double SeededRng::uniform() {
  ++position_;
  return static_cast<double>(raw() >> 11) * 0x1.0p-53;
}

int SeededRng::uniform_int(int lo, int hi) {
  require(lo <= hi, ErrorKind::kConfig, "uniform_int: empty range");
  ++position_;
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  // reject the tail so every value in the span is equally likely
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  std::uint64_t r = raw();
  while (r >= limit) r = raw();
  return lo + static_cast<int>(r % span);
}

double SeededRng::normal() {
  ++position_;
  const double u1 = static_cast<double>((raw() >> 11) + 1) * 0x1.0p-53;
  const double u2 = static_cast<double>(raw() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Tensor3 randn(SeededRng& rng, Dims dims) {
  require(dims.channels >= 1 && dims.height >= 1 && dims.width >= 1, ErrorKind::kInvalidShape,
          "randn shape " + to_string(dims));
  Tensor3 out(dims);
  for (double& v : out.data()) v = rng.normal();
  return out;
}

// ---------------------------------------------------------------------------

bool fits(const PatchBox& b, int height, int width) {
  return b.w >= 1 && b.h >= 1 && b.x >= 0 && b.y >= 0 && b.x + b.w <= width && b.y + b.h <= height;
}

namespace {
std::string box_string(const PatchBox& b) {
  return "(" + std::to_string(b.x) + "," + std::to_string(b.y) + "," + std::to_string(b.w) + "," +
         std::to_string(b.h) + ")";
}
}  // namespace

Tensor3 crop(const Tensor3& z, const PatchBox& b) {
  require(fits(b, z.height(), z.width()), ErrorKind::kBounds,
          "box " + box_string(b) + " outside " + to_string(z.dims()));
  Tensor3 out(Dims{z.channels(), b.h, b.w});
  for (int c = 0; c < z.channels(); ++c)
    for (int y = 0; y < b.h; ++y) {
      const double* src = &z.data()[(static_cast<std::size_t>(c) * z.height() + b.y + y) * z.width() + b.x];
      std::copy(src, src + b.w, &out.at(c, y, 0));
    }
  return out;
}

Tensor3 uncrop(const Tensor3& p, const PatchBox& b, Dims canvas) {
  require(p.dims() == Dims{canvas.channels, b.h, b.w}, ErrorKind::kShape,
          "patch " + to_string(p.dims()) + " does not match box " + box_string(b));
  require(fits(b, canvas.height, canvas.width), ErrorKind::kBounds,
          "box " + box_string(b) + " outside " + to_string(canvas));
  Tensor3 out(canvas);
  for (int c = 0; c < p.channels(); ++c)
    for (int y = 0; y < b.h; ++y)
      std::copy(&p.data()[(static_cast<std::size_t>(c) * b.h + y) * b.w],
                &p.data()[(static_cast<std::size_t>(c) * b.h + y) * b.w] + b.w,
                &out.at(c, b.y + y, b.x));
  return out;
}

}  // namespace genmatte
