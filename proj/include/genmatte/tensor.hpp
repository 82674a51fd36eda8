#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace genmatte {

struct Dims {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) *
           static_cast<std::size_t>(width);
  }
  std::size_t plane() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  bool spatially_equal(const Dims& o) const { return height == o.height && width == o.width; }
  bool operator==(const Dims&) const = default;
};

std::string to_string(const Dims& d);

/// Dense channel-major grid, row-major within each channel.
class Tensor3 {
 public:
  Tensor3() = default;
  explicit Tensor3(Dims dims, double fill = 0.0);
  Tensor3(Dims dims, std::vector<double> data);

  const Dims& dims() const { return dims_; }
  int channels() const { return dims_.channels; }
  int height() const { return dims_.height; }
  int width() const { return dims_.width; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  double at(int c, int y, int x) const { return data_[index(c, y, x)]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> channel(int c);
  std::span<const double> channel(int c) const;

  bool all_finite() const;

  Tensor3& operator+=(const Tensor3& o);
  Tensor3& operator-=(const Tensor3& o);
  Tensor3& operator*=(double s);

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * dims_.height + y) * dims_.width + x;
  }

  Dims dims_;
  std::vector<double> data_;
};

Tensor3 operator+(Tensor3 a, const Tensor3& b);
Tensor3 operator-(Tensor3 a, const Tensor3& b);
Tensor3 operator*(double s, Tensor3 a);

/// a*x + b*y elementwise.
Tensor3 lincomb(double a, const Tensor3& x, double b, const Tensor3& y);

double max_abs_diff(const Tensor3& a, const Tensor3& b);
double l2_norm(const Tensor3& a);
double sum(const Tensor3& a);

// ---------------------------------------------------------------------------
// Seeded randomness
// ---------------------------------------------------------------------------

/// SplitMix64 finalizer; also used for seed derivation.
std::uint64_t splitmix64(std::uint64_t x);

/// child_seed = splitmix64(parent ^ splitmix64(index + 0x9E3779B97F4A7C15)).
std::uint64_t child_seed(std::uint64_t parent, std::uint64_t index);

/// xoshiro256** seeded by four SplitMix64 outputs of `seed`.
///
/// Normal variates use the cosine branch of Box-Muller and consume exactly two
/// 64-bit outputs each: u1 = ((a >> 11) + 1) * 2^-53, u2 = (b >> 11) * 2^-53,
/// n = sqrt(-2 ln u1) cos(2 pi u2). position() counts variates drawn.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return position_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi);
  double normal();

  SeededRng child(std::uint64_t index) const { return SeededRng(child_seed(seed_, index)); }

 private:
  std::uint64_t raw();

  std::uint64_t seed_;
  std::uint64_t position_ = 0;
  std::uint64_t s_[4];
};

/// Standard-normal tensor drawn in flat (channel-major, row-major) order.
Tensor3 randn(SeededRng& rng, Dims dims);

// ---------------------------------------------------------------------------
// Patches
// ---------------------------------------------------------------------------

struct PatchBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  bool contains(int px, int py) const { return px >= x && px < x + w && py >= y && py < y + h; }
  int area() const { return w * h; }
  bool operator==(const PatchBox&) const = default;
};

bool fits(const PatchBox& b, int height, int width);

Tensor3 crop(const Tensor3& z, const PatchBox& b);
Tensor3 uncrop(const Tensor3& p, const PatchBox& b, Dims canvas);

}  // namespace genmatte
