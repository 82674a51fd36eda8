#pragma once

// Helpers shared by the unit tests and the acceptance binary. Everything here
// is written independently of the library internals so it can serve as an oracle.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include "genmatte/image.hpp"
#include "genmatte/tensor.hpp"

namespace testsupport {

using genmatte::Dims;
using genmatte::Tensor3;

// Reference xoshiro256** / SplitMix64 straight from the published algorithms.
struct RefSplitMix {
  std::uint64_t state;
  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
};

struct RefXoshiro {
  std::uint64_t s[4];
  explicit RefXoshiro(std::uint64_t seed) {
    RefSplitMix sm{seed};
    for (auto& v : s) v = sm.next();
  }
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t next() {
    const std::uint64_t result = rotl(s[1] * 5, 7) * 9;
    const std::uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    return result;
  }
  double normal() {
    const double u1 = (static_cast<double>(next() >> 11) + 1.0) / 9007199254740992.0;
    const double u2 = static_cast<double>(next() >> 11) / 9007199254740992.0;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }
};

inline Tensor3 uniform_tensor(genmatte::SeededRng& rng, Dims d, double lo = 0.0, double hi = 1.0) {
  Tensor3 t(d);
  for (double& v : t.data()) v = lo + (hi - lo) * rng.uniform();
  return t;
}

inline Tensor3 constant(Dims d, double v) { return Tensor3(d, v); }

inline bool bit_equal(const Tensor3& a, const Tensor3& b) {
  return a.dims() == b.dims() && std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

inline double max_abs(const Tensor3& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

// Running-product alpha bars for a linear beta ramp.
inline std::vector<double> ref_alpha_bars(int T, double b0, double b1) {
  std::vector<double> out;
  double acc = 1.0;
  for (int t = 1; t <= T; ++t) {
    const double beta = T == 1 ? b0 : b0 + (b1 - b0) * (t - 1) / (T - 1.0);
    acc *= 1.0 - beta;
    out.push_back(acc);
  }
  return out;
}

// Smooth RGB test image with a few hard edges, values in [0,1].
inline genmatte::ImageBuffer test_image(int h, int w, std::uint64_t seed) {
  genmatte::SeededRng rng(seed);
  const double cx = w * (0.3 + 0.4 * rng.uniform());
  const double cy = h * (0.3 + 0.4 * rng.uniform());
  const double r = std::min(h, w) * (0.15 + 0.2 * rng.uniform());
  const double fx = 0.02 + 0.05 * rng.uniform();
  Tensor3 t(Dims{3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const bool inside = std::hypot(x - cx, y - cy) < r || (x / 7 + y / 11) % 5 == 0;
      for (int c = 0; c < 3; ++c) {
        const double base = 0.2 + 0.1 * std::sin(fx * (x + 3 * c) + 0.03 * y);
        t.at(c, y, x) = inside ? 1.0 - base : base;
      }
    }
  return genmatte::ImageBuffer(t);
}

// Connectivity by label relaxation: every pixel starts with its own raster
// index and repeatedly takes the minimum over 4-neighbours in the same set.
// The largest component wins; equal sizes go to the smaller minimum index.
inline double ref_connectivity(const Tensor3& pred, const Tensor3& gt, int levels = 10, double phi_thr = 0.15) {
  const int h = pred.height(), w = pred.width(), n = h * w;
  std::vector<double> lp(n, 0.0);
  for (int k = 1; k <= levels; ++k) {
    const double theta = static_cast<double>(k) / levels;
    std::vector<int> lab(n, -1);
    for (int i = 0; i < n; ++i)
      if (pred.data()[i] >= theta && gt.data()[i] >= theta) lab[i] = i;
    for (bool changed = true; changed;) {
      changed = false;
      for (int i = 0; i < n; ++i) {
        if (lab[i] < 0) continue;
        const int y = i / w, x = i % w;
        const int nb[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
        for (const auto& q : nb) {
          if (q[0] < 0 || q[0] >= h || q[1] < 0 || q[1] >= w) continue;
          const int j = q[0] * w + q[1];
          if (lab[j] >= 0 && lab[j] < lab[i]) {
            lab[i] = lab[j];
            changed = true;
          }
        }
      }
    }
    std::vector<int> size(n, 0);
    for (int i = 0; i < n; ++i)
      if (lab[i] >= 0) ++size[lab[i]];
    int best = -1;
    for (int r = 0; r < n; ++r)
      if (size[r] > 0 && (best < 0 || size[r] > size[best])) best = r;
    if (best < 0) continue;
    for (int i = 0; i < n; ++i)
      if (lab[i] == best) lp[i] = theta;
  }
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double dp = pred.data()[i] - lp[i], dg = gt.data()[i] - lp[i];
    const double pp = dp >= phi_thr ? 1.0 - dp : 1.0;
    const double pg = dg >= phi_thr ? 1.0 - dg : 1.0;
    acc += std::abs(pp - pg);
  }
  return acc / 1000.0;
}

}  // namespace testsupport
