#include "genmatte/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <json.hpp>

#include "genmatte/error.hpp"
#include "genmatte/hires.hpp"
#include "genmatte/parallel.hpp"

namespace genmatte {

namespace {

void require_same(const AlphaMatte& pred, const AlphaMatte& gt) {
  require(pred.dims() == gt.dims(), ErrorKind::kShape,
          "prediction " + to_string(pred.dims()) + " vs ground truth " + to_string(gt.dims()));
}

// Marks the largest 4-connected component of `mask` (row-major h*w) in `out`.
void largest_component(const std::vector<char>& mask, int h, int w, std::vector<char>& out) {
  std::vector<int> label(mask.size(), -1);
  std::vector<int> stack;
  int best = -1;
  std::size_t best_size = 0;
  int next = 0;
  for (int start = 0; start < h * w; ++start) {
    if (!mask[start] || label[start] >= 0) continue;
    std::size_t size = 0;
    stack.push_back(start);
    label[start] = next;
    while (!stack.empty()) {
      const int i = stack.back();
      stack.pop_back();
      ++size;
      const int y = i / w;
      const int x = i % w;
      const int nbr[4] = {x > 0 ? i - 1 : -1, x + 1 < w ? i + 1 : -1, y > 0 ? i - w : -1, y + 1 < h ? i + w : -1};
      for (int j : nbr)
        if (j >= 0 && mask[j] && label[j] < 0) {
          label[j] = next;
          stack.push_back(j);
        }
    }
    if (size > best_size) {
      best_size = size;
      best = next;
    }
    ++next;
  }
  out.assign(mask.size(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = label[i] == best && best >= 0;
}

}  // namespace

MetricReport evaluate(const AlphaMatte& pred, const AlphaMatte& gt) {
  require_same(pred, gt);
  const std::size_t n = pred.pixels().size();
  require(n > 0, ErrorKind::kShape, "empty matte");
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pred.pixels()[i] - gt.pixels()[i];
    abs_sum += std::abs(d);
    sq_sum += d * d;
  }
  MetricReport r;
  r.sad_raw = abs_sum;
  r.sad = abs_sum / 1000.0;
  r.mse = sq_sum / static_cast<double>(n) * 1000.0;
  r.mad = abs_sum / static_cast<double>(n) * 1000.0;
  r.conn = connectivity(pred, gt);
  return r;
}

double connectivity(const AlphaMatte& pred, const AlphaMatte& gt, double theta_step, double phi_threshold) {
  require_same(pred, gt);
  require(theta_step > 0.0 && theta_step < 1.0, ErrorKind::kConfig, "theta step must lie in (0,1)");
  const int h = pred.height();
  const int w = pred.width();
  const std::size_t n = static_cast<std::size_t>(h) * w;
  const auto& p = pred.pixels();
  const auto& g = gt.pixels();

  // exact thresholds k/m when the step divides 1
  const double m = std::round(1.0 / theta_step);
  const bool exact = std::abs(m * theta_step - 1.0) < 1e-12;
  std::vector<double> level(n, 0.0);
  std::vector<char> mask(n), omega;
  for (int k = 1;; ++k) {
    const double theta = exact ? k / m : k * theta_step;
    if (theta > 1.0 + 1e-12) break;
    for (std::size_t i = 0; i < n; ++i) mask[i] = p[i] >= theta && g[i] >= theta;
    largest_component(mask, h, w, omega);
    for (std::size_t i = 0; i < n; ++i)
      if (omega[i]) level[i] = theta;
  }
  auto phi = [&](double v, double l) {
    const double d = v - l;
    return d >= phi_threshold ? 1.0 - d : 1.0;
  };
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(phi(p[i], level[i]) - phi(g[i], level[i]));
  return acc / 1000.0;
}

std::vector<RandomnessRow> randomness_curve(const ImageBuffer& image, const MattingContext& ctx,
                                            std::span<const int> step_list, int n_seeds, const AlphaMatte& gt,
                                            std::uint64_t base_seed) {
  require(!step_list.empty(), ErrorKind::kConfig, "empty step list");
  require(n_seeds >= 2, ErrorKind::kConfig, "randomness curve needs at least 2 seeds");
  require(ctx.denoiser != nullptr, ErrorKind::kConfig, "no denoiser configured");
  const Tensor3 cond = ctx.codecs.image.encode(image.pixels());
  std::vector<RandomnessRow> rows;
  for (int steps : step_list) {
    const SamplerConfig cfg =
        make_sampler_config(steps, ctx.schedule.steps(), ctx.sampler.eta, ctx.sampler.guidance_mode);
    RandomnessRow row;
    row.steps = steps;
    row.sads = parallel_map(static_cast<std::size_t>(n_seeds), [&](std::size_t k) {
      const SampleRequest req{*ctx.denoiser, cond, ctx.codecs.matte.latent_channels()};
      const Tensor3 z = sample(req, cfg, ctx.schedule, child_seed(base_seed, k));
      const AlphaMatte matte(ctx.codecs.matte.decode(z));
      double sad = 0.0;
      require_same(matte, gt);
      for (std::size_t i = 0; i < gt.pixels().size(); ++i) sad += std::abs(matte.pixels()[i] - gt.pixels()[i]);
      return sad / 1000.0;
    });
    for (double v : row.sads) row.mean_sad += v;
    row.mean_sad /= n_seeds;
    for (double v : row.sads) row.std_sad += (v - row.mean_sad) * (v - row.mean_sad);
    row.std_sad = std::sqrt(row.std_sad / n_seeds);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string report_json(const MetricReport& r) {
  nlohmann::json j{{"sad", r.sad}, {"sad_raw", r.sad_raw}, {"mse", r.mse}, {"mad", r.mad}, {"conn", r.conn}};
  return j.dump(2);
}

std::string report_table(const MetricReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-10s %12s %12s %12s %12s\n%-10s %12.4f %12.4f %12.4f %12.4f\n", "metric", "SAD",
                "MSE(1e-3)", "MAD(1e-3)", "Conn", "value", r.sad, r.mse, r.mad, r.conn);
  return buf;
}

std::string randomness_json(std::span<const RandomnessRow> rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows)
    arr.push_back({{"steps", r.steps}, {"mean_sad", r.mean_sad}, {"std_sad", r.std_sad}, {"sads", r.sads}});
  return arr.dump(2);
}

std::string randomness_table(std::span<const RandomnessRow> rows) {
  std::string out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%6s %12s %12s\n", "steps", "mean SAD", "std SAD");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%6d %12.5f %12.5f\n", r.steps, r.mean_sad, r.std_sad);
    out += buf;
  }
  return out;
}

}  // namespace genmatte
