#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "genmatte/image.hpp"

namespace genmatte {

struct MattingContext;

/// MSE and MAD are scaled by 1e3; `sad` is the raw sum divided by 1e3.
struct MetricReport {
  double sad_raw = 0.0;
  double sad = 0.0;
  double mse = 0.0;
  double mad = 0.0;
  double conn = 0.0;
};

MetricReport evaluate(const AlphaMatte& pred, const AlphaMatte& gt);

/// For theta = step, 2 step, ..., 1: Omega_theta is the largest 4-connected
/// component of {pred >= theta and gt >= theta} (ties go to the component met
/// first in raster order). l_i is the largest theta whose Omega contains pixel
/// i (0 if none), d = value - l_i, phi = 1 - d when d >= phi_threshold, else 1.
/// Returns sum_i |phi(pred_i) - phi(gt_i)| / 1000.
double connectivity(const AlphaMatte& pred, const AlphaMatte& gt, double theta_step = 0.1,
                    double phi_threshold = 0.15);

struct RandomnessRow {
  int steps = 0;
  double mean_sad = 0.0;
  double std_sad = 0.0;  // population
  std::vector<double> sads;
};

/// For each step count, samples n_seeds mattes (seeds child_seed(base_seed, k))
/// at the image's own resolution and scores SAD (/1000) against gt.
std::vector<RandomnessRow> randomness_curve(const ImageBuffer& image, const MattingContext& ctx,
                                            std::span<const int> step_list, int n_seeds, const AlphaMatte& gt,
                                            std::uint64_t base_seed = 0);

std::string report_json(const MetricReport& r);
std::string report_table(const MetricReport& r);
std::string randomness_json(std::span<const RandomnessRow> rows);
std::string randomness_table(std::span<const RandomnessRow> rows);

}  // namespace genmatte
