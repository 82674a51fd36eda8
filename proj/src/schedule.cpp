#include "genmatte/schedule.hpp"

#include <cmath>
#include <string>

#include "genmatte/error.hpp"

namespace genmatte {

DiffusionSchedule::DiffusionSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
  require(!betas_.empty(), ErrorKind::kConfig, "schedule needs at least one step");
  alpha_bars_.reserve(betas_.size());
  double prod = 1.0;
  for (double b : betas_) {
    require(b > 0.0 && b < 1.0, ErrorKind::kConfig, "beta " + std::to_string(b) + " outside (0,1)");
    prod *= 1.0 - b;
    alpha_bars_.push_back(prod);
  }
}

double DiffusionSchedule::beta(int t) const {
  require(t >= 1 && t <= steps(), ErrorKind::kStep, "step " + std::to_string(t) + " outside [1," +
                                                         std::to_string(steps()) + "]");
  return betas_[t - 1];
}

double DiffusionSchedule::alpha_bar(int t) const {
  require(t >= 0 && t <= steps(), ErrorKind::kStep, "step " + std::to_string(t) + " outside [0," +
                                                         std::to_string(steps()) + "]");
  return t == 0 ? 1.0 : alpha_bars_[t - 1];
}

DiffusionSchedule make_schedule(int T, double beta_start, double beta_end, ScheduleKind kind) {
  require(T >= 1, ErrorKind::kConfig, "T must be >= 1");
  require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0, ErrorKind::kConfig,
          "need 0 < beta_start <= beta_end < 1");
  std::vector<double> betas(T);
  switch (kind) {
    case ScheduleKind::kLinear:
      for (int i = 0; i < T; ++i)
        betas[i] = T == 1 ? beta_start
                          : beta_start + (beta_end - beta_start) * static_cast<double>(i) / (T - 1);
      break;
  }
  return DiffusionSchedule(std::move(betas));
}

Tensor3 q_sample(const Tensor3& z0, int t, const Tensor3& eps, const DiffusionSchedule& s) {
  require(t >= 1 && t <= s.steps(), ErrorKind::kStep, "q_sample step " + std::to_string(t));
  require(z0.dims() == eps.dims(), ErrorKind::kShape,
          "q_sample: " + to_string(z0.dims()) + " vs " + to_string(eps.dims()));
  const double ab = s.alpha_bar(t);
  return lincomb(std::sqrt(ab), z0, std::sqrt(1.0 - ab), eps);
}

}  // namespace genmatte
