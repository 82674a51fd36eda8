#pragma once

#include <vector>

#include "genmatte/tensor.hpp"

namespace genmatte {

enum class ScheduleKind { kLinear };

/// Per-step variances beta_1..beta_T and cumulative signal coefficients
/// alpha_bar_t = prod_{s<=t} (1 - beta_s). Steps are 1-based; alpha_bar(0) is 1.
class DiffusionSchedule {
 public:
  DiffusionSchedule(std::vector<double> betas);

  int steps() const { return static_cast<int>(betas_.size()); }
  double beta(int t) const;
  double alpha_bar(int t) const;
  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alpha_bars() const { return alpha_bars_; }

 private:
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

DiffusionSchedule make_schedule(int T, double beta_start, double beta_end,
                                ScheduleKind kind = ScheduleKind::kLinear);

/// sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps.
Tensor3 q_sample(const Tensor3& z0, int t, const Tensor3& eps, const DiffusionSchedule& s);

}  // namespace genmatte
