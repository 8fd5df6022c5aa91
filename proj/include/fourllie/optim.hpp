#pragma once

#include <cstdint>
#include <vector>

#include "fourllie/params.hpp"

namespace fourllie {

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update. `step` counts from 1. Parameters are rounded
/// to float precision afterwards.
void adam_step(ParamStore& params, const ParamStore& grads, ParamStore& m, ParamStore& v,
               std::uint64_t step, double lr, const AdamSettings& settings = {});

/// Piecewise-constant learning rate: base * gamma^k where k counts the
/// milestones <= step (step counts from 0).
class MultiStepSchedule {
 public:
  MultiStepSchedule(double base, std::vector<std::uint64_t> milestones, double gamma);
  double lr_at(std::uint64_t step) const;
  const std::vector<std::uint64_t>& milestones() const { return milestones_; }

 private:
  double base_;
  std::vector<std::uint64_t> milestones_;
  double gamma_;
};

double global_norm(const ParamStore& grads);
/// Rescales grads so their global norm is at most max_norm (<= 0 disables).
/// Returns the norm before clipping.
double clip_grad_norm(ParamStore& grads, double max_norm);

}  // namespace fourllie
