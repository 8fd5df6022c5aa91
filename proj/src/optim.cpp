#include "fourllie/optim.hpp"

#include <algorithm>
#include <cmath>

#include "fourllie/errors.hpp"

namespace fourllie {

void adam_step(ParamStore& params, const ParamStore& grads, ParamStore& m, ParamStore& v,
               std::uint64_t step, double lr, const AdamSettings& s) {
  if (!params.same_layout(grads) || !params.same_layout(m) || !params.same_layout(v)) {
    throw ShapeMismatch("adam_step: parameter, gradient and moment layouts differ");
  }
  if (step < 1) throw InvalidInput("adam_step: step counts from 1");
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(step));
  auto& pe = params.entries();
  for (std::size_t k = 0; k < pe.size(); ++k) {
    Tensor& p = pe[k].value;
    const Tensor& g = grads.entries()[k].value;
    Tensor& mk = m.entries()[k].value;
    Tensor& vk = v.entries()[k].value;
    for (std::size_t i = 0; i < p.size(); ++i) {
      mk[i] = s.beta1 * mk[i] + (1.0 - s.beta1) * g[i];
      vk[i] = s.beta2 * vk[i] + (1.0 - s.beta2) * g[i] * g[i];
      const double mhat = mk[i] / bc1, vhat = vk[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + s.eps);
    }
  }
  round_to_float(params);
}

MultiStepSchedule::MultiStepSchedule(double base, std::vector<std::uint64_t> milestones, double gamma)
    : base_(base), milestones_(std::move(milestones)), gamma_(gamma) {
  if (!(base > 0)) throw InvalidConfig("learning rate must be positive");
  if (!(gamma > 0)) throw InvalidConfig("learning rate decay factor must be positive");
  for (std::size_t i = 1; i < milestones_.size(); ++i) {
    if (milestones_[i] <= milestones_[i - 1]) throw InvalidConfig("milestones must be strictly increasing");
  }
}

double MultiStepSchedule::lr_at(std::uint64_t step) const {
  const auto k = std::upper_bound(milestones_.begin(), milestones_.end(), step) - milestones_.begin();
  return base_ * std::pow(gamma_, static_cast<double>(k));
}

double global_norm(const ParamStore& grads) {
  double s = 0;
  for (const auto& e : grads.entries())
    for (double g : e.value.values()) s += g * g;
  return std::sqrt(s);
}

double clip_grad_norm(ParamStore& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& e : grads.entries())
      for (double& g : e.value.values()) g *= f;
  }
  return norm;
}

}  // namespace fourllie
