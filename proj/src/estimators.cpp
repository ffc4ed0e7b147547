#include "oem/estimators.hpp"

namespace oem {

std::size_t averaging_start_index(std::size_t n, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("averaging fraction must lie in (0,1)");
  auto start = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
  if (start < 1) start = 1;
  if (start > n) start = n;
  return start;
}

ParamVector polyak_ruppert_average(const Trajectory& trajectory, std::size_t n0) {
  if (trajectory.steps.empty())
    throw RangeError("polyak_ruppert_average: empty trajectory");
  const std::size_t last = trajectory.steps.back().n;
  if (n0 > last)
    throw RangeError("polyak_ruppert_average: n0 = " + std::to_string(n0) +
                     " exceeds final step " + std::to_string(last));
  if (n0 <= trajectory.warmup_len)
    throw RangeError("polyak_ruppert_average: n0 must exceed the warmup length");
  Eigen::VectorXd sum;
  std::size_t count = 0;
  LayoutPtr layout;
  for (const auto& step : trajectory.steps) {
    if (step.n < n0) continue;
    if (count == 0) {
      sum = Eigen::VectorXd::Zero(step.theta.size());
      layout = step.theta.layout();
    }
    sum += step.theta.values();
    ++count;
  }
  if (count == 0)
    throw RangeError("polyak_ruppert_average: no retained steps in window");
  return ParamVector(layout, sum / static_cast<double>(count));
}

TitteringtonStep titterington_step_poisson(const poisson::Params& theta,
                                           poisson::Count y, double gamma) {
  const Eigen::VectorXd w = poisson::posterior_weights(y, theta);
  const double yd = static_cast<double>(y);
  TitteringtonStep out{theta, true};
  for (Eigen::Index j = 0; j < theta.m(); ++j) {
    // Same operation order as blend_stats so the weight update matches the
    // online EM s1 update bit for bit.
    out.theta.omega[j] = (1.0 - gamma) * theta.omega[j] + gamma * w[j];
    out.theta.lambda[j] =
        theta.lambda[j] + gamma * (w[j] / theta.omega[j]) * (yd - theta.lambda[j]);
    if (!(out.theta.lambda[j] > 0.0)) out.valid = false;
  }
  return out;
}

RunResult run_titterington_poisson(std::span<const poisson::Count> stream,
                                   const poisson::Params& theta0,
                                   const StepSchedule& schedule) {
  if (stream.empty()) throw InsufficientDataError("titterington: empty stream");
  theta0.validate();
  poisson::Params theta = theta0;
  RunResult result{poisson::to_param(theta0), std::nullopt, std::nullopt,
                   false, 0, {}};
  for (std::size_t n = 1; n <= stream.size(); ++n) {
    auto step = titterington_step_poisson(theta, stream[n - 1], schedule.gamma(n));
    if (!step.valid) {
      result.failed = true;
      result.failed_step = n;
      result.failure = "titterington: non-positive intensity at step " +
                       std::to_string(n);
      break;
    }
    theta = std::move(step.theta);
  }
  result.final_theta = poisson::to_param(theta);
  return result;
}

}  // namespace oem
