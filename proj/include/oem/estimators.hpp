#pragma once
// Estimators written once against ModelSpec: batch EM, online EM with
// optional re-estimation warmup and Polyak-Ruppert averaging, plus the
// Poisson-specific Titterington recursion for comparison.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oem/core.hpp"
#include "oem/poisson.hpp"

namespace oem {

// n^{-1} sum_i log g(Y_i; theta).
template <class Obs>
double mean_loglik(const ModelSpec<Obs>& model, std::span<const Obs> data,
                   const ParamVector& theta) {
  if (data.empty()) throw InsufficientDataError("mean_loglik: empty data");
  double total = 0.0;
  for (const auto& y : data) total += model.loglik(y, theta);
  return total / static_cast<double>(data.size());
}

// theta_bar( n^{-1} sum_i sbar(Y_i; theta) ). Throws DomainError when the
// averaged statistic leaves the model's domain.
template <class Obs>
ParamVector batch_em_iterate(const ModelSpec<Obs>& model,
                             std::span<const Obs> data,
                             const ParamVector& theta) {
  if (data.empty()) throw InsufficientDataError("batch EM: empty data");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(
      static_cast<Eigen::Index>(model.stat_dim()));
  for (const auto& y : data) acc += model.cond_expect_stat(y, theta).values();
  acc /= static_cast<double>(data.size());
  return model.mstep(StatVector(model.stat_layout, std::move(acc)));
}

template <class Obs>
ParamVector batch_em(const ModelSpec<Obs>& model, std::span<const Obs> data,
                     ParamVector theta, std::size_t iterations) {
  for (std::size_t k = 0; k < iterations; ++k)
    theta = batch_em_iterate(model, data, theta);
  return theta;
}

struct OnlineStep {
  StatVector s_hat;
  ParamVector theta;
};

template <class Obs>
OnlineStep online_em_step(const ModelSpec<Obs>& model, const StatVector& s_hat,
                          const ParamVector& theta, const Obs& y, double gamma,
                          bool inhibit_mstep) {
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw std::invalid_argument("online EM step: gamma outside (0,1]");
  StatVector next = blend_stats(s_hat, model.cond_expect_stat(y, theta), gamma);
  if (inhibit_mstep) return {std::move(next), theta};
  ParamVector updated = model.mstep(next);
  return {std::move(next), std::move(updated)};
}

struct TrajectoryStep {
  std::size_t n = 0;
  double gamma = 0.0;
  StatVector s_hat;
  ParamVector theta;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  std::size_t warmup_len = 0;
};

struct Retention {
  enum class Kind { Full, Thinned, FinalOnly };
  Kind kind = Kind::FinalOnly;
  std::size_t every = 1;

  static Retention full() { return {Kind::Full, 1}; }
  static Retention thinned(std::size_t k) { return {Kind::Thinned, k}; }
  static Retention final_only() { return {Kind::FinalOnly, 1}; }

  bool keeps(std::size_t n, std::size_t last) const {
    switch (kind) {
      case Kind::Full: return true;
      case Kind::Thinned: return n % every == 0 || n == last;
      case Kind::FinalOnly: return n == last;
    }
    return false;
  }
};

struct RunOptions {
  StepSchedule schedule{1.0, 0.6};
  std::size_t warmup = 0;
  // Initial statistic. When absent, sbar(Y_1; theta0) is used.
  std::optional<StatVector> s0;
  // First step index included in the Polyak-Ruppert average; none = off.
  std::optional<std::size_t> averaging_start;
  Retention retention = Retention::final_only();
};

struct RunResult {
  ParamVector final_theta;
  std::optional<ParamVector> averaged_theta;
  std::optional<Trajectory> trajectory;
  bool failed = false;
  std::size_t failed_step = 0;
  std::string failure;
};

// ceil(fraction * n), clamped to [1, n].
std::size_t averaging_start_index(std::size_t n, double fraction);

// Online EM over a finite stream: for n = 1..N, blend sbar(Y_n; theta_{n-1})
// into the statistic with gamma_n and re-estimate theta unless n <= warmup.
// A domain failure after warmup ends the run and is reported in the result,
// not thrown.
template <class Obs>
RunResult run_online_em(const ModelSpec<Obs>& model, std::span<const Obs> stream,
                        const ParamVector& theta0, const RunOptions& opt) {
  const std::size_t total = stream.size();
  if (total == 0) throw InsufficientDataError("online EM: empty stream");
  if (total < opt.warmup)
    throw InsufficientDataError("online EM: stream of " +
                                std::to_string(total) +
                                " observations is shorter than warmup " +
                                std::to_string(opt.warmup));
  if (opt.averaging_start) {
    if (*opt.averaging_start > total)
      throw RangeError("online EM: averaging start beyond the stream");
    if (*opt.averaging_start <= opt.warmup)
      throw RangeError("online EM: averaging must start after warmup");
  }

  StatVector s = opt.s0 ? *opt.s0 : model.cond_expect_stat(stream[0], theta0);
  if (opt.warmup == 0 && opt.s0 && !model.in_domain(s))
    throw DomainError("s0 in domain",
                      "online EM: initial statistic is outside the domain");
  ParamVector theta = theta0;

  Eigen::VectorXd avg_sum;
  std::size_t avg_count = 0;
  RunResult result{theta0, std::nullopt, std::nullopt, false, 0, {}};
  Trajectory traj;
  traj.warmup_len = opt.warmup;
  const bool retain = opt.retention.kind != Retention::Kind::FinalOnly;

  for (std::size_t n = 1; n <= total; ++n) {
    const double gamma = opt.schedule.gamma(n);
    try {
      auto step = online_em_step(model, s, theta, stream[n - 1], gamma,
                                 n <= opt.warmup);
      s = std::move(step.s_hat);
      theta = std::move(step.theta);
    } catch (const DomainError& e) {
      result.failed = true;
      result.failed_step = n;
      result.failure = e.what();
      break;
    }
    if (opt.averaging_start && n >= *opt.averaging_start) {
      if (avg_count == 0) avg_sum = Eigen::VectorXd::Zero(theta.size());
      avg_sum += theta.values();
      ++avg_count;
    }
    if (retain && opt.retention.keeps(n, total))
      traj.steps.push_back({n, gamma, s, theta});
  }

  result.final_theta = theta;
  if (opt.averaging_start && !result.failed)
    result.averaged_theta = ParamVector(
        theta.layout(), avg_sum / static_cast<double>(avg_count));
  if (retain) result.trajectory = std::move(traj);
  return result;
}

// Arithmetic mean of theta_j for the retained steps with n0 <= j <= N.
ParamVector polyak_ruppert_average(const Trajectory& trajectory, std::size_t n0);

struct TitteringtonStep {
  poisson::Params theta;
  bool valid = true;
};

// omega'_j = omega_j + gamma (w_j - omega_j),
// lambda'_j = lambda_j + gamma (w_j / omega_j) (y - lambda_j).
// The result may leave the parameter space; `valid` reports whether every
// intensity stayed positive.
TitteringtonStep titterington_step_poisson(const poisson::Params& theta,
                                           poisson::Count y, double gamma);

// Titterington's recursion over a stream; stops and flags failure at the
// first step producing a non-positive intensity.
RunResult run_titterington_poisson(std::span<const poisson::Count> stream,
                                   const poisson::Params& theta0,
                                   const StepSchedule& schedule);

}  // namespace oem
