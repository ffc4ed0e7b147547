#pragma once
// m-component Poisson mixture: g(y) = sum_j omega_j lambda_j^y e^{-lambda_j} / y!
//
// Statistic layout is per component, (s1_j, s2_j) = (posterior mass,
// posterior-weighted count), matching the complete-data statistic
// S_j(y,w) = (delta_{w,j}, y delta_{w,j}).
// Parameter layout is omega (m) followed by lambda (m).
// The free parameterization used for scores and information matrices drops
// omega_m = 1 - sum_{j<m} omega_j: (omega_1..omega_{m-1}, lambda_1..lambda_m).

#include <cstdint>
#include <utility>
#include <vector>

#include "oem/core.hpp"
#include "oem/random.hpp"

namespace oem::poisson {

using Count = std::int64_t;

struct Params {
  Eigen::VectorXd omega;
  Eigen::VectorXd lambda;

  Eigen::Index m() const { return omega.size(); }
  // Throws DomainError naming the first violated constraint.
  void validate() const;
  bool valid() const noexcept;
};

struct SuffStats {
  Eigen::VectorXd s1;
  Eigen::VectorXd s2;

  Eigen::Index m() const { return s1.size(); }
};

Eigen::VectorXd posterior_weights(Count y, const Params& theta);
SuffStats cond_expect_stat(Count y, const Params& theta);

// omega_j = s1_j, lambda_j = s2_j / s1_j. Throws DegenerateComponentError
// when some s2_j == 0 and DomainError when s1 leaves (0,1].
Params mstep(const SuffStats& s);
bool in_domain(const SuffStats& s) noexcept;

double loglik(Count y, const Params& theta);

// Complete-data Fisher information in the free parameterization, (2m-1)^2.
Eigen::MatrixXd complete_fim(const Params& theta);

Count sample(const Params& theta, Rng& rng);

// Score of log g(y; theta) in the free parameterization, assembled as
// grad(phi)^T sbar(y; theta) - grad(psi).
Eigen::VectorXd score(Count y, const Params& theta);
// -E_theta[Hessian of log f(y, W; theta) | Y = y], free parameterization.
Eigen::MatrixXd cond_complete_info(Count y, const Params& theta);

// Support points y = 0..K and their mixture probabilities, with K the first
// index at which the cumulative mass reaches 1 - tail_mass.
std::vector<std::pair<Count, double>> exact_support(const Params& theta,
                                                    double tail_mass = 1e-12);

LayoutPtr stat_layout(Eigen::Index m);
LayoutPtr param_layout(Eigen::Index m);

StatVector to_stat(const SuffStats& s);
SuffStats from_stat(const StatVector& s);
ParamVector to_param(const Params& theta);
Params from_param(const ParamVector& p);

Eigen::VectorXd to_free(const Params& theta);
Params from_free(const Eigen::VectorXd& free, Eigen::Index m);

// Statistic whose M-step image is theta: s1 = omega, s2 = omega * lambda.
SuffStats stat_for(const Params& theta);

ModelSpec<Count> model(Eigen::Index m);

}  // namespace oem::poisson
