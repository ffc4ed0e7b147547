#pragma once
// Mixture of m Gaussian linear regressions: given W = j and Z = z, the
// response R is N(beta_j^T z, sigma2_j), with P(W = j) = omega_j and the
// marginal of Z left unmodelled.
//
// Sufficient statistics per component j:
//   s1_j = delta_{W,j}            (scalar)
//   s2_j = delta_{W,j} r z        (d-vector)
//   s3_j = delta_{W,j} z z^T      (d x d)
//   s4_j = delta_{W,j} r^2        (scalar)
// s3 carries no factor r: with it the M-step beta_j = s3^{-1} s2 would not be
// the weighted least-squares solution and sigma2 could turn negative.
//
// Statistic layout is per component [s1, s2 (d), s3 (d*d, row-major), s4].
// Parameter layout is omega (m), beta (m*d, row-major), sigma2 (m).
// Free parameterization: (omega_1..omega_{m-1}, beta rows, sigma2).

#include <vector>

#include "oem/core.hpp"

namespace oem::regmix {

struct Observation {
  double r = 0.0;
  Eigen::VectorXd z;
};

struct Params {
  Eigen::VectorXd omega;  // m
  Eigen::MatrixXd beta;   // m x d
  Eigen::VectorXd sigma2; // m

  Eigen::Index m() const { return omega.size(); }
  Eigen::Index d() const { return beta.cols(); }
  void validate() const;
};

struct ComponentStats {
  double s1 = 0.0;
  Eigen::VectorXd s2;
  Eigen::MatrixXd s3;
  double s4 = 0.0;
};

struct SuffStats {
  std::vector<ComponentStats> comp;

  Eigen::Index m() const { return static_cast<Eigen::Index>(comp.size()); }
  Eigen::Index d() const { return comp.empty() ? 0 : comp.front().s2.size(); }
};

Eigen::VectorXd posterior_weights(const Observation& obs, const Params& theta);
SuffStats cond_expect_stat(const Observation& obs, const Params& theta);

// Every s1_j in (0,1] (open at 1 unless m = 1) and every block matrix
// [[s3_j, s2_j], [s2_j^T, s4_j]] positive definite.
bool in_domain(const SuffStats& s) noexcept;

// Cholesky of a symmetric matrix; fails when a pivot drops to or below
// 1e-12 times the mean diagonal magnitude.
bool is_positive_definite(const Eigen::MatrixXd& a) noexcept;

// Throws DomainError naming the violated constraint when !in_domain(s).
Params mstep(const SuffStats& s);

double loglik(const Observation& obs, const Params& theta);

// Row j: w_j(r,z) (r - beta_j^T z) z / sigma2_j.
Eigen::MatrixXd score_beta(const Observation& obs, const Params& theta);
// Full score in the free parameterization, assembled from the conditional
// expectation of the complete-data score.
Eigen::VectorXd score(const Observation& obs, const Params& theta);
Eigen::MatrixXd cond_complete_info(const Observation& obs,
                                   const Params& theta);

LayoutPtr stat_layout(Eigen::Index m, Eigen::Index d);
LayoutPtr param_layout(Eigen::Index m, Eigen::Index d);

StatVector to_stat(const SuffStats& s);
SuffStats from_stat(const StatVector& s, Eigen::Index m, Eigen::Index d);
ParamVector to_param(const Params& theta);
Params from_param(const ParamVector& p, Eigen::Index m, Eigen::Index d);

Eigen::VectorXd to_free(const Params& theta);
Params from_free(const Eigen::VectorXd& free, Eigen::Index m, Eigen::Index d);

// Index of beta_j[k] within the free parameterization.
inline Eigen::Index free_beta_index(Eigen::Index m, Eigen::Index d,
                                    Eigen::Index j, Eigen::Index k) {
  return (m - 1) + j * d + k;
}

ModelSpec<Observation> model(Eigen::Index m, Eigen::Index d);

}  // namespace oem::regmix
