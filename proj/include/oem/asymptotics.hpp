#pragma once
// Numerical machinery for the convergence theory of online EM: the mean
// field h(s), the KL surrogate E_pi[-log g], information matrices, the
// Lyapunov equation of the central limit theorem and the covariance of the
// Polyak-Ruppert average.
//
// Expectations under the data distribution pi are taken against an
// Expectation: a finite set of points with weights. A simulated dataset uses
// uniform weights 1/n; for the Poisson mixture the exact distribution can be
// used instead, truncated once the tail mass drops below 1e-12.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oem/core.hpp"
#include "oem/poisson.hpp"

namespace oem {

template <class Obs>
struct Expectation {
  std::vector<Obs> points;
  std::vector<double> weights;

  static Expectation from_dataset(std::span<const Obs> data) {
    if (data.empty()) throw InsufficientDataError("expectation over empty data");
    Expectation e;
    e.points.assign(data.begin(), data.end());
    e.weights.assign(data.size(), 1.0 / static_cast<double>(data.size()));
    return e;
  }

  std::size_t size() const { return points.size(); }
};

Expectation<poisson::Count> exact_poisson_expectation(
    const poisson::Params& theta, double tail_mass = 1e-12);

// E_pi[ sbar(Y; theta_bar(s)) ] - s.
template <class Obs>
StatVector mean_field(const ModelSpec<Obs>& model, const Expectation<Obs>& pi,
                      const StatVector& s) {
  const ParamVector theta = model.mstep(s);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(s.size());
  for (std::size_t i = 0; i < pi.size(); ++i)
    acc += pi.weights[i] * model.cond_expect_stat(pi.points[i], theta).values();
  return StatVector(s.layout(), acc - s.values());
}

// E_pi[-log g(Y; theta)]: the KL divergence from pi to g_theta up to the
// parameter-free entropy term.
template <class Obs>
double kl_surrogate(const ModelSpec<Obs>& model, const Expectation<Obs>& pi,
                    const ParamVector& theta) {
  double acc = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i)
    acc -= pi.weights[i] * model.loglik(pi.points[i], theta);
  return acc;
}

// A symmetric matrix estimate with its numerical rank.
struct InformationEstimate {
  Eigen::MatrixXd matrix;
  Eigen::Index rank = 0;
  bool positive_definite = false;

  bool singular() const { return rank < matrix.rows(); }
};

InformationEstimate make_information_estimate(Eigen::MatrixXd m);

// E_pi[ score score^T ] in the free parameterization.
template <class Obs>
InformationEstimate empirical_information(const ModelSpec<Obs>& model,
                                          const Expectation<Obs>& pi,
                                          const ParamVector& theta) {
  const auto d = static_cast<Eigen::Index>(model.free_dim);
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t i = 0; i < pi.size(); ++i) {
    const Eigen::VectorXd g = model.score(pi.points[i], theta);
    acc.selfadjointView<Eigen::Lower>().rankUpdate(g, pi.weights[i]);
  }
  acc = acc.selfadjointView<Eigen::Lower>();
  return make_information_estimate(std::move(acc));
}

// -E_pi[ E_theta[ Hessian log f(X; theta) | Y ] ], free parameterization.
template <class Obs>
InformationEstimate complete_fim_pi(const ModelSpec<Obs>& model,
                                    const Expectation<Obs>& pi,
                                    const ParamVector& theta) {
  const auto d = static_cast<Eigen::Index>(model.free_dim);
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t i = 0; i < pi.size(); ++i)
    acc += pi.weights[i] * model.cond_complete_info(pi.points[i], theta);
  return make_information_estimate(0.5 * (acc + acc.transpose()));
}

// Central finite-difference Hessian of the KL surrogate in the free
// parameterization, step rel_step * max(|theta_k|, 1) per coordinate.
template <class Obs>
Eigen::MatrixXd surrogate_hessian(const ModelSpec<Obs>& model,
                                  const Expectation<Obs>& pi,
                                  const ParamVector& theta,
                                  double rel_step = 1e-4) {
  const Eigen::VectorXd x0 = model.to_free(theta);
  const Eigen::Index d = x0.size();
  Eigen::VectorXd h(d);
  for (Eigen::Index k = 0; k < d; ++k)
    h[k] = rel_step * std::max(std::abs(x0[k]), 1.0);
  auto f = [&](const Eigen::VectorXd& x) {
    return kl_surrogate(model, pi, model.from_free(x));
  };
  const double f0 = f(x0);
  Eigen::MatrixXd hess(d, d);
  for (Eigen::Index a = 0; a < d; ++a) {
    Eigen::VectorXd xp = x0, xm = x0;
    xp[a] += h[a];
    xm[a] -= h[a];
    hess(a, a) = (f(xp) - 2.0 * f0 + f(xm)) / (h[a] * h[a]);
    for (Eigen::Index b = 0; b < a; ++b) {
      Eigen::VectorXd pp = x0, pm = x0, mp = x0, mm = x0;
      pp[a] += h[a]; pp[b] += h[b];
      pm[a] += h[a]; pm[b] -= h[b];
      mp[a] -= h[a]; mp[b] += h[b];
      mm[a] -= h[a]; mm[b] -= h[b];
      hess(a, b) = hess(b, a) =
          (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * h[a] * h[b]);
    }
  }
  return hess;
}

// H stable (every eigenvalue has negative real part) and Gamma symmetric
// positive semidefinite; both checked at construction.
class StableMatrixPair {
 public:
  StableMatrixPair(Eigen::MatrixXd h, Eigen::MatrixXd gamma);

  const Eigen::MatrixXd& H() const noexcept { return h_; }
  const Eigen::MatrixXd& Gamma() const noexcept { return gamma_; }
  // lambda such that every eigenvalue of H has real part <= -lambda.
  double spectral_bound() const noexcept { return spectral_bound_; }

 private:
  Eigen::MatrixXd h_;
  Eigen::MatrixXd gamma_;
  double spectral_bound_ = 0.0;
};

// Max real part of the eigenvalues of a square matrix.
double max_real_eigenvalue(const Eigen::MatrixXd& a);

// Solves (H + zeta I) Sigma + Sigma (H + zeta I)^T = -Gamma by complex Schur
// reduction. Throws StabilityError when H + zeta I is not stable.
Eigen::MatrixXd solve_lyapunov(const StableMatrixPair& pair, double zeta = 0.0);

// H^{-1} Gamma H^{-T}. Throws SingularMatrixError for singular H.
Eigen::MatrixXd averaged_covariance(const StableMatrixPair& pair);

// Standard deviations and correlation matrix of a covariance.
struct CovarianceSummary {
  Eigen::VectorXd std_devs;
  Eigen::MatrixXd correlations;
};
CovarianceSummary summarize_covariance(const Eigen::MatrixXd& cov);

// Inverse of a symmetric positive-definite information matrix.
Eigen::MatrixXd invert_information(const Eigen::MatrixXd& info);

struct AsymptoticReport {
  std::vector<std::string> labels;  // free-parameter names
  Eigen::MatrixXd information;      // E_pi[score score^T]
  Eigen::MatrixXd complete_information;  // I_c(pi; theta)
  Eigen::MatrixXd kl_hessian;       // Hessian of E_pi[-log g]
  Eigen::MatrixXd H;
  Eigen::MatrixXd Gamma;
  Eigen::MatrixXd Sigma;            // Lyapunov solution, zeta = 0
  std::optional<Eigen::MatrixXd> Sigma_zeta;  // for the requested zeta > 0
  double zeta = 0.0;
  Eigen::MatrixXd Sigma_avg;
  double spectral_bound = 0.0;
  Eigen::VectorXd std_devs;         // of Sigma_avg
  Eigen::MatrixXd correlations;     // of Sigma_avg
};

// H = -I_c(pi)^{-1} Hessian(K), Gamma = I_c(pi)^{-1} E_pi[score score^T]
// I_c(pi)^{-1}, then the Lyapunov solution(s) and the averaged covariance.
AsymptoticReport assemble_report(std::vector<std::string> labels,
                                 const Eigen::MatrixXd& information,
                                 const Eigen::MatrixXd& complete_information,
                                 const Eigen::MatrixXd& kl_hessian,
                                 double zeta);

template <class Obs>
AsymptoticReport build_report(const ModelSpec<Obs>& model,
                              const Expectation<Obs>& pi,
                              const ParamVector& theta, double zeta = 0.0) {
  auto info = empirical_information(model, pi, theta);
  if (!info.positive_definite)
    throw SingularMatrixError("asymptotic report: information matrix singular");
  auto ic = complete_fim_pi(model, pi, theta);
  if (!ic.positive_definite)
    throw SingularMatrixError(
        "asymptotic report: complete-data information not positive definite");
  std::vector<std::string> labels;
  {
    // Free parameterization labels: drop the last weight from the full layout.
    auto full = theta.layout()->labels();
    const auto& omega = theta.layout()->block("omega");
    for (std::size_t i = 0; i < full.size(); ++i)
      if (i != omega.offset + omega.length - 1) labels.push_back(full[i]);
  }
  return assemble_report(std::move(labels), info.matrix, ic.matrix,
                         surrogate_hessian(model, pi, theta), zeta);
}

// Matrices as CSV blocks: "# name" line, header row, rows in order.
void write_report_csv(std::ostream& os, const AsymptoticReport& report);
void write_matrix_csv(std::ostream& os, const std::string& name,
                      const std::vector<std::string>& labels,
                      const Eigen::MatrixXd& m);
void write_matrix_csv(std::ostream& os, const std::string& name,
                      const std::vector<std::string>& row_labels,
                      const std::vector<std::string>& col_labels,
                      const Eigen::MatrixXd& m);

}  // namespace oem
