#include "oem/asymptotics.hpp"

#include <complex>
#include <cstdio>
#include <ostream>

#include <Eigen/Eigenvalues>

namespace oem {

Expectation<poisson::Count> exact_poisson_expectation(const poisson::Params& theta,
                                                      double tail_mass) {
  Expectation<poisson::Count> e;
  for (const auto& [y, p] : poisson::exact_support(theta, tail_mass)) {
    e.points.push_back(y);
    e.weights.push_back(p);
  }
  return e;
}

InformationEstimate make_information_estimate(Eigen::MatrixXd m) {
  InformationEstimate out;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd ev = eig.eigenvalues();
  const double top = ev.cwiseAbs().maxCoeff();
  const double tol = 1e-12 * static_cast<double>(m.rows()) * top;
  out.rank = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev[i] > tol) ++out.rank;
  out.positive_definite = top > 0.0 && ev.minCoeff() > tol;
  out.matrix = std::move(m);
  return out;
}

double max_real_eigenvalue(const Eigen::MatrixXd& a) {
  Eigen::EigenSolver<Eigen::MatrixXd> eig(a, false);
  return eig.eigenvalues().real().maxCoeff();
}

StableMatrixPair::StableMatrixPair(Eigen::MatrixXd h, Eigen::MatrixXd gamma)
    : h_(std::move(h)), gamma_(std::move(gamma)) {
  const Eigen::Index d = h_.rows();
  if (d == 0 || h_.cols() != d || gamma_.rows() != d || gamma_.cols() != d)
    throw DimensionError("stable pair: H and Gamma must be square, same size");
  const double top = max_real_eigenvalue(h_);
  if (!(top < 0.0))
    throw StabilityError("stable pair: H has an eigenvalue with real part " +
                         std::to_string(top) + " >= 0");
  spectral_bound_ = -top;
  const double scale = std::max(gamma_.cwiseAbs().maxCoeff(), 1e-300);
  if ((gamma_ - gamma_.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
    throw DomainError("Gamma symmetric", "stable pair: Gamma is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gamma_,
                                                     Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-9 * scale)
    throw DomainError("Gamma PSD",
                      "stable pair: Gamma is not positive semidefinite");
}

Eigen::MatrixXd solve_lyapunov(const StableMatrixPair& pair, double zeta) {
  if (!(zeta >= 0.0)) throw std::invalid_argument("lyapunov: zeta must be >= 0");
  const Eigen::Index d = pair.H().rows();
  const Eigen::MatrixXd a =
      pair.H() + zeta * Eigen::MatrixXd::Identity(d, d);
  const double top = max_real_eigenvalue(a);
  if (!(top < 0.0))
    throw StabilityError("lyapunov: H + zeta I is not stable (max real part " +
                         std::to_string(top) + ")");

  // A = U T U^*, T upper triangular. With Y = U^* Sigma U and C = U^* Gamma U
  // the equation becomes T Y + Y T^* = -C, solved entrywise from the bottom
  // right corner.
  using Complex = std::complex<double>;
  Eigen::ComplexSchur<Eigen::MatrixXd> schur(a);
  const Eigen::MatrixXcd& t = schur.matrixT();
  const Eigen::MatrixXcd& u = schur.matrixU();
  const Eigen::MatrixXcd c = u.adjoint() * pair.Gamma().cast<Complex>() * u;
  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(d, d);
  for (Eigen::Index i = d - 1; i >= 0; --i) {
    for (Eigen::Index j = d - 1; j >= 0; --j) {
      Complex rhs = -c(i, j);
      for (Eigen::Index k = i + 1; k < d; ++k) rhs -= t(i, k) * y(k, j);
      for (Eigen::Index k = j + 1; k < d; ++k) rhs -= y(i, k) * std::conj(t(j, k));
      y(i, j) = rhs / (t(i, i) + std::conj(t(j, j)));
    }
  }
  const Eigen::MatrixXd sigma = (u * y * u.adjoint()).real();
  return 0.5 * (sigma + sigma.transpose());
}

Eigen::MatrixXd averaged_covariance(const StableMatrixPair& pair) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(pair.H());
  if (!lu.isInvertible())
    throw SingularMatrixError("averaged covariance: H is singular");
  const Eigen::MatrixXd hinv = lu.inverse();
  const Eigen::MatrixXd out = hinv * pair.Gamma() * hinv.transpose();
  return 0.5 * (out + out.transpose());
}

CovarianceSummary summarize_covariance(const Eigen::MatrixXd& cov) {
  CovarianceSummary s;
  s.std_devs = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  s.correlations = cov.array() / (s.std_devs * s.std_devs.transpose()).array();
  return s;
}

Eigen::MatrixXd invert_information(const Eigen::MatrixXd& info) {
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success)
    throw SingularMatrixError("information matrix is not positive definite");
  const Eigen::MatrixXd inv =
      llt.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols()));
  return 0.5 * (inv + inv.transpose());
}

AsymptoticReport assemble_report(std::vector<std::string> labels,
                                 const Eigen::MatrixXd& information,
                                 const Eigen::MatrixXd& complete_information,
                                 const Eigen::MatrixXd& kl_hessian,
                                 double zeta) {
  AsymptoticReport r;
  r.labels = std::move(labels);
  r.information = information;
  r.complete_information = complete_information;
  r.kl_hessian = kl_hessian;
  const Eigen::MatrixXd ic_inv = invert_information(complete_information);
  r.H = -ic_inv * kl_hessian;
  const Eigen::MatrixXd g = ic_inv * information * ic_inv;
  r.Gamma = 0.5 * (g + g.transpose());
  const StableMatrixPair pair(r.H, r.Gamma);
  r.spectral_bound = pair.spectral_bound();
  r.Sigma = solve_lyapunov(pair, 0.0);
  r.zeta = zeta;
  if (zeta > 0.0 && zeta < r.spectral_bound)
    r.Sigma_zeta = solve_lyapunov(pair, zeta);
  r.Sigma_avg = averaged_covariance(pair);
  auto summary = summarize_covariance(r.Sigma_avg);
  r.std_devs = std::move(summary.std_devs);
  r.correlations = std::move(summary.correlations);
  return r;
}

void write_matrix_csv(std::ostream& os, const std::string& name,
                      const std::vector<std::string>& labels,
                      const Eigen::MatrixXd& m) {
  write_matrix_csv(os, name, labels, labels, m);
}

void write_matrix_csv(std::ostream& os, const std::string& name,
                      const std::vector<std::string>& row_labels,
                      const std::vector<std::string>& col_labels,
                      const Eigen::MatrixXd& m) {
  auto label = [](const std::vector<std::string>& l, Eigen::Index i) {
    const auto k = static_cast<std::size_t>(i);
    return k < l.size() ? l[k] : std::to_string(i);
  };
  char buf[32];
  os << "# " << name << '\n';
  os << "row";
  for (Eigen::Index j = 0; j < m.cols(); ++j) os << ',' << label(col_labels, j);
  os << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    os << label(row_labels, i);
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
      os << ',' << buf;
    }
    os << '\n';
  }
}

void write_report_csv(std::ostream& os, const AsymptoticReport& r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", r.spectral_bound);
  os << "# spectral_bound," << buf << '\n';
  write_matrix_csv(os, "information", r.labels, r.information);
  write_matrix_csv(os, "complete_information", r.labels, r.complete_information);
  write_matrix_csv(os, "kl_hessian", r.labels, r.kl_hessian);
  write_matrix_csv(os, "H", r.labels, r.H);
  write_matrix_csv(os, "Gamma", r.labels, r.Gamma);
  write_matrix_csv(os, "Sigma", r.labels, r.Sigma);
  if (r.Sigma_zeta) {
    std::snprintf(buf, sizeof buf, "%.17g", r.zeta);
    write_matrix_csv(os, std::string("Sigma_zeta zeta=") + buf, r.labels,
                     *r.Sigma_zeta);
  }
  write_matrix_csv(os, "Sigma_avg", r.labels, r.Sigma_avg);
  write_matrix_csv(os, "std_devs", {"std_dev"}, r.labels, r.std_devs.transpose());
  write_matrix_csv(os, "correlations", r.labels, r.correlations);
}

}  // namespace oem
