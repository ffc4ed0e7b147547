#pragma once
// Small numerical helpers shared by the unit tests.

#include <functional>

#include <Eigen/Dense>

namespace testing {

inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double rel = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = rel * std::max(std::abs(x[k]), 1.0);
    Eigen::VectorXd xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    g[k] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

inline Eigen::MatrixXd fd_jacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double rel = 1e-5) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd j(f0.size(), x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = rel * std::max(std::abs(x[k]), 1.0);
    Eigen::VectorXd xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    j.col(k) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return j;
}

inline double max_rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                          double floor = 1.0) {
  return (a - b).cwiseAbs().maxCoeff() /
         std::max(b.cwiseAbs().maxCoeff(), floor);
}

}  // namespace testing
