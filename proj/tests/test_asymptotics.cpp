#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "oem/asymptotics.hpp"
#include "oem/simgen.hpp"
#include "support.hpp"

using namespace oem;

namespace {

const poisson::Params kTruth{Eigen::Vector2d(0.4, 0.6), Eigen::Vector2d(2.0, 8.0)};

// Brute-force Lyapunov solve through the d^2 x d^2 Kronecker system
// (I (x) A + A (x) I) vec(Sigma) = -vec(Gamma).
Eigen::MatrixXd kronecker_lyapunov(const Eigen::MatrixXd& a, const Eigen::MatrixXd& gamma) {
  const Eigen::Index d = a.rows();
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(d * d, d * d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) {
      k.block(i * d, j * d, d, d) += a(i, j) * Eigen::MatrixXd::Identity(d, d);
      if (i == j) k.block(i * d, j * d, d, d) += a;
    }
  const Eigen::VectorXd rhs = -Eigen::Map<const Eigen::VectorXd>(gamma.data(), d * d);
  const Eigen::VectorXd x = k.fullPivLu().solve(rhs);
  return Eigen::Map<const Eigen::MatrixXd>(x.data(), d, d);
}

Eigen::MatrixXd random_stable(Rng& rng, Eigen::Index d) {
  Eigen::MatrixXd a(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) a(i, j) = rng.normal();
  const double shift = max_real_eigenvalue(a) + 0.1 + rng.uniform();
  return a - shift * Eigen::MatrixXd::Identity(d, d);
}

Eigen::MatrixXd random_psd(Rng& rng, Eigen::Index d) {
  Eigen::MatrixXd b(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) b(i, j) = rng.normal();
  return b * b.transpose();
}

}  // namespace

TEST_CASE("Lyapunov solver: closed-form cases") {
  SUBCASE("H = -I, Gamma = I") {
    StableMatrixPair p(-Eigen::Matrix2d::Identity(), Eigen::Matrix2d::Identity());
    CHECK(solve_lyapunov(p).isApprox(0.5 * Eigen::Matrix2d::Identity(), 1e-14));
  }
  SUBCASE("decoupled scalars") {
    Eigen::Matrix2d h = Eigen::Vector2d(-1.0, -2.0).asDiagonal();
    Eigen::Matrix2d g = Eigen::Vector2d(2.0, 4.0).asDiagonal();
    CHECK(solve_lyapunov(StableMatrixPair(h, g)).isApprox(Eigen::Matrix2d::Identity(), 1e-14));
  }
  SUBCASE("scalar with shift") {
    StableMatrixPair p(Eigen::MatrixXd::Constant(1, 1, -2.0), Eigen::MatrixXd::Constant(1, 1, 2.0));
    CHECK(solve_lyapunov(p, 1.0)(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(p.spectral_bound() == doctest::Approx(2.0));
    CHECK_THROWS_AS(solve_lyapunov(p, 2.5), StabilityError);
  }
}

TEST_CASE("Lyapunov solver agrees with the Kronecker system") {
  Rng rng({21, 0});
  for (int t = 0; t < 100; ++t) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(t % 6);
    const Eigen::MatrixXd h = random_stable(rng, d);
    const Eigen::MatrixXd g = random_psd(rng, d);
    const StableMatrixPair pair(h, g);
    const double zeta = t % 3 == 0 ? 0.5 * pair.spectral_bound() : 0.0;
    const Eigen::MatrixXd sigma = solve_lyapunov(pair, zeta);
    const Eigen::MatrixXd a = h + zeta * Eigen::MatrixXd::Identity(d, d);
    const Eigen::MatrixXd oracle = kronecker_lyapunov(a, g);
    CAPTURE(d);
    CHECK(testing::max_rel_err(sigma, oracle) < 1e-8);
    const Eigen::MatrixXd resid = a * sigma + sigma * a.transpose() + g;
    CHECK(resid.norm() <= 1e-10 * g.norm());
    CHECK((sigma - sigma.transpose()).norm() == 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
    CHECK(eig.eigenvalues().minCoeff() > -1e-10 * sigma.norm());
  }
}

TEST_CASE("stable pair validation") {
  CHECK_THROWS_AS(StableMatrixPair(Eigen::Matrix2d::Identity(), Eigen::Matrix2d::Identity()),
                  StabilityError);
  Eigen::Matrix2d asym;
  asym << 1, 2, 0, 1;
  CHECK_THROWS_AS(StableMatrixPair(-Eigen::Matrix2d::Identity(), asym), DomainError);
  CHECK_THROWS_AS(StableMatrixPair(-Eigen::Matrix2d::Identity(), -Eigen::Matrix2d::Identity()),
                  DomainError);
  CHECK_THROWS_AS(StableMatrixPair(-Eigen::Matrix2d::Identity(), Eigen::Matrix3d::Identity()),
                  DimensionError);
}

TEST_CASE("averaged covariance") {
  StableMatrixPair p(-Eigen::Matrix2d::Identity(), Eigen::Matrix2d::Identity());
  CHECK(averaged_covariance(p).isApprox(Eigen::Matrix2d::Identity()));
  Rng rng({22, 0});
  const Eigen::MatrixXd h = random_stable(rng, 4);
  const Eigen::MatrixXd g = random_psd(rng, 4);
  const Eigen::MatrixXd base = averaged_covariance(StableMatrixPair(h, g));
  CHECK(averaged_covariance(StableMatrixPair(h, 3.0 * g)).isApprox(3.0 * base, 1e-12));
  const Eigen::MatrixXd hinv = h.inverse();
  CHECK(base.isApprox(hinv * g * hinv.transpose(), 1e-10));
}

TEST_CASE("information of a single Poisson component") {
  poisson::Params one{Eigen::VectorXd::Ones(1), Eigen::VectorXd::Constant(1, 2.0)};
  const auto model = poisson::model(1);
  const auto exact = empirical_information(model, exact_poisson_expectation(one),
                                           poisson::to_param(one));
  CHECK(exact.matrix(0, 0) == doctest::Approx(0.5).epsilon(1e-10));
  const auto data = strip_labels(gen_poisson_mixture(1000000, one, {31, 0}));
  const auto mc = empirical_information(
      model, Expectation<poisson::Count>::from_dataset(data), poisson::to_param(one));
  CHECK(mc.matrix(0, 0) == doctest::Approx(0.5).epsilon(0.01));
  const auto ic = complete_fim_pi(model, exact_poisson_expectation(one), poisson::to_param(one));
  CHECK(ic.matrix(0, 0) == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("single observation gives a rank-one information") {
  const auto model = poisson::model(2);
  std::vector<poisson::Count> one{4};
  const auto info = empirical_information(
      model, Expectation<poisson::Count>::from_dataset(one), poisson::to_param(kTruth));
  CHECK(info.rank == 1);
  CHECK(info.singular());
  CHECK_FALSE(info.positive_definite);
  std::vector<poisson::Count> none;
  CHECK_THROWS_AS(Expectation<poisson::Count>::from_dataset(none), InsufficientDataError);
}

TEST_CASE("complete information under the model equals the complete-data FIM") {
  const auto model = poisson::model(2);
  const auto theta = poisson::to_param(kTruth);
  const auto exact = complete_fim_pi(model, exact_poisson_expectation(kTruth), theta);
  CHECK(testing::max_rel_err(exact.matrix, poisson::complete_fim(kTruth)) < 1e-10);
  CHECK(exact.positive_definite);
  const auto data = strip_labels(gen_poisson_mixture(200000, kTruth, {32, 0}));
  const auto mc = complete_fim_pi(model, Expectation<poisson::Count>::from_dataset(data), theta);
  CHECK(testing::max_rel_err(mc.matrix, poisson::complete_fim(kTruth)) < 0.02);
  CHECK(mc.matrix.isApprox(mc.matrix.transpose()));
}

TEST_CASE("KL surrogate") {
  const auto model = poisson::model(2);
  const auto pi = exact_poisson_expectation(kTruth);
  const double at_truth = kl_surrogate(model, pi, poisson::to_param(kTruth));
  double entropy = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i)
    if (pi.weights[i] > 0.0) entropy -= pi.weights[i] * std::log(pi.weights[i]);
  CHECK(at_truth == doctest::Approx(entropy).epsilon(1e-10));

  Rng rng({33, 0});
  for (int t = 0; t < 20; ++t) {
    poisson::Params other{Eigen::Vector2d(0.2 + 0.6 * rng.uniform(), 0.0),
                          Eigen::Vector2d(1.0 + 3 * rng.uniform(), 5.0 + 5 * rng.uniform())};
    other.omega[1] = 1.0 - other.omega[0];
    const double k_other = kl_surrogate(model, pi, poisson::to_param(other));
    CHECK(k_other > at_truth);
    // The difference is exactly the KL divergence.
    double kl = 0.0;
    for (std::size_t i = 0; i < pi.size(); ++i)
      kl += pi.weights[i] * (std::log(pi.weights[i]) - poisson::loglik(pi.points[i], other));
    CHECK(k_other - at_truth == doctest::Approx(kl).epsilon(1e-9));
  }
}

TEST_CASE("information-matrix equality at the truth") {
  const auto model = poisson::model(2);
  const auto pi = exact_poisson_expectation(kTruth);
  const auto theta = poisson::to_param(kTruth);
  const auto info = empirical_information(model, pi, theta);
  const Eigen::MatrixXd hess = surrogate_hessian(model, pi, theta);
  CHECK(testing::max_rel_err(hess, info.matrix) < 1e-5);
  // and the Monte-Carlo estimate converges to it
  const auto data = strip_labels(gen_poisson_mixture(400000, kTruth, {34, 0}));
  const auto mc = empirical_information(model, Expectation<poisson::Count>::from_dataset(data), theta);
  CHECK(testing::max_rel_err(mc.matrix, info.matrix) < 0.03);
}

TEST_CASE("well-specified asymptotic covariances") {
  const auto model = poisson::model(2);
  const auto report = build_report(model, exact_poisson_expectation(kTruth),
                                   poisson::to_param(kTruth));
  const Eigen::MatrixXd iobs_inv = invert_information(report.information);
  const Eigen::MatrixXd ic_inv = invert_information(report.complete_information);
  // The averaged estimate is efficient.
  CHECK(testing::max_rel_err(report.Sigma_avg, iobs_inv) < 1e-4);
  // Without averaging, H = -I_c^{-1} I_obs and Gamma = I_c^{-1} I_obs I_c^{-1},
  // whose Lyapunov solution is I_c^{-1} / 2.
  CHECK(testing::max_rel_err(report.Sigma, 0.5 * ic_inv) < 1e-4);
  CHECK(report.spectral_bound > 0.0);
  CHECK(report.spectral_bound <= 1.0 + 1e-6);  // eigenvalues of I_c^{-1} I_obs lie in (0,1]
  CHECK(report.labels == std::vector<std::string>{"omega[0]", "lambda[0]", "lambda[1]"});
  CHECK(report.std_devs.size() == 3);
  CHECK(report.correlations.diagonal().isApprox(Eigen::Vector3d::Ones()));
}

TEST_CASE("mean field vanishes at the truth and the surrogate descends") {
  const auto model = poisson::model(2);
  const auto pi = exact_poisson_expectation(kTruth);
  const auto s_star = poisson::to_stat(poisson::stat_for(kTruth));
  CHECK(mean_field(model, pi, s_star).values().norm() <= 1e-6);

  // The surrogate is stationary there.
  auto k = [&](const Eigen::VectorXd& x) {
    return kl_surrogate(model, pi, model.from_free(x));
  };
  CHECK(testing::fd_gradient(k, model.to_free(poisson::to_param(kTruth))).norm() < 1e-7);

  Rng rng({35, 0});
  for (int t = 0; t < 50; ++t) {
    poisson::Params theta{Eigen::Vector2d(0.05 + 0.9 * rng.uniform(), 0.0),
                          Eigen::Vector2d(0.5 + 10 * rng.uniform(), 0.5 + 10 * rng.uniform())};
    theta.omega[1] = 1.0 - theta.omega[0];
    const auto s = poisson::to_stat(poisson::stat_for(theta));
    const auto h = mean_field(model, pi, s);
    const StatVector next(s.layout(), s.values() + 0.1 * h.values());
    CHECK(kl_surrogate(model, pi, model.mstep(next)) < kl_surrogate(model, pi, model.mstep(s)));
  }
}

TEST_CASE("report for the regression mixture") {
  const auto data = strip_labels(gen_regmix_flexmix(20000, {36, 0}));
  const auto model = regmix::model(2, 3);
  const auto report = build_report(model, Expectation<regmix::Observation>::from_dataset(data),
                                   regmix::to_param(flexmix_truth()), 0.01);
  CHECK(report.labels.size() == 9);
  CHECK(report.labels.front() == "omega[0]");
  CHECK(report.labels[1] == "beta[0][0]");
  CHECK(report.spectral_bound > 0.0);
  CHECK(report.Sigma_zeta.has_value());

  std::ostringstream os;
  write_report_csv(os, report);
  const std::string text = os.str();
  CHECK(text.find("# Sigma_avg\n") != std::string::npos);
  CHECK(text.find("# std_devs\nrow,omega[0],beta[0][0]") != std::string::npos);
  CHECK(text.find("\nstd_dev,") != std::string::npos);
}

TEST_CASE("summaries and inversion") {
  Eigen::Matrix2d cov;
  cov << 4.0, -3.0, -3.0, 9.0;
  const auto s = summarize_covariance(cov);
  CHECK(s.std_devs.isApprox(Eigen::Vector2d(2.0, 3.0)));
  CHECK(s.correlations(0, 1) == doctest::Approx(-0.5));
  CHECK(invert_information(cov).isApprox(cov.inverse()));
  Eigen::Matrix2d singular;
  singular << 1, 1, 1, 1;
  CHECK_THROWS_AS(invert_information(singular), SingularMatrixError);
  StableMatrixPair p(Eigen::Matrix2d(Eigen::Vector2d(-1.0, -1.0).asDiagonal()),
                     Eigen::Matrix2d::Identity());
  CHECK_NOTHROW(averaged_covariance(p));
}
