#include "oem/poisson.hpp"

#include <cmath>
#include <string>

namespace oem::poisson {

namespace {

std::string idx(Eigen::Index j) { return "[" + std::to_string(j) + "]"; }

// log(omega_j) + y log(lambda_j) - lambda_j, without the log(y!) term.
Eigen::VectorXd component_log_terms(Count y, const Params& theta) {
  const double yd = static_cast<double>(y);
  Eigen::VectorXd lw(theta.m());
  for (Eigen::Index j = 0; j < theta.m(); ++j)
    lw[j] = std::log(theta.omega[j]) + yd * std::log(theta.lambda[j]) -
            theta.lambda[j];
  return lw;
}

}  // namespace

void Params::validate() const {
  if (omega.size() == 0 || omega.size() != lambda.size())
    throw DimensionError("poisson params: omega and lambda sizes differ");
  double total = 0.0;
  for (Eigen::Index j = 0; j < m(); ++j) {
    if (!(omega[j] > 0.0) || !std::isfinite(omega[j]))
      throw DomainError("omega" + idx(j) + " > 0",
                        "poisson params: omega" + idx(j) + " must be > 0");
    if (!(lambda[j] > 0.0) || !std::isfinite(lambda[j]))
      throw DomainError("lambda" + idx(j) + " > 0",
                        "poisson params: lambda" + idx(j) + " must be > 0");
    total += omega[j];
  }
  if (std::fabs(total - 1.0) > 1e-12)
    throw DomainError("sum(omega) = 1",
                      "poisson params: weights must sum to one");
}

bool Params::valid() const noexcept {
  try {
    validate();
    return true;
  } catch (...) {
    return false;
  }
}

Eigen::VectorXd posterior_weights(Count y, const Params& theta) {
  Eigen::VectorXd lw = component_log_terms(y, theta);
  lw.array() -= lw.maxCoeff();
  Eigen::VectorXd w = lw.array().exp();
  return w / w.sum();
}

SuffStats cond_expect_stat(Count y, const Params& theta) {
  Eigen::VectorXd w = posterior_weights(y, theta);
  return {w, w * static_cast<double>(y)};
}

bool in_domain(const SuffStats& s) noexcept {
  for (Eigen::Index j = 0; j < s.m(); ++j) {
    if (!(s.s1[j] > 0.0 && s.s1[j] <= 1.0)) return false;
    if (!(s.s2[j] > 0.0) || !std::isfinite(s.s2[j])) return false;
  }
  return s.m() > 0;
}

Params mstep(const SuffStats& s) {
  if (s.s1.size() != s.s2.size() || s.m() == 0)
    throw DimensionError("poisson mstep: malformed statistic");
  Params out{s.s1, Eigen::VectorXd(s.m())};
  for (Eigen::Index j = 0; j < s.m(); ++j) {
    if (!(s.s1[j] > 0.0 && s.s1[j] <= 1.0))
      throw DomainError("s1" + idx(j) + " in (0,1]",
                        "poisson mstep: s1" + idx(j) + " outside (0,1]");
    if (!(s.s2[j] > 0.0))
      throw DegenerateComponentError(
          "s2" + idx(j) + " > 0",
          "poisson mstep: component " + std::to_string(j) +
              " has zero posterior-weighted count (lambda would be 0)");
    out.lambda[j] = s.s2[j] / s.s1[j];
  }
  return out;
}

double loglik(Count y, const Params& theta) {
  Eigen::VectorXd lw = component_log_terms(y, theta);
  const double mx = lw.maxCoeff();
  return mx + std::log((lw.array() - mx).exp().sum()) -
         std::lgamma(static_cast<double>(y) + 1.0);
}

Eigen::MatrixXd complete_fim(const Params& theta) {
  const Eigen::Index m = theta.m();
  const Eigen::Index d = 2 * m - 1;
  Eigen::MatrixXd fim = Eigen::MatrixXd::Zero(d, d);
  const double inv_last = 1.0 / theta.omega[m - 1];
  for (Eigen::Index a = 0; a < m - 1; ++a) {
    for (Eigen::Index b = 0; b < m - 1; ++b) fim(a, b) = inv_last;
    fim(a, a) += 1.0 / theta.omega[a];
  }
  for (Eigen::Index j = 0; j < m; ++j)
    fim(m - 1 + j, m - 1 + j) = theta.omega[j] / theta.lambda[j];
  return fim;
}

Count sample(const Params& theta, Rng& rng) {
  const auto w = rng.categorical(
      std::span<const double>(theta.omega.data(), theta.omega.size()));
  return rng.poisson(theta.lambda[static_cast<Eigen::Index>(w)]);
}

Eigen::VectorXd score(Count y, const Params& theta) {
  const Eigen::Index m = theta.m();
  const SuffStats s = cond_expect_stat(y, theta);
  Eigen::VectorXd g(2 * m - 1);
  // phi_j = (log omega_j - lambda_j, log lambda_j); psi = 0.
  const double last = s.s1[m - 1] / theta.omega[m - 1];
  for (Eigen::Index a = 0; a < m - 1; ++a)
    g[a] = s.s1[a] / theta.omega[a] - last;
  for (Eigen::Index j = 0; j < m; ++j)
    g[m - 1 + j] = -s.s1[j] + s.s2[j] / theta.lambda[j];
  return g;
}

Eigen::MatrixXd cond_complete_info(Count y, const Params& theta) {
  const Eigen::Index m = theta.m();
  const SuffStats s = cond_expect_stat(y, theta);
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(2 * m - 1, 2 * m - 1);
  const double wl = theta.omega[m - 1];
  const double last = s.s1[m - 1] / (wl * wl);
  for (Eigen::Index a = 0; a < m - 1; ++a) {
    for (Eigen::Index b = 0; b < m - 1; ++b) info(a, b) = last;
    info(a, a) += s.s1[a] / (theta.omega[a] * theta.omega[a]);
  }
  for (Eigen::Index j = 0; j < m; ++j)
    info(m - 1 + j, m - 1 + j) = s.s2[j] / (theta.lambda[j] * theta.lambda[j]);
  return info;
}

std::vector<std::pair<Count, double>> exact_support(const Params& theta,
                                                    double tail_mass) {
  std::vector<std::pair<Count, double>> out;
  double cum = 0.0;
  const double lmax = theta.lambda.maxCoeff();
  // Hard stop well past the largest component's bulk.
  const Count limit =
      static_cast<Count>(lmax + 60.0 * std::sqrt(lmax) + 200.0);
  for (Count y = 0; y <= limit; ++y) {
    const double p = std::exp(loglik(y, theta));
    out.emplace_back(y, p);
    cum += p;
    if (cum >= 1.0 - tail_mass && static_cast<double>(y) > lmax) break;
  }
  return out;
}

LayoutPtr stat_layout(Eigen::Index m) {
  thread_local std::vector<LayoutPtr> cache;
  const auto k = static_cast<std::size_t>(m);
  if (k < cache.size() && cache[k]) return cache[k];
  std::vector<std::pair<std::string, std::size_t>> parts;
  for (Eigen::Index j = 0; j < m; ++j) {
    parts.emplace_back("s1" + idx(j), 1);
    parts.emplace_back("s2" + idx(j), 1);
  }
  if (cache.size() <= k) cache.resize(k + 1);
  return cache[k] = Layout::sequential(parts);
}

LayoutPtr param_layout(Eigen::Index m) {
  thread_local std::vector<LayoutPtr> cache;
  const auto len = static_cast<std::size_t>(m);
  if (len < cache.size() && cache[len]) return cache[len];
  if (cache.size() <= len) cache.resize(len + 1);
  return cache[len] = Layout::sequential({{"omega", len}, {"lambda", len}});
}

StatVector to_stat(const SuffStats& s) {
  Eigen::VectorXd v(2 * s.m());
  for (Eigen::Index j = 0; j < s.m(); ++j) {
    v[2 * j] = s.s1[j];
    v[2 * j + 1] = s.s2[j];
  }
  return StatVector(stat_layout(s.m()), std::move(v));
}

SuffStats from_stat(const StatVector& s) {
  if (s.size() % 2 != 0)
    throw DimensionError("poisson statistic must have even length");
  const Eigen::Index m = s.size() / 2;
  SuffStats out{Eigen::VectorXd(m), Eigen::VectorXd(m)};
  for (Eigen::Index j = 0; j < m; ++j) {
    out.s1[j] = s[2 * j];
    out.s2[j] = s[2 * j + 1];
  }
  return out;
}

ParamVector to_param(const Params& theta) {
  Eigen::VectorXd v(2 * theta.m());
  v << theta.omega, theta.lambda;
  return ParamVector(param_layout(theta.m()), std::move(v));
}

Params from_param(const ParamVector& p) {
  if (p.size() % 2 != 0)
    throw DimensionError("poisson parameter must have even length");
  const Eigen::Index m = p.size() / 2;
  return {p.values().head(m), p.values().tail(m)};
}

Eigen::VectorXd to_free(const Params& theta) {
  const Eigen::Index m = theta.m();
  Eigen::VectorXd v(2 * m - 1);
  v << theta.omega.head(m - 1), theta.lambda;
  return v;
}

Params from_free(const Eigen::VectorXd& free, Eigen::Index m) {
  if (free.size() != 2 * m - 1)
    throw DimensionError("poisson free parameter has wrong length");
  Params out{Eigen::VectorXd(m), free.tail(m)};
  out.omega.head(m - 1) = free.head(m - 1);
  out.omega[m - 1] = 1.0 - free.head(m - 1).sum();
  return out;
}

SuffStats stat_for(const Params& theta) {
  return {theta.omega, theta.omega.cwiseProduct(theta.lambda)};
}

ModelSpec<Count> model(Eigen::Index m) {
  if (m < 1) throw DimensionError("poisson mixture needs m >= 1");
  ModelSpec<Count> spec;
  spec.name = "poisson";
  spec.stat_layout = stat_layout(m);
  spec.param_layout = param_layout(m);
  spec.free_dim = static_cast<std::size_t>(2 * m - 1);
  spec.cond_expect_stat = [](const Count& y, const ParamVector& p) {
    return to_stat(cond_expect_stat(y, from_param(p)));
  };
  spec.mstep = [](const StatVector& s) { return to_param(mstep(from_stat(s))); };
  spec.loglik = [](const Count& y, const ParamVector& p) {
    return loglik(y, from_param(p));
  };
  spec.in_domain = [](const StatVector& s) { return in_domain(from_stat(s)); };
  spec.sample = [](const ParamVector& p, Rng& rng) {
    return sample(from_param(p), rng);
  };
  spec.score = [](const Count& y, const ParamVector& p) {
    return score(y, from_param(p));
  };
  spec.cond_complete_info = [](const Count& y, const ParamVector& p) {
    return cond_complete_info(y, from_param(p));
  };
  spec.to_free = [](const ParamVector& p) { return to_free(from_param(p)); };
  spec.from_free = [m](const Eigen::VectorXd& f) {
    return to_param(from_free(f, m));
  };
  return spec;
}

}  // namespace oem::poisson
