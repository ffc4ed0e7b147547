#include "oem/regmix.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace oem::regmix {

namespace {

std::string idx(Eigen::Index j) { return "[" + std::to_string(j) + "]"; }

Eigen::VectorXd component_log_terms(const Observation& obs,
                                    const Params& theta) {
  Eigen::VectorXd lw(theta.m());
  for (Eigen::Index j = 0; j < theta.m(); ++j) {
    const double e = obs.r - theta.beta.row(j).dot(obs.z);
    lw[j] = std::log(theta.omega[j]) - 0.5 * std::log(theta.sigma2[j]) -
            0.5 * e * e / theta.sigma2[j];
  }
  return lw;
}

Eigen::MatrixXd block_matrix(const ComponentStats& c) {
  const Eigen::Index d = c.s2.size();
  Eigen::MatrixXd mj(d + 1, d + 1);
  mj.topLeftCorner(d, d) = c.s3;
  mj.topRightCorner(d, 1) = c.s2;
  mj.bottomLeftCorner(1, d) = c.s2.transpose();
  mj(d, d) = c.s4;
  return mj;
}

// s4 - 2 beta^T s2 + beta^T s3 beta: the posterior-weighted squared residual.
double weighted_rss(const ComponentStats& c, const Eigen::VectorXd& beta) {
  return c.s4 - 2.0 * beta.dot(c.s2) + beta.dot(c.s3 * beta);
}

}  // namespace

void Params::validate() const {
  if (omega.size() == 0 || beta.rows() != omega.size() ||
      sigma2.size() != omega.size())
    throw DimensionError("regmix params: inconsistent component counts");
  double total = 0.0;
  for (Eigen::Index j = 0; j < m(); ++j) {
    if (!(omega[j] > 0.0))
      throw DomainError("omega" + idx(j) + " > 0",
                        "regmix params: omega" + idx(j) + " must be > 0");
    if (!(sigma2[j] > 0.0) || !std::isfinite(sigma2[j]))
      throw DomainError("sigma2" + idx(j) + " > 0",
                        "regmix params: sigma2" + idx(j) + " must be > 0");
    total += omega[j];
  }
  if (!beta.allFinite())
    throw DomainError("beta finite", "regmix params: beta must be finite");
  if (std::fabs(total - 1.0) > 1e-12)
    throw DomainError("sum(omega) = 1", "regmix params: weights must sum to one");
}

Eigen::VectorXd posterior_weights(const Observation& obs, const Params& theta) {
  Eigen::VectorXd lw = component_log_terms(obs, theta);
  lw.array() -= lw.maxCoeff();
  Eigen::VectorXd w = lw.array().exp();
  return w / w.sum();
}

SuffStats cond_expect_stat(const Observation& obs, const Params& theta) {
  const Eigen::VectorXd w = posterior_weights(obs, theta);
  const Eigen::MatrixXd zz = obs.z * obs.z.transpose();
  SuffStats s;
  s.comp.reserve(static_cast<std::size_t>(theta.m()));
  for (Eigen::Index j = 0; j < theta.m(); ++j)
    s.comp.push_back({w[j], w[j] * obs.r * obs.z, w[j] * zz,
                      w[j] * obs.r * obs.r});
  return s;
}

bool is_positive_definite(const Eigen::MatrixXd& a) noexcept {
  const Eigen::Index n = a.rows();
  if (n == 0 || a.cols() != n || !a.allFinite()) return false;
  const double scale = a.diagonal().cwiseAbs().sum() / static_cast<double>(n);
  if (!(scale > 0.0)) return false;
  const double tol = 1e-12 * scale;
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double pivot = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
    if (!(pivot > tol)) return false;
    l(j, j) = std::sqrt(pivot);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double v = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
      l(i, j) = v / l(j, j);
    }
  }
  return true;
}

bool in_domain(const SuffStats& s) noexcept {
  if (s.comp.empty()) return false;
  for (const auto& c : s.comp) {
    if (!(c.s1 > 0.0 && c.s1 <= 1.0)) return false;
    if (!is_positive_definite(block_matrix(c))) return false;
  }
  return true;
}

Params mstep(const SuffStats& s) {
  const Eigen::Index m = s.m();
  const Eigen::Index d = s.d();
  if (m == 0 || d == 0) throw DimensionError("regmix mstep: empty statistic");
  Params out{Eigen::VectorXd(m), Eigen::MatrixXd(m, d), Eigen::VectorXd(m)};
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto& c = s.comp[static_cast<std::size_t>(j)];
    if (!(c.s1 > 0.0 && c.s1 <= 1.0))
      throw DomainError("s1" + idx(j) + " in (0,1)",
                        "regmix mstep: s1" + idx(j) + " outside (0,1)");
    if (!is_positive_definite(block_matrix(c)))
      throw DomainError("M" + idx(j) + " positive definite",
                        "regmix mstep: block matrix M" + idx(j) +
                            " is not positive definite");
    const Eigen::VectorXd b = c.s3.llt().solve(c.s2);
    const double var = (c.s4 - b.dot(c.s2)) / c.s1;
    if (!(var > 0.0))
      throw DomainError("sigma2" + idx(j) + " > 0",
                        "regmix mstep: non-positive variance for component " +
                            std::to_string(j));
    out.omega[j] = c.s1;
    out.beta.row(j) = b.transpose();
    out.sigma2[j] = var;
  }
  return out;
}

double loglik(const Observation& obs, const Params& theta) {
  const Eigen::VectorXd lw = component_log_terms(obs, theta);
  const double mx = lw.maxCoeff();
  return mx + std::log((lw.array() - mx).exp().sum()) -
         0.5 * std::log(2.0 * std::numbers::pi);
}

Eigen::MatrixXd score_beta(const Observation& obs, const Params& theta) {
  const Eigen::VectorXd w = posterior_weights(obs, theta);
  Eigen::MatrixXd g(theta.m(), theta.d());
  for (Eigen::Index j = 0; j < theta.m(); ++j) {
    const double e = obs.r - theta.beta.row(j).dot(obs.z);
    g.row(j) = (w[j] * e / theta.sigma2[j]) * obs.z.transpose();
  }
  return g;
}

Eigen::VectorXd score(const Observation& obs, const Params& theta) {
  const Eigen::Index m = theta.m();
  const Eigen::Index d = theta.d();
  const SuffStats s = cond_expect_stat(obs, theta);
  Eigen::VectorXd g(m - 1 + m * d + m);
  const double last = s.comp.back().s1 / theta.omega[m - 1];
  for (Eigen::Index a = 0; a < m - 1; ++a)
    g[a] = s.comp[static_cast<std::size_t>(a)].s1 / theta.omega[a] - last;
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto& c = s.comp[static_cast<std::size_t>(j)];
    const Eigen::VectorXd b = theta.beta.row(j).transpose();
    const double v = theta.sigma2[j];
    g.segment(m - 1 + j * d, d) = (c.s2 - c.s3 * b) / v;
    g[m - 1 + m * d + j] = -0.5 * c.s1 / v + 0.5 * weighted_rss(c, b) / (v * v);
  }
  return g;
}

Eigen::MatrixXd cond_complete_info(const Observation& obs,
                                   const Params& theta) {
  const Eigen::Index m = theta.m();
  const Eigen::Index d = theta.d();
  const Eigen::Index n = m - 1 + m * d + m;
  const SuffStats s = cond_expect_stat(obs, theta);
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(n, n);
  const double wl = theta.omega[m - 1];
  const double last = s.comp.back().s1 / (wl * wl);
  for (Eigen::Index a = 0; a < m - 1; ++a) {
    for (Eigen::Index b = 0; b < m - 1; ++b) info(a, b) = last;
    info(a, a) +=
        s.comp[static_cast<std::size_t>(a)].s1 / (theta.omega[a] * theta.omega[a]);
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto& c = s.comp[static_cast<std::size_t>(j)];
    const Eigen::VectorXd b = theta.beta.row(j).transpose();
    const double v = theta.sigma2[j];
    const Eigen::Index bo = m - 1 + j * d;
    const Eigen::Index vo = m - 1 + m * d + j;
    info.block(bo, bo, d, d) = c.s3 / v;
    const Eigen::VectorXd cross = (c.s2 - c.s3 * b) / (v * v);
    info.block(bo, vo, d, 1) = cross;
    info.block(vo, bo, 1, d) = cross.transpose();
    info(vo, vo) = weighted_rss(c, b) / (v * v * v) - 0.5 * c.s1 / (v * v);
  }
  return info;
}

LayoutPtr stat_layout(Eigen::Index m, Eigen::Index d) {
  thread_local std::vector<std::pair<std::pair<Eigen::Index, Eigen::Index>,
                                     LayoutPtr>> cache;
  for (const auto& [key, layout] : cache)
    if (key.first == m && key.second == d) return layout;
  std::vector<std::pair<std::string, std::size_t>> parts;
  const auto ud = static_cast<std::size_t>(d);
  for (Eigen::Index j = 0; j < m; ++j) {
    parts.emplace_back("s1" + idx(j), 1);
    parts.emplace_back("s2" + idx(j), ud);
    parts.emplace_back("s3" + idx(j), ud * ud);
    parts.emplace_back("s4" + idx(j), 1);
  }
  auto layout = Layout::sequential(parts);
  cache.push_back({{m, d}, layout});
  return layout;
}

LayoutPtr param_layout(Eigen::Index m, Eigen::Index d) {
  thread_local std::vector<std::pair<std::pair<Eigen::Index, Eigen::Index>,
                                     LayoutPtr>> cache;
  for (const auto& [key, layout] : cache)
    if (key.first == m && key.second == d) return layout;
  std::vector<std::pair<std::string, std::size_t>> parts;
  parts.emplace_back("omega", static_cast<std::size_t>(m));
  for (Eigen::Index j = 0; j < m; ++j)
    parts.emplace_back("beta" + idx(j), static_cast<std::size_t>(d));
  parts.emplace_back("sigma2", static_cast<std::size_t>(m));
  auto layout = Layout::sequential(parts);
  cache.push_back({{m, d}, layout});
  return layout;
}

StatVector to_stat(const SuffStats& s) {
  const Eigen::Index m = s.m();
  const Eigen::Index d = s.d();
  const Eigen::Index per = 2 + d + d * d;
  Eigen::VectorXd v(m * per);
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto& c = s.comp[static_cast<std::size_t>(j)];
    const Eigen::Index o = j * per;
    v[o] = c.s1;
    v.segment(o + 1, d) = c.s2;
    for (Eigen::Index a = 0; a < d; ++a)
      for (Eigen::Index b = 0; b < d; ++b) v[o + 1 + d + a * d + b] = c.s3(a, b);
    v[o + 1 + d + d * d] = c.s4;
  }
  return StatVector(stat_layout(m, d), std::move(v));
}

SuffStats from_stat(const StatVector& s, Eigen::Index m, Eigen::Index d) {
  const Eigen::Index per = 2 + d + d * d;
  if (s.size() != m * per)
    throw DimensionError("regmix statistic has wrong length");
  SuffStats out;
  out.comp.resize(static_cast<std::size_t>(m));
  const auto& v = s.values();
  for (Eigen::Index j = 0; j < m; ++j) {
    auto& c = out.comp[static_cast<std::size_t>(j)];
    const Eigen::Index o = j * per;
    c.s1 = v[o];
    c.s2 = v.segment(o + 1, d);
    c.s3.resize(d, d);
    for (Eigen::Index a = 0; a < d; ++a)
      for (Eigen::Index b = 0; b < d; ++b) c.s3(a, b) = v[o + 1 + d + a * d + b];
    c.s4 = v[o + 1 + d + d * d];
  }
  return out;
}

ParamVector to_param(const Params& theta) {
  const Eigen::Index m = theta.m();
  const Eigen::Index d = theta.d();
  Eigen::VectorXd v(m + m * d + m);
  v.head(m) = theta.omega;
  for (Eigen::Index j = 0; j < m; ++j)
    v.segment(m + j * d, d) = theta.beta.row(j).transpose();
  v.tail(m) = theta.sigma2;
  return ParamVector(param_layout(m, d), std::move(v));
}

Params from_param(const ParamVector& p, Eigen::Index m, Eigen::Index d) {
  if (p.size() != m + m * d + m)
    throw DimensionError("regmix parameter has wrong length");
  const auto& v = p.values();
  Params out{v.head(m), Eigen::MatrixXd(m, d), v.tail(m)};
  for (Eigen::Index j = 0; j < m; ++j)
    out.beta.row(j) = v.segment(m + j * d, d).transpose();
  return out;
}

Eigen::VectorXd to_free(const Params& theta) {
  const Eigen::Index m = theta.m();
  const Eigen::Index d = theta.d();
  Eigen::VectorXd v(m - 1 + m * d + m);
  v.head(m - 1) = theta.omega.head(m - 1);
  for (Eigen::Index j = 0; j < m; ++j)
    v.segment(m - 1 + j * d, d) = theta.beta.row(j).transpose();
  v.tail(m) = theta.sigma2;
  return v;
}

Params from_free(const Eigen::VectorXd& free, Eigen::Index m, Eigen::Index d) {
  if (free.size() != m - 1 + m * d + m)
    throw DimensionError("regmix free parameter has wrong length");
  Params out{Eigen::VectorXd(m), Eigen::MatrixXd(m, d), free.tail(m)};
  out.omega.head(m - 1) = free.head(m - 1);
  out.omega[m - 1] = 1.0 - free.head(m - 1).sum();
  for (Eigen::Index j = 0; j < m; ++j)
    out.beta.row(j) = free.segment(m - 1 + j * d, d).transpose();
  return out;
}

ModelSpec<Observation> model(Eigen::Index m, Eigen::Index d) {
  if (m < 1 || d < 1) throw DimensionError("regmix needs m >= 1 and d >= 1");
  ModelSpec<Observation> spec;
  spec.name = "regmix";
  spec.stat_layout = stat_layout(m, d);
  spec.param_layout = param_layout(m, d);
  spec.free_dim = static_cast<std::size_t>(m - 1 + m * d + m);
  spec.cond_expect_stat = [m, d](const Observation& o, const ParamVector& p) {
    return to_stat(cond_expect_stat(o, from_param(p, m, d)));
  };
  spec.mstep = [m, d](const StatVector& s) {
    return to_param(mstep(from_stat(s, m, d)));
  };
  spec.loglik = [m, d](const Observation& o, const ParamVector& p) {
    return loglik(o, from_param(p, m, d));
  };
  spec.in_domain = [m, d](const StatVector& s) {
    return in_domain(from_stat(s, m, d));
  };
  spec.score = [m, d](const Observation& o, const ParamVector& p) {
    return score(o, from_param(p, m, d));
  };
  spec.cond_complete_info = [m, d](const Observation& o, const ParamVector& p) {
    return cond_complete_info(o, from_param(p, m, d));
  };
  spec.to_free = [m, d](const ParamVector& p) {
    return to_free(from_param(p, m, d));
  };
  spec.from_free = [m, d](const Eigen::VectorXd& f) {
    return to_param(from_free(f, m, d));
  };
  return spec;
}

}  // namespace oem::regmix
