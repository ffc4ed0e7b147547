#include "oem/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "oem/asymptotics.hpp"
#include "oem/random.hpp"
#include "oem/simgen.hpp"

namespace oem {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
// Stream reserved for the reference-information sample, disjoint from every
// replica index a study can use.
constexpr std::uint64_t kReferenceReplica = ~std::uint64_t{0};
constexpr std::size_t kBatchIterations = 5;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto end = comma == std::string_view::npos ? s.size() : comma;
    out.push_back(trim(s.substr(start, end - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_real(const std::string& field, const std::string& text) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(text, &pos);
    if (pos != text.size() || !std::isfinite(v)) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(field, "config: field '" + field +
                                 "' expects a real number, got '" + text + "'");
  }
}

std::uint64_t parse_unsigned(const std::string& field, const std::string& text) {
  if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError(field, "config: field '" + field +
                                 "' expects a non-negative integer, got '" +
                                 text + "'");
  try {
    return std::stoull(text);
  } catch (const std::exception&) {
    throw ConfigError(field, "config: field '" + field + "' is out of range");
  }
}

Eigen::VectorXd parse_vector(const std::string& field, const std::string& text) {
  const auto items = split_list(text);
  Eigen::VectorXd v(static_cast<Eigen::Index>(items.size()));
  for (std::size_t i = 0; i < items.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = parse_real(field, items[i]);
  return v;
}

std::string join(const Eigen::VectorXd& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += format_real(v[i]);
  }
  return out;
}

bool has(const std::vector<Algorithm>& algs, Algorithm a) {
  return std::find(algs.begin(), algs.end(), a) != algs.end();
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

template <class Params, class Cost>
std::vector<Eigen::Index> best_permutation(Eigen::Index m, Cost cost) {
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(m));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<Eigen::Index> best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) c += cost(perm[static_cast<std::size_t>(j)], j);
    if (c < best_cost) {
      best_cost = c;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::EM5: return "EM5";
    case Algorithm::OL1: return "OL1";
    case Algorithm::OL06: return "OL06";
    case Algorithm::OL06a: return "OL06a";
    case Algorithm::TITT: return "TITT";
  }
  return "?";
}

Algorithm parse_algorithm(std::string_view s) {
  for (auto a : {Algorithm::EM5, Algorithm::OL1, Algorithm::OL06,
                 Algorithm::OL06a, Algorithm::TITT})
    if (to_string(a) == s) return a;
  throw ConfigError("algorithms", "config: unknown algorithm '" +
                                      std::string(s) + "'");
}

std::size_t ExperimentConfig::effective_warmup() const {
  if (warmup) return *warmup;
  return model == ModelKind::Regmix ? 20 : 10;
}

void ExperimentConfig::validate() const {
  if (model == ModelKind::Poisson) {
    if (!poisson_truth)
      throw ConfigError("truth_lambda",
                        "config: poisson model needs truth_omega and truth_lambda");
    try {
      poisson_truth->validate();
    } catch (const std::exception& e) {
      throw ConfigError("truth_omega", std::string("config: invalid truth: ") + e.what());
    }
  } else if (generator != "flexmix") {
    throw ConfigError("generator", "config: unknown generator '" + generator + "'");
  }
  if (n == 0) throw ConfigError("n", "config: n must be >= 1");
  if (replications == 0)
    throw ConfigError("replications", "config: replications must be >= 1");
  if (algorithms.empty())
    throw ConfigError("algorithms", "config: no algorithms requested");
  if (model == ModelKind::Regmix && has(algorithms, Algorithm::TITT))
    throw ConfigError("algorithms",
                      "config: TITT needs the complete-data information, only "
                      "available for the poisson model");
  if (!(averaging_start_fraction > 0.0 && averaging_start_fraction < 1.0))
    throw ConfigError("averaging_start_fraction",
                      "config: averaging_start_fraction must lie in (0,1)");
  if (!(failure_rate_threshold >= 0.0 && failure_rate_threshold <= 1.0))
    throw ConfigError("failure_rate_threshold",
                      "config: failure_rate_threshold must lie in [0,1]");
  const std::size_t w = effective_warmup();
  if (w > n) throw ConfigError("warmup", "config: warmup exceeds n");
  if (has(algorithms, Algorithm::OL06a) &&
      averaging_start_index(n, averaging_start_fraction) <= w)
    throw ConfigError("averaging_start_fraction",
                      "config: averaging would start inside the warmup block");
  try {
    StepSchedule(titt_gamma0, titt_alpha);
  } catch (const std::exception& e) {
    throw ConfigError("titt_alpha", std::string("config: ") + e.what());
  }
  const Eigen::Index m = model == ModelKind::Poisson ? poisson_truth->m() : 2;
  const Eigen::Index d = 3;
  if (theta0_omega) {
    if (theta0_omega->size() != m)
      throw ConfigError("theta0_omega", "config: theta0_omega has wrong length");
    if ((theta0_omega->array() <= 0.0).any() ||
        std::fabs(theta0_omega->sum() - 1.0) > 1e-9)
      throw ConfigError("theta0_omega",
                        "config: theta0_omega must be positive and sum to 1");
  }
  if (model == ModelKind::Poisson) {
    if (theta0_lambda && (theta0_lambda->size() != m ||
                          (theta0_lambda->array() <= 0.0).any()))
      throw ConfigError("theta0_lambda",
                        "config: theta0_lambda needs m positive entries");
    if (theta0_beta || theta0_sigma2)
      throw ConfigError("theta0_beta",
                        "config: theta0_beta/theta0_sigma2 apply to regmix only");
  } else {
    if (theta0_lambda)
      throw ConfigError("theta0_lambda",
                        "config: theta0_lambda applies to poisson only");
    if (theta0_beta && theta0_beta->size() != m * d)
      throw ConfigError("theta0_beta", "config: theta0_beta needs m*d entries");
    if (theta0_sigma2 && (theta0_sigma2->size() != m ||
                          (theta0_sigma2->array() <= 0.0).any()))
      throw ConfigError("theta0_sigma2",
                        "config: theta0_sigma2 needs m positive entries");
    if ((!theta0_beta || !theta0_sigma2) && w < static_cast<std::size_t>(d) + 1)
      throw ConfigError("warmup",
                        "config: the default regmix start needs warmup >= 4");
  }
}

ExperimentConfig parse_config(std::istream& is) {
  ExperimentConfig cfg;
  std::optional<Eigen::VectorXd> truth_omega, truth_lambda;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("", "config line " + std::to_string(lineno) +
                                ": expected 'key = value'");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key == "model") {
      if (value == "poisson") cfg.model = ModelKind::Poisson;
      else if (value == "regmix") cfg.model = ModelKind::Regmix;
      else throw ConfigError(key, "config: model must be poisson or regmix");
    } else if (key == "truth_omega") {
      truth_omega = parse_vector(key, value);
    } else if (key == "truth_lambda") {
      truth_lambda = parse_vector(key, value);
    } else if (key == "generator") {
      cfg.generator = value;
    } else if (key == "n") {
      cfg.n = parse_unsigned(key, value);
    } else if (key == "replications") {
      cfg.replications = parse_unsigned(key, value);
    } else if (key == "algorithms") {
      cfg.algorithms.clear();
      for (const auto& a : split_list(value)) {
        const Algorithm alg = parse_algorithm(a);
        if (!has(cfg.algorithms, alg)) cfg.algorithms.push_back(alg);
      }
    } else if (key == "theta0_omega") {
      cfg.theta0_omega = parse_vector(key, value);
    } else if (key == "theta0_lambda") {
      cfg.theta0_lambda = parse_vector(key, value);
    } else if (key == "theta0_beta") {
      cfg.theta0_beta = parse_vector(key, value);
    } else if (key == "theta0_sigma2") {
      cfg.theta0_sigma2 = parse_vector(key, value);
    } else if (key == "warmup") {
      cfg.warmup = parse_unsigned(key, value);
    } else if (key == "base_seed") {
      cfg.base_seed = parse_unsigned(key, value);
    } else if (key == "averaging_start_fraction") {
      cfg.averaging_start_fraction = parse_real(key, value);
    } else if (key == "output_path") {
      cfg.output_path = value;
    } else if (key == "failure_rate_threshold") {
      cfg.failure_rate_threshold = parse_real(key, value);
    } else if (key == "asymptotic_n") {
      cfg.asymptotic_n = parse_unsigned(key, value);
    } else if (key == "retention") {
      if (value == "final") cfg.retention = Retention::final_only();
      else if (value == "full") cfg.retention = Retention::full();
      else if (value.rfind("thin:", 0) == 0) {
        const auto k = parse_unsigned(key, value.substr(5));
        if (k == 0) throw ConfigError(key, "config: thinning interval must be >= 1");
        cfg.retention = Retention::thinned(k);
      } else {
        throw ConfigError(key, "config: retention must be final, full or thin:K");
      }
    } else if (key == "titt_gamma0") {
      cfg.titt_gamma0 = parse_real(key, value);
    } else if (key == "titt_alpha") {
      cfg.titt_alpha = parse_real(key, value);
    } else {
      throw ConfigError(key, "config: unknown key '" + key + "'");
    }
  }
  if (truth_omega || truth_lambda) {
    if (!truth_omega || !truth_lambda)
      throw ConfigError("truth_omega",
                        "config: truth_omega and truth_lambda go together");
    cfg.poisson_truth = poisson::Params{*truth_omega, *truth_lambda};
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open config file '" + path + "'");
  return parse_config(in);
}

std::vector<std::pair<std::string, std::string>> echo_config(
    const ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  out.emplace_back("model", cfg.model == ModelKind::Poisson ? "poisson" : "regmix");
  if (cfg.model == ModelKind::Poisson) {
    out.emplace_back("truth_omega", join(cfg.poisson_truth->omega));
    out.emplace_back("truth_lambda", join(cfg.poisson_truth->lambda));
  } else {
    out.emplace_back("generator", cfg.generator);
  }
  out.emplace_back("n", std::to_string(cfg.n));
  out.emplace_back("replications", std::to_string(cfg.replications));
  std::string algs;
  for (auto a : cfg.algorithms) {
    if (!algs.empty()) algs += ",";
    algs += to_string(a);
  }
  out.emplace_back("algorithms", algs);
  if (cfg.theta0_omega) out.emplace_back("theta0_omega", join(*cfg.theta0_omega));
  if (cfg.theta0_lambda) out.emplace_back("theta0_lambda", join(*cfg.theta0_lambda));
  if (cfg.theta0_beta) out.emplace_back("theta0_beta", join(*cfg.theta0_beta));
  if (cfg.theta0_sigma2) out.emplace_back("theta0_sigma2", join(*cfg.theta0_sigma2));
  out.emplace_back("warmup", std::to_string(cfg.effective_warmup()));
  out.emplace_back("base_seed", std::to_string(cfg.base_seed));
  out.emplace_back("averaging_start_fraction",
                   format_real(cfg.averaging_start_fraction));
  out.emplace_back("failure_rate_threshold", format_real(cfg.failure_rate_threshold));
  out.emplace_back("asymptotic_n", std::to_string(cfg.asymptotic_n));
  switch (cfg.retention.kind) {
    case Retention::Kind::Full: out.emplace_back("retention", "full"); break;
    case Retention::Kind::Thinned:
      out.emplace_back("retention", "thin:" + std::to_string(cfg.retention.every));
      break;
    case Retention::Kind::FinalOnly: out.emplace_back("retention", "final"); break;
  }
  out.emplace_back("titt_gamma0", format_real(cfg.titt_gamma0));
  out.emplace_back("titt_alpha", format_real(cfg.titt_alpha));
  return out;
}

QuantileSummary summarize_quantiles(std::span<const double> samples) {
  std::vector<double> x;
  x.reserve(samples.size());
  QuantileSummary q;
  for (double v : samples) {
    if (std::isnan(v)) ++q.n_nan;
    else x.push_back(v);
  }
  if (x.empty())
    throw std::invalid_argument("summarize_quantiles: no finite samples");
  std::sort(x.begin(), x.end());
  q.n_valid = x.size();
  auto at = [&](double p) {
    const double h = p * static_cast<double>(x.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, x.size() - 1);
    return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
  };
  q.q25 = at(0.25);
  q.median = at(0.5);
  q.q75 = at(0.75);
  const double iqr = q.q75 - q.q25;
  const double lo_fence = q.q25 - 1.5 * iqr;
  const double hi_fence = q.q75 + 1.5 * iqr;
  q.min_whisker = *std::find_if(x.begin(), x.end(),
                                [&](double v) { return v >= lo_fence; });
  q.max_whisker = *std::find_if(x.rbegin(), x.rend(),
                                [&](double v) { return v <= hi_fence; });
  return q;
}

double asymptotic_iqr(double sd, std::size_t n) {
  return 1.349 * sd / std::sqrt(static_cast<double>(n));
}

regmix::Params align_to_truth(const regmix::Params& est,
                              const regmix::Params& truth) {
  const auto perm = best_permutation<regmix::Params>(
      est.m(), [&](Eigen::Index from, Eigen::Index to) {
        return (est.beta.row(from) - truth.beta.row(to)).norm();
      });
  regmix::Params out = est;
  for (Eigen::Index j = 0; j < est.m(); ++j) {
    const Eigen::Index src = perm[static_cast<std::size_t>(j)];
    out.omega[j] = est.omega[src];
    out.beta.row(j) = est.beta.row(src);
    out.sigma2[j] = est.sigma2[src];
  }
  return out;
}

poisson::Params align_to_truth(const poisson::Params& est,
                               const poisson::Params& truth) {
  const auto perm = best_permutation<poisson::Params>(
      est.m(), [&](Eigen::Index from, Eigen::Index to) {
        return std::fabs(est.lambda[from] - truth.lambda[to]);
      });
  poisson::Params out = est;
  for (Eigen::Index j = 0; j < est.m(); ++j) {
    const Eigen::Index src = perm[static_cast<std::size_t>(j)];
    out.omega[j] = est.omega[src];
    out.lambda[j] = est.lambda[src];
  }
  return out;
}

std::uint64_t data_hash(std::span<const poisson::Count> data) {
  return fnv1a(kFnvOffset, data.data(), data.size_bytes());
}

std::uint64_t data_hash(std::span<const regmix::Observation> data) {
  std::uint64_t h = kFnvOffset;
  for (const auto& o : data) {
    h = fnv1a(h, &o.r, sizeof o.r);
    h = fnv1a(h, o.z.data(), sizeof(double) * static_cast<std::size_t>(o.z.size()));
  }
  return h;
}

regmix::Params default_regmix_start(std::span<const regmix::Observation> data,
                                    std::size_t warmup, Eigen::Index m) {
  if (data.empty()) throw InsufficientDataError("regmix start: empty data");
  const Eigen::Index d = data.front().z.size();
  const std::size_t k = std::min(std::max<std::size_t>(warmup, static_cast<std::size_t>(d) + 1),
                                 data.size());
  Eigen::MatrixXd z(static_cast<Eigen::Index>(k), d);
  Eigen::VectorXd r(static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < k; ++i) {
    z.row(static_cast<Eigen::Index>(i)) = data[i].z.transpose();
    r[static_cast<Eigen::Index>(i)] = data[i].r;
  }
  const Eigen::VectorXd b = z.colPivHouseholderQr().solve(r);
  const double rss = (r - z * b).squaredNorm();
  const auto dof = static_cast<double>(k > static_cast<std::size_t>(d)
                                           ? k - static_cast<std::size_t>(d)
                                           : k);
  double var = rss / dof;
  if (!(var > 0.0) || !std::isfinite(var)) var = 1.0;
  regmix::Params p{Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m)),
                   Eigen::MatrixXd(m, d), Eigen::VectorXd::Constant(m, var)};
  for (Eigen::Index j = 0; j < m; ++j) {
    const double f = m == 1 ? 1.0 : 0.9 + 0.2 * static_cast<double>(j) /
                                              static_cast<double>(m - 1);
    p.beta.row(j) = f * b.transpose();
  }
  return p;
}

poisson::Params default_poisson_start(std::span<const poisson::Count> data,
                                      std::size_t warmup, Eigen::Index m) {
  if (data.empty()) throw InsufficientDataError("poisson start: empty data");
  const std::size_t k = std::min(std::max<std::size_t>(warmup, 1), data.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < k; ++i) mean += static_cast<double>(data[i]);
  mean = std::max(mean / static_cast<double>(k), 0.5);
  poisson::Params p{Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m)),
                    Eigen::VectorXd(m)};
  for (Eigen::Index j = 0; j < m; ++j)
    p.lambda[j] = mean * (m == 1 ? 1.0
                                 : 0.5 + static_cast<double>(j) /
                                             static_cast<double>(m - 1));
  return p;
}

double ExperimentResult::failure_rate() const {
  if (rows.empty()) return 0.0;
  const auto failed = std::count_if(rows.begin(), rows.end(),
                                    [](const ReplicationRow& r) { return r.failed; });
  return static_cast<double>(failed) / static_cast<double>(rows.size());
}

namespace {

ReplicationRow failed_row(std::size_t replica, Algorithm a, std::uint64_t hash,
                          Eigen::Index dim, std::size_t step) {
  return {replica, a, true, step, hash, Eigen::VectorXd::Constant(dim, kNaN)};
}

// Runs the requested algorithms on one dataset. `align` maps a full-layout
// parameter vector to its truth-aligned version.
template <class Obs, class Align>
std::vector<ReplicationRow> run_algorithms(const ExperimentConfig& cfg,
                                           const ModelSpec<Obs>& model,
                                           std::span<const Obs> data,
                                           const ParamVector& theta0,
                                           std::size_t replica,
                                           std::uint64_t hash, Align align,
                                           const poisson::Params* poisson_start) {
  const auto dim = static_cast<Eigen::Index>(model.param_dim());
  const std::size_t warmup = cfg.effective_warmup();
  std::vector<ReplicationRow> rows;
  std::optional<RunResult> slow_run;  // shared by OL06 and OL06a

  auto online = [&](double alpha, bool averaged) {
    RunOptions opt;
    opt.schedule = StepSchedule(1.0, alpha);
    opt.warmup = warmup;
    if (averaged)
      opt.averaging_start = averaging_start_index(data.size(), cfg.averaging_start_fraction);
    return run_online_em(model, data, theta0, opt);
  };

  for (Algorithm a : cfg.algorithms) {
    ReplicationRow row{replica, a, false, 0, hash, {}};
    switch (a) {
      case Algorithm::EM5: {
        try {
          row.estimate = align(batch_em(model, data, theta0, kBatchIterations));
        } catch (const DomainError&) {
          row = failed_row(replica, a, hash, dim, 0);
        }
        break;
      }
      case Algorithm::OL1: {
        auto res = online(1.0, false);
        if (res.failed) row = failed_row(replica, a, hash, dim, res.failed_step);
        else row.estimate = align(res.final_theta);
        break;
      }
      case Algorithm::OL06:
      case Algorithm::OL06a: {
        if (!slow_run) slow_run = online(0.6, has(cfg.algorithms, Algorithm::OL06a));
        if (slow_run->failed) {
          row = failed_row(replica, a, hash, dim, slow_run->failed_step);
        } else {
          row.estimate = align(a == Algorithm::OL06 ? slow_run->final_theta
                                                    : *slow_run->averaged_theta);
        }
        break;
      }
      case Algorithm::TITT: {
        if constexpr (std::is_same_v<Obs, poisson::Count>) {
          auto res = run_titterington_poisson(
              data, *poisson_start, StepSchedule(cfg.titt_gamma0, cfg.titt_alpha));
          if (res.failed) row = failed_row(replica, a, hash, dim, res.failed_step);
          else row.estimate = align(res.final_theta);
        }
        break;
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<ReplicationRow> run_replica(const ExperimentConfig& cfg,
                                        std::size_t replica) {
  const SeededStream stream{cfg.base_seed, replica};
  const std::size_t warmup = cfg.effective_warmup();
  if (cfg.model == ModelKind::Poisson) {
    const auto& truth = *cfg.poisson_truth;
    const auto data = strip_labels(gen_poisson_mixture(cfg.n, truth, stream));
    const auto model = poisson::model(truth.m());
    poisson::Params start = default_poisson_start(data, warmup, truth.m());
    if (cfg.theta0_omega) start.omega = *cfg.theta0_omega;
    if (cfg.theta0_lambda) start.lambda = *cfg.theta0_lambda;
    auto align = [&](const ParamVector& p) -> Eigen::VectorXd {
      return poisson::to_param(align_to_truth(poisson::from_param(p), truth)).values();
    };
    return run_algorithms<poisson::Count>(cfg, model, data, poisson::to_param(start),
                                          replica, data_hash(data), align, &start);
  }
  const regmix::Params truth = flexmix_truth();
  const Eigen::Index m = truth.m();
  const Eigen::Index d = truth.d();
  const auto data = strip_labels(gen_regmix_flexmix(cfg.n, stream));
  const auto model = regmix::model(m, d);
  regmix::Params start = default_regmix_start(data, warmup, m);
  if (cfg.theta0_omega) start.omega = *cfg.theta0_omega;
  if (cfg.theta0_beta)
    for (Eigen::Index j = 0; j < m; ++j)
      start.beta.row(j) = cfg.theta0_beta->segment(j * d, d).transpose();
  if (cfg.theta0_sigma2) start.sigma2 = *cfg.theta0_sigma2;
  auto align = [&](const ParamVector& p) -> Eigen::VectorXd {
    return regmix::to_param(align_to_truth(regmix::from_param(p, m, d), truth))
        .values();
  };
  return run_algorithms<regmix::Observation>(cfg, model, data,
                                             regmix::to_param(start), replica,
                                             data_hash(data), align, nullptr);
}

}  // namespace

std::vector<BetaBlockSummary> beta_block_summaries(
    const Eigen::MatrixXd& information, Eigen::Index m, Eigen::Index d) {
  std::vector<BetaBlockSummary> out;
  for (Eigen::Index j = 0; j < m; ++j) {
    const Eigen::Index o = regmix::free_beta_index(m, d, j, 0);
    BetaBlockSummary s;
    s.covariance = invert_information(information.block(o, o, d, d));
    auto summary = summarize_covariance(s.covariance);
    s.std_devs = std::move(summary.std_devs);
    s.correlations = std::move(summary.correlations);
    out.push_back(std::move(s));
  }
  return out;
}

Eigen::VectorXd reference_std_devs(const ExperimentConfig& cfg,
                                   std::size_t draws) {
  if (cfg.model == ModelKind::Poisson) {
    const auto& truth = *cfg.poisson_truth;
    const Eigen::Index m = truth.m();
    const auto model = poisson::model(m);
    const auto info = empirical_information(
        model, exact_poisson_expectation(truth), poisson::to_param(truth));
    const Eigen::MatrixXd cov = invert_information(info.matrix);
    Eigen::VectorXd sd(2 * m);
    for (Eigen::Index a = 0; a < m - 1; ++a) sd[a] = std::sqrt(cov(a, a));
    sd[m - 1] = m == 1 ? 0.0
                       : std::sqrt(cov.topLeftCorner(m - 1, m - 1).sum());
    for (Eigen::Index j = 0; j < m; ++j)
      sd[m + j] = std::sqrt(cov(m - 1 + j, m - 1 + j));
    return sd;
  }
  const regmix::Params truth = flexmix_truth();
  const Eigen::Index m = truth.m();
  const Eigen::Index d = truth.d();
  Eigen::VectorXd sd = Eigen::VectorXd::Constant(m + m * d + m, kNaN);
  if (draws == 0) return sd;
  const auto data = strip_labels(
      gen_regmix_flexmix(draws, {cfg.base_seed, kReferenceReplica}));
  const auto info = empirical_information(
      regmix::model(m, d),
      Expectation<regmix::Observation>::from_dataset(data),
      regmix::to_param(truth));
  const auto blocks = beta_block_summaries(info.matrix, m, d);
  for (Eigen::Index j = 0; j < m; ++j)
    sd.segment(m + j * d, d) = blocks[static_cast<std::size_t>(j)].std_devs;
  return sd;
}

std::vector<SummaryRow> summarize_rows(const std::vector<std::string>& labels,
                                       const Eigen::VectorXd& truth,
                                       const Eigen::VectorXd& reference_sd,
                                       std::size_t n,
                                       const std::vector<Algorithm>& algorithms,
                                       const std::vector<ReplicationRow>& rows) {
  std::vector<SummaryRow> out;
  for (Algorithm a : algorithms) {
    for (std::size_t k = 0; k < labels.size(); ++k) {
      const auto ki = static_cast<Eigen::Index>(k);
      std::vector<double> samples;
      for (const auto& r : rows)
        if (r.algorithm == a) samples.push_back(r.estimate[ki]);
      SummaryRow s;
      s.algorithm = a;
      s.parameter = labels[k];
      s.truth = truth[ki];
      try {
        s.quantiles = summarize_quantiles(samples);
      } catch (const std::invalid_argument&) {
        s.quantiles = {kNaN, kNaN, kNaN, kNaN, kNaN, 0, samples.size()};
      }
      s.reference_iqr = std::isnan(reference_sd[ki])
                            ? kNaN
                            : asymptotic_iqr(reference_sd[ki], n);
      out.push_back(std::move(s));
    }
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::size_t threads) {
  cfg.validate();
  ExperimentResult result;
  if (cfg.model == ModelKind::Poisson) {
    result.labels = poisson::param_layout(cfg.poisson_truth->m())->labels();
    result.truth = poisson::to_param(*cfg.poisson_truth).values();
  } else {
    const auto truth = flexmix_truth();
    result.labels = regmix::param_layout(truth.m(), truth.d())->labels();
    result.truth = regmix::to_param(truth).values();
  }

  std::vector<std::vector<ReplicationRow>> per_replica(cfg.replications);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < cfg.replications; r = next++)
      per_replica[r] = run_replica(cfg, r);
  };
  threads = std::max<std::size_t>(1, std::min(threads, cfg.replications));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& rows : per_replica)
    for (auto& row : rows) result.rows.push_back(std::move(row));

  result.reference_sd = reference_std_devs(cfg, cfg.asymptotic_n);
  result.summary = summarize_rows(result.labels, result.truth, result.reference_sd,
                                  cfg.n, cfg.algorithms, result.rows);
  return result;
}

std::string csv_quote(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos)
    return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string format_real(double v) {
  if (std::isnan(v)) return "NaN";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_results_csv(std::ostream& os, const ExperimentResult& result) {
  os << "replica,algorithm,failed,failed_step,data_hash";
  for (const auto& l : result.labels) os << ',' << csv_quote(l);
  os << '\n';
  char hash[20];
  for (const auto& r : result.rows) {
    std::snprintf(hash, sizeof hash, "%016llx",
                  static_cast<unsigned long long>(r.data_hash));
    os << r.replica << ',' << to_string(r.algorithm) << ',' << (r.failed ? 1 : 0)
       << ',' << r.failed_step << ',' << hash;
    for (Eigen::Index k = 0; k < r.estimate.size(); ++k)
      os << ',' << format_real(r.estimate[k]);
    os << '\n';
  }
}

void write_summary_csv(std::ostream& os, const ExperimentResult& result) {
  os << "algorithm,parameter,truth,n_valid,n_failed,min_whisker,q25,median,q75,"
        "max_whisker,reference_iqr\n";
  for (const auto& s : result.summary) {
    const auto& q = s.quantiles;
    os << to_string(s.algorithm) << ',' << csv_quote(s.parameter) << ','
       << format_real(s.truth) << ',' << q.n_valid << ',' << q.n_nan << ','
       << format_real(q.min_whisker) << ',' << format_real(q.q25) << ','
       << format_real(q.median) << ',' << format_real(q.q75) << ','
       << format_real(q.max_whisker) << ',' << format_real(s.reference_iqr)
       << '\n';
  }
}

void write_metadata_csv(std::ostream& os, const ExperimentConfig& cfg) {
  os << "key,value\n";
  os << "version," << csv_quote(kVersion) << '\n';
  os << "generator," << csv_quote(kGeneratorIdentity) << '\n';
  os << "uniform_method," << csv_quote(kUniformMethod) << '\n';
  os << "normal_method," << csv_quote(kNormalMethod) << '\n';
  os << "poisson_method," << csv_quote(kPoissonMethod) << '\n';
  for (const auto& [k, v] : echo_config(cfg))
    os << "config." << k << ',' << csv_quote(v) << '\n';
}

namespace {

std::vector<std::string> parse_csv_record(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  out.push_back(std::move(cell));
  return out;
}

}  // namespace

std::vector<ReplicationRow> read_results_csv(std::istream& is,
                                             std::vector<std::string>* labels) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("results file is empty");
  const auto header = parse_csv_record(line);
  constexpr std::size_t kFixed = 5;
  if (header.size() < kFixed || header[0] != "replica")
    throw std::runtime_error("results file has an unexpected header");
  if (labels) labels->assign(header.begin() + kFixed, header.end());
  std::vector<ReplicationRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = parse_csv_record(line);
    if (cells.size() != header.size())
      throw std::runtime_error("results row has wrong column count");
    ReplicationRow r;
    r.replica = std::stoull(cells[0]);
    r.algorithm = parse_algorithm(cells[1]);
    r.failed = cells[2] == "1";
    r.failed_step = std::stoull(cells[3]);
    r.data_hash = std::stoull(cells[4], nullptr, 16);
    r.estimate.resize(static_cast<Eigen::Index>(cells.size() - kFixed));
    for (std::size_t k = kFixed; k < cells.size(); ++k)
      r.estimate[static_cast<Eigen::Index>(k - kFixed)] =
          cells[k] == "NaN" ? kNaN : std::stod(cells[k]);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace oem
