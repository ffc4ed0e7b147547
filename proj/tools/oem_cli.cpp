// oem: simulate data, fit one run, run replication studies, and compute
// asymptotic reports for the Poisson and regression mixtures.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "oem/asymptotics.hpp"
#include "oem/estimators.hpp"
#include "oem/harness.hpp"
#include "oem/simgen.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitFailure = 2;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
};

oem::ExperimentConfig load(const Common& c) {
  auto cfg = oem::load_config(c.config);
  if (c.seed) cfg.base_seed = *c.seed;
  if (c.out) cfg.output_path = *c.out;
  return cfg;
}

std::ofstream open_output(const fs::path& dir, const std::string& name) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  std::ofstream out(dir / name, std::ios::binary);
  if (!out) throw IoError("cannot write " + (dir / name).string());
  return out;
}

void print_params(const std::string& title, const std::vector<std::string>& labels,
                  const Eigen::VectorXd& v) {
  std::cout << title << '\n';
  for (std::size_t k = 0; k < labels.size(); ++k)
    std::cout << "  " << labels[k] << " = "
              << oem::format_real(v[static_cast<Eigen::Index>(k)]) << '\n';
}

int cmd_simulate(const Common& c, std::size_t replica) {
  const auto cfg = load(c);
  const oem::SeededStream stream{cfg.base_seed, replica};
  auto out = open_output(cfg.output_path, "data.csv");
  if (cfg.model == oem::ModelKind::Poisson)
    oem::write_poisson_csv(out, oem::gen_poisson_mixture(cfg.n, *cfg.poisson_truth, stream));
  else
    oem::write_regmix_csv(out, oem::gen_regmix_flexmix(cfg.n, stream));
  if (!out) throw IoError("error writing data.csv");
  std::cout << "wrote " << (fs::path(cfg.output_path) / "data.csv").string() << '\n';
  return 0;
}

template <class Obs>
int fit_with(const oem::ExperimentConfig& cfg, const oem::ModelSpec<Obs>& model,
             std::span<const Obs> data, const oem::ParamVector& theta0,
             oem::Algorithm alg, bool write_files,
             const oem::poisson::Params* poisson_start) {
  const auto labels = model.param_layout->labels();
  oem::RunResult res{theta0, std::nullopt, std::nullopt, false, 0, {}};
  if (alg == oem::Algorithm::EM5) {
    res.final_theta = oem::batch_em(model, data, theta0, 5);
  } else if (alg == oem::Algorithm::TITT) {
    if constexpr (std::is_same_v<Obs, oem::poisson::Count>) {
      res = oem::run_titterington_poisson(
          data, *poisson_start, oem::StepSchedule(cfg.titt_gamma0, cfg.titt_alpha));
    }
  } else {
    oem::RunOptions opt;
    opt.schedule = oem::StepSchedule(1.0, alg == oem::Algorithm::OL1 ? 1.0 : 0.6);
    opt.warmup = cfg.effective_warmup();
    opt.retention = cfg.retention;
    if (alg == oem::Algorithm::OL06a)
      opt.averaging_start =
          oem::averaging_start_index(data.size(), cfg.averaging_start_fraction);
    res = oem::run_online_em(model, data, theta0, opt);
  }
  if (res.failed) {
    std::cerr << "oem: run failed at step " << res.failed_step << ": " << res.failure
              << '\n';
    return kExitFailure;
  }
  print_params("final:", labels, res.final_theta.values());
  if (res.averaged_theta) print_params("averaged:", labels, res.averaged_theta->values());

  if (write_files && res.trajectory) {
    auto out = open_output(cfg.output_path, "trajectory.csv");
    out << "n,gamma";
    for (const auto& l : labels) out << ',' << oem::csv_quote(l);
    out << '\n';
    for (const auto& st : res.trajectory->steps) {
      out << st.n << ',' << oem::format_real(st.gamma);
      for (Eigen::Index k = 0; k < st.theta.size(); ++k)
        out << ',' << oem::format_real(st.theta[k]);
      out << '\n';
    }
    if (!out) throw IoError("error writing trajectory.csv");
  }
  return 0;
}

int cmd_fit(const Common& c, std::size_t replica, const std::string& algorithm) {
  const auto cfg = load(c);
  const auto alg = oem::parse_algorithm(algorithm);
  const oem::SeededStream stream{cfg.base_seed, replica};
  const std::size_t warmup = cfg.effective_warmup();
  if (cfg.model == oem::ModelKind::Poisson) {
    const auto& truth = *cfg.poisson_truth;
    const auto data = oem::strip_labels(oem::gen_poisson_mixture(cfg.n, truth, stream));
    auto start = oem::default_poisson_start(data, warmup, truth.m());
    if (cfg.theta0_omega) start.omega = *cfg.theta0_omega;
    if (cfg.theta0_lambda) start.lambda = *cfg.theta0_lambda;
    return fit_with<oem::poisson::Count>(cfg, oem::poisson::model(truth.m()), data,
                                         oem::poisson::to_param(start), alg,
                                         c.out.has_value(), &start);
  }
  if (alg == oem::Algorithm::TITT)
    throw oem::ConfigError("algorithm", "TITT is only available for the poisson model");
  const auto truth = oem::flexmix_truth();
  const Eigen::Index m = truth.m(), d = truth.d();
  const auto data = oem::strip_labels(oem::gen_regmix_flexmix(cfg.n, stream));
  auto start = oem::default_regmix_start(data, warmup, m);
  if (cfg.theta0_omega) start.omega = *cfg.theta0_omega;
  if (cfg.theta0_beta)
    for (Eigen::Index j = 0; j < m; ++j)
      start.beta.row(j) = cfg.theta0_beta->segment(j * d, d).transpose();
  if (cfg.theta0_sigma2) start.sigma2 = *cfg.theta0_sigma2;
  return fit_with<oem::regmix::Observation>(cfg, oem::regmix::model(m, d), data,
                                            oem::regmix::to_param(start), alg,
                                            c.out.has_value(), nullptr);
}

int cmd_experiment(const Common& c) {
  const auto cfg = load(c);
  const fs::path dir = cfg.output_path;
  // Fail on an unwritable destination before spending time on the study.
  auto results = open_output(dir, "results.csv");
  auto summary = open_output(dir, "summary.csv");
  auto metadata = open_output(dir, "metadata.csv");

  const auto res = oem::run_experiment(cfg, c.threads);
  oem::write_results_csv(results, res);
  oem::write_summary_csv(summary, res);
  oem::write_metadata_csv(metadata, cfg);
  if (!results || !summary || !metadata) throw IoError("error writing outputs");

  const double rate = res.failure_rate();
  std::cout << "replications: " << cfg.replications << ", failure rate: "
            << oem::format_real(rate) << '\n';
  if (rate > cfg.failure_rate_threshold) {
    std::cerr << "oem: failure rate " << rate << " exceeds threshold "
              << cfg.failure_rate_threshold << '\n';
    return kExitFailure;
  }
  return 0;
}

int cmd_asymptotics(const Common& c, double zeta) {
  const auto cfg = load(c);
  auto out = open_output(cfg.output_path, "asymptotics.csv");
  if (cfg.model == oem::ModelKind::Poisson) {
    const auto& truth = *cfg.poisson_truth;
    const auto report = oem::build_report(oem::poisson::model(truth.m()),
                                          oem::exact_poisson_expectation(truth),
                                          oem::poisson::to_param(truth), zeta);
    oem::write_report_csv(out, report);
    print_params("std devs of the averaged estimate (free parameters):",
                 report.labels, report.std_devs);
  } else {
    if (cfg.asymptotic_n == 0)
      throw oem::ConfigError("asymptotic_n", "asymptotics needs asymptotic_n > 0");
    const auto truth = oem::flexmix_truth();
    const Eigen::Index m = truth.m(), d = truth.d();
    const auto data = oem::strip_labels(oem::gen_regmix_flexmix(
        cfg.asymptotic_n, {cfg.base_seed, ~std::uint64_t{0}}));
    const auto pi = oem::Expectation<oem::regmix::Observation>::from_dataset(data);
    const auto model = oem::regmix::model(m, d);
    const auto theta = oem::regmix::to_param(truth);
    const auto info = oem::empirical_information(model, pi, theta);
    if (!info.positive_definite)
      throw oem::SingularMatrixError("information matrix is singular");
    const auto blocks = oem::beta_block_summaries(info.matrix, m, d);
    std::vector<std::string> labels;
    for (Eigen::Index k = 0; k < d; ++k) labels.push_back("z" + std::to_string(k));
    for (Eigen::Index j = 0; j < m; ++j) {
      const auto& b = blocks[static_cast<std::size_t>(j)];
      const std::string name = "beta[" + std::to_string(j) + "]";
      oem::write_matrix_csv(out, name + " std_devs", {"std_dev"}, labels,
                           b.std_devs.transpose());
      oem::write_matrix_csv(out, name + " correlations", labels, b.correlations);
      print_params(name + " std devs:", labels, b.std_devs);
    }
    std::vector<std::string> free_labels;
    const auto full = model.param_layout->labels();
    for (std::size_t i = 0; i < full.size(); ++i)
      if (i + 1 != static_cast<std::size_t>(m)) free_labels.push_back(full[i]);
    oem::write_matrix_csv(out, "information", free_labels, info.matrix);
  }
  if (!out) throw IoError("error writing asymptotics.csv");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online EM for latent-data models"};
  app.require_subcommand(1);
  Common common;
  std::size_t replica = 0;
  std::string algorithm = "OL06a";
  double zeta = 0.0;

  auto add_common = [&](CLI::App* sub, bool with_threads) {
    sub->add_option("--config", common.config, "config file")->required();
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--seed", common.seed, "base seed (overrides config)");
    if (with_threads)
      sub->add_option("--threads", common.threads, "worker threads")
          ->check(CLI::PositiveNumber);
  };
  auto* simulate = app.add_subcommand("simulate", "write one simulated dataset");
  add_common(simulate, false);
  simulate->add_option("--replica", replica, "replica index of the stream");
  auto* fit = app.add_subcommand("fit", "single run; prints final/averaged estimate");
  add_common(fit, false);
  fit->add_option("--replica", replica, "replica index of the stream");
  fit->add_option("--algorithm", algorithm, "EM5, OL1, OL06, OL06a or TITT");
  auto* experiment = app.add_subcommand("experiment", "replication study");
  add_common(experiment, true);
  auto* asymptotics = app.add_subcommand("asymptotics", "asymptotic covariance report");
  add_common(asymptotics, false);
  asymptotics->add_option("--zeta", zeta, "shift for the Lyapunov solution");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*simulate) return cmd_simulate(common, replica);
    if (*fit) return cmd_fit(common, replica, algorithm);
    if (*experiment) return cmd_experiment(common);
    if (*asymptotics) return cmd_asymptotics(common, zeta);
  } catch (const oem::ConfigError& e) {
    std::cerr << "oem: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "oem: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "oem: " << e.what() << '\n';
    return kExitFailure;
  }
  return 0;
}
