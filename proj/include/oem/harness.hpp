#pragma once
// Replication-study runner behind the command-line tool.
//
// Config files are line oriented: `key = value`, `#` starts a comment, lists
// are comma separated. Recognised keys:
//
//   model                    poisson | regmix
//   truth_omega, truth_lambda    Poisson truth (lists)
//   generator                regmix design, only `flexmix`
//   n, replications
//   algorithms               subset of EM5, OL1, OL06, OL06a, TITT
//   theta0_omega, theta0_lambda  Poisson start (default: see below)
//   theta0_beta, theta0_sigma2   regmix start, beta row-major (default: see
//                            below; theta0_omega is shared)
//   warmup                   default 20 (regmix), 10 (poisson)
//   base_seed
//   averaging_start_fraction default 0.5
//   output_path              overridden by --out
//   failure_rate_threshold   default 0.25
//   asymptotic_n             draws used for reference std devs (regmix),
//                            default 1000000; 0 disables
//   retention                final | full | thin:K (fit only)
//   titt_gamma0, titt_alpha  Titterington schedule, default 1, 1
//
// Default starting points are reconstructions, not values from the
// original study: regmix uses omega uniform, beta_j the least-squares fit on
// the warmup block scaled by factors spread over [0.9, 1.1], sigma2_j the
// residual variance of that fit. Poisson uses omega uniform and lambda_j the
// warmup-block mean scaled by factors spread over [0.5, 1.5].

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "oem/estimators.hpp"
#include "oem/poisson.hpp"
#include "oem/regmix.hpp"

namespace oem {

inline constexpr std::string_view kVersion = "0.1.0";

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error(what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

enum class ModelKind { Poisson, Regmix };
enum class Algorithm { EM5, OL1, OL06, OL06a, TITT };

std::string_view to_string(Algorithm a);
Algorithm parse_algorithm(std::string_view s);

struct ExperimentConfig {
  ModelKind model = ModelKind::Regmix;
  std::optional<poisson::Params> poisson_truth;
  std::string generator = "flexmix";
  std::size_t n = 100;
  std::size_t replications = 1;
  std::vector<Algorithm> algorithms{Algorithm::EM5, Algorithm::OL1,
                                    Algorithm::OL06, Algorithm::OL06a};
  std::optional<Eigen::VectorXd> theta0_omega;
  std::optional<Eigen::VectorXd> theta0_lambda;
  std::optional<Eigen::VectorXd> theta0_beta;
  std::optional<Eigen::VectorXd> theta0_sigma2;
  std::optional<std::size_t> warmup;
  std::uint64_t base_seed = 1;
  double averaging_start_fraction = 0.5;
  std::string output_path = "out";
  double failure_rate_threshold = 0.25;
  std::size_t asymptotic_n = 1'000'000;
  Retention retention = Retention::final_only();
  double titt_gamma0 = 1.0;
  double titt_alpha = 1.0;

  std::size_t effective_warmup() const;
  // Throws ConfigError naming the offending field.
  void validate() const;
};

ExperimentConfig parse_config(std::istream& is);
ExperimentConfig load_config(const std::string& path);
// Canonical key = value echo of the configuration, one key per line.
std::vector<std::pair<std::string, std::string>> echo_config(
    const ExperimentConfig& cfg);

struct QuantileSummary {
  double min_whisker = 0.0;
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
  double max_whisker = 0.0;
  std::size_t n_valid = 0;
  std::size_t n_nan = 0;
};

// Quartiles by linear interpolation between order statistics; whiskers at
// the most extreme samples within 1.5 IQR of the box. NaNs are excluded and
// counted. Throws std::invalid_argument when no finite sample remains.
QuantileSummary summarize_quantiles(std::span<const double> samples);

// Interquartile range of N(0, sd^2 / n): 1.349 sd / sqrt(n).
double asymptotic_iqr(double sd, std::size_t n);

// Reorders mixture components to minimise the total distance to the truth
// (beta rows for regmix, intensities for Poisson) over all permutations.
regmix::Params align_to_truth(const regmix::Params& est,
                              const regmix::Params& truth);
poisson::Params align_to_truth(const poisson::Params& est,
                               const poisson::Params& truth);

// 64-bit FNV-1a over the raw bytes of a dataset.
std::uint64_t data_hash(std::span<const poisson::Count> data);
std::uint64_t data_hash(std::span<const regmix::Observation> data);

regmix::Params default_regmix_start(std::span<const regmix::Observation> data,
                                    std::size_t warmup, Eigen::Index m);
poisson::Params default_poisson_start(std::span<const poisson::Count> data,
                                      std::size_t warmup, Eigen::Index m);

struct ReplicationRow {
  std::size_t replica = 0;
  Algorithm algorithm = Algorithm::EM5;
  bool failed = false;
  std::size_t failed_step = 0;
  std::uint64_t data_hash = 0;
  Eigen::VectorXd estimate;  // full parameter layout, NaN when failed
};

struct SummaryRow {
  Algorithm algorithm = Algorithm::EM5;
  std::string parameter;
  double truth = 0.0;
  QuantileSummary quantiles;
  double reference_iqr = 0.0;  // NaN when unavailable
};

struct ExperimentResult {
  std::vector<std::string> labels;
  Eigen::VectorXd truth;
  Eigen::VectorXd reference_sd;  // NaN where unavailable
  std::vector<ReplicationRow> rows;  // replica-major, then config order
  std::vector<SummaryRow> summary;

  double failure_rate() const;
};

// Runs every replica (in parallel across `threads` workers) and summarises.
// Output is independent of the thread count.
ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                std::size_t threads = 1);

std::vector<SummaryRow> summarize_rows(const std::vector<std::string>& labels,
                                       const Eigen::VectorXd& truth,
                                       const Eigen::VectorXd& reference_sd,
                                       std::size_t n,
                                       const std::vector<Algorithm>& algorithms,
                                       const std::vector<ReplicationRow>& rows);

// Asymptotic standard deviations per free parameter (full layout; NaN where
// not computed). Poisson: exact-summation information, full inverse.
// Regmix: beta coordinates only, from the inverse of each beta_j block of
// the empirical information at the truth over `draws` simulated points.
Eigen::VectorXd reference_std_devs(const ExperimentConfig& cfg,
                                   std::size_t draws);

struct BetaBlockSummary {
  Eigen::MatrixXd covariance;
  Eigen::VectorXd std_devs;
  Eigen::MatrixXd correlations;
};

// Per-component beta_j block of the empirical information, inverted on its
// own.
std::vector<BetaBlockSummary> beta_block_summaries(
    const Eigen::MatrixXd& information, Eigen::Index m, Eigen::Index d);

std::string csv_quote(std::string_view field);
std::string format_real(double v);

void write_results_csv(std::ostream& os, const ExperimentResult& result);
void write_summary_csv(std::ostream& os, const ExperimentResult& result);
void write_metadata_csv(std::ostream& os, const ExperimentConfig& cfg);

// Reads results.csv back; used to check that summaries are reproducible.
std::vector<ReplicationRow> read_results_csv(std::istream& is,
                                             std::vector<std::string>* labels);

}  // namespace oem
