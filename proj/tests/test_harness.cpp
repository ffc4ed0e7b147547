#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "oem/harness.hpp"
#include "oem/simgen.hpp"

using namespace oem;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

std::string field_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<none>";
}

std::string results_text(const ExperimentResult& r) {
  std::ostringstream os;
  write_results_csv(os, r);
  return os.str();
}

std::string summary_text(const ExperimentResult& r) {
  std::ostringstream os;
  write_summary_csv(os, r);
  return os.str();
}

}  // namespace

TEST_CASE("config parsing") {
  const auto cfg = parse(
      "# comment line\n"
      "model = poisson   # trailing comment\n"
      "truth_omega = 0.4, 0.6\n"
      "truth_lambda = 2, 8\n"
      "n = 250\n"
      "replications = 3\n"
      "algorithms = OL1, TITT, OL06a\n"
      "base_seed = 99\n"
      "retention = thin:5\n");
  CHECK(cfg.model == ModelKind::Poisson);
  CHECK(cfg.poisson_truth->lambda[1] == 8.0);
  CHECK(cfg.n == 250);
  CHECK(cfg.replications == 3);
  CHECK(cfg.algorithms == std::vector<Algorithm>{Algorithm::OL1, Algorithm::TITT, Algorithm::OL06a});
  CHECK(cfg.base_seed == 99);
  CHECK(cfg.effective_warmup() == 10);
  CHECK(cfg.retention.kind == Retention::Kind::Thinned);
  CHECK(cfg.retention.every == 5);
  CHECK(parse("model = regmix\n").effective_warmup() == 20);
}

TEST_CASE("config errors name the field") {
  CHECK(field_of("colour = blue\n") == "colour");
  CHECK(field_of("n = ten\n") == "n");
  CHECK(field_of("n = -5\n") == "n");
  CHECK(field_of("n = 0\n") == "n");
  CHECK(field_of("model = gamma\n") == "model");
  CHECK(field_of("model = poisson\n") == "truth_lambda");
  CHECK(field_of("algorithms = EM5, OL2\n") == "algorithms");
  CHECK(field_of("algorithms = TITT\n") == "algorithms");
  CHECK(field_of("averaging_start_fraction = 1.5\n") == "averaging_start_fraction");
  CHECK(field_of("n = 30\nwarmup = 20\n") == "averaging_start_fraction");
  CHECK(field_of("warmup = 2\n") == "warmup");
  CHECK(field_of("theta0_beta = 1, 2\n") == "theta0_beta");
  CHECK(field_of("theta0_omega = 0.3, 0.3\n") == "theta0_omega");
  CHECK(field_of("generator = other\n") == "generator");
  CHECK(field_of("failure_rate_threshold = 2\n") == "failure_rate_threshold");
  CHECK(field_of("retention = sometimes\n") == "retention");
  CHECK(field_of("titt_alpha = 0.4\n") == "titt_alpha");
  CHECK(field_of("just text\n") == "");
  CHECK_THROWS_AS(load_config("/nonexistent/file.conf"), ConfigError);
}

TEST_CASE("config echo round trips") {
  const auto cfg = parse("model = poisson\ntruth_omega = 0.25, 0.75\ntruth_lambda = 1.5, 9\n"
                         "algorithms = EM5, TITT\nn = 77\n");
  std::string text;
  for (const auto& [k, v] : echo_config(cfg)) text += k + " = " + v + "\n";
  const auto again = parse(text);
  CHECK(again.n == 77);
  CHECK(again.poisson_truth->omega == cfg.poisson_truth->omega);
  CHECK(again.algorithms == cfg.algorithms);
  std::ostringstream meta;
  write_metadata_csv(meta, cfg);
  CHECK(meta.str().find("version,0.1.0") != std::string::npos);
  CHECK(meta.str().find("mt19937_64") != std::string::npos);
  CHECK(meta.str().find("config.algorithms,\"EM5,TITT\"") != std::string::npos);
}

TEST_CASE("quantile summaries") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  SUBCASE("small set") {
    const std::vector<double> x{5, 3, 1, 4, 2};
    const auto q = summarize_quantiles(x);
    CHECK(q.q25 == 2.0);
    CHECK(q.median == 3.0);
    CHECK(q.q75 == 4.0);
    CHECK(q.min_whisker == 1.0);
    CHECK(q.max_whisker == 5.0);
  }
  SUBCASE("constant") {
    const std::vector<double> x(7, 2.5);
    const auto q = summarize_quantiles(x);
    CHECK(q.min_whisker == 2.5);
    CHECK(q.q25 == 2.5);
    CHECK(q.median == 2.5);
    CHECK(q.q75 == 2.5);
    CHECK(q.max_whisker == 2.5);
  }
  SUBCASE("interpolation and outliers") {
    const std::vector<double> x{1, 2, 3, 4, 100, nan};
    const auto q = summarize_quantiles(x);
    CHECK(q.n_valid == 5);
    CHECK(q.n_nan == 1);
    CHECK(q.max_whisker == 4.0);  // 100 lies beyond 4 + 1.5 * 2
    const std::vector<double> y{1, 2, 3, 4};
    CHECK(summarize_quantiles(y).q25 == 1.75);
    CHECK(summarize_quantiles(y).median == 2.5);
  }
  SUBCASE("all NaN") {
    const std::vector<double> x{nan, nan};
    CHECK_THROWS_AS(summarize_quantiles(x), std::invalid_argument);
  }
  CHECK(asymptotic_iqr(47.8, 10000) == doctest::Approx(1.349 * 0.478));
}

TEST_CASE("label alignment") {
  auto truth = flexmix_truth();
  auto swapped = truth;
  swapped.beta.row(0) = truth.beta.row(1);
  swapped.beta.row(1) = truth.beta.row(0);
  swapped.omega << 0.3, 0.7;
  swapped.sigma2 << 10.0, 20.0;
  const auto aligned = align_to_truth(swapped, truth);
  CHECK(aligned.beta == truth.beta);
  CHECK(aligned.omega[0] == 0.7);
  CHECK(aligned.sigma2[0] == 20.0);

  poisson::Params pt{Eigen::Vector2d(0.4, 0.6), Eigen::Vector2d(2.0, 8.0)};
  poisson::Params pe{Eigen::Vector2d(0.55, 0.45), Eigen::Vector2d(7.5, 2.2)};
  const auto pa = align_to_truth(pe, pt);
  CHECK(pa.lambda == Eigen::Vector2d(2.2, 7.5));
  CHECK(pa.omega == Eigen::Vector2d(0.45, 0.55));
}

TEST_CASE("data hashes") {
  const std::vector<poisson::Count> a{1, 2, 3}, b{1, 2, 3}, c{1, 2, 4};
  CHECK(data_hash(a) == data_hash(b));
  CHECK(data_hash(a) != data_hash(c));
  const auto r1 = strip_labels(gen_regmix_flexmix(20, {1, 0}));
  const auto r2 = strip_labels(gen_regmix_flexmix(20, {1, 1}));
  CHECK(data_hash(r1) != data_hash(r2));
}

TEST_CASE("default starting points") {
  const auto data = strip_labels(gen_regmix_flexmix(100, {3, 0}));
  const auto start = default_regmix_start(data, 20, 2);
  CHECK_NOTHROW(start.validate());
  CHECK(start.omega == Eigen::Vector2d(0.5, 0.5));
  CHECK(start.beta.row(1).isApprox(start.beta.row(0) * (1.1 / 0.9)));
  CHECK(start.sigma2[0] == start.sigma2[1]);

  const std::vector<poisson::Count> counts{4, 6, 5, 5, 0, 100};
  const auto p = default_poisson_start(counts, 4, 2);
  CHECK(p.lambda == Eigen::Vector2d(2.5, 7.5));
  CHECK_NOTHROW(p.validate());
}

TEST_CASE("experiment rows, pairing and thread independence") {
  const auto cfg = parse("model = regmix\nn = 200\nreplications = 6\nbase_seed = 5\n"
                         "asymptotic_n = 20000\n");
  const auto one = run_experiment(cfg, 1);
  const auto three = run_experiment(cfg, 3);
  CHECK(results_text(one) == results_text(three));
  CHECK(summary_text(one) == summary_text(three));
  REQUIRE(one.rows.size() == 6 * 4);
  for (std::size_t r = 0; r < 6; ++r) {
    std::set<std::uint64_t> hashes;
    for (std::size_t a = 0; a < 4; ++a) {
      const auto& row = one.rows[r * 4 + a];
      CHECK(row.replica == r);
      CHECK(row.algorithm == cfg.algorithms[a]);
      hashes.insert(row.data_hash);
      CHECK(row.failed == row.estimate.hasNaN());
    }
    CHECK(hashes.size() == 1);  // all algorithms saw the same data
  }
  CHECK(one.labels.size() == 10);
  CHECK(one.summary.size() == 4 * 10);
  CHECK(std::isnan(one.reference_sd[0]));
  CHECK(one.reference_sd[2] > 0.0);
}

TEST_CASE("summaries recomputed from the results file match") {
  const auto cfg = parse("model = poisson\ntruth_omega = 0.4, 0.6\ntruth_lambda = 2, 8\n"
                         "n = 300\nreplications = 8\nalgorithms = EM5, OL1, OL06, OL06a, TITT\n");
  const auto res = run_experiment(cfg, 2);
  std::istringstream is(results_text(res));
  std::vector<std::string> labels;
  const auto rows = read_results_csv(is, &labels);
  CHECK(labels == res.labels);
  REQUIRE(rows.size() == res.rows.size());
  ExperimentResult again = res;
  again.rows = rows;
  again.summary = summarize_rows(labels, res.truth, res.reference_sd, cfg.n, cfg.algorithms, rows);
  CHECK(summary_text(again) == summary_text(res));
  CHECK(results_text(again) == results_text(res));
}

TEST_CASE("failed runs give NaN rows and count toward the failure rate") {
  // Titterington with gamma_1 = 1 from a poor start fails on the first zero.
  const auto cfg = parse("model = poisson\ntruth_omega = 0.5, 0.5\ntruth_lambda = 0.2, 6\n"
                         "n = 100\nreplications = 4\nalgorithms = TITT, OL06\n"
                         "theta0_lambda = 3, 4\n");
  const auto res = run_experiment(cfg, 1);
  std::size_t failed = 0;
  for (const auto& row : res.rows) {
    CHECK(row.failed == row.estimate.hasNaN());
    if (row.failed) {
      ++failed;
      CHECK(row.failed_step >= 1);
    }
  }
  CHECK(res.failure_rate() == doctest::Approx(failed / 8.0));
  CHECK(failed > 0);
}

TEST_CASE("reference standard deviations") {
  const auto cfg = parse("model = poisson\ntruth_omega = 0.4, 0.6\ntruth_lambda = 2, 8\n");
  const auto sd = reference_std_devs(cfg, 0);
  REQUIRE(sd.size() == 4);
  CHECK(sd[0] == doctest::Approx(sd[1]));  // omega_2 = 1 - omega_1
  CHECK(sd.minCoeff() > 0.0);
}

TEST_CASE("CSV helpers") {
  CHECK(csv_quote("plain") == "plain");
  CHECK(csv_quote("a,b") == "\"a,b\"");
  CHECK(csv_quote("say \"hi\"") == "\"say \"\"hi\"\"\"");
  CHECK(format_real(0.1) == "0.10000000000000001");
  CHECK(format_real(std::numeric_limits<double>::quiet_NaN()) == "NaN");
}
