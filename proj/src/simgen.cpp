#include "oem/simgen.hpp"

#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace oem {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("bad number '" + s + "'");
  return v;
}

long long parse_int(const std::string& s) {
  long long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw std::invalid_argument("bad integer '" + s + "'");
  return v;
}

}  // namespace

regmix::Params flexmix_truth() {
  regmix::Params t{Eigen::VectorXd(2), Eigen::MatrixXd(2, 3),
                   Eigen::VectorXd(2)};
  t.omega << 0.5, 0.5;
  t.beta << 0.0, 5.0, 0.0, 15.0, 10.0, -10.0;
  t.sigma2 << 81.0, 81.0;
  return t;
}

std::vector<LabelledRegObservation> gen_regmix_flexmix(std::size_t n,
                                                       SeededStream stream) {
  if (n == 0) throw std::invalid_argument("gen_regmix_flexmix: n must be >= 1");
  Rng rng(stream);
  const double weights[2] = {0.5, 0.5};
  std::vector<LabelledRegObservation> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int w = static_cast<int>(rng.categorical(weights)) + 1;
    const double u = 10.0 * rng.uniform();
    const double v = 9.0 * rng.normal();
    const double r = (w == 1) ? 5.0 * u + v : 15.0 + 10.0 * u - u * u + v;
    Eigen::VectorXd z(3);
    z << 1.0, u, u * u / 10.0;
    out.push_back({{r, std::move(z)}, w});
  }
  return out;
}

std::vector<LabelledCount> gen_poisson_mixture(std::size_t n,
                                               const poisson::Params& theta,
                                               SeededStream stream) {
  theta.validate();
  Rng rng(stream);
  const std::span<const double> weights(theta.omega.data(),
                                        static_cast<std::size_t>(theta.m()));
  std::vector<LabelledCount> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto w = rng.categorical(weights);
    const auto y = rng.poisson(theta.lambda[static_cast<Eigen::Index>(w)]);
    out.push_back({y, static_cast<int>(w) + 1});
  }
  return out;
}

std::vector<regmix::Observation> strip_labels(
    const std::vector<LabelledRegObservation>& data) {
  std::vector<regmix::Observation> out;
  out.reserve(data.size());
  for (const auto& d : data) out.push_back(d.obs);
  return out;
}

std::vector<poisson::Count> strip_labels(const std::vector<LabelledCount>& data) {
  std::vector<poisson::Count> out;
  out.reserve(data.size());
  for (const auto& d : data) out.push_back(d.y);
  return out;
}

void write_regmix_csv(std::ostream& os,
                      const std::vector<LabelledRegObservation>& data) {
  const Eigen::Index d = data.empty() ? 0 : data.front().obs.z.size();
  os << "r";
  for (Eigen::Index k = 0; k < d; ++k) os << ",z" << k;
  os << ",true_class\n";
  for (const auto& row : data) {
    os << format_double(row.obs.r);
    for (Eigen::Index k = 0; k < d; ++k) os << ',' << format_double(row.obs.z[k]);
    os << ',' << row.true_class << '\n';
  }
}

std::vector<LabelledRegObservation> read_regmix_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty dataset file");
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header.front() != "r" || header.back() != "true_class")
    throw std::runtime_error("regmix dataset header must be r,z0,...,true_class");
  const auto d = static_cast<Eigen::Index>(header.size() - 2);
  std::vector<LabelledRegObservation> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw std::runtime_error("regmix dataset row has wrong column count");
    LabelledRegObservation row;
    row.obs.r = parse_double(cells[0]);
    row.obs.z.resize(d);
    for (Eigen::Index k = 0; k < d; ++k)
      row.obs.z[k] = parse_double(cells[static_cast<std::size_t>(k) + 1]);
    row.true_class = static_cast<int>(parse_int(cells.back()));
    out.push_back(std::move(row));
  }
  return out;
}

void write_poisson_csv(std::ostream& os, const std::vector<LabelledCount>& data) {
  os << "y,true_class\n";
  for (const auto& row : data) os << row.y << ',' << row.true_class << '\n';
}

std::vector<LabelledCount> read_poisson_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty dataset file");
  if (line != "y,true_class")
    throw std::runtime_error("poisson dataset header must be y,true_class");
  std::vector<LabelledCount> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 2)
      throw std::runtime_error("poisson dataset row has wrong column count");
    out.push_back({parse_int(cells[0]), static_cast<int>(parse_int(cells[1]))});
  }
  return out;
}

}  // namespace oem
