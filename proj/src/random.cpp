#include "oem/random.hpp"

#include <cmath>
#include <stdexcept>

namespace oem {

namespace {

std::mt19937_64 make_engine(SeededStream s) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(s.base_seed), hi(s.base_seed), lo(s.replica_index),
                    hi(s.replica_index), std::uint32_t{0x6f656d}};
  return std::mt19937_64(seq);
}

std::int64_t poisson_inversion(Rng& rng, double lambda) {
  double p = std::exp(-lambda);
  double cdf = p;
  const double u = rng.uniform();
  std::int64_t k = 0;
  // The cdf can stall just below 1 in floating point; 1000 terms is far
  // beyond any mass for lambda < 30.
  while (u > cdf && k < 1000) {
    ++k;
    p *= lambda / static_cast<double>(k);
    cdf += p;
  }
  return k;
}

// Hoermann (1993), "The transformed rejection method for generating Poisson
// random variables".
std::int64_t poisson_ptrs(Rng& rng, double lambda) {
  const double slam = std::sqrt(lambda);
  const double loglam = std::log(lambda);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = rng.uniform() - 0.5;
    const double v = rng.uniform();
    const double us = 0.5 - std::fabs(u);
    const double k = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<std::int64_t>(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
        -lambda + k * loglam - std::lgamma(k + 1.0))
      return static_cast<std::int64_t>(k);
  }
}

}  // namespace

Rng::Rng(SeededStream stream) : engine_(make_engine(stream)) {}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform_open() {
  double u;
  do {
    u = uniform();
  } while (u == 0.0);
  return u;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double x, y, r2;
  do {
    x = 2.0 * uniform() - 1.0;
    y = 2.0 * uniform() - 1.0;
    r2 = x * x + y * y;
  } while (r2 >= 1.0 || r2 == 0.0);
  const double f = std::sqrt(-2.0 * std::log(r2) / r2);
  spare_ = y * f;
  has_spare_ = true;
  return x * f;
}

std::int64_t Rng::poisson(double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("poisson: intensity must be finite and >= 0");
  if (lambda == 0.0) return 0;
  return lambda < 30.0 ? poisson_inversion(*this, lambda)
                       : poisson_ptrs(*this, lambda);
}

std::size_t Rng::categorical(std::span<const double> weights) {
  if (weights.empty()) throw std::invalid_argument("categorical: no weights");
  double total = 0.0;
  for (double w : weights) total += w;
  const double u = uniform() * total;
  double cum = 0.0;
  for (std::size_t j = 0; j + 1 < weights.size(); ++j) {
    cum += weights[j];
    if (u < cum) return j;
  }
  return weights.size() - 1;
}

}  // namespace oem
