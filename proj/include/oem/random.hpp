#pragma once
// Reproducible random streams. The engine is std::mt19937_64 seeded through
// std::seed_seq; both are fully specified by the standard, so a given
// (base_seed, replica) produces the same bits on every conforming platform.
// The variate methods below are pinned here rather than taken from <random>,
// whose distributions are implementation-defined.

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace oem {

struct SeededStream {
  std::uint64_t base_seed = 0;
  std::uint64_t replica_index = 0;
};

// Written into output metadata so results can be traced to a generator.
inline constexpr std::string_view kGeneratorIdentity =
    "mt19937_64 seeded by seed_seq{lo32(seed),hi32(seed),lo32(replica),"
    "hi32(replica),0x6f656d}";
inline constexpr std::string_view kUniformMethod = "53-bit (u64 >> 11) * 2^-53";
inline constexpr std::string_view kNormalMethod = "Marsaglia polar, spare cached";
inline constexpr std::string_view kPoissonMethod =
    "sequential inversion (lambda < 30), PTRS transformed rejection otherwise";

class Rng {
 public:
  explicit Rng(SeededStream stream);

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0,1).
  double uniform();
  // Uniform on (0,1).
  double uniform_open();
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  std::int64_t poisson(double lambda);
  // Index drawn with probabilities proportional to weights (inversion).
  std::size_t categorical(std::span<const double> weights);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace oem
