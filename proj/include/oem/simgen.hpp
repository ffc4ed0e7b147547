#pragma once
// Seeded data generators and dataset CSV dump/load.

#include <iosfwd>
#include <vector>

#include "oem/poisson.hpp"
#include "oem/random.hpp"
#include "oem/regmix.hpp"

namespace oem {

struct LabelledRegObservation {
  regmix::Observation obs;
  int true_class = 0;  // 1-based
};

struct LabelledCount {
  poisson::Count y = 0;
  int true_class = 0;  // 1-based
};

// Two-class regression design: W uniform on {1,2}, U ~ Unif(0,10),
// V ~ N(0, 81), R = 5U + V (W = 1) or 15 + 10U - U^2 + V (W = 2),
// regressors Z = (1, U, U^2/10).
std::vector<LabelledRegObservation> gen_regmix_flexmix(std::size_t n,
                                                       SeededStream stream);

// True parameters of the design above, in the Z = (1, U, U^2/10) basis.
regmix::Params flexmix_truth();

std::vector<LabelledCount> gen_poisson_mixture(std::size_t n,
                                               const poisson::Params& theta,
                                               SeededStream stream);

std::vector<regmix::Observation> strip_labels(
    const std::vector<LabelledRegObservation>& data);
std::vector<poisson::Count> strip_labels(const std::vector<LabelledCount>& data);

// Columns r,z0,z1,...,true_class.
void write_regmix_csv(std::ostream& os,
                      const std::vector<LabelledRegObservation>& data);
std::vector<LabelledRegObservation> read_regmix_csv(std::istream& is);

// Columns y,true_class.
void write_poisson_csv(std::ostream& os, const std::vector<LabelledCount>& data);
std::vector<LabelledCount> read_poisson_csv(std::istream& is);

}  // namespace oem
