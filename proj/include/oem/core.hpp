#pragma once
// Model-agnostic pieces shared by every estimator: labelled statistic and
// parameter vectors, the power-law step-size schedule, and the ModelSpec
// record that concrete latent-data models fill in.

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace oem {

class Rng;

// Error hierarchy. Every failure the library reports derives from one of the
// standard exception families so callers can catch coarsely.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  DomainError(std::string constraint, const std::string& what)
      : std::domain_error(what), constraint_(std::move(constraint)) {}
  const std::string& constraint() const noexcept { return constraint_; }

 private:
  std::string constraint_;
};

class DegenerateComponentError : public DomainError {
 public:
  using DomainError::DomainError;
};

class InsufficientDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class StabilityError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class SingularMatrixError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Block {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;
};

// Describes how a flat vector is cut into named blocks. Blocks are contiguous
// and cover the vector exactly.
class Layout {
 public:
  explicit Layout(std::vector<Block> blocks);

  // Builds a layout from (name, length) pairs laid out back to back.
  static std::shared_ptr<const Layout> sequential(
      const std::vector<std::pair<std::string, std::size_t>>& parts);

  std::size_t size() const noexcept { return size_; }
  const std::vector<Block>& blocks() const noexcept { return blocks_; }
  const Block& block(std::string_view name) const;

  // One label per coordinate: the block name, suffixed with [i] when the
  // block has more than one entry.
  std::vector<std::string> labels() const;

  bool operator==(const Layout& other) const;

 private:
  std::vector<Block> blocks_;
  std::size_t size_ = 0;
};

using LayoutPtr = std::shared_ptr<const Layout>;

namespace detail {

// Shared storage for StatVector/ParamVector: a finite vector tied to a layout.
class LabelledVector {
 public:
  LabelledVector(LayoutPtr layout, Eigen::VectorXd values);

  const Eigen::VectorXd& values() const noexcept { return values_; }
  const LayoutPtr& layout() const noexcept { return layout_; }
  Eigen::Index size() const noexcept { return values_.size(); }
  double operator[](Eigen::Index i) const { return values_[i]; }
  Eigen::VectorXd block(std::string_view name) const;

 protected:
  LayoutPtr layout_;
  Eigen::VectorXd values_;
};

}  // namespace detail

// Complete-data sufficient statistics, the online-EM state.
class StatVector : public detail::LabelledVector {
 public:
  using LabelledVector::LabelledVector;
};

// Model parameters, in the model's full (constrained) layout.
class ParamVector : public detail::LabelledVector {
 public:
  using LabelledVector::LabelledVector;
  bool operator==(const ParamVector& o) const { return values_ == o.values_; }
};

// gamma_n = gamma0 * n^(-alpha), gamma0 in (0,1], alpha in (1/2,1].
class StepSchedule {
 public:
  StepSchedule(double gamma0, double alpha);

  double gamma(std::size_t n) const;
  double gamma0() const noexcept { return gamma0_; }
  double alpha() const noexcept { return alpha_; }

 private:
  double gamma0_;
  double alpha_;
};

inline double schedule_gamma(const StepSchedule& sched, std::size_t n) {
  return sched.gamma(n);
}

// (1 - gamma) * s + gamma * sbar.
StatVector blend_stats(const StatVector& s, const StatVector& sbar,
                       double gamma);

// Record of the operations a latent-data model provides. Estimators and the
// asymptotics toolkit are written once against this record.
//
// Parameters travel in the model's full layout (e.g. all m mixture weights).
// The asymptotics hooks (score, cond_complete_info, to_free, from_free) work
// in the free parameterization where the last mixture weight is implied by
// the simplex constraint.
template <class Obs>
struct ModelSpec {
  std::string name;
  LayoutPtr stat_layout;
  LayoutPtr param_layout;
  std::size_t free_dim = 0;

  std::function<StatVector(const Obs&, const ParamVector&)> cond_expect_stat;
  std::function<ParamVector(const StatVector&)> mstep;
  std::function<double(const Obs&, const ParamVector&)> loglik;
  std::function<bool(const StatVector&)> in_domain;
  std::function<Obs(const ParamVector&, Rng&)> sample;  // may be empty

  // Score of log g in the free parameterization, assembled from the
  // conditional expectation of the complete-data score (Fisher's identity).
  std::function<Eigen::VectorXd(const Obs&, const ParamVector&)> score;
  // -E_theta[ Hessian of log f | Y = y ] in the free parameterization.
  std::function<Eigen::MatrixXd(const Obs&, const ParamVector&)>
      cond_complete_info;
  std::function<Eigen::VectorXd(const ParamVector&)> to_free;
  std::function<ParamVector(const Eigen::VectorXd&)> from_free;

  std::size_t stat_dim() const { return stat_layout->size(); }
  std::size_t param_dim() const { return param_layout->size(); }
};

}  // namespace oem
