#include "oem/core.hpp"

#include <cmath>

namespace oem {

Layout::Layout(std::vector<Block> blocks) : blocks_(std::move(blocks)) {
  std::size_t next = 0;
  for (const auto& b : blocks_) {
    if (b.offset != next)
      throw DimensionError("layout block '" + b.name + "' is not contiguous");
    next += b.length;
  }
  size_ = next;
}

std::shared_ptr<const Layout> Layout::sequential(
    const std::vector<std::pair<std::string, std::size_t>>& parts) {
  std::vector<Block> blocks;
  std::size_t offset = 0;
  for (const auto& [name, len] : parts) {
    blocks.push_back({name, offset, len});
    offset += len;
  }
  return std::make_shared<const Layout>(std::move(blocks));
}

const Block& Layout::block(std::string_view name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return b;
  throw DimensionError("no layout block named '" + std::string(name) + "'");
}

std::vector<std::string> Layout::labels() const {
  std::vector<std::string> out;
  out.reserve(size_);
  for (const auto& b : blocks_) {
    if (b.length == 1) {
      out.push_back(b.name);
      continue;
    }
    for (std::size_t i = 0; i < b.length; ++i)
      out.push_back(b.name + "[" + std::to_string(i) + "]");
  }
  return out;
}

bool Layout::operator==(const Layout& other) const {
  if (size_ != other.size_ || blocks_.size() != other.blocks_.size())
    return false;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& a = blocks_[i];
    const auto& b = other.blocks_[i];
    if (a.name != b.name || a.offset != b.offset || a.length != b.length)
      return false;
  }
  return true;
}

namespace detail {

LabelledVector::LabelledVector(LayoutPtr layout, Eigen::VectorXd values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (!layout_) throw DimensionError("vector constructed without a layout");
  if (static_cast<std::size_t>(values_.size()) != layout_->size())
    throw DimensionError("vector length " + std::to_string(values_.size()) +
                         " does not match layout size " +
                         std::to_string(layout_->size()));
  if (!values_.allFinite())
    throw DomainError("finite", "vector has non-finite entries");
}

Eigen::VectorXd LabelledVector::block(std::string_view name) const {
  const auto& b = layout_->block(name);
  return values_.segment(static_cast<Eigen::Index>(b.offset),
                         static_cast<Eigen::Index>(b.length));
}

}  // namespace detail

StepSchedule::StepSchedule(double gamma0, double alpha)
    : gamma0_(gamma0), alpha_(alpha) {
  if (!(gamma0 > 0.0 && gamma0 <= 1.0))
    throw std::invalid_argument("step schedule gamma0 must lie in (0,1]");
  if (!(alpha > 0.5 && alpha <= 1.0))
    throw std::invalid_argument("step schedule alpha must lie in (1/2,1]");
}

double StepSchedule::gamma(std::size_t n) const {
  if (n == 0) throw RangeError("step index starts at 1");
  if (alpha_ == 1.0) return gamma0_ / static_cast<double>(n);
  return gamma0_ * std::pow(static_cast<double>(n), -alpha_);
}

StatVector blend_stats(const StatVector& s, const StatVector& sbar,
                       double gamma) {
  if (s.layout() != sbar.layout() && !(*s.layout() == *sbar.layout()))
    throw DimensionError("blend_stats: statistic layouts differ");
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw std::invalid_argument("blend_stats: gamma outside [0,1]");
  if (gamma == 1.0) return sbar;
  Eigen::VectorXd out = (1.0 - gamma) * s.values() + gamma * sbar.values();
  return StatVector(s.layout(), std::move(out));
}

}  // namespace oem
