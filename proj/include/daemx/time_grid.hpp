#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace daemx {

/// Uniform discretization of [t0, t_end] with n_steps intervals.
/// All sampled trajectories and integrators in this library live on such a grid.
class TimeGrid {
 public:
  /// Placeholder grid for default-constructed containers; real grids are
  /// always assigned before use.
  TimeGrid() : TimeGrid(0.0, 1.0, 2) {}

  TimeGrid(double t0, double t_end, std::size_t n_steps)
      : t0_(t0), t_end_(t_end), n_steps_(n_steps) {
    if (!(t_end > t0)) throw std::invalid_argument("TimeGrid: t_end must exceed t0");
    if (n_steps < 2) throw std::invalid_argument("TimeGrid: n_steps must be >= 2");
    if (!std::isfinite(t0) || !std::isfinite(t_end))
      throw std::invalid_argument("TimeGrid: endpoints must be finite");
  }

  double t0() const { return t0_; }
  double t_end() const { return t_end_; }
  std::size_t n_steps() const { return n_steps_; }
  std::size_t n_nodes() const { return n_steps_ + 1; }
  double step() const { return (t_end_ - t0_) / static_cast<double>(n_steps_); }

  double node(std::size_t k) const { return t0_ + static_cast<double>(k) * step(); }

  bool contains(double t) const {
    const double slack = 1e-12 * (1.0 + std::abs(t0_) + std::abs(t_end_));
    return t >= t0_ - slack && t <= t_end_ + slack;
  }

  /// Clamp t into [t0, t_end]; used where rounding may push a stage time
  /// marginally outside the domain of a coefficient function.
  double clamp(double t) const { return std::min(std::max(t, t0_), t_end_); }

  /// Nearest node index for t (no range check).
  std::size_t nearest_node(double t) const {
    const double k = std::round((t - t0_) / step());
    if (k <= 0.0) return 0;
    const auto idx = static_cast<std::size_t>(k);
    return idx > n_steps_ ? n_steps_ : idx;
  }

  /// Same interval, `factor` times more steps.
  TimeGrid refined(std::size_t factor) const { return TimeGrid(t0_, t_end_, n_steps_ * factor); }

  bool operator==(const TimeGrid& other) const {
    return t0_ == other.t0_ && t_end_ == other.t_end_ && n_steps_ == other.n_steps_;
  }

 private:
  double t0_;
  double t_end_;
  std::size_t n_steps_;
};

}  // namespace daemx
