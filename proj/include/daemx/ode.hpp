#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "daemx/linalg.hpp"
#include "daemx/time_grid.hpp"

namespace daemx {

inline constexpr double kBlowupNorm = 1e12;

enum class IntegrationDirection { forward, backward };

/// A sampled vector-valued trajectory, one value per grid node.
struct Trajectory {
  TimeGrid grid;
  std::vector<Eigen::VectorXd> values;
  std::string label;

  Eigen::Index dim() const { return values.empty() ? 0 : values.front().size(); }

  /// Value at arbitrary t: exact at nodes, linear interpolation in between.
  Eigen::VectorXd at(double t) const {
    if (!grid.contains(t))
      throw std::out_of_range("Trajectory: t outside grid range");
    const auto near = grid.nearest_node(t);
    if (std::abs(t - grid.node(near)) <= 1e-9 * grid.step()) return values[near];
    const double pos = (t - grid.t0()) / grid.step();
    auto k = static_cast<std::size_t>(std::floor(pos));
    if (k >= grid.n_steps()) k = grid.n_steps() - 1;
    const double alpha = pos - static_cast<double>(k);
    return (1.0 - alpha) * values[k] + alpha * values[k + 1];
  }
};

/// Riccati right-hand-side data at a time instant; the integrated equation is
///   K' = -K C - C' K - K Q K + S.
struct RiccatiCoeffs {
  Eigen::MatrixXd C, Q, S;
};

/// Sampled symmetric PSD solution K(t_k) with its provenance tag.
struct RiccatiSolution {
  TimeGrid grid;
  std::vector<Eigen::MatrixXd> K;
  IntegrationDirection direction = IntegrationDirection::forward;
  std::string tag;

  const Eigen::MatrixXd& at_node(std::size_t k) const { return K[k]; }
  /// Nearest-node lookup; exact at the nodes of this (possibly refined) grid.
  const Eigen::MatrixXd& at_time(double t) const { return K[grid.nearest_node(t)]; }
};

namespace detail {

inline Eigen::MatrixXd riccati_rhs(const RiccatiCoeffs& c, const Eigen::MatrixXd& K) {
  return -K * c.C - c.C.transpose() * K - K * c.Q * K + c.S;
}

}  // namespace detail

/**
 * Classical fixed-step 4th-order integration of
 *   K' = -K C(t) - C'(t) K - K Q(t) K + S(t)
 * from K(t0) = K0 (forward) or K(t_end) = K0 (backward). K is symmetrized
 * after every step and the PSD invariant (min eigenvalue >= -1e-8) is checked
 * at every stored node. Throws on blow-up (||K||_F > 1e12), naming the node.
 */
inline RiccatiSolution integrate_riccati(const std::function<RiccatiCoeffs(double)>& coeffs,
                                         const TimeGrid& grid,
                                         IntegrationDirection dir = IntegrationDirection::forward,
                                         Eigen::MatrixXd K0 = {}, std::string tag = {}) {
  const std::size_t n = grid.n_steps();
  const bool fwd = dir == IntegrationDirection::forward;
  const double h = fwd ? grid.step() : -grid.step();

  Eigen::Index r = K0.rows();
  if (r == 0) {
    const RiccatiCoeffs probe = coeffs(grid.t0());
    r = probe.S.rows();
    K0 = Eigen::MatrixXd::Zero(r, r);
  }

  RiccatiSolution sol{grid, std::vector<Eigen::MatrixXd>(grid.n_nodes()), dir, std::move(tag)};
  auto store = [&](std::size_t step_count, const Eigen::MatrixXd& K) {
    sol.K[fwd ? step_count : n - step_count] = K;
  };

  Eigen::MatrixXd K = 0.5 * (K0 + K0.transpose().eval());
  store(0, K);
  double t = fwd ? grid.t0() : grid.t_end();
  for (std::size_t k = 0; k < n; ++k) {
    const double tm = grid.clamp(t + 0.5 * h);
    const double te = grid.clamp(t + h);
    const RiccatiCoeffs c0 = coeffs(grid.clamp(t));
    const RiccatiCoeffs cm = coeffs(tm);
    const RiccatiCoeffs ce = coeffs(te);
    const Eigen::MatrixXd k1 = detail::riccati_rhs(c0, K);
    const Eigen::MatrixXd k2 = detail::riccati_rhs(cm, K + 0.5 * h * k1);
    const Eigen::MatrixXd k3 = detail::riccati_rhs(cm, K + 0.5 * h * k2);
    const Eigen::MatrixXd k4 = detail::riccati_rhs(ce, K + h * k3);
    K += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    K = 0.5 * (K + K.transpose().eval());
    t = te;

    if (!K.allFinite() || K.norm() > kBlowupNorm)
      throw std::runtime_error("integrate_riccati: blow-up at node " + std::to_string(k + 1) +
                               " (t=" + std::to_string(t) + ") [" + sol.tag + "]");
    store(k + 1, K);
  }

  for (std::size_t k = 0; k < sol.K.size(); ++k) {
    if (r > 0 && min_eigenvalue_sym(sol.K[k]) < -1e-8)
      throw std::runtime_error("integrate_riccati: PSD invariant violated at node " +
                               std::to_string(k) + " [" + sol.tag + "]");
  }
  return sol;
}

/// Linear vector ODE x' = A(t) x + g(t); rhs fills (A, g) at time t.
using LinearRhs = std::function<void(double t, Eigen::MatrixXd& A, Eigen::VectorXd& g)>;

/// Fixed-step 4th-order integration of a linear ODE, forward from the first
/// node or backward from the last, on the given grid. Throws on blow-up.
inline Trajectory integrate_linear(const LinearRhs& rhs, const TimeGrid& grid,
                                   IntegrationDirection dir, Eigen::VectorXd initial,
                                   std::string label = {}) {
  const std::size_t n = grid.n_steps();
  const bool fwd = dir == IntegrationDirection::forward;
  const double h = fwd ? grid.step() : -grid.step();

  Trajectory traj{grid, std::vector<Eigen::VectorXd>(grid.n_nodes()), std::move(label)};
  auto store = [&](std::size_t step_count, const Eigen::VectorXd& x) {
    traj.values[fwd ? step_count : n - step_count] = x;
  };

  Eigen::MatrixXd A;
  Eigen::VectorXd g;
  auto eval = [&](double t, const Eigen::VectorXd& x) -> Eigen::VectorXd {
    rhs(grid.clamp(t), A, g);
    return A * x + g;
  };

  Eigen::VectorXd x = std::move(initial);
  store(0, x);
  double t = fwd ? grid.t0() : grid.t_end();
  for (std::size_t k = 0; k < n; ++k) {
    const Eigen::VectorXd k1 = eval(t, x);
    const Eigen::VectorXd k2 = eval(t + 0.5 * h, x + 0.5 * h * k1);
    const Eigen::VectorXd k3 = eval(t + 0.5 * h, x + 0.5 * h * k2);
    const Eigen::VectorXd k4 = eval(t + h, x + h * k3);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t += h;
    if (!x.allFinite() || x.norm() > kBlowupNorm)
      throw std::runtime_error("integrate_linear: blow-up at node " + std::to_string(k + 1) +
                               " (t=" + std::to_string(t) + ")");
    store(k + 1, x);
  }
  return traj;
}

/// Composite trapezoid rule over the grid nodes.
inline double quadrature(const TimeGrid& grid, const std::vector<double>& values) {
  if (values.size() != grid.n_nodes())
    throw std::invalid_argument("quadrature: values length must match grid nodes");
  double acc = 0.5 * (values.front() + values.back());
  for (std::size_t k = 1; k + 1 < values.size(); ++k) acc += values[k];
  return acc * grid.step();
}

/// Trapezoid rule for a scalar (1-dimensional) trajectory.
inline double quadrature(const Trajectory& traj) {
  std::vector<double> v(traj.values.size());
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (traj.values[k].size() != 1)
      throw std::invalid_argument("quadrature: trajectory must be scalar");
    v[k] = traj.values[k](0);
  }
  return quadrature(traj.grid, v);
}

}  // namespace daemx
