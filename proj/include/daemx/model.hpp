#pragma once

#include <Eigen/Dense>
#include <sstream>
#include <string>
#include <vector>

#include "daemx/linalg.hpp"
#include "daemx/matrix_function.hpp"
#include "daemx/time_grid.hpp"

namespace daemx {

/**
 * The estimation problem data: descriptor dynamics (F x)' = C(t) x + f with
 * F x(t0) = 0, observations y = H(t) x + eta, and the weighted-energy bounds
 *   int <Q(t) f, f> dt <= 1,   E int <R(t) eta, eta> dt <= 1.
 *
 * F is a constant m x n real matrix (possibly rectangular or singular);
 * C: m x n, H: p x n, Q: m x m, R: p x p are matrix functions on the grid.
 */
struct DaeModel {
  Eigen::MatrixXd F;
  MatrixFunction C;
  MatrixFunction H;
  MatrixFunction Q;
  MatrixFunction R;
  TimeGrid grid;

  Eigen::Index m() const { return F.rows(); }
  Eigen::Index n() const { return F.cols(); }
  Eigen::Index p() const { return H.rows(); }
};

/// The estimation direction ell (length n of the owning model).
struct Direction {
  Eigen::VectorXd ell;
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }

  std::string summary() const {
    std::ostringstream os;
    for (const auto& v : violations) os << v << "\n";
    return os.str();
  }
};

namespace detail {

inline void check_spd_at_nodes(const MatrixFunction& mf, const TimeGrid& grid,
                               const std::string& name, std::vector<std::string>& out) {
  for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
    const double t = grid.node(k);
    const Eigen::MatrixXd v = mf(t);
    if (!all_finite(v)) {
      out.push_back(name + " has non-finite entries at t=" + std::to_string(t));
      continue;
    }
    if (!is_symmetric(v)) {
      out.push_back(name + " not symmetric at t=" + std::to_string(t));
      continue;
    }
    if (min_eigenvalue_sym(v) <= kPdTol)
      out.push_back(name + " not positive definite at t=" + std::to_string(t));
  }
}

}  // namespace detail

/// Collects every shape/positivity violation found at every grid node.
/// Violations are data, not faults: an invalid model yields a non-empty list.
inline ValidationReport validate_model(const DaeModel& model) {
  ValidationReport rep;
  const Eigen::Index m = model.m(), n = model.n(), p = model.p();

  if (!model.C.valid() || model.C.rows() != m || model.C.cols() != n)
    rep.violations.push_back("shape mismatch C: expected " + std::to_string(m) + "x" +
                             std::to_string(n));
  if (!model.H.valid() || model.H.cols() != n)
    rep.violations.push_back("shape mismatch H: expected p x " + std::to_string(n));
  if (!model.Q.valid() || model.Q.rows() != m || model.Q.cols() != m)
    rep.violations.push_back("shape mismatch Q: expected " + std::to_string(m) + "x" +
                             std::to_string(m));
  if (!model.R.valid() || model.R.rows() != p || model.R.cols() != p)
    rep.violations.push_back("shape mismatch R: expected " + std::to_string(p) + "x" +
                             std::to_string(p));
  if (!all_finite(model.F)) rep.violations.push_back("F has non-finite entries");
  if (!rep.ok()) return rep;  // shape errors make nodewise checks meaningless

  for (std::size_t k = 0; k < model.grid.n_nodes(); ++k) {
    const double t = model.grid.node(k);
    if (!all_finite(model.C(t)))
      rep.violations.push_back("C has non-finite entries at t=" + std::to_string(t));
    if (!all_finite(model.H(t)))
      rep.violations.push_back("H has non-finite entries at t=" + std::to_string(t));
  }
  detail::check_spd_at_nodes(model.Q, model.grid, "Q", rep.violations);
  detail::check_spd_at_nodes(model.R, model.grid, "R", rep.violations);
  return rep;
}

}  // namespace daemx
