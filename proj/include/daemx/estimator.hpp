#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "daemx/canonical.hpp"
#include "daemx/coeffs.hpp"
#include "daemx/ode.hpp"
#include "daemx/oracle.hpp"

namespace daemx {

// =============================================================================
// Reports
// =============================================================================

struct FilterDiagnostics {
  bool regular_gate_passed = false;
  bool ell2_nonzero = false;  // the component of ell outside R(F') is ignored
  bool sigma_clamped = false;
  std::vector<std::string> notes;
};

/**
 * Output of one filter run. xhat is the canonical r-dimensional estimate
 * trajectory (pull_back with CoordKind::estimate maps it to original
 * coordinates); estimate_value is <(I+K(T))^{-1} ell1, xhat(T)> on the
 * regularized path and <ell1, xhat(T)> on the optimal path; sigma_hat is the
 * worst-case error of that estimation.
 */
struct EstimateReport {
  std::optional<double> eps;  // nullopt on the optimal path
  RiccatiSolution K;          // restricted to the model grid
  Trajectory xhat;
  std::optional<Trajectory> z1;  // backward dual, regularized path only
  double estimate_value = 0.0;
  double sigma_hat = 0.0;
  std::vector<Eigen::MatrixXd> gain_log;  // r x p observation gain per node
  FilterDiagnostics diagnostics;
};

enum class Verdict { observable, unobservable, inconclusive };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::observable: return "observable";
    case Verdict::unobservable: return "unobservable";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "?";
}

struct ObservabilityReport {
  Direction ell;
  std::vector<std::pair<double, double>> eps_sweep;  // (eps, sigma_hat(eps)), eps decreasing
  std::vector<std::string> failures;                 // entries that failed numerically
  Verdict verdict = Verdict::inconclusive;
  std::string rationale;
  double sigma_min = std::numeric_limits<double>::quiet_NaN();
  double sigma_last = std::numeric_limits<double>::quiet_NaN();
  double bvp_cross_discrepancy = std::numeric_limits<double>::quiet_NaN();
};

struct ObservabilityOptions {
  double rel_tol = 1e-2;            // Cauchy window over the last three entries
  double growth_per_decade = 3.0;   // sustained-growth threshold for "unobservable"
  double eps_min = 1e-10;
  bool cross_check_bvp = true;      // evaluate the BVP error formula at the largest eps
  bool parallel = true;
};

inline std::vector<double> default_eps_sweep() {
  return {1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8};
}

// =============================================================================
// Internals shared by the filter and the sweep
// =============================================================================

namespace detail {

/// Riccati solution of the regularized family on the half-step refinement of
/// the model grid, so stage values of the 4th-order steppers are exact.
inline RiccatiSolution sub_riccati_fine(const CanonicalModel& cm, double eps) {
  std::ostringstream tag;
  tag << "suboptimal(eps=" << eps << ")";
  return integrate_riccati(
      [&cm, eps](double t) {
        const SubCoeffs sc = sub_coeffs(cm, t, eps);
        return RiccatiCoeffs{sc.C, sc.Q, sc.S};
      },
      cm.grid().refined(2), IntegrationDirection::forward, {}, tag.str());
}

/// Precomputed regularized-filter data on the half-step grid. All stage times
/// of the 4th-order steppers on the model grid are fine nodes, so the state
/// and dual sweeps become pure table lookups.
struct SubKit {
  TimeGrid fine;
  RiccatiSolution Kfine;
  std::vector<Eigen::MatrixXd> state_mat;  // -C' - K Q at fine nodes
  std::vector<Eigen::MatrixXd> dual_mat;   // C + Q K at fine nodes
  std::vector<Eigen::MatrixXd> gain;       // (1/eps) Phi' H' R at fine nodes
  std::vector<Eigen::MatrixXd> phi;        // Phi at model-grid nodes

  const Eigen::MatrixXd& K_at(double t) const { return Kfine.at_time(t); }
};

inline SubKit make_sub_kit(const CanonicalModel& cm, double eps) {
  SubKit kit{cm.grid().refined(2), sub_riccati_fine(cm, eps), {}, {}, {}, {}};
  const std::size_t nf = kit.fine.n_nodes();
  kit.state_mat.resize(nf);
  kit.dual_mat.resize(nf);
  kit.gain.resize(nf);
  kit.phi.resize(cm.grid().n_nodes());
  for (std::size_t k = 0; k < nf; ++k) {
    const double t = kit.fine.node(k);
    const SubCoeffs sc = sub_coeffs(cm, t, eps);
    const Eigen::MatrixXd& K = kit.Kfine.K[k];
    kit.state_mat[k] = -sc.C.transpose() - K * sc.Q;
    kit.dual_mat[k] = sc.C + sc.Q * K;
    kit.gain[k] = sub_gain(cm, sc, K, t, eps);
    if (k % 2 == 0) kit.phi[k / 2] = phi_matrix(sc, K, eps);
  }
  return kit;
}

inline RiccatiSolution opt_riccati_fine(const CanonicalModel& cm) {
  return integrate_riccati(
      [&cm](double t) {
        const LimitCoeffs lc = limit_coeffs(cm, t);
        return RiccatiCoeffs{-lc.Cplus.transpose(), lc.Qplus, lc.Splus};
      },
      cm.grid().refined(2), IntegrationDirection::forward, {}, "optimal");
}

inline RiccatiSolution restrict_to_grid(const RiccatiSolution& fine, const TimeGrid& grid) {
  RiccatiSolution out{grid, std::vector<Eigen::MatrixXd>(grid.n_nodes()), fine.direction,
                      fine.tag};
  for (std::size_t k = 0; k < grid.n_nodes(); ++k) out.K[k] = fine.at_time(grid.node(k));
  return out;
}

/// Backward RK4 for z' = (C + Q K) z over the first `j` grid intervals,
/// starting from z(t_j) = (I + K(t_j))^{-1} ell1. Returns the node values
/// z_0..z_j and the quadrature of ||Phi z||^2 over [t_0, t_j].
struct DualRun {
  std::vector<Eigen::VectorXd> z;
  double phi_quad = 0.0;
};

inline DualRun sub_dual_backward(const CanonicalModel& cm, const SubKit& kit,
                                 const Eigen::VectorXd& ell1, std::size_t j) {
  const TimeGrid& grid = cm.grid();
  const double h = grid.step();
  DualRun run;
  run.z.assign(j + 1, Eigen::VectorXd());

  const Eigen::MatrixXd& Kj = kit.Kfine.K[2 * j];
  const Eigen::MatrixXd IKj = Eigen::MatrixXd::Identity(Kj.rows(), Kj.cols()) + Kj;
  Eigen::VectorXd z = IKj.ldlt().solve(ell1);
  run.z[j] = z;

  for (std::size_t k = j; k > 0; --k) {
    const Eigen::MatrixXd& a0 = kit.dual_mat[2 * k];
    const Eigen::MatrixXd& am = kit.dual_mat[2 * k - 1];
    const Eigen::MatrixXd& a1 = kit.dual_mat[2 * k - 2];
    const Eigen::VectorXd k1 = a0 * z;
    const Eigen::VectorXd k2 = am * (z - 0.5 * h * k1);
    const Eigen::VectorXd k3 = am * (z - 0.5 * h * k2);
    const Eigen::VectorXd k4 = a1 * (z - h * k3);
    z -= (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!z.allFinite() || z.norm() > kBlowupNorm)
      throw std::runtime_error("suboptimal dual: blow-up at node " + std::to_string(k - 1));
    run.z[k - 1] = z;
  }

  if (j >= 1) {
    std::vector<double> integrand(j + 1);
    for (std::size_t k = 0; k <= j; ++k)
      integrand[k] = (kit.phi[k] * run.z[k]).squaredNorm();
    // trapezoid over [t_0, t_j]
    double acc = 0.5 * (integrand.front() + integrand.back());
    for (std::size_t k = 1; k < j; ++k) acc += integrand[k];
    run.phi_quad = acc * h;
  }
  return run;
}

inline double sigma_from_parts(const Eigen::VectorXd& ell1, const Eigen::MatrixXd& KT,
                               double phi_quad, double eps, bool* clamped) {
  const Eigen::MatrixXd IK = Eigen::MatrixXd::Identity(KT.rows(), KT.cols()) + KT;
  const Eigen::VectorXd w = IK.ldlt().solve(ell1);
  const double value = (w.dot(KT * w) - phi_quad) / eps;
  if (clamped) *clamped = value < 0.0;
  return std::max(value, 0.0);
}

inline EstimateReport zero_rank_report(const CanonicalModel& cm, std::optional<double> eps) {
  EstimateReport rep;
  rep.eps = eps;
  rep.K = RiccatiSolution{cm.grid(),
                          std::vector<Eigen::MatrixXd>(cm.grid().n_nodes(),
                                                       Eigen::MatrixXd::Zero(0, 0)),
                          IntegrationDirection::forward, "rank-zero"};
  rep.xhat = Trajectory{cm.grid(),
                        std::vector<Eigen::VectorXd>(cm.grid().n_nodes(), Eigen::VectorXd()),
                        "xhat"};
  rep.diagnostics.notes.push_back("F has rank 0: the estimated functional is identically 0");
  return rep;
}

}  // namespace detail

// =============================================================================
// Regularized (suboptimal) recursive filter
// =============================================================================

/**
 * Runs the regularized recursive estimator for eps > 0:
 *   K' = -K C(t,eps) - C'(t,eps) K - K Q(t,eps) K + S(t,eps),  K(t0) = 0
 *   xhat' = (-C'(t,eps) - K Q(t,eps)) xhat + (1/eps) Phi' H' R y,  xhat(t0) = 0
 *   z1'  = (C(t,eps) + Q(t,eps) K) z1,  z1(T) = (I + K(T))^{-1} ell1  (backward)
 * and reports
 *   estimate_value = <(I+K(T))^{-1} ell1, xhat(T)>
 *   sigma_hat = (1/eps) [ <(I+K(T))^{-1} ell1, K(T) (I+K(T))^{-1} ell1>
 *                         - int ||Phi z1||^2 dt ].
 *
 * y may be sampled on the model grid (linear interpolation at stage times) or
 * on its half-step refinement (stage-exact).
 */
inline EstimateReport suboptimal_filter(const CanonicalModel& cm, const Trajectory& y,
                                        const Direction& ell, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("suboptimal_filter: eps must be positive");
  if (cm.r() == 0) return detail::zero_rank_report(cm, eps);
  const TimeGrid& grid = cm.grid();
  if (y.grid.t0() != grid.t0() || y.grid.t_end() != grid.t_end())
    throw std::invalid_argument("suboptimal_filter: y must span the model horizon");

  const detail::SubKit kit = detail::make_sub_kit(cm, eps);
  const Eigen::VectorXd l1 = cm.ell1(ell);

  Trajectory xhat = integrate_linear(
      [&](double t, Eigen::MatrixXd& A, Eigen::VectorXd& g) {
        const std::size_t k = kit.fine.nearest_node(t);
        A = kit.state_mat[k];
        g = kit.gain[k] * y.at(t);
      },
      grid, IntegrationDirection::forward, Eigen::VectorXd::Zero(cm.r()), "xhat(eps)");

  EstimateReport rep;
  rep.eps = eps;
  rep.K = detail::restrict_to_grid(kit.Kfine, grid);
  rep.xhat = std::move(xhat);

  const detail::DualRun dual = detail::sub_dual_backward(cm, kit, l1, grid.n_steps());
  rep.z1 = Trajectory{grid, dual.z, "z1(eps)"};

  const Eigen::MatrixXd& KT = rep.K.K.back();
  const Eigen::MatrixXd IK = Eigen::MatrixXd::Identity(KT.rows(), KT.cols()) + KT;
  const Eigen::VectorXd w = IK.ldlt().solve(l1);
  rep.estimate_value = w.dot(rep.xhat.values.back());
  rep.sigma_hat =
      detail::sigma_from_parts(l1, KT, dual.phi_quad, eps, &rep.diagnostics.sigma_clamped);

  rep.gain_log.reserve(grid.n_nodes());
  for (std::size_t k = 0; k < grid.n_nodes(); ++k) rep.gain_log.push_back(kit.gain[2 * k]);
  rep.diagnostics.ell2_nonzero = cm.ell2(ell).norm() > 1e-12;
  if (rep.diagnostics.ell2_nonzero)
    rep.diagnostics.notes.push_back("ell has a component outside R(F'); it is ignored");
  return rep;
}

/// Worst-case error of the regularized estimator alone (no observations needed).
inline double suboptimal_sigma(const CanonicalModel& cm, const Direction& ell, double eps) {
  if (cm.r() == 0) return 0.0;
  const detail::SubKit kit = detail::make_sub_kit(cm, eps);
  const Eigen::VectorXd l1 = cm.ell1(ell);
  const detail::DualRun dual = detail::sub_dual_backward(cm, kit, l1, cm.grid().n_steps());
  return detail::sigma_from_parts(l1, kit.Kfine.K.back(), dual.phi_quad, eps, nullptr);
}

/// sigma_hat(t_k, eps) at every node: each entry solves the dual system
/// backward from t_k, so the cost is O(n_steps^2) table-lookup stages.
inline std::vector<double> suboptimal_sigma_trajectory(const CanonicalModel& cm,
                                                       const Direction& ell, double eps) {
  const TimeGrid& grid = cm.grid();
  std::vector<double> out(grid.n_nodes(), 0.0);
  if (cm.r() == 0) return out;
  const detail::SubKit kit = detail::make_sub_kit(cm, eps);
  const Eigen::VectorXd l1 = cm.ell1(ell);
  for (std::size_t j = 1; j < grid.n_nodes(); ++j) {
    const detail::DualRun dual = detail::sub_dual_backward(cm, kit, l1, j);
    out[j] = detail::sigma_from_parts(l1, kit.Kfine.K[2 * j], dual.phi_quad, eps, nullptr);
  }
  return out;
}

// =============================================================================
// Optimal recursive filter (regular structure)
// =============================================================================

/**
 * Runs the optimal recursive estimator, available when the regularity gate
 * (solvability of W(t,0) p2 = B z1 - A' p1 along the grid) passes:
 *   K' = C+ K + K C+' - K Q+ K + S+,  K(t0) = 0
 *   xhat' = (C+ - K Q+) xhat + [K, (B' - K A) W+] H' R y,  xhat(t0) = 0
 * with estimate_value = <ell1, xhat(T)> and sigma_hat = <K(T) ell1, ell1>.
 */
inline EstimateReport optimal_filter(const CanonicalModel& cm, const Trajectory& y,
                                     const Direction& ell) {
  if (cm.r() == 0) {
    EstimateReport rep = detail::zero_rank_report(cm, std::nullopt);
    rep.diagnostics.regular_gate_passed = true;
    return rep;
  }
  const RegularityReport gate = regularity_check(cm);
  if (!gate.all_solvable())
    throw std::runtime_error("optimal_filter: regularity gate failed at node " +
                             std::to_string(gate.first_unsolvable_node()));
  const TimeGrid& grid = cm.grid();
  if (y.grid.t0() != grid.t0() || y.grid.t_end() != grid.t_end())
    throw std::invalid_argument("optimal_filter: y must span the model horizon");

  const RiccatiSolution Kfine = detail::opt_riccati_fine(cm);
  const Eigen::VectorXd l1 = cm.ell1(ell);

  const TimeGrid fine = grid.refined(2);
  std::vector<Eigen::MatrixXd> state_mat(fine.n_nodes()), gain(fine.n_nodes());
  for (std::size_t k = 0; k < fine.n_nodes(); ++k) {
    const double t = fine.node(k);
    const LimitCoeffs lc = limit_coeffs(cm, t);
    state_mat[k] = lc.Cplus - Kfine.K[k] * lc.Qplus;
    gain[k] = opt_gain(cm, lc, Kfine.K[k], t);
  }

  Trajectory xhat = integrate_linear(
      [&](double t, Eigen::MatrixXd& A, Eigen::VectorXd& g) {
        const std::size_t k = fine.nearest_node(t);
        A = state_mat[k];
        g = gain[k] * y.at(t);
      },
      grid, IntegrationDirection::forward, Eigen::VectorXd::Zero(cm.r()), "xhat");

  EstimateReport rep;
  rep.K = detail::restrict_to_grid(Kfine, grid);
  rep.xhat = std::move(xhat);
  rep.estimate_value = l1.dot(rep.xhat.values.back());
  rep.sigma_hat = l1.dot(rep.K.K.back() * l1);
  rep.diagnostics.regular_gate_passed = true;

  rep.gain_log.reserve(grid.n_nodes());
  for (std::size_t k = 0; k < grid.n_nodes(); ++k) rep.gain_log.push_back(gain[2 * k]);
  rep.diagnostics.ell2_nonzero = cm.ell2(ell).norm() > 1e-12;
  if (rep.diagnostics.ell2_nonzero)
    rep.diagnostics.notes.push_back("ell has a component outside R(F'); it is ignored");
  return rep;
}

/// sigma_hat(t_k) = <K(t_k) ell1, ell1> along an optimal-filter run.
inline std::vector<double> optimal_sigma_trajectory(const EstimateReport& rep,
                                                    const CanonicalModel& cm,
                                                    const Direction& ell) {
  const Eigen::VectorXd l1 = cm.ell1(ell);
  std::vector<double> out(rep.K.K.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = l1.dot(rep.K.K[k] * l1);
  return out;
}

// =============================================================================
// Minimax-observability probe
// =============================================================================

/**
 * Runs sigma_hat(eps) over a strictly decreasing eps sequence and classifies
 * the direction:
 *  - observable when the last three entries agree within rel_tol,
 *  - unobservable when the entries keep growing at >= growth_per_decade per
 *    eps-decade over the last three entries,
 *  - inconclusive otherwise (numerical failures are absorbed here).
 * The Euler-Lagrange error formula is cross-evaluated through the BVP oracle
 * at the largest eps and the discrepancy is reported.
 *
 * Known limitation: sigma_hat(eps) equals the squared dual norm of the
 * regularized minimizer. It diverges only when the terminal data can be
 * approached but not attained by the adjoint dynamics. A direction whose
 * infeasibility is orthogonal to the closure of the constraint range keeps a
 * bounded (convergent) sweep, so no eps-sweep heuristic can flag it; such
 * directions are reported observable with the settled proxy value.
 * Divergence rates below 1/eps occur (the blind builtin variant grows like
 * eps^{-1/2}), which is why the growth threshold sits well under 10x/decade.
 */
inline ObservabilityReport worst_case_error_limit(const CanonicalModel& cm, const Direction& ell,
                                                  std::vector<double> eps_sequence = {},
                                                  ObservabilityOptions opts = {}) {
  if (eps_sequence.empty()) eps_sequence = default_eps_sweep();
  for (std::size_t i = 0; i + 1 < eps_sequence.size(); ++i)
    if (!(eps_sequence[i] > eps_sequence[i + 1]))
      throw std::invalid_argument("worst_case_error_limit: eps must be strictly decreasing");
  if (eps_sequence.back() < opts.eps_min)
    throw std::invalid_argument("worst_case_error_limit: eps below eps_min");

  ObservabilityReport rep;
  rep.ell = ell;

  std::vector<std::optional<double>> sigmas(eps_sequence.size());
  std::vector<std::string> errors(eps_sequence.size());
  auto run_one = [&](std::size_t i) {
    try {
      sigmas[i] = suboptimal_sigma(cm, ell, eps_sequence[i]);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  };
  if (opts.parallel) {
    std::vector<std::future<void>> futs;
    futs.reserve(eps_sequence.size());
    for (std::size_t i = 0; i < eps_sequence.size(); ++i)
      futs.push_back(std::async(std::launch::async, run_one, i));
    for (auto& f : futs) f.get();
  } else {
    for (std::size_t i = 0; i < eps_sequence.size(); ++i) run_one(i);
  }

  std::vector<double> ok_eps, ok_sigma;
  for (std::size_t i = 0; i < eps_sequence.size(); ++i) {
    if (sigmas[i]) {
      rep.eps_sweep.emplace_back(eps_sequence[i], *sigmas[i]);
      ok_eps.push_back(eps_sequence[i]);
      ok_sigma.push_back(*sigmas[i]);
    } else {
      rep.failures.push_back("eps=" + std::to_string(eps_sequence[i]) + ": " + errors[i]);
    }
  }

  std::ostringstream why;
  if (ok_sigma.size() < 3) {
    rep.verdict = Verdict::inconclusive;
    why << "fewer than three sweep entries succeeded";
  } else {
    const std::size_t nn = ok_sigma.size();
    const double last = ok_sigma[nn - 1];
    rep.sigma_last = last;
    rep.sigma_min = *std::min_element(ok_sigma.begin(), ok_sigma.end());
    const double scale = std::max(1.0, std::abs(last));
    const bool cauchy = std::abs(ok_sigma[nn - 2] - last) <= opts.rel_tol * scale &&
                        std::abs(ok_sigma[nn - 3] - last) <= opts.rel_tol * scale;
    if (cauchy) {
      rep.verdict = Verdict::observable;
      why << "sigma(eps) settled to " << last << " within rel_tol=" << opts.rel_tol;
    } else {
      // per-decade geometric growth over the last three entries
      bool growing = ok_sigma[nn - 1] > ok_sigma[nn - 2] && ok_sigma[nn - 2] > ok_sigma[nn - 3];
      double min_rate = std::numeric_limits<double>::infinity();
      for (std::size_t i = nn - 3; i + 1 < nn; ++i) {
        const double decades = std::log10(ok_eps[i] / ok_eps[i + 1]);
        if (ok_sigma[i] <= 0.0 || decades <= 0.0) {
          growing = growing && ok_sigma[i + 1] > 0.0;
          continue;
        }
        min_rate = std::min(min_rate, std::pow(ok_sigma[i + 1] / ok_sigma[i], 1.0 / decades));
      }
      if (growing && min_rate >= opts.growth_per_decade) {
        rep.verdict = Verdict::unobservable;
        why << "sigma(eps) keeps growing at >= " << min_rate
            << "x per eps-decade (threshold " << opts.growth_per_decade << ")";
      } else {
        rep.verdict = Verdict::inconclusive;
        why << "sigma(eps) neither settled nor showed sustained growth";
      }
    }
  }
  if (!rep.failures.empty()) why << "; " << rep.failures.size() << " sweep entries failed";

  if (opts.cross_check_bvp && !ok_sigma.empty() && cm.r() > 0) {
    try {
      const BvpSolution bvp = solve_regularized_bvp(cm, ell, ok_eps.front());
      const double ref = ok_sigma.front();
      rep.bvp_cross_discrepancy =
          std::abs(std::max(bvp.sigma_hat, 0.0) - ref) / std::max(1.0, std::abs(ref));
      why << "; BVP error-formula cross-check at eps=" << ok_eps.front()
          << " differs by " << rep.bvp_cross_discrepancy << " (relative)";
    } catch (const std::exception& e) {
      why << "; BVP cross-check failed: " << e.what();
    }
  }
  rep.rationale = why.str();
  return rep;
}

}  // namespace daemx
