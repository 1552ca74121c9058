#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <stdexcept>
#include <string>
#include <vector>

#include "daemx/canonical.hpp"
#include "daemx/coeffs.hpp"
#include "daemx/ode.hpp"

namespace daemx {

/**
 * Solution of an Euler-Lagrange two-point boundary-value system by global
 * trapezoidal collocation: one sparse linear solve over all unknowns at all
 * nodes. Deliberately a different scheme from the filters' 4th-order
 * integrator, so agreement between the two is evidence rather than shared
 * bias.
 *
 * p is the canonical n-dim costate (p1, p2); z the canonical m-dim dual
 * (z1, z2); u_hat the induced estimation kernel ((1/eps) R H p for the
 * regularized system, R H p for the regular one).
 */
struct BvpSolution {
  Trajectory p;
  Trajectory z;
  Trajectory u_hat;
  double residual_norm = 0.0;
  bool converged = false;
  double sigma_hat = 0.0;
};

namespace detail {

struct SparseSystem {
  std::vector<Eigen::Triplet<double>> trip;
  Eigen::VectorXd rhs;
  Eigen::Index n_eq = 0;

  void add(Eigen::Index row, Eigen::Index col, double v) {
    if (v != 0.0) trip.emplace_back(row, col, v);
  }
  /// Adds block * (variables at col0..) into rows row0..
  void add_block(Eigen::Index row0, Eigen::Index col0, const Eigen::MatrixXd& block,
                 double scale = 1.0) {
    for (Eigen::Index i = 0; i < block.rows(); ++i)
      for (Eigen::Index j = 0; j < block.cols(); ++j) add(row0 + i, col0 + j, scale * block(i, j));
  }
};

inline Eigen::VectorXd solve_sparse(SparseSystem& sys, Eigen::Index n_unknowns,
                                    double* residual_out) {
  Eigen::SparseMatrix<double> A(sys.n_eq, n_unknowns);
  A.setFromTriplets(sys.trip.begin(), sys.trip.end());
  A.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.analyzePattern(A);
  lu.factorize(A);
  if (lu.info() != Eigen::Success)
    throw std::runtime_error("oracle: singular discrete system (factorization failed)");
  Eigen::VectorXd sol = lu.solve(sys.rhs);
  if (lu.info() != Eigen::Success) throw std::runtime_error("oracle: sparse solve failed");
  if (residual_out)
    *residual_out = (A * sol - sys.rhs).norm() / (1.0 + sys.rhs.norm());
  return sol;
}

}  // namespace detail

/**
 * Regularized Euler-Lagrange system in canonical split form, for eps > 0:
 *   p1' = C1 p1 + C2 p2 + eps (Q1 z1 + Q2 z2)
 *   z1' = -C1' z1 - C3' z2 + p1 + (1/eps)(S1 p1 + S2 p2)
 *   0   = C3 p1 + C4 p2 + eps (Q2' z1 + Q4 z2)
 *   0   = S2' p1 + (eps I + S4) p2 - eps C2' z1 - eps C4' z2
 * with p1(t0) = 0 and z1(T) + p1(T) = ell1. The two ODEs are discretized by
 * the trapezoid rule, the algebraic rows are enforced at every node, and the
 * whole stack is solved as one sparse linear system.
 */
inline BvpSolution solve_regularized_bvp(const CanonicalModel& cm, const Direction& ell,
                                         double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("solve_regularized_bvp: eps must be positive");
  const Eigen::Index r = cm.r(), m = cm.m(), n = cm.n();
  const Eigen::Index nr = n - r, mr = m - r;
  const TimeGrid& grid = cm.grid();
  const auto N = static_cast<Eigen::Index>(grid.n_steps());
  const double h = grid.step();
  const Eigen::Index stride = m + n;  // (p1, z1, p2, z2) per node
  const Eigen::Index n_un = stride * (N + 1);

  auto ip1 = [&](Eigen::Index k) { return stride * k; };
  auto iz1 = [&](Eigen::Index k) { return stride * k + r; };
  auto ip2 = [&](Eigen::Index k) { return stride * k + 2 * r; };
  auto iz2 = [&](Eigen::Index k) { return stride * k + 2 * r + nr; };

  struct NodeData {
    CanonicalModel::CBlocks cb;
    CanonicalModel::QBlocks qb;
    CanonicalModel::SBlocks sb;
  };
  std::vector<NodeData> nd(N + 1);
  for (Eigen::Index k = 0; k <= N; ++k) {
    const double t = grid.node(k);
    nd[k] = {cm.c_blocks(t), cm.q_blocks(t), cm.s_blocks(t)};
  }

  detail::SparseSystem sys;
  sys.n_eq = 2 * r * N + (N + 1) * (mr + nr) + 2 * r;
  sys.rhs = Eigen::VectorXd::Zero(sys.n_eq);
  Eigen::Index row = 0;

  const Eigen::MatrixXd Ir = Eigen::MatrixXd::Identity(r, r);
  const Eigen::MatrixXd Inr = Eigen::MatrixXd::Identity(nr, nr);

  for (Eigen::Index k = 0; k < N; ++k) {
    // p1_{k+1} - p1_k = (h/2) [f1(k) + f1(k+1)]
    sys.add_block(row, ip1(k + 1), Ir);
    sys.add_block(row, ip1(k), -Ir);
    for (Eigen::Index kk : {k, k + 1}) {
      const auto& d = nd[kk];
      sys.add_block(row, ip1(kk), d.cb.C1, -h / 2);
      sys.add_block(row, ip2(kk), d.cb.C2, -h / 2);
      sys.add_block(row, iz1(kk), d.qb.Q1, -h / 2 * eps);
      sys.add_block(row, iz2(kk), d.qb.Q2, -h / 2 * eps);
    }
    row += r;
    // z1_{k+1} - z1_k = (h/2) [f2(k) + f2(k+1)]
    sys.add_block(row, iz1(k + 1), Ir);
    sys.add_block(row, iz1(k), -Ir);
    for (Eigen::Index kk : {k, k + 1}) {
      const auto& d = nd[kk];
      sys.add_block(row, iz1(kk), d.cb.C1.transpose(), h / 2);
      sys.add_block(row, iz2(kk), d.cb.C3.transpose(), h / 2);
      sys.add_block(row, ip1(kk), Ir + d.sb.S1 / eps, -h / 2);
      sys.add_block(row, ip2(kk), d.sb.S2, -h / 2 / eps);
    }
    row += r;
  }
  for (Eigen::Index k = 0; k <= N; ++k) {
    const auto& d = nd[k];
    sys.add_block(row, ip1(k), d.cb.C3);
    sys.add_block(row, ip2(k), d.cb.C4);
    sys.add_block(row, iz1(k), d.qb.Q2.transpose(), eps);
    sys.add_block(row, iz2(k), d.qb.Q4, eps);
    row += mr;
    sys.add_block(row, ip1(k), d.sb.S2.transpose());
    sys.add_block(row, ip2(k), eps * Inr + d.sb.S4);
    sys.add_block(row, iz1(k), d.cb.C2.transpose(), -eps);
    sys.add_block(row, iz2(k), d.cb.C4.transpose(), -eps);
    row += nr;
  }
  // boundary rows: p1(t0) = 0, z1(T) + p1(T) = ell1
  sys.add_block(row, ip1(0), Ir);
  row += r;
  sys.add_block(row, iz1(N), Ir);
  sys.add_block(row, ip1(N), Ir);
  sys.rhs.segment(row, r) = cm.ell1(ell);
  row += r;

  double resid = 0.0;
  const Eigen::VectorXd sol = detail::solve_sparse(sys, n_un, &resid);

  BvpSolution out;
  out.residual_norm = resid;
  out.converged = resid <= 1e-8;
  out.p = Trajectory{grid, std::vector<Eigen::VectorXd>(N + 1), "p(eps)"};
  out.z = Trajectory{grid, std::vector<Eigen::VectorXd>(N + 1), "z(eps)"};
  out.u_hat = Trajectory{grid, std::vector<Eigen::VectorXd>(N + 1), "u_hat(eps)"};
  std::vector<double> p_norm2(N + 1);
  for (Eigen::Index k = 0; k <= N; ++k) {
    Eigen::VectorXd p(n), z(m);
    p.head(r) = sol.segment(ip1(k), r);
    p.tail(nr) = sol.segment(ip2(k), nr);
    z.head(r) = sol.segment(iz1(k), r);
    z.tail(mr) = sol.segment(iz2(k), mr);
    const double t = grid.node(k);
    out.u_hat.values[k] = (1.0 / eps) * cm.R(t) * cm.H(t) * p;
    out.p.values[k] = std::move(p);
    out.z.values[k] = std::move(z);
    p_norm2[k] = out.p.values[k].squaredNorm();
  }
  const Eigen::VectorXd p1T = out.p.values[N].head(r);
  const Eigen::VectorXd l1 = cm.ell1(ell);
  out.sigma_hat = ((l1 - p1T).dot(p1T) - quadrature(grid, p_norm2)) / eps;
  return out;
}

/**
 * Reduced Hamilton system of the regular problem,
 *   p1' = C+ p1 + S+ z1,  p1(t0) = 0
 *   z1' = -C+' z1 + Q+ p1,  z1(T) = ell1
 * solved by the same trapezoidal collocation; p2 = W+ (B z1 - A' p1) and
 * z2 = -Q4^{-1} (C3 p1 + C4 p2 + Q2' z1) are reconstructed afterwards.
 * u_hat = R H p and sigma_hat = <ell1, p1(T)>.
 */
inline BvpSolution solve_regular_bvp(const CanonicalModel& cm, const Direction& ell) {
  const RegularityReport gate = regularity_check(cm);
  if (!gate.all_solvable())
    throw std::runtime_error("solve_regular_bvp: regularity gate failed at node " +
                             std::to_string(gate.first_unsolvable_node()));

  const Eigen::Index r = cm.r(), m = cm.m(), n = cm.n();
  const Eigen::Index nr = n - r, mr = m - r;
  const TimeGrid& grid = cm.grid();
  const auto N = static_cast<Eigen::Index>(grid.n_steps());
  const double h = grid.step();
  const Eigen::Index stride = 2 * r;
  auto ip1 = [&](Eigen::Index k) { return stride * k; };
  auto iz1 = [&](Eigen::Index k) { return stride * k + r; };

  std::vector<LimitCoeffs> lc(N + 1);
  for (Eigen::Index k = 0; k <= N; ++k) lc[k] = limit_coeffs(cm, grid.node(k));

  detail::SparseSystem sys;
  sys.n_eq = stride * (N + 1);
  sys.rhs = Eigen::VectorXd::Zero(sys.n_eq);
  const Eigen::MatrixXd Ir = Eigen::MatrixXd::Identity(r, r);
  Eigen::Index row = 0;
  for (Eigen::Index k = 0; k < N; ++k) {
    sys.add_block(row, ip1(k + 1), Ir);
    sys.add_block(row, ip1(k), -Ir);
    for (Eigen::Index kk : {k, k + 1}) {
      sys.add_block(row, ip1(kk), lc[kk].Cplus, -h / 2);
      sys.add_block(row, iz1(kk), lc[kk].Splus, -h / 2);
    }
    row += r;
    sys.add_block(row, iz1(k + 1), Ir);
    sys.add_block(row, iz1(k), -Ir);
    for (Eigen::Index kk : {k, k + 1}) {
      sys.add_block(row, iz1(kk), lc[kk].Cplus.transpose(), h / 2);
      sys.add_block(row, ip1(kk), lc[kk].Qplus, -h / 2);
    }
    row += r;
  }
  sys.add_block(row, ip1(0), Ir);
  row += r;
  sys.add_block(row, iz1(N), Ir);
  sys.rhs.segment(row, r) = cm.ell1(ell);
  row += r;

  double resid = 0.0;
  const Eigen::VectorXd sol = detail::solve_sparse(sys, stride * (N + 1), &resid);

  BvpSolution out;
  out.residual_norm = resid;
  out.converged = resid <= 1e-8;
  out.p = Trajectory{grid, std::vector<Eigen::VectorXd>(N + 1), "p"};
  out.z = Trajectory{grid, std::vector<Eigen::VectorXd>(N + 1), "z"};
  out.u_hat = Trajectory{grid, std::vector<Eigen::VectorXd>(N + 1), "u_hat"};
  for (Eigen::Index k = 0; k <= N; ++k) {
    const double t = grid.node(k);
    const Eigen::VectorXd p1 = sol.segment(ip1(k), r);
    const Eigen::VectorXd z1 = sol.segment(iz1(k), r);
    const Eigen::VectorXd p2 = lc[k].Wplus * (lc[k].B * z1 - lc[k].A.transpose() * p1);
    const auto cb = cm.c_blocks(t);
    const auto qb = cm.q_blocks(t);
    Eigen::VectorXd z2(mr);
    if (mr > 0) {
      const Eigen::VectorXd rhs2 = cb.C3 * p1 + cb.C4 * p2 + qb.Q2.transpose() * z1;
      z2 = -qb.Q4.ldlt().solve(rhs2);
    }
    Eigen::VectorXd p(n), z(m);
    p.head(r) = p1;
    p.tail(nr) = p2;
    z.head(r) = z1;
    z.tail(mr) = z2;
    out.u_hat.values[k] = cm.R(t) * cm.H(t) * p;
    out.p.values[k] = std::move(p);
    out.z.values[k] = std::move(z);
  }
  out.sigma_hat = cm.ell1(ell).dot(out.p.values[N].head(r));
  return out;
}

/// Trapezoid pairing int <y, u_hat> dt; y is sampled at the oracle's nodes
/// (exactly when the grids match, by interpolation from a refinement).
inline double pairing_estimate(const Trajectory& y, const BvpSolution& bvp) {
  const TimeGrid& grid = bvp.u_hat.grid;
  std::vector<double> vals(grid.n_nodes());
  for (std::size_t k = 0; k < grid.n_nodes(); ++k)
    vals[k] = y.at(grid.node(k)).dot(bvp.u_hat.values[k]);
  return quadrature(grid, vals);
}

/**
 * Residual of the integration-by-parts identity
 *   <F'w(T), F^+ F x(T)> - <F x(t0), F F^+ w(t0)>
 *     = int <(Fx)', w> + <(F'w)', x> dt
 * with finite-difference derivatives (2nd order, one-sided at the ends) and
 * trapezoidal quadrature. x is n-dim, w is m-dim, both on the same grid.
 */
inline double ibp_residual(const Eigen::MatrixXd& F, const Trajectory& x, const Trajectory& w,
                           const TimeGrid& grid) {
  if (!(x.grid == grid) || !(w.grid == grid))
    throw std::invalid_argument("ibp_residual: trajectories must live on the given grid");
  const auto N = grid.n_steps();
  const double h = grid.step();

  std::vector<Eigen::VectorXd> fx(N + 1), ftw(N + 1);
  for (std::size_t k = 0; k <= N; ++k) {
    fx[k] = F * x.values[k];
    ftw[k] = F.transpose() * w.values[k];
  }
  auto derivative = [&](const std::vector<Eigen::VectorXd>& v, std::size_t k) -> Eigen::VectorXd {
    if (k == 0) return (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
    if (k == N) return (3.0 * v[N] - 4.0 * v[N - 1] + v[N - 2]) / (2.0 * h);
    return (v[k + 1] - v[k - 1]) / (2.0 * h);
  };

  std::vector<double> integrand(N + 1);
  for (std::size_t k = 0; k <= N; ++k)
    integrand[k] = derivative(fx, k).dot(w.values[k]) + derivative(ftw, k).dot(x.values[k]);
  const double rhs = quadrature(grid, integrand);

  const Eigen::MatrixXd Fpinv = pinv(F);
  const double lhs = ftw[N].dot(Fpinv * fx[N]) - fx[0].dot(F * Fpinv * w.values[0]);
  return std::abs(lhs - rhs);
}

}  // namespace daemx
