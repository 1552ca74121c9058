#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "daemx/canonical.hpp"
#include "daemx/linalg.hpp"

namespace daemx {

// =============================================================================
// Regularized coefficient family (suboptimal path)
// =============================================================================

/**
 * Coefficients of the reduced Hamilton system at (t, eps), assembled from the
 * canonical blocks:
 *   A = C3' Q4^{-1} C4 + S2                       (r x n-r)
 *   B = C2' - C4' Q4^{-1} Q2'                     (n-r x r)
 *   W = eps I + S4 + C4' Q4^{-1} C4,  M = W^{-1}  (n-r x n-r)
 *   C = -C1' + C3' Q4^{-1} Q2' + A M B            (r x r)
 *   Q = I + (1/eps)[S1 + C3' Q4^{-1} C3] - (1/eps) A M A'
 *   S = eps [Q1 - Q2 Q4^{-1} Q2' + B' M B]
 * Q and S are symmetric PSD for eps > 0.
 */
struct SubCoeffs {
  Eigen::MatrixXd A, B, W, M, C, Q, S;
};

inline SubCoeffs sub_coeffs(const CanonicalModel& cm, double t, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("sub_coeffs: eps must be positive");
  const auto cb = cm.c_blocks(t);
  const auto qb = cm.q_blocks(t);
  const auto sb = cm.s_blocks(t);
  const Eigen::Index r = cm.r(), nr = cm.n() - r;

  const Eigen::MatrixXd q4inv = inverse_spd(qb.Q4);

  SubCoeffs sc;
  sc.A = cb.C3.transpose() * q4inv * cb.C4 + sb.S2;
  sc.B = cb.C2.transpose() - cb.C4.transpose() * q4inv * qb.Q2.transpose();
  sc.W = eps * Eigen::MatrixXd::Identity(nr, nr) + sb.S4 + cb.C4.transpose() * q4inv * cb.C4;
  sc.W = 0.5 * (sc.W + sc.W.transpose().eval());
  sc.M = inverse_spd(sc.W);
  sc.C = -cb.C1.transpose() + cb.C3.transpose() * q4inv * qb.Q2.transpose() + sc.A * sc.M * sc.B;
  sc.Q = Eigen::MatrixXd::Identity(r, r) +
         (1.0 / eps) * (sb.S1 + cb.C3.transpose() * q4inv * cb.C3) -
         (1.0 / eps) * sc.A * sc.M * sc.A.transpose();
  sc.Q = 0.5 * (sc.Q + sc.Q.transpose().eval());
  sc.S = eps * (qb.Q1 - qb.Q2 * q4inv * qb.Q2.transpose() + sc.B.transpose() * sc.M * sc.B);
  sc.S = 0.5 * (sc.S + sc.S.transpose().eval());
  return sc;
}

/// Phi(t, eps) = [K; M (eps B - A' K)], an n x r matrix (given K = K(t, eps)).
inline Eigen::MatrixXd phi_matrix(const SubCoeffs& sc, const Eigen::MatrixXd& K, double eps) {
  const Eigen::Index r = K.rows(), nr = sc.B.rows();
  Eigen::MatrixXd phi(r + nr, r);
  phi.topRows(r) = K;
  phi.bottomRows(nr) = sc.M * (eps * sc.B - sc.A.transpose() * K);
  return phi;
}

/// Observation gain of the regularized filter, (1/eps) Phi' H' R, an r x p matrix.
inline Eigen::MatrixXd sub_gain(const CanonicalModel& cm, const SubCoeffs& sc,
                                const Eigen::MatrixXd& K, double t, double eps) {
  const Eigen::MatrixXd phi = phi_matrix(sc, K, eps);
  return (1.0 / eps) * phi.transpose() * cm.H(t).transpose() * cm.R(t);
}

// =============================================================================
// Limit coefficients (optimal path, eps -> 0)
// =============================================================================

/**
 * eps -> 0 limits under the regularity condition, with W+ = pinv(W(t,0)):
 *   C+ = C1 - Q2 Q4^{-1} C3 - B' W+ A'
 *   S+ = Q1 - Q2 Q4^{-1} Q2' + B' W+ B
 *   Q+ = S1 + C3' Q4^{-1} C3 - A W+ A'
 * A and B do not depend on eps and are carried along for the gain assembly.
 */
struct LimitCoeffs {
  Eigen::MatrixXd Cplus, Splus, Qplus, Wplus, A, B;
};

inline LimitCoeffs limit_coeffs(const CanonicalModel& cm, double t) {
  const auto cb = cm.c_blocks(t);
  const auto qb = cm.q_blocks(t);
  const auto sb = cm.s_blocks(t);

  const Eigen::MatrixXd q4inv = inverse_spd(qb.Q4);

  LimitCoeffs lc;
  lc.A = cb.C3.transpose() * q4inv * cb.C4 + sb.S2;
  lc.B = cb.C2.transpose() - cb.C4.transpose() * q4inv * qb.Q2.transpose();
  Eigen::MatrixXd w0 = sb.S4 + cb.C4.transpose() * q4inv * cb.C4;
  w0 = 0.5 * (w0 + w0.transpose().eval());
  lc.Wplus = pinv(w0);
  lc.Cplus = cb.C1 - qb.Q2 * q4inv * cb.C3 - lc.B.transpose() * lc.Wplus * lc.A.transpose();
  lc.Splus = qb.Q1 - qb.Q2 * q4inv * qb.Q2.transpose() + lc.B.transpose() * lc.Wplus * lc.B;
  lc.Splus = 0.5 * (lc.Splus + lc.Splus.transpose().eval());
  lc.Qplus = sb.S1 + cb.C3.transpose() * q4inv * cb.C3 - lc.A * lc.Wplus * lc.A.transpose();
  lc.Qplus = 0.5 * (lc.Qplus + lc.Qplus.transpose().eval());
  return lc;
}

/// Observation gain of the optimal filter, [K, (B' - K A) W+] H' R, an r x p matrix.
inline Eigen::MatrixXd opt_gain(const CanonicalModel& cm, const LimitCoeffs& lc,
                                const Eigen::MatrixXd& K, double t) {
  const Eigen::Index r = cm.r(), nr = cm.n() - r;
  Eigen::MatrixXd block(r, r + nr);
  block.leftCols(r) = K;
  block.rightCols(nr) = (lc.B.transpose() - K * lc.A) * lc.Wplus;
  return block * cm.H(t).transpose() * cm.R(t);
}

// =============================================================================
// Regularity probe
// =============================================================================

/**
 * Per-node regularity diagnostics.
 *
 * column_space_ok evaluates the abstract inclusion R((I-V)C'P) in
 * R((I-V)C'(I-P)) with P, V the leading-coordinate projections; under the
 * canonical splitting this is R(C2') in R(C4'), tested by rank comparison.
 *
 * solvable_ok tests that the columns of [B, A'] lie in the range of W(t, 0),
 * i.e. the algebraic equation W(t,0) p2 = B z1 - A' p1 is solvable for any
 * right-hand side produced by the reduced system. This is the operative gate
 * for the optimal filter.
 */
struct RegularityReport {
  std::vector<bool> column_space_ok;
  std::vector<bool> solvable_ok;

  bool all_solvable() const {
    for (bool b : solvable_ok)
      if (!b) return false;
    return true;
  }
  std::ptrdiff_t first_unsolvable_node() const {
    for (std::size_t k = 0; k < solvable_ok.size(); ++k)
      if (!solvable_ok[k]) return static_cast<std::ptrdiff_t>(k);
    return -1;
  }
};

inline RegularityReport regularity_check(const CanonicalModel& cm) {
  RegularityReport rep;
  const auto& grid = cm.grid();
  rep.column_space_ok.reserve(grid.n_nodes());
  rep.solvable_ok.reserve(grid.n_nodes());
  for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
    const double t = grid.node(k);
    const auto cb = cm.c_blocks(t);
    const Eigen::MatrixXd c2t = cb.C2.transpose();
    const Eigen::MatrixXd c4t = cb.C4.transpose();
    Eigen::MatrixXd aug(c4t.rows(), c4t.cols() + c2t.cols());
    aug << c4t, c2t;
    rep.column_space_ok.push_back(numerical_rank(aug) == numerical_rank(c4t));

    const SubCoeffs sc = sub_coeffs(cm, t, 1.0);  // A, B are eps-independent
    Eigen::MatrixXd w0 = sc.W - Eigen::MatrixXd::Identity(sc.W.rows(), sc.W.cols());
    Eigen::MatrixXd ba(sc.B.rows(), sc.B.cols() + sc.A.rows());
    ba << sc.B, sc.A.transpose();
    rep.solvable_ok.push_back(range_contained_in(ba, w0));
  }
  return rep;
}

}  // namespace daemx
