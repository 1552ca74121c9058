#pragma once

#include <Eigen/Dense>
#include <memory>
#include <stdexcept>
#include <string>

#include "daemx/linalg.hpp"
#include "daemx/model.hpp"

namespace daemx {

// =============================================================================
// SVD reduction of F
// =============================================================================

/**
 * Orthogonal factorization F = S_L * Lambda * S_R with S_L S_L' = I,
 * S_R S_R' = I, and Lambda carrying the r positive singular values D^{1/2}
 * in its leading diagonal block (descending), zeros elsewhere.
 *
 * The record also caches the change of variables that brings the descriptor
 * matrix to [[I_r, 0], [0, 0]]:
 *   state       xi  = T_R S_R x,      x  = S_R' T_R^{-1} xi
 *   input       f_c = S_L' f
 *   direction   l_c = T_R^{-1} S_R l, l  = S_R' T_R l_c
 * with T_R = diag(D^{1/2}, I_{n-r}). Directions transform contravariantly to
 * the state, so <l, F^+ F x> = <l_c1, xi_1> for every x.
 */
struct SvdReduction {
  Eigen::MatrixXd S_L;     // m x m orthogonal
  Eigen::MatrixXd S_R;     // n x n orthogonal
  Eigen::MatrixXd Lambda;  // m x n
  Eigen::Index r = 0;
  Eigen::VectorXd d_sqrt;  // leading singular values (diagonal of D^{1/2})

  Eigen::MatrixXd state_fwd;  // n x n: x   -> xi
  Eigen::MatrixXd state_inv;  // n x n: xi  -> x
  Eigen::MatrixXd dir_fwd;    // n x n: l   -> l_c
  Eigen::MatrixXd dir_inv;    // n x n: l_c -> l
};

namespace detail {

// Deterministic sign convention: each singular vector is flipped so that its
// entry of largest magnitude (first such index on ties) is non-negative.
inline void fix_signs(Eigen::MatrixXd& U, Eigen::MatrixXd& SR, Eigen::Index r) {
  const Eigen::Index m = U.rows(), n = SR.rows();
  for (Eigen::Index i = 0; i < m; ++i) {
    Eigen::Index imax = 0;
    U.col(i).cwiseAbs().maxCoeff(&imax);
    if (U(imax, i) < 0.0) {
      U.col(i) = -U.col(i);
      if (i < r) SR.row(i) = -SR.row(i);  // paired flip keeps U * Sigma * SR invariant
    }
  }
  for (Eigen::Index j = r; j < n; ++j) {  // null-space rows of S_R are free
    Eigen::Index jmax = 0;
    SR.row(j).cwiseAbs().maxCoeff(&jmax);
    if (SR(j, jmax) < 0.0) SR.row(j) = -SR.row(j);
  }
}

}  // namespace detail

/// Factor F per the convention above; F = 0 yields r = 0, Lambda = 0.
inline SvdReduction svd_reduce(const Eigen::MatrixXd& F, double rank_tol = kRankTol) {
  const Eigen::Index m = F.rows(), n = F.cols();
  SvdReduction red;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(F, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::MatrixXd U = svd.matrixU();                      // m x m
  Eigen::MatrixXd SR = svd.matrixV().transpose();         // n x n
  const Eigen::VectorXd sv = svd.singularValues();

  Eigen::Index r = 0;
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > rank_tol * smax && sv(i) > 0.0) ++r;

  detail::fix_signs(U, SR, r);

  red.S_L = U;
  red.S_R = SR;
  red.r = r;
  red.d_sqrt = sv.head(r);
  red.Lambda = Eigen::MatrixXd::Zero(m, n);
  red.Lambda.topLeftCorner(r, r) = red.d_sqrt.asDiagonal();

  Eigen::VectorXd t_diag = Eigen::VectorXd::Ones(n);
  t_diag.head(r) = red.d_sqrt;
  red.state_fwd = t_diag.asDiagonal() * SR;
  red.state_inv = SR.transpose() * t_diag.cwiseInverse().asDiagonal();
  red.dir_fwd = t_diag.cwiseInverse().asDiagonal() * SR;
  red.dir_inv = SR.transpose() * t_diag.asDiagonal();
  return red;
}

enum class CoordKind { state, direction, estimate };

/// Map a quantity from original to canonical coordinates.
/// `estimate` maps an original state to the r-vector estimated by the filters.
inline Eigen::VectorXd push_forward(const SvdReduction& red, const Eigen::VectorXd& v,
                                    CoordKind kind) {
  const Eigen::Index n = red.S_R.rows();
  if (v.size() != n) throw std::invalid_argument("push_forward: length must be n");
  switch (kind) {
    case CoordKind::state:
      return red.state_fwd * v;
    case CoordKind::direction:
      return red.dir_fwd * v;
    case CoordKind::estimate:
      return (red.state_fwd * v).head(red.r);
  }
  throw std::logic_error("push_forward: bad kind");
}

/// Inverse of push_forward; `estimate` embeds an r-vector as the observable
/// part of an original-coordinates state (zeros elsewhere in canonical).
inline Eigen::VectorXd pull_back(const SvdReduction& red, const Eigen::VectorXd& v,
                                 CoordKind kind) {
  const Eigen::Index n = red.S_R.rows();
  switch (kind) {
    case CoordKind::state:
      if (v.size() != n) throw std::invalid_argument("pull_back: length must be n");
      return red.state_inv * v;
    case CoordKind::direction:
      if (v.size() != n) throw std::invalid_argument("pull_back: length must be n");
      return red.dir_inv * v;
    case CoordKind::estimate: {
      if (v.size() != red.r) throw std::invalid_argument("pull_back: length must be r");
      Eigen::VectorXd xi = Eigen::VectorXd::Zero(n);
      xi.head(red.r) = v;
      return red.state_inv * xi;
    }
  }
  throw std::logic_error("pull_back: bad kind");
}

// =============================================================================
// Canonical model and block partitions
// =============================================================================

/**
 * The model after the change of variables: descriptor matrix [[I_r,0],[0,0]],
 * canonical C(t) = S_L' C(t) S_R' T_R^{-1}, Q(t) = S_L' Q(t) S_L (so the
 * input-bound set is preserved), H(t) = H(t) S_R' T_R^{-1}, R unchanged.
 *
 * Blocks follow the row split (r, m-r) and column split (r, n-r):
 *   C -> C1 (r x r), C2 (r x n-r), C3 (m-r x r), C4 (m-r x n-r)
 *   Q -> Q1 (r x r), Q2 (r x m-r), Q4 (m-r x m-r)
 *   H'RH -> S1 (r x r), S2 (r x n-r), S4 (n-r x n-r)
 */
class CanonicalModel {
 public:
  struct CBlocks {
    Eigen::MatrixXd C1, C2, C3, C4;
  };
  struct QBlocks {
    Eigen::MatrixXd Q1, Q2, Q4;
  };
  struct SBlocks {
    Eigen::MatrixXd S1, S2, S4;
  };

  CanonicalModel(std::shared_ptr<const DaeModel> model, SvdReduction red)
      : model_(std::move(model)), red_(std::move(red)) {}

  Eigen::Index r() const { return red_.r; }
  Eigen::Index m() const { return model_->m(); }
  Eigen::Index n() const { return model_->n(); }
  Eigen::Index p() const { return model_->p(); }
  const TimeGrid& grid() const { return model_->grid; }
  const SvdReduction& reduction() const { return red_; }
  const DaeModel& original() const { return *model_; }

  Eigen::MatrixXd C(double t) const {
    return red_.S_L.transpose() * (*model_).C(t) * red_.state_inv;
  }
  Eigen::MatrixXd Q(double t) const {
    return red_.S_L.transpose() * (*model_).Q(t) * red_.S_L;
  }
  Eigen::MatrixXd H(double t) const { return (*model_).H(t) * red_.state_inv; }
  Eigen::MatrixXd R(double t) const { return (*model_).R(t); }
  Eigen::MatrixXd S(double t) const {
    const Eigen::MatrixXd h = H(t);
    return h.transpose() * R(t) * h;
  }

  CBlocks c_blocks(double t) const {
    const Eigen::MatrixXd c = C(t);
    const Eigen::Index rr = r();
    return {c.topLeftCorner(rr, rr), c.topRightCorner(rr, n() - rr),
            c.bottomLeftCorner(m() - rr, rr), c.bottomRightCorner(m() - rr, n() - rr)};
  }
  QBlocks q_blocks(double t) const {
    const Eigen::MatrixXd q = Q(t);
    const Eigen::Index rr = r();
    return {q.topLeftCorner(rr, rr), q.topRightCorner(rr, m() - rr),
            q.bottomRightCorner(m() - rr, m() - rr)};
  }
  SBlocks s_blocks(double t) const {
    const Eigen::MatrixXd s = S(t);
    const Eigen::Index rr = r();
    return {s.topLeftCorner(rr, rr), s.topRightCorner(rr, n() - rr),
            s.bottomRightCorner(n() - rr, n() - rr)};
  }

  /// Canonical direction components: ell1 drives the filters, a nonzero ell2
  /// is ignored (the estimated functional depends on ell1 only).
  Eigen::VectorXd ell1(const Direction& d) const {
    return push_forward(red_, d.ell, CoordKind::direction).head(r());
  }
  Eigen::VectorXd ell2(const Direction& d) const {
    return push_forward(red_, d.ell, CoordKind::direction).tail(n() - r());
  }

 private:
  std::shared_ptr<const DaeModel> model_;
  SvdReduction red_;
};

/// Reduce a validated model to canonical form. Throws std::invalid_argument
/// when validation fails and std::runtime_error when Q4 is not positive
/// definite at some node (the node is reported).
inline CanonicalModel canonicalize(const DaeModel& model) {
  ValidationReport rep = validate_model(model);
  if (!rep.ok())
    throw std::invalid_argument("canonicalize: invalid model:\n" + rep.summary());
  auto shared = std::make_shared<const DaeModel>(model);
  CanonicalModel cm(shared, svd_reduce(model.F));
  for (std::size_t k = 0; k < model.grid.n_nodes(); ++k) {
    const double t = model.grid.node(k);
    const Eigen::MatrixXd q4 = cm.q_blocks(t).Q4;
    if (q4.rows() > 0 && min_eigenvalue_sym(q4) <= kPdTol)
      throw std::runtime_error("canonicalize: Q4 not positive definite at node " +
                               std::to_string(k) + " (t=" + std::to_string(t) + ")");
  }
  return cm;
}

}  // namespace daemx
