#pragma once

#include <Eigen/Dense>
#include <limits>

namespace daemx {

inline constexpr double kPdTol = 1e-10;    // positive-definiteness threshold
inline constexpr double kRankTol = 1e-12;  // relative singular-value cutoff

/// Smallest eigenvalue of a symmetric matrix; +inf for the empty matrix.
inline double min_eigenvalue_sym(const Eigen::MatrixXd& a) {
  if (a.rows() == 0) return std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline bool is_symmetric(const Eigen::MatrixXd& a, double tol = 1e-9) {
  if (a.rows() != a.cols()) return false;
  if (a.rows() == 0) return true;
  return (a - a.transpose()).norm() <= tol * std::max(1.0, a.norm());
}

/// Inverse of a symmetric positive definite matrix (LDLT); empty for empty input.
inline Eigen::MatrixXd inverse_spd(const Eigen::MatrixXd& a) {
  if (a.rows() == 0) return Eigen::MatrixXd::Zero(0, 0);
  return a.ldlt().solve(Eigen::MatrixXd::Identity(a.rows(), a.rows()));
}

/// Moore-Penrose pseudoinverse via SVD with relative cutoff.
inline Eigen::MatrixXd pinv(const Eigen::MatrixXd& a, double rank_tol = kRankTol) {
  if (a.rows() == 0 || a.cols() == 0) return Eigen::MatrixXd::Zero(a.cols(), a.rows());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cutoff = rank_tol * std::max(sv.size() > 0 ? sv(0) : 0.0, 0.0);
  Eigen::VectorXd inv_sv = Eigen::VectorXd::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff && sv(i) > 0.0) inv_sv(i) = 1.0 / sv(i);
  return svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
}

/// Numerical rank with a relative singular-value threshold.
inline Eigen::Index numerical_rank(const Eigen::MatrixXd& a, double rank_tol = kRankTol) {
  if (a.rows() == 0 || a.cols() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) <= 0.0) return 0;
  const double cutoff = rank_tol * sv(0);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) ++r;
  return r;
}

/// Tests R(x) subseteq R(w) for symmetric PSD w via the orthogonal projector onto R(w).
inline bool range_contained_in(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w,
                               double tol = 1e-9) {
  if (x.rows() == 0 || x.cols() == 0) return true;
  if (x.norm() <= tol) return true;
  const Eigen::MatrixXd proj = w * pinv(w);
  const Eigen::MatrixXd resid = x - proj * x;
  return resid.norm() <= tol * std::max(1.0, x.norm());
}

inline bool all_finite(const Eigen::MatrixXd& a) { return a.allFinite(); }

}  // namespace daemx
