#include <catch2/catch_amalgamated.hpp>

#include "test_support.hpp"

using namespace daemx;
using daemx::testing::Rng;

namespace {

double example_qmat(double t, double eps, double T = 2.0) {
  const double c3 = std::sin(2.0 * M_PI * t / T);
  return 1.0 + 2.0 * c3 * c3 / (eps * std::exp(std::sqrt(t)));
}

}  // namespace

TEST_CASE("builtin example reduces to the printed scalar coefficients") {
  const double T = 2.0;
  const DaeModel model = make_example23(200, T);
  const CanonicalModel cm = canonicalize(model);
  Rng rng(123);

  for (int trial = 0; trial < 20; ++trial) {
    const double t = rng.uniform(0.0, T);
    const double eps = rng.log_uniform(1e-8, 1e-1);
    const SubCoeffs sc = sub_coeffs(cm, t, eps);
    CAPTURE(t, eps);
    CHECK(sc.C(0, 0) == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(sc.Q(0, 0) == Catch::Approx(example_qmat(t, eps)).epsilon(1e-12));
    CHECK(sc.S(0, 0) == Catch::Approx(eps * (1.0 + 1.0 / (6.0 / T + eps))).epsilon(1e-12));
    CHECK(sc.W(0, 0) == Catch::Approx(eps + 6.0 / T).epsilon(1e-12));

    // the observation gain is K-independent here: (1/eps) Phi' H' R = 6/(6 + T eps)
    const Eigen::MatrixXd K = Eigen::MatrixXd::Constant(1, 1, std::abs(rng.uniform()));
    const Eigen::MatrixXd gain = sub_gain(cm, sc, K, t, eps);
    REQUIRE(gain.rows() == 1);
    REQUIRE(gain.cols() == 1);
    CHECK(gain(0, 0) == Catch::Approx(6.0 / (6.0 + T * eps)).epsilon(1e-12));
  }
}

TEST_CASE("builtin example limit coefficients match the printed optimal scalars") {
  const double T = 2.0;
  const DaeModel model = make_example23(200, T);
  const CanonicalModel cm = canonicalize(model);
  Rng rng(321);

  for (int trial = 0; trial < 20; ++trial) {
    const double t = rng.uniform(0.0, T);
    const LimitCoeffs lc = limit_coeffs(cm, t);
    const double c3 = std::sin(2.0 * M_PI * t / T);
    CAPTURE(t);
    CHECK(lc.Cplus(0, 0) == Catch::Approx(-1.0).epsilon(1e-12));
    CHECK(lc.Qplus(0, 0) == Catch::Approx(2.0 * c3 * c3 / std::exp(std::sqrt(t))).margin(1e-12));
    CHECK(lc.Splus(0, 0) == Catch::Approx(1.0 + T / 6.0).epsilon(1e-12));
    CHECK(lc.Wplus(0, 0) == Catch::Approx(T / 6.0).epsilon(1e-12));

    const Eigen::MatrixXd K = Eigen::MatrixXd::Constant(1, 1, std::abs(rng.uniform()));
    const Eigen::MatrixXd gain = opt_gain(cm, lc, K, t);
    CHECK(gain(0, 0) == Catch::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("A vanishes when C4 = 0 and S2 = 0") {
  // builtin example has C4 = 0, S2 = 0 identically
  const DaeModel model = make_example23(100);
  const CanonicalModel cm = canonicalize(model);
  for (double t : {0.2, 1.1, 1.9}) {
    const double eps = 1e-3;
    const SubCoeffs sc = sub_coeffs(cm, t, eps);
    CHECK(sc.A.norm() == 0.0);
    // then Qmat = I + (1/eps)(S1 + C3' Q4^{-1} C3) exactly
    const auto cb = cm.c_blocks(t);
    const auto qb = cm.q_blocks(t);
    const auto sb = cm.s_blocks(t);
    const Eigen::MatrixXd expect =
        Eigen::MatrixXd::Identity(1, 1) +
        (sb.S1 + cb.C3.transpose() * inverse_spd(qb.Q4) * cb.C3) / eps;
    CHECK((sc.Q - expect).norm() <= 1e-13 * expect.norm());
  }
}

TEST_CASE("Q(t,eps) and S(t,eps) are PSD on random models") {
  Rng rng(9);
  for (int trial = 0; trial < 8; ++trial) {
    const Eigen::Index m = rng.integer(2, 5), n = rng.integer(2, 5);
    const Eigen::Index r = rng.integer(1, static_cast<int>(std::min(m, n)));
    const DaeModel model = testing::random_regular_model(rng, m, n, r, 40);
    const CanonicalModel cm = canonicalize(model);
    for (double t : {0.1, 0.5, 0.9}) {
      const SubCoeffs sc = sub_coeffs(cm, t, 1e-3);
      CAPTURE(m, n, r, t);
      CHECK(min_eigenvalue_sym(sc.Q) >= -1e-9);
      CHECK(min_eigenvalue_sym(sc.S) >= -1e-9);
      CHECK((sc.M * sc.W - Eigen::MatrixXd::Identity(sc.W.rows(), sc.W.rows())).norm() <= 1e-10);
      // shape contracts
      CHECK(sc.A.rows() == r);
      CHECK(sc.A.cols() == n - r);
      CHECK(sc.B.rows() == n - r);
      CHECK(sc.B.cols() == r);
      CHECK(phi_matrix(sc, Eigen::MatrixXd::Zero(r, r), 1e-3).rows() == n);
    }
  }
}

TEST_CASE("degenerate blocks collapse the limit coefficients") {
  // C3 = 0, C4 = 0, S2 = 0, S4 = 0: Qplus = S1, Wplus = 0, Cplus = C1,
  // Splus = Q1 - Q2 Q4^{-1} Q2'
  Rng rng(31);
  const Eigen::Index m = 3, n = 3, r = 2;
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(m, n);
  F(0, 0) = 1.0;
  F(1, 1) = 1.0;
  // C with zero lower row (C3 = C4 = 0)
  Eigen::MatrixXd cmat = Eigen::MatrixXd::Zero(m, n);
  cmat.topRows(r) = rng.matrix(r, n);
  // H touching only the first r coordinates (S2 = S4 = 0)
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  h.leftCols(r) = rng.matrix(n, r);
  const DaeModel model{F,
                       MatrixFunction::constant(cmat),
                       MatrixFunction::constant(h),
                       testing::random_spd_matrix(rng, m),
                       testing::random_spd_matrix(rng, n),
                       TimeGrid(0.0, 1.0, 40)};
  REQUIRE(validate_model(model).ok());
  const CanonicalModel cm = canonicalize(model);
  REQUIRE(cm.r() == r);

  const double t = 0.4;
  const auto cb = cm.c_blocks(t);
  REQUIRE(cb.C3.norm() <= 1e-12);
  REQUIRE(cb.C4.norm() <= 1e-12);
  const auto sb = cm.s_blocks(t);
  REQUIRE(sb.S2.norm() <= 1e-12);
  REQUIRE(sb.S4.norm() <= 1e-12);

  const LimitCoeffs lc = limit_coeffs(cm, t);
  const auto qb = cm.q_blocks(t);
  CHECK((lc.Qplus - sb.S1).norm() <= 1e-10);
  CHECK(lc.Wplus.norm() <= 1e-10);
  CHECK((lc.Cplus - cb.C1).norm() <= 1e-10);
  const Eigen::MatrixXd splus_expect =
      qb.Q1 - qb.Q2 * inverse_spd(qb.Q4) * qb.Q2.transpose();
  CHECK((lc.Splus - splus_expect).norm() <= 1e-10);
}

TEST_CASE("Wplus satisfies the Moore-Penrose identities") {
  Rng rng(55);
  for (int trial = 0; trial < 6; ++trial) {
    const Eigen::Index m = rng.integer(2, 5), n = rng.integer(2, 5);
    const Eigen::Index r = rng.integer(1, static_cast<int>(std::min(m, n)) - 0);
    const DaeModel model = testing::random_regular_model(rng, m, n, std::min(r, std::min(m, n)),
                                                         40);
    const CanonicalModel cm = canonicalize(model);
    const double t = rng.uniform(0.0, 1.0);
    const LimitCoeffs lc = limit_coeffs(cm, t);
    const SubCoeffs sc = sub_coeffs(cm, t, 1.0);
    const Eigen::MatrixXd w0 = sc.W - Eigen::MatrixXd::Identity(sc.W.rows(), sc.W.cols());
    const Eigen::MatrixXd& wp = lc.Wplus;
    CHECK((w0 * wp * w0 - w0).norm() <= 1e-9 * std::max(1.0, w0.norm()));
    CHECK((wp * w0 * wp - wp).norm() <= 1e-9 * std::max(1.0, wp.norm()));
    CHECK(((w0 * wp).transpose() - w0 * wp).norm() <= 1e-9);
    CHECK(((wp * w0).transpose() - wp * w0).norm() <= 1e-9);
  }
}

TEST_CASE("remark limits: regularized coefficients approach the limit family") {
  const double T = 2.0;
  const DaeModel model = make_example23(100, T);
  const CanonicalModel cm = canonicalize(model);

  auto gap = [&](double eps) {
    double worst = 0.0;
    for (std::size_t k = 0; k < cm.grid().n_nodes(); ++k) {
      const double t = cm.grid().node(k);
      const SubCoeffs sc = sub_coeffs(cm, t, eps);
      const LimitCoeffs lc = limit_coeffs(cm, t);
      const double g = (sc.S / eps - lc.Splus).norm() + (eps * sc.Q - lc.Qplus).norm() +
                       (-sc.C.transpose() - lc.Cplus).norm();
      worst = std::max(worst, g);
    }
    return worst;
  };

  double prev = std::numeric_limits<double>::infinity();
  for (double eps : {1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8}) {
    const double g = gap(eps);
    CAPTURE(eps, g);
    CHECK(g < prev);
    prev = g;
  }
  CHECK(gap(1e-8) <= 1e-6);
}

TEST_CASE("M(t,eps) converges to W+ inside the A and B products") {
  Rng rng(67);
  const DaeModel model = testing::random_regular_model(rng, 4, 4, 2, 40);
  const CanonicalModel cm = canonicalize(model);
  REQUIRE(regularity_check(cm).all_solvable());
  const double t = 0.3;
  const LimitCoeffs lc = limit_coeffs(cm, t);
  double prev_a = std::numeric_limits<double>::infinity();
  double prev_b = std::numeric_limits<double>::infinity();
  for (double eps : {1e-2, 1e-4, 1e-6, 1e-8}) {
    const SubCoeffs sc = sub_coeffs(cm, t, eps);
    const double da = (sc.A * sc.M * sc.A.transpose() - lc.A * lc.Wplus * lc.A.transpose()).norm();
    const double db =
        (sc.B.transpose() * sc.M * sc.B - lc.B.transpose() * lc.Wplus * lc.B).norm();
    CHECK(da <= prev_a + 1e-12);
    CHECK(db <= prev_b + 1e-12);
    prev_a = da;
    prev_b = db;
  }
  CHECK(prev_a <= 1e-6);
  CHECK(prev_b <= 1e-6);
}

TEST_CASE("regularity probe") {
  SECTION("builtin example is solvable at every node, inclusion test differs") {
    const DaeModel model = make_example23(100);
    const CanonicalModel cm = canonicalize(model);
    const RegularityReport rep = regularity_check(cm);
    CHECK(rep.all_solvable());
    // C2 = 1, C4 = 0: R(C2') is not inside R(C4'), so the abstract inclusion
    // fails even though the optimal filter is available
    for (bool ok : rep.column_space_ok) CHECK_FALSE(ok);
  }

  SECTION("W(t,0) = 0 with B != 0 is unsolvable") {
    // blind variant (H = 0) has S4 = 0 and C4 = 0, so W(t,0) = 0 while B = 1
    const DaeModel model = make_example23(60, 2.0, /*blind=*/true);
    const CanonicalModel cm = canonicalize(model);
    const RegularityReport rep = regularity_check(cm);
    CHECK_FALSE(rep.all_solvable());
    CHECK(rep.first_unsolvable_node() == 0);
  }

  SECTION("C2 = C4 = 0 passes both probes") {
    Rng rng(8);
    const Eigen::Index m = 3, n = 3, r = 1;
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(m, n);
    F(0, 0) = 2.0;
    Eigen::MatrixXd cmat = Eigen::MatrixXd::Zero(m, n);
    cmat.col(0) = rng.vector(m);  // only C1, C3 present
    const DaeModel model{F,
                         MatrixFunction::constant(cmat),
                         MatrixFunction::constant(rng.matrix(n, n) +
                                                  2.0 * Eigen::MatrixXd::Identity(n, n)),
                         testing::random_spd_matrix(rng, m),
                         testing::random_spd_matrix(rng, n),
                         TimeGrid(0.0, 1.0, 40)};
    const CanonicalModel cm = canonicalize(model);
    const RegularityReport rep = regularity_check(cm);
    CHECK(rep.all_solvable());
    for (bool ok : rep.column_space_ok) CHECK(ok);
  }
}

TEST_CASE("coefficient products are well-formed across random shapes") {
  Rng rng(99);
  for (int trial = 0; trial < 12; ++trial) {
    const Eigen::Index m = rng.integer(1, 6), n = rng.integer(1, 6);
    const Eigen::Index r = rng.integer(0, static_cast<int>(std::min(m, n)));
    const DaeModel model = testing::random_regular_model(rng, m, n, r, 30);
    const CanonicalModel cm = canonicalize(model);
    if (cm.r() == 0) continue;
    const double t = 0.5, eps = 1e-2;
    const SubCoeffs sc = sub_coeffs(cm, t, eps);
    const Eigen::MatrixXd K = Eigen::MatrixXd::Identity(cm.r(), cm.r());
    const Eigen::MatrixXd phi = phi_matrix(sc, K, eps);
    CHECK(phi.rows() == cm.n());
    CHECK(phi.cols() == cm.r());
    const Eigen::MatrixXd gs = sub_gain(cm, sc, K, t, eps);
    CHECK(gs.rows() == cm.r());
    CHECK(gs.cols() == cm.p());
    const LimitCoeffs lc = limit_coeffs(cm, t);
    const Eigen::MatrixXd go = opt_gain(cm, lc, K, t);
    CHECK(go.rows() == cm.r());
    CHECK(go.cols() == cm.p());
  }
}
