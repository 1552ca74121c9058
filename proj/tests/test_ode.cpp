#include <catch2/catch_amalgamated.hpp>

#include "test_support.hpp"

using namespace daemx;
using daemx::testing::Rng;

namespace {

RiccatiCoeffs scalar_coeffs(double c, double q, double s) {
  return RiccatiCoeffs{Eigen::MatrixXd::Constant(1, 1, c), Eigen::MatrixXd::Constant(1, 1, q),
                       Eigen::MatrixXd::Constant(1, 1, s)};
}

// closed form of K' = -2K - K^2 + 3, K(0) = 0 (verified against the ODE by
// substitution: K = 3(1-u)/(3+u), u = e^{-4t}, K' = 48u/(3+u)^2 = -(K+3)(K-1))
double riccati_benchmark(double t) {
  const double u = std::exp(-4.0 * t);
  return 3.0 * (1.0 - u) / (3.0 + u);
}

}  // namespace

TEST_CASE("riccati equilibrium at zero source") {
  TimeGrid grid(0.0, 1.0, 100);
  Rng rng(3);
  const Eigen::MatrixXd c = rng.matrix(2, 2);
  Eigen::MatrixXd q = rng.matrix(2, 2);
  q = (q * q.transpose()).eval();
  const RiccatiSolution sol = integrate_riccati(
      [&](double) {
        return RiccatiCoeffs{c, q, Eigen::MatrixXd::Zero(2, 2)};
      },
      grid);
  for (const auto& K : sol.K) CHECK(K.norm() == 0.0);
}

TEST_CASE("scalar riccati closed form and 4th-order convergence") {
  const double expected = riccati_benchmark(1.0);  // 0.97572733...
  CHECK(expected == Catch::Approx(0.9757273379195325).epsilon(1e-12));

  auto run = [&](std::size_t steps) {
    TimeGrid grid(0.0, 1.0, steps);
    const RiccatiSolution sol =
        integrate_riccati([](double) { return scalar_coeffs(1.0, 1.0, 3.0); }, grid);
    return std::abs(sol.K.back()(0, 0) - expected);
  };
  const double e1000 = run(1000);
  const double e2000 = run(2000);
  CHECK(e1000 <= 1e-8);
  const double ratio = e1000 / e2000;
  CAPTURE(e1000, e2000, ratio);
  CHECK(ratio >= 12.0);
  CHECK(ratio <= 20.0);
}

TEST_CASE("linear riccati case from the builtin model with c3 = 0") {
  // K' = -2K + (1 + T/6), K(0) = 0  ->  K(t) = (1 + T/6)(1 - e^{-2t})/2
  const double T = 2.0;
  TimeGrid grid(0.0, T, 1000);
  const double s = 1.0 + T / 6.0;
  const RiccatiSolution sol =
      integrate_riccati([&](double) { return scalar_coeffs(1.0, 0.0, s); }, grid);
  for (std::size_t k = 0; k < grid.n_nodes(); k += 100) {
    const double t = grid.node(k);
    CHECK(sol.K[k](0, 0) == Catch::Approx(s * (1.0 - std::exp(-2.0 * t)) / 2.0).margin(1e-10));
  }
}

TEST_CASE("riccati keeps symmetry and positive semidefiniteness") {
  Rng rng(17);
  TimeGrid grid(0.0, 1.0, 400);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::Index r = rng.integer(1, 4);
    const MatrixFunction cf = testing::random_smooth_matrix(rng, r, r, 0.7);
    const MatrixFunction qroot = testing::random_smooth_matrix(rng, r, r, 0.5);
    const MatrixFunction sroot = testing::random_smooth_matrix(rng, r, r, 0.5);
    const RiccatiSolution sol = integrate_riccati(
        [&](double t) {
          const Eigen::MatrixXd lq = qroot(t), ls = sroot(t);
          return RiccatiCoeffs{cf(t), lq * lq.transpose(), ls * ls.transpose()};
        },
        grid);
    for (const auto& K : sol.K) {
      CHECK((K - K.transpose()).norm() <= 1e-9);
      CHECK(min_eigenvalue_sym(K) >= -1e-8);
    }
  }
}

TEST_CASE("riccati blow-up is detected and reported") {
  TimeGrid grid(0.0, 5.0, 200);
  // negative "Q" makes the quadratic term explosive; the escape must throw
  CHECK_THROWS_WITH(
      integrate_riccati([](double) { return scalar_coeffs(-2.0, -1.0, 1.0); }, grid),
      Catch::Matchers::ContainsSubstring("blow-up"));
}

TEST_CASE("linear integrator basics") {
  TimeGrid grid(0.0, 1.0, 1000);

  SECTION("constant solution") {
    const Trajectory traj = integrate_linear(
        [](double, Eigen::MatrixXd& A, Eigen::VectorXd& g) {
          A = Eigen::MatrixXd::Zero(2, 2);
          g = Eigen::VectorXd::Zero(2);
        },
        grid, IntegrationDirection::forward, Eigen::Vector2d(1.0, -2.0));
    for (const auto& v : traj.values) CHECK((v - Eigen::Vector2d(1.0, -2.0)).norm() == 0.0);
  }

  SECTION("exponential decay forward") {
    const Trajectory traj = integrate_linear(
        [](double, Eigen::MatrixXd& A, Eigen::VectorXd& g) {
          A = Eigen::MatrixXd::Constant(1, 1, -1.0);
          g = Eigen::VectorXd::Zero(1);
        },
        grid, IntegrationDirection::forward, Eigen::VectorXd::Ones(1));
    CHECK(traj.values.back()(0) == Catch::Approx(std::exp(-1.0)).margin(1e-8));
  }

  SECTION("exponential growth backward") {
    const Trajectory traj = integrate_linear(
        [](double, Eigen::MatrixXd& A, Eigen::VectorXd& g) {
          A = Eigen::MatrixXd::Constant(1, 1, 1.0);
          g = Eigen::VectorXd::Zero(1);
        },
        grid, IntegrationDirection::backward, Eigen::VectorXd::Ones(1));
    CHECK(traj.values.front()(0) == Catch::Approx(std::exp(-1.0)).margin(1e-8));
    CHECK(traj.values.back()(0) == Catch::Approx(1.0).margin(1e-12));
  }

  SECTION("backward-then-forward returns the terminal value") {
    Rng rng(23);
    const Eigen::MatrixXd A = rng.matrix(3, 3, 0.8);
    auto rhs = [&](double, Eigen::MatrixXd& M, Eigen::VectorXd& g) {
      M = A;
      g = Eigen::VectorXd::Zero(3);
    };
    const Eigen::VectorXd zT = rng.vector(3);
    const Trajectory back = integrate_linear(rhs, grid, IntegrationDirection::backward, zT);
    const Trajectory fwd =
        integrate_linear(rhs, grid, IntegrationDirection::forward, back.values.front());
    CHECK((fwd.values.back() - zT).norm() <= 1e-8 * std::max(1.0, zT.norm()));
  }
}

TEST_CASE("quadrature") {
  SECTION("constant on [0, 2]") {
    TimeGrid grid(0.0, 2.0, 10);
    CHECK(quadrature(grid, std::vector<double>(grid.n_nodes(), 1.0)) == Catch::Approx(2.0));
  }
  SECTION("f(t) = t on [0, 1]") {
    TimeGrid grid(0.0, 1.0, 1000);
    std::vector<double> v(grid.n_nodes());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = grid.node(k);
    CHECK(quadrature(grid, v) == Catch::Approx(0.5).margin(1e-6));
  }
  SECTION("sin on [0, pi]") {
    TimeGrid grid(0.0, M_PI, 2000);
    std::vector<double> v(grid.n_nodes());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = std::sin(grid.node(k));
    CHECK(quadrature(grid, v) == Catch::Approx(2.0).margin(1e-5));
  }
}

TEST_CASE("trajectory sampling is exact at nodes of a refinement") {
  TimeGrid grid(0.0, 1.0, 10);
  const TimeGrid fine = grid.refined(2);
  Trajectory y{fine, std::vector<Eigen::VectorXd>(fine.n_nodes()), "y"};
  for (std::size_t k = 0; k < fine.n_nodes(); ++k)
    y.values[k] = Eigen::VectorXd::Constant(1, static_cast<double>(k));
  // half-step times of the coarse grid are exact fine nodes
  CHECK(y.at(grid.node(3))(0) == 6.0);
  CHECK(y.at(grid.node(3) + grid.step() / 2.0)(0) == 7.0);
}
